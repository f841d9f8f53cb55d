use std::io::{Read, Write};

use crate::domain::{GridSpec, ParabolicWindow};
use crate::error::{Error, Result};
use crate::noise::{read_f64, read_seed, read_u64, write_seed, SeedSpec};

/// Discrete solution values `u[j][i]` at `t = j dt`, `x = i dx`.
///
/// Rows run over all `nt + 1` grid times. Only the first `cols` spatial
/// indices are kept; window statistics only look at the columns starting at
/// index 0, so large circle grids record just the window strip.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    cols: usize,
    values: Vec<f64>,
    coefficient: String,
    seed: Option<SeedSpec>,
}

impl Field {
    pub(crate) fn with_capacity(
        grid: GridSpec,
        cols: usize,
        coefficient: String,
        seed: Option<SeedSpec>,
    ) -> Self {
        let mut values = Vec::with_capacity((grid.nt + 1) * cols);
        values.resize(cols, 0.0);
        Self {
            grid,
            cols,
            values,
            coefficient,
            seed,
        }
    }

    pub(crate) fn push_row(&mut self, state: &[f64]) {
        self.values.extend_from_slice(&state[..self.cols]);
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.values.len() / self.cols
    }

    pub fn coefficient_tag(&self) -> &str {
        &self.coefficient
    }

    pub fn seed(&self) -> Option<SeedSpec> {
        self.seed
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.cols..(j + 1) * self.cols]
    }

    pub fn value(&self, j: usize, i: usize) -> f64 {
        self.values[j * self.cols + i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |self - other|` over all recorded nodes.
    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Node-wise `self - other`.
    pub fn difference(&self, other: &Field) -> Result<Field> {
        self.check_same_shape(other)?;
        Ok(Field {
            grid: self.grid,
            cols: self.cols,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
            coefficient: format!("{} - {}", self.coefficient, other.coefficient),
            seed: self.seed,
        })
    }

    pub fn scaled(&self, c: f64) -> Field {
        Field {
            values: self.values.iter().map(|v| c * v).collect(),
            coefficient: format!("{c}*{}", self.coefficient),
            ..self.clone()
        }
    }

    /// Every `time_stride`-th row and `space_stride`-th column, as a field on
    /// the correspondingly coarser grid.
    pub fn subsample(&self, time_stride: usize, space_stride: usize) -> Result<Field> {
        if time_stride == 0
            || space_stride == 0
            || self.grid.nt % time_stride != 0
            || self.grid.nx % space_stride != 0
        {
            return Err(Error::Precondition(format!(
                "strides ({time_stride}, {space_stride}) must divide the grid ({}, {})",
                self.grid.nt, self.grid.nx
            )));
        }
        let grid = GridSpec::new(
            self.grid.nx / space_stride,
            self.grid.nt / time_stride,
            self.grid.dt * time_stride as f64,
        )?;
        let cols = self.cols.div_ceil(space_stride);
        let mut values = Vec::with_capacity((grid.nt + 1) * cols);
        for j in (0..self.rows()).step_by(time_stride) {
            values.extend(self.row(j).iter().step_by(space_stride));
        }
        Ok(Field {
            grid,
            cols,
            values,
            coefficient: self.coefficient.clone(),
            seed: self.seed,
        })
    }

    fn check_same_shape(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid || self.cols != other.cols || self.rows() != other.rows() {
            return Err(Error::Precondition("fields live on different grids".into()));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(FIELD_MAGIC)?;
        w.write_all(&(self.grid.nx as u64).to_le_bytes())?;
        w.write_all(&(self.grid.nt as u64).to_le_bytes())?;
        w.write_all(&self.grid.dt.to_le_bytes())?;
        w.write_all(&(self.cols as u64).to_le_bytes())?;
        w.write_all(&(self.rows() as u64).to_le_bytes())?;
        let tag = self.coefficient.as_bytes();
        w.write_all(&(tag.len() as u64).to_le_bytes())?;
        w.write_all(tag)?;
        write_seed(&mut w, self.seed)?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Field> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != FIELD_MAGIC {
            return Err(Error::Format("not a field dump".into()));
        }
        let nx = read_u64(&mut r)? as usize;
        let nt = read_u64(&mut r)? as usize;
        let dt = read_f64(&mut r)?;
        let grid = GridSpec::new(nx, nt, dt)?;
        let cols = read_u64(&mut r)? as usize;
        let rows = read_u64(&mut r)? as usize;
        let tag_len = read_u64(&mut r)? as usize;
        let mut tag = vec![0u8; tag_len];
        r.read_exact(&mut tag)?;
        let coefficient =
            String::from_utf8(tag).map_err(|_| Error::Format("coefficient tag is not UTF-8".into()))?;
        let seed = read_seed(&mut r)?;
        let values = (0..rows * cols)
            .map(|_| read_f64(&mut r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Field {
            grid,
            cols,
            values,
            coefficient,
            seed,
        })
    }
}

const FIELD_MAGIC: &[u8; 8] = b"CHLFIELD";

/// Number of recorded columns needed to cover `window` on `grid`.
pub fn window_columns(grid: &GridSpec, window: &ParabolicWindow) -> usize {
    grid.last_window_column(window) + 1
}

/// `max |u(t, x)|` over grid nodes with `t <= r^4` and `0 <= x <= r^2`.
pub fn sup_on_window(field: &Field, window: &ParabolicWindow) -> Result<f64> {
    let (rows, cols) = window_extent(field, window)?;
    Ok((0..rows)
        .flat_map(|j| field.row(j)[..cols].iter())
        .fold(0.0, |m, v| m.max(v.abs())))
}

/// Row and column counts of the window block inside `field`.
pub(crate) fn window_extent(field: &Field, window: &ParabolicWindow) -> Result<(usize, usize)> {
    let grid = field.grid();
    if !grid.resolves(window) {
        return Err(Error::Precondition(format!(
            "grid (nx={}, dt={:e}) does not resolve the window r={}",
            grid.nx,
            grid.dt,
            window.r()
        )));
    }
    let cols = grid.last_window_column(window) + 1;
    if cols > field.cols() {
        return Err(Error::Precondition(format!(
            "field records {} columns, window needs {cols}",
            field.cols()
        )));
    }
    Ok((grid.last_window_row(window) + 1, cols))
}

/// As [`sup_on_window`] but without the resolution contract; used when a
/// deliberately coarse grid is compared against a fine one.
pub fn sup_on_window_unchecked(field: &Field, window: &ParabolicWindow) -> f64 {
    let grid = field.grid();
    let cols = (grid.last_window_column(window) + 1).min(field.cols());
    let rows = (grid.last_window_row(window) + 1).min(field.rows());
    (0..rows)
        .flat_map(|j| field.row(j)[..cols].iter())
        .fold(0.0, |m, v| m.max(v.abs()))
}
