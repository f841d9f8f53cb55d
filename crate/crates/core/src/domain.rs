//! Parabolic windows, geometric scale sequences and the Chung normalizer.
//!
//! A window at scale `r` is the space-time box `0 <= t <= r^4`, `0 <= x <= r^2`
//! anchored at the origin of the unit circle. Every statistic in the crate is a
//! supremum over such a box, normalised by `f(r) = r (log log 1/r)^(-1/6)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when deciding whether a grid node lies on a window edge.
pub(crate) const NODE_SLACK: f64 = 1e-9;

/// Minimum number of grid spacings per window axis.
pub const MIN_POINTS_PER_AXIS: usize = 16;

/// `e^-1`, the exclusive upper end of the admissible scale range.
pub const MAX_SCALE: f64 = 0.367_879_441_171_442_33;

/// `f(r) = r * (log log(1/r))^(-1/6)` for `0 < r < e^-1`.
pub fn chung_normalizer(r: f64) -> Result<f64> {
    check_scale(r)?;
    let loglog = (1.0 / r).ln().ln();
    Ok(r * loglog.powf(-1.0 / 6.0))
}

fn check_scale(r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("scale r = {r} must be positive")));
    }
    // log log(1/r) must be strictly positive
    if (1.0 / r).ln() <= 1.0 {
        return Err(Error::Domain(format!(
            "scale r = {r} must satisfy r < 1/e so that log log(1/r) > 0"
        )));
    }
    Ok(())
}

/// The region `0 <= t <= r^4`, `x in [0, r^2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolicWindow {
    r: f64,
}

impl ParabolicWindow {
    pub fn new(r: f64) -> Result<Self> {
        check_scale(r)?;
        Ok(Self { r })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn t_max(&self) -> f64 {
        self.r.powi(4)
    }

    pub fn x_max(&self) -> f64 {
        self.r * self.r
    }

    pub fn normalizer(&self) -> f64 {
        // r is validated at construction
        chung_normalizer(self.r).expect("window scale validated")
    }
}

/// Parameters of the geometric scale sequence `r_n = a^(-n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub a: f64,
    pub n_min: u32,
    pub n_max: u32,
    /// Freezing exponent; thresholds are `r_n^((1+eps)/2)` and `r_n^(1+eps)`.
    pub epsilon: f64,
}

impl ScaleParams {
    pub fn new(a: f64, n_min: u32, n_max: u32, epsilon: f64) -> Result<Self> {
        let params = Self {
            a,
            n_min,
            n_max,
            epsilon,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 1.0 && self.a.is_finite()) {
            return Err(Error::Domain(format!("ratio a = {} must exceed 1", self.a)));
        }
        if self.n_min < 1 || self.n_max < self.n_min {
            return Err(Error::Domain(format!(
                "scale index range {}..={} must satisfy 1 <= n_min <= n_max",
                self.n_min, self.n_max
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Domain(format!(
                "freezing exponent {} must lie in (0, 1)",
                self.epsilon
            )));
        }
        Ok(())
    }

    pub fn scale(&self, n: u32) -> f64 {
        self.a.powi(-(n as i32))
    }

    pub fn indices(&self) -> impl Iterator<Item = u32> {
        self.n_min..=self.n_max
    }
}

/// Windows for `r_n = a^(-n)`, `n = n_min..=n_max`, in decreasing `r`.
///
/// Any index whose scale is not below `1/e` is an error; the message names all
/// offending indices.
pub fn scale_sequence(params: &ScaleParams) -> Result<Vec<ParabolicWindow>> {
    params.validate()?;
    let bad: Vec<u32> = params
        .indices()
        .filter(|&n| ParabolicWindow::new(params.scale(n)).is_err())
        .collect();
    if !bad.is_empty() {
        return Err(Error::Domain(format!(
            "scale indices {bad:?} give r_n = a^-n >= 1/e (a = {})",
            params.a
        )));
    }
    params
        .indices()
        .map(|n| ParabolicWindow::new(params.scale(n)))
        .collect()
}

/// Uniform space-time grid on the unit circle. `dx = 1/nx` is derived, never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub nt: usize,
    pub dt: f64,
}

impl GridSpec {
    pub fn new(nx: usize, nt: usize, dt: f64) -> Result<Self> {
        let grid = Self { nx, nt, dt };
        grid.validate()?;
        Ok(grid)
    }

    /// Grid with the default step `dt = dx^2 / 2`, shortened so that `horizon`
    /// is hit exactly after an integer number of steps.
    pub fn with_horizon(nx: usize, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon {horizon} must be positive")));
        }
        let dx = 1.0 / nx as f64;
        let nt = (horizon / (0.5 * dx * dx) - NODE_SLACK).ceil().max(1.0) as usize;
        Self::new(nx, nt, horizon / nt as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 4 {
            return Err(Error::Domain(format!("nx = {} must be at least 4", self.nx)));
        }
        if self.nt < 1 {
            return Err(Error::Domain("nt must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Domain(format!("dt = {} must be positive", self.dt)));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn horizon(&self) -> f64 {
        self.nt as f64 * self.dt
    }

    pub fn cells(&self) -> u64 {
        (self.nx as u64).saturating_mul(self.nt as u64)
    }

    /// Largest spatial index `i` with `i * dx <= x_max`.
    pub fn last_window_column(&self, window: &ParabolicWindow) -> usize {
        let i = (window.x_max() * self.nx as f64 * (1.0 + NODE_SLACK)).floor() as usize;
        i.min(self.nx - 1)
    }

    /// Largest time index `j` with `j * dt <= t_max`, capped at `nt`.
    pub fn last_window_row(&self, window: &ParabolicWindow) -> usize {
        let j = (window.t_max() / self.dt * (1.0 + NODE_SLACK)).floor() as usize;
        j.min(self.nt)
    }

    /// Window resolution contract: `dx <= x_max/16`, `dt <= t_max/16`, and the
    /// horizon reaches `t_max`.
    pub fn resolves(&self, window: &ParabolicWindow) -> bool {
        let slack = 1.0 + NODE_SLACK;
        self.dx() <= window.x_max() / MIN_POINTS_PER_AXIS as f64 * slack
            && self.dt <= window.t_max() / MIN_POINTS_PER_AXIS as f64 * slack
            && self.horizon() * slack >= window.t_max()
    }
}

/// Caps on simulation size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    /// Maximum `nx * nt` for a single trajectory.
    pub max_cells: u64,
    /// Maximum number of noise increments held in memory at once.
    pub max_materialized: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            max_cells: 1 << 32,
            max_materialized: 1 << 25,
        }
    }
}

impl Budget {
    pub fn check_cells(&self, grid: &GridSpec) -> Result<()> {
        if grid.cells() > self.max_cells {
            return Err(Error::Resource {
                what: "grid cells",
                requested: grid.cells(),
                cap: self.max_cells,
            });
        }
        Ok(())
    }
}

/// Circle grid resolving `window` with `points_per_axis` spacings across `x_max`
/// and `dt = dx^2/2` (rounded down so that `t_max` is a grid time).
///
/// Index 0 is the window's left edge; the window's columns are `0..=last_window_column`.
pub fn window_grid(
    window: &ParabolicWindow,
    points_per_axis: usize,
    budget: &Budget,
) -> Result<GridSpec> {
    if points_per_axis < MIN_POINTS_PER_AXIS {
        return Err(Error::Precondition(format!(
            "points_per_axis = {points_per_axis} is below the minimum {MIN_POINTS_PER_AXIS}"
        )));
    }
    let nx = (points_per_axis as f64 / window.x_max() - NODE_SLACK).ceil();
    if nx > usize::MAX as f64 / 2.0 {
        return Err(Error::Resource {
            what: "spatial points",
            requested: u64::MAX,
            cap: budget.max_cells,
        });
    }
    let grid = GridSpec::with_horizon((nx as usize).max(4), window.t_max())?;
    budget.check_cells(&grid)?;
    Ok(grid)
}
