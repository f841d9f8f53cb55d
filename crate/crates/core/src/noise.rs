//! Discrete space-time white noise.
//!
//! Cell `(j, i)` of a [`NoiseGrid`] holds `W([t_j, t_j + dt) x [x_i, x_i + dx))`,
//! a centred Gaussian with variance `dt * dx`. All randomness in the crate flows
//! through [`SeedSpec::rng`], so a replicate is fully determined by its seed
//! triple regardless of how replicates are scheduled across threads.
//!
//! Stream derivation: each of the three seed words is passed through the
//! SplitMix64 finaliser (a bijection on `u64`) after adding a word-specific
//! constant, and the three results plus a fixed fourth word form the 256-bit
//! state of a xoshiro256++ generator. Distinct triples therefore give distinct
//! generator states. Standard normals come from the ziggurat sampler of
//! `rand_distr::StandardNormal`; its tail branch calls `exp`/`ln`, which is the
//! only place platform libm differences could enter.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::domain::{Budget, GridSpec};
use crate::error::{Error, Result};

/// Stream labels used by the built-in experiments. Values below `1 << 16`
/// are free for callers.
pub mod streams {
    pub const WHITE_NOISE: u32 = 0;
    pub const SPECTRAL: u32 = 1;
    pub const BROWNIAN: u32 = 2;
    pub const SMALL_BALL: u32 = 1 << 16;
    pub const COUPLING: u32 = 2 << 16;
    pub const CHUNG_SCAN: u32 = 3 << 16;

    /// Label for a per-scale stream of family `base`.
    pub fn for_scale(base: u32, n: u32) -> u32 {
        base | (n & 0xffff)
    }
}

/// Identifies one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub replicate_id: u64,
    pub stream_label: u32,
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeedSpec {
    pub fn new(master_seed: u64, replicate_id: u64, stream_label: u32) -> Self {
        Self {
            master_seed,
            replicate_id,
            stream_label,
        }
    }

    /// The 256-bit generator state derived from the seed triple.
    pub fn state_words(&self) -> [u64; 4] {
        [
            splitmix64(self.master_seed),
            splitmix64(self.replicate_id ^ 0x5851_f42d_4c95_7f2d),
            splitmix64(u64::from(self.stream_label) ^ 0x1405_7b7e_f767_814f),
            splitmix64(0x2545_f491_4f6c_dd1d),
        ]
    }

    pub fn rng(&self) -> Xoshiro256PlusPlus {
        let mut bytes = [0u8; 32];
        for (chunk, word) in bytes.chunks_exact_mut(8).zip(self.state_words()) {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        Xoshiro256PlusPlus::from_seed(bytes)
    }
}

/// Where a trajectory's noise comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSource {
    Seeded(SeedSpec),
    /// All increments zero.
    Zero,
}

impl From<SeedSpec> for NoiseSource {
    fn from(seed: SeedSpec) -> Self {
        NoiseSource::Seeded(seed)
    }
}

impl NoiseSource {
    pub fn seed(&self) -> Option<SeedSpec> {
        match self {
            NoiseSource::Seeded(s) => Some(*s),
            NoiseSource::Zero => None,
        }
    }

    /// Row-by-row generator for `grid`.
    pub fn rows(&self, grid: &GridSpec) -> NoiseRows {
        NoiseRows {
            rng: self.seed().map(|s| s.rng()),
            sd: (grid.dt * grid.dx()).sqrt(),
            nx: grid.nx,
            remaining: grid.nt,
        }
    }
}

/// Sequential generator of noise rows; row `k` equals row `k` of [`sample_noise`].
pub struct NoiseRows {
    rng: Option<Xoshiro256PlusPlus>,
    sd: f64,
    nx: usize,
    remaining: usize,
}

impl NoiseRows {
    /// Fill `row` with the next time row. Returns `false` once the grid is exhausted.
    pub fn fill_next(&mut self, row: &mut [f64]) -> bool {
        debug_assert_eq!(row.len(), self.nx);
        if self.remaining == 0 {
            return false;
        }
        self.remaining -= 1;
        match self.rng.as_mut() {
            Some(rng) => {
                let sd = self.sd;
                for w in row.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *w = sd * z;
                }
            }
            None => row.fill(0.0),
        }
        true
    }
}

/// A fully materialised noise matrix, `nt` rows of `nx` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseGrid {
    grid: GridSpec,
    seed: Option<SeedSpec>,
    increments: Vec<f64>,
}

impl NoiseGrid {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            seed: None,
            increments: vec![0.0; grid.nx * grid.nt],
        }
    }

    /// Wrap caller-supplied increments (row-major, `nt * nx`).
    pub fn from_increments(grid: GridSpec, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != grid.nx * grid.nt {
            return Err(Error::Precondition(format!(
                "expected {} increments for a {}x{} grid, got {}",
                grid.nx * grid.nt,
                grid.nt,
                grid.nx,
                increments.len()
            )));
        }
        Ok(Self {
            grid,
            seed: None,
            increments,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn seed(&self) -> Option<SeedSpec> {
        self.seed
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.increments[j * self.grid.nx..(j + 1) * self.grid.nx]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(NOISE_MAGIC)?;
        w.write_all(&(self.grid.nx as u64).to_le_bytes())?;
        w.write_all(&(self.grid.nt as u64).to_le_bytes())?;
        w.write_all(&self.grid.dx().to_le_bytes())?;
        w.write_all(&self.grid.dt.to_le_bytes())?;
        write_seed(&mut w, self.seed)?;
        for v in &self.increments {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != NOISE_MAGIC {
            return Err(Error::Format("not a noise dump".into()));
        }
        let nx = read_u64(&mut r)? as usize;
        let nt = read_u64(&mut r)? as usize;
        let _dx = read_f64(&mut r)?;
        let dt = read_f64(&mut r)?;
        let grid = GridSpec::new(nx, nt, dt)?;
        let seed = read_seed(&mut r)?;
        let increments = (0..nx * nt)
            .map(|_| read_f64(&mut r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            seed,
            increments,
        })
    }
}

const NOISE_MAGIC: &[u8; 8] = b"CHLNOIS1";

pub(crate) fn write_seed<W: Write>(w: &mut W, seed: Option<SeedSpec>) -> Result<()> {
    match seed {
        Some(s) => {
            w.write_all(&[1])?;
            w.write_all(&s.master_seed.to_le_bytes())?;
            w.write_all(&s.replicate_id.to_le_bytes())?;
            w.write_all(&s.stream_label.to_le_bytes())?;
        }
        None => w.write_all(&[0; 21])?,
    }
    Ok(())
}

pub(crate) fn read_seed<R: Read>(r: &mut R) -> Result<Option<SeedSpec>> {
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let master = read_u64(r)?;
    let replicate = read_u64(r)?;
    let mut label = [0u8; 4];
    r.read_exact(&mut label)?;
    Ok((flag[0] == 1).then(|| SeedSpec::new(master, replicate, u32::from_le_bytes(label))))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Materialise the whole `nt x nx` noise matrix for `seed`, using the default budget.
pub fn sample_noise(grid: &GridSpec, seed: SeedSpec) -> Result<NoiseGrid> {
    sample_noise_within(grid, seed, &Budget::default())
}

/// As [`sample_noise`], refusing grids larger than `budget.max_materialized`.
pub fn sample_noise_within(grid: &GridSpec, seed: SeedSpec, budget: &Budget) -> Result<NoiseGrid> {
    grid.validate()?;
    if grid.cells() > budget.max_materialized {
        return Err(Error::Resource {
            what: "materialised noise cells (use stream_noise)",
            requested: grid.cells(),
            cap: budget.max_materialized,
        });
    }
    let mut increments = vec![0.0; grid.nx * grid.nt];
    let mut rows = NoiseSource::Seeded(seed).rows(grid);
    for row in increments.chunks_exact_mut(grid.nx) {
        rows.fill_next(row);
    }
    Ok(NoiseGrid {
        grid: *grid,
        seed: Some(seed),
        increments,
    })
}

/// Deliver the rows of `sample_noise(grid, seed)` in time order, one at a time.
pub fn stream_noise<E, F>(grid: &GridSpec, seed: SeedSpec, mut consumer: F) -> Result<(), E>
where
    F: FnMut(usize, &[f64]) -> Result<(), E>,
{
    let mut rows = NoiseSource::Seeded(seed).rows(grid);
    let mut row = vec![0.0; grid.nx];
    let mut j = 0;
    while rows.fill_next(&mut row) {
        consumer(j, &row)?;
        j += 1;
    }
    Ok(())
}
