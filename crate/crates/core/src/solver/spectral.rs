//! Exact-in-distribution integrator for the constant-coefficient equation.
//!
//! The field is expanded in the real orthonormal basis `1`, `sqrt(2) cos(2 pi k x)`,
//! `sqrt(2) sin(2 pi k x)` for `1 <= k <= nx/2` (only the cosine at the Nyquist
//! mode of an even grid). Projected white noise drives independent
//! Ornstein-Uhlenbeck coordinates, so each step is
//!
//! ```text
//! a_k(t + dt) = exp(-lambda_k dt) a_k(t) + c * sqrt(q_k(dt)) Z
//! ```
//!
//! with `q_k` from [`kernel_covariance_linear`]. Per step, normals are drawn in
//! the order `a_0, a_1, b_1, a_2, b_2, ...`.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::field::Field;
use crate::domain::GridSpec;
use crate::error::{Error, Result};
use crate::kernel::{kernel_covariance_linear, mode_rate};
use crate::noise::SeedSpec;

/// Cosine and sine coordinates of the retained modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalState {
    /// `cos[k]` for `k = 0..=k_max`.
    pub cos: Vec<f64>,
    /// `sin[k]` for `k = 0..=k_max`; entries without a sine mode stay 0.
    pub sin: Vec<f64>,
}

impl ModalState {
    fn zeros(k_max: usize) -> Self {
        Self {
            cos: vec![0.0; k_max + 1],
            sin: vec![0.0; k_max + 1],
        }
    }
}

pub struct SpectralLinear {
    nx: usize,
    c: f64,
    decay: Vec<f64>,
    kick_sd: Vec<f64>,
    has_sine: Vec<bool>,
    fft: Arc<dyn Fft<f64>>,
}

impl SpectralLinear {
    pub fn new(c: f64, grid: &GridSpec) -> Result<Self> {
        if c == 0.0 || !c.is_finite() {
            return Err(Error::Precondition(format!(
                "spectral linear solver needs a nonzero coefficient, got {c}"
            )));
        }
        grid.validate()?;
        let nx = grid.nx;
        let k_max = nx / 2;
        let decay = (0..=k_max)
            .map(|k| (-mode_rate(k as u64) * grid.dt).exp())
            .collect();
        let kick_sd = (0..=k_max)
            .map(|k| kernel_covariance_linear(grid.dt, k as u64).sqrt())
            .collect();
        let has_sine = (0..=k_max).map(|k| k > 0 && 2 * k != nx).collect();
        let fft = FftPlanner::new().plan_fft_inverse(nx);
        Ok(Self {
            nx,
            c,
            decay,
            kick_sd,
            has_sine,
            fft,
        })
    }

    pub fn k_max(&self) -> usize {
        self.nx / 2
    }

    fn advance(&self, state: &mut ModalState, rng: &mut Xoshiro256PlusPlus) {
        for k in 0..=self.k_max() {
            let z: f64 = StandardNormal.sample(rng);
            state.cos[k] = self.decay[k] * state.cos[k] + self.c * self.kick_sd[k] * z;
            if self.has_sine[k] {
                let z: f64 = StandardNormal.sample(rng);
                state.sin[k] = self.decay[k] * state.sin[k] + self.c * self.kick_sd[k] * z;
            }
        }
    }

    /// Modal coordinates after `steps` steps.
    pub fn evolve(&self, seed: SeedSpec, steps: usize) -> ModalState {
        let mut rng = seed.rng();
        let mut state = ModalState::zeros(self.k_max());
        for _ in 0..steps {
            self.advance(&mut state, &mut rng);
        }
        state
    }

    /// Grid values `u(x_j)` of a modal state.
    pub fn synthesize(&self, state: &ModalState, out: &mut [f64], scratch: &mut Vec<Complex64>) {
        let nx = self.nx;
        let s2 = std::f64::consts::SQRT_2;
        scratch.clear();
        scratch.resize(nx, Complex64::new(0.0, 0.0));
        scratch[0] = Complex64::new(state.cos[0], 0.0);
        for k in 1..=self.k_max() {
            if self.has_sine[k] {
                let ck = Complex64::new(state.cos[k], -state.sin[k]) / s2;
                scratch[k] = ck;
                scratch[nx - k] = ck.conj();
            } else {
                scratch[k] = Complex64::new(s2 * state.cos[k], 0.0);
            }
        }
        self.fft.process(scratch);
        for (o, z) in out.iter_mut().zip(scratch.iter()) {
            *o = z.re;
        }
    }
}

/// Constant-coefficient field `sigma = c` sampled exactly at grid times.
pub fn solve_linear_exact(c: f64, grid: &GridSpec, seed: SeedSpec) -> Result<Field> {
    solve_linear_exact_cols(c, grid, seed, grid.nx)
}

pub fn solve_linear_exact_cols(c: f64, grid: &GridSpec, seed: SeedSpec, cols: usize) -> Result<Field> {
    let solver = SpectralLinear::new(c, grid)?;
    let cols = cols.min(grid.nx);
    let mut field = Field::with_capacity(*grid, cols, format!("spectral-constant({c})"), Some(seed));
    let mut rng = seed.rng();
    let mut state = ModalState::zeros(solver.k_max());
    let mut values = vec![0.0; grid.nx];
    let mut scratch = Vec::with_capacity(grid.nx);
    for _ in 0..grid.nt {
        solver.advance(&mut state, &mut rng);
        solver.synthesize(&state, &mut values, &mut scratch);
        field.push_row(&values);
    }
    Ok(field)
}
