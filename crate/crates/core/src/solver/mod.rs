//! Time integrators for `du = (1/2) u_xx dt + sigma(u) W(dx, dt)` on the circle with `u(0, .) = 0`.

mod coefficient;
mod field;
mod implicit;
mod spectral;

pub use coefficient::{
    truncate_coefficient, Coefficient, Forcing, FrozenCoefficient, Preset, TruncatedCoefficient,
};
pub use field::{sup_on_window, sup_on_window_unchecked, window_columns, Field};
pub(crate) use field::window_extent;
pub use implicit::ImplicitHeatStep;
pub use spectral::{solve_linear_exact, solve_linear_exact_cols, ModalState, SpectralLinear};

use std::f64::consts::PI;

use crate::domain::GridSpec;
use crate::error::{Error, Result};
use crate::noise::{NoiseGrid, NoiseSource};

/// Semi-implicit Euler-Maruyama field driven by a materialised noise grid.
pub fn solve_spde<F: Forcing + ?Sized>(coefficient: &F, noise: &NoiseGrid, grid: &GridSpec) -> Result<Field> {
    if noise.grid() != grid {
        return Err(Error::Precondition("noise grid does not match the solver grid".into()));
    }
    let mut j = 0;
    integrate(coefficient, grid, noise.seed(), grid.nx, |row| {
        row.copy_from_slice(noise.row(j));
        j += 1;
    })
}

/// As [`solve_spde`], generating the noise row by row and recording only
/// the first `cols` spatial indices.
pub fn solve_spde_streamed<F: Forcing + ?Sized>(
    coefficient: &F,
    grid: &GridSpec,
    source: NoiseSource,
    cols: usize,
) -> Result<Field> {
    let mut rows = source.rows(grid);
    integrate(coefficient, grid, source.seed(), cols, |row| {
        rows.fill_next(row);
    })
}

fn integrate<F, N>(
    coefficient: &F,
    grid: &GridSpec,
    seed: Option<crate::noise::SeedSpec>,
    cols: usize,
    mut next_noise: N,
) -> Result<Field>
where
    F: Forcing + ?Sized,
    N: FnMut(&mut [f64]),
{
    grid.validate()?;
    let cols = cols.clamp(1, grid.nx);
    let stepper = ImplicitHeatStep::new(grid);
    let mut field = Field::with_capacity(*grid, cols, coefficient.tag(), seed);
    let mut u = vec![0.0; grid.nx];
    let mut dw = vec![0.0; grid.nx];
    for step in 0..grid.nt {
        next_noise(&mut dw);
        if !stepper.step(&mut u, &dw, coefficient) {
            return Err(Error::NonFinite { step: step + 1 });
        }
        field.push_row(&u);
    }
    Ok(field)
}

/// Exact pointwise variance of the finite-difference field with unit
/// coefficient after `steps` steps, from the eigen-decomposition of the
/// circulant scheme: `dt * sum_k sum_{j=1..steps} rho_k^(2j)` with
/// `rho_k = 1 / (1 + (2 dt / dx^2) sin^2(pi k / nx))`.
pub fn scheme_pointwise_variance(grid: &GridSpec, steps: usize) -> f64 {
    let nx = grid.nx;
    let dx = grid.dx();
    (0..nx)
        .map(|k| {
            let s = (PI * k as f64 / nx as f64).sin();
            let rho = 1.0 / (1.0 + 2.0 * grid.dt / (dx * dx) * s * s);
            let r2 = rho * rho;
            if r2 == 1.0 {
                steps as f64
            } else {
                r2 * (1.0 - r2.powi(steps as i32)) / (1.0 - r2)
            }
        })
        .sum::<f64>()
        * grid.dt
}

/// Continuum pointwise variance `sum_{|k| <= nx/2} q_k(t)` of the unit
/// coefficient solution, truncated at the grid's Nyquist mode.
pub fn continuum_pointwise_variance(t: f64, nx: usize) -> f64 {
    use crate::kernel::kernel_covariance_linear;
    let k_max = (nx / 2) as u64;
    kernel_covariance_linear(t, 0)
        + 2.0 * (1..=k_max).map(|k| kernel_covariance_linear(t, k)).sum::<f64>()
}
