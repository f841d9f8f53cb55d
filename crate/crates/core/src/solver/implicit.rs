//! One semi-implicit Euler-Maruyama step on the circle:
//! `(I - dt L / 2) u_next = u + sigma(u) dW / dx`, with `L` the periodic
//! second difference divided by `dx^2`.
//!
//! With `alpha = dt / (2 dx^2)` the circulant operator factors as
//!
//! ```text
//! (1 + 2 alpha) I - alpha (S + S^-1) = kappa (I - rho S)(I - rho S^-1)
//! ```
//!
//! where `S` is the cyclic shift, `rho < 1` solves `(1 + rho^2) / rho = (1 + 2 alpha) / alpha`
//! and `kappa = alpha / rho`. Each factor is inverted by a first-order periodic
//! recurrence. The periodic start value of a recurrence is a geometric sum; it
//! is taken exactly on small grids and truncated after `warmup` terms
//! (`rho^warmup / (1 - rho) <= 2^-64`) on large ones, which lets the array be
//! split into independent blocks that are swept together.

use super::coefficient::Forcing;
use crate::domain::GridSpec;

const LANES: usize = 8;

#[derive(Debug, Clone)]
pub struct ImplicitHeatStep {
    nx: usize,
    rho: f64,
    inv_kappa: f64,
    inv_dx: f64,
    /// `1 / (1 - rho^nx)`
    wrap: f64,
    /// Truncated warm-up length, or `None` for the exact periodic start.
    warmup: Option<usize>,
    /// Block boundaries `0 = p_0 < ... < p_LANES = nx` when blocked.
    bounds: Vec<usize>,
}

impl ImplicitHeatStep {
    pub fn new(grid: &GridSpec) -> Self {
        let nx = grid.nx;
        let dx = grid.dx();
        let alpha = grid.dt / (2.0 * dx * dx);
        let b = (1.0 + 2.0 * alpha) / alpha;
        // smaller root of rho^2 - b rho + 1 = 0, written to avoid cancellation
        let rho = 2.0 / (b + (b * b - 4.0).sqrt());
        let kappa = alpha / rho;

        let tail = (2f64.powi(-64) * (1.0 - rho)).ln() / rho.ln();
        let warmup = tail.ceil().max(1.0) as usize;
        let blocked = nx >= LANES * 4 * warmup.max(8);
        let bounds = if blocked {
            (0..=LANES).map(|b| b * nx / LANES).collect()
        } else {
            Vec::new()
        };
        Self {
            nx,
            rho,
            inv_kappa: 1.0 / kappa,
            inv_dx: 1.0 / dx,
            wrap: 1.0 / (1.0 - rho.powi(nx as i32)),
            warmup: blocked.then_some(warmup),
            bounds,
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Advance `u` by one step in place. Returns `false` if any value became
    /// non-finite.
    #[inline]
    pub fn step<F: Forcing + ?Sized>(&self, u: &mut [f64], dw: &[f64], forcing: &F) -> bool {
        debug_assert_eq!(u.len(), self.nx);
        debug_assert_eq!(dw.len(), self.nx);
        match self.warmup {
            None => {
                for (i, (ui, wi)) in u.iter_mut().zip(dw).enumerate() {
                    *ui = self.source(i, *ui, *wi, forcing);
                }
                self.solve_exact(u)
            }
            Some(w) => self.step_blocked(u, dw, forcing, w),
        }
    }

    /// Right-hand side `(u + sigma dW / dx) / kappa` at node `i`.
    #[inline(always)]
    fn source<F: Forcing + ?Sized>(&self, i: usize, ui: f64, wi: f64, forcing: &F) -> f64 {
        (ui + forcing.sigma(i, ui) * wi * self.inv_dx) * self.inv_kappa
    }

    fn solve_exact(&self, u: &mut [f64]) -> bool {
        let rho = self.rho;
        let n = self.nx;
        let mut y = 0.0;
        for &s in u.iter() {
            y = s + rho * y;
        }
        y *= self.wrap;
        for v in u.iter_mut() {
            y = *v + rho * y;
            *v = y;
        }
        let mut x = 0.0;
        for &v in u.iter().rev() {
            x = v + rho * x;
        }
        x *= self.wrap;
        let mut poison = 0.0;
        for i in (0..n).rev() {
            x = u[i] + rho * x;
            u[i] = x;
            poison += x * 0.0;
        }
        poison == 0.0
    }

    /// Form the right-hand side and solve `(I - rho S)(I - rho S^-1) x = s`
    /// with the array split into `LANES` blocks swept together; the forcing is
    /// applied during the forward sweep.
    fn step_blocked<F: Forcing + ?Sized>(&self, u: &mut [f64], dw: &[f64], forcing: &F, warmup: usize) -> bool {
        let rho = self.rho;
        let n = self.nx;
        let p = &self.bounds;
        assert!(u.len() == n && dw.len() == n);

        // forward: y_i = s_i + rho y_{i-1}, warm-up over the untouched tail of the previous block
        let mut y = [0.0; LANES];
        for (lane, yl) in y.iter_mut().enumerate() {
            let start = p[lane] + n;
            let mut acc = 0.0;
            for k in start - warmup..start {
                let k = k % n;
                acc = self.source(k, u[k], dw[k], forcing) + rho * acc;
            }
            *yl = acc;
        }
        let shortest = (0..LANES).map(|l| p[l + 1] - p[l]).min().unwrap();
        for t in 0..shortest {
            for lane in 0..LANES {
                let i = p[lane] + t;
                // SAFETY: p[lane] + t < p[lane + 1] <= n = u.len() = dw.len()
                unsafe {
                    let s = self.source(i, *u.get_unchecked(i), *dw.get_unchecked(i), forcing);
                    y[lane] = s + rho * y[lane];
                    *u.get_unchecked_mut(i) = y[lane];
                }
            }
        }
        for lane in 0..LANES {
            for i in p[lane] + shortest..p[lane + 1] {
                y[lane] = self.source(i, u[i], dw[i], forcing) + rho * y[lane];
                u[i] = y[lane];
            }
        }

        // backward: x_i = y_i + rho x_{i+1}
        let mut x = [0.0; LANES];
        for (lane, xl) in x.iter_mut().enumerate() {
            let end = p[lane + 1];
            let mut acc = 0.0;
            for k in (end..end + warmup).rev() {
                acc = u[k % n] + rho * acc;
            }
            *xl = acc;
        }
        let mut poison = [0.0; LANES];
        for lane in 0..LANES {
            let extra = p[lane + 1] - p[lane] - shortest;
            for t in 0..extra {
                let i = p[lane + 1] - 1 - t;
                x[lane] = u[i] + rho * x[lane];
                u[i] = x[lane];
                poison[lane] += x[lane] * 0.0;
            }
        }
        for t in (0..shortest).rev() {
            for lane in 0..LANES {
                let i = p[lane] + t;
                // SAFETY: as in the forward sweep
                unsafe {
                    x[lane] = *u.get_unchecked(i) + rho * x[lane];
                    *u.get_unchecked_mut(i) = x[lane];
                }
                poison[lane] += x[lane] * 0.0;
            }
        }
        poison.iter().sum::<f64>() == 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::coefficient::Coefficient;

    /// Dense cyclic matrix-vector product `(I - dt L/2) x`.
    fn apply_operator(grid: &GridSpec, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let alpha = grid.dt / (2.0 * grid.dx() * grid.dx());
        (0..n)
            .map(|i| {
                let l = x[(i + n - 1) % n];
                let r = x[(i + 1) % n];
                (1.0 + 2.0 * alpha) * x[i] - alpha * (l + r)
            })
            .collect()
    }

    #[test]
    fn solves_the_cyclic_system() {
        let cases = [
            (4, 0.01),
            (7, 0.003),
            (64, 1e-4),
            (300, 1e-6),
            (1024, 0.5 / (1024.0 * 1024.0)),
            (5000, 3e-8),
            (4099, 1e-5),
        ];
        for (nx, dt) in cases {
            let grid = GridSpec::new(nx, 1, dt).unwrap();
            let stepper = ImplicitHeatStep::new(&grid);
            let rhs: Vec<f64> = (0..nx).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.3).collect();
            let mut u = rhs.clone();
            let zero = vec![0.0; nx];
            assert!(stepper.step(&mut u, &zero, &Coefficient::constant(1.0)));
            let back = apply_operator(&grid, &u);
            for (a, b) in back.iter().zip(&rhs) {
                assert!((a - b).abs() < 1e-12, "nx={nx}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn blocked_path_is_used_on_large_grids() {
        let grid = GridSpec::new(1024, 1, 0.5 / (1024.0 * 1024.0)).unwrap();
        assert!(ImplicitHeatStep::new(&grid).warmup.is_some());
        let grid = GridSpec::new(16, 1, 1e-3).unwrap();
        assert!(ImplicitHeatStep::new(&grid).warmup.is_none());
    }

    #[test]
    fn preserves_mean_and_flags_nan() {
        for nx in [16usize, 2048] {
            let grid = GridSpec::new(nx, 1, 0.5 / (nx * nx) as f64).unwrap();
            let stepper = ImplicitHeatStep::new(&grid);
            let mut u: Vec<f64> = (0..nx).map(|i| (i as f64).sin()).collect();
            let mean0: f64 = u.iter().sum::<f64>() / nx as f64;
            let zero = vec![0.0; nx];
            assert!(stepper.step(&mut u, &zero, &Coefficient::constant(1.0)));
            let mean1: f64 = u.iter().sum::<f64>() / nx as f64;
            assert!((mean0 - mean1).abs() < 1e-14);

            let mut bad = vec![0.0; nx];
            let mut dw = vec![0.0; nx];
            dw[3] = f64::INFINITY;
            assert!(!stepper.step(&mut bad, &dw, &Coefficient::constant(1.0)));
        }
    }
}
