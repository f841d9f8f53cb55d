//! Heat kernel of `d/dt = (1/2) d^2/dx^2` on the unit circle.
//!
//! Two series represent the same function:
//!
//! ```text
//! G(t, x) = sum_m (2 pi t)^(-1/2) exp(-(x + m)^2 / (2t))          (images)
//!         = 1 + 2 sum_{k>=1} exp(-2 pi^2 k^2 t) cos(2 pi k x)       (spectral)
//! ```
//!
//! [`heat_kernel`] uses the image sum below `t = 1/(2 pi)` and the spectral sum
//! above it. Fourier mode `k` decays at rate `lambda_k = 2 pi^2 k^2`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Crossover time between the image and spectral representations.
pub const CROSSOVER_TIME: f64 = 1.0 / (2.0 * PI);

const SPECTRAL_CUTOFF: f64 = 1e-16;

/// Decay rate of Fourier mode `k` under the half Laplacian.
pub fn mode_rate(k: u64) -> f64 {
    2.0 * PI * PI * (k as f64) * (k as f64)
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("heat kernel needs t > 0, got {t}")));
    }
    Ok(())
}

/// `G(t, x)` for `t > 0`; `x` is reduced modulo 1.
pub fn heat_kernel(t: f64, x: f64) -> Result<f64> {
    if t < CROSSOVER_TIME {
        heat_kernel_images(t, x)
    } else {
        heat_kernel_spectral(t, x)
    }
}

/// Image (periodised Gaussian) sum, truncated at `|m| <= ceil(6 sqrt t) + 2`.
pub fn heat_kernel_images(t: f64, x: f64) -> Result<f64> {
    check_time(t)?;
    let x = x.rem_euclid(1.0);
    let m_max = (6.0 * t.sqrt()).ceil() as i64 + 2;
    let norm = (2.0 * PI * t).sqrt().recip();
    let sum: f64 = (-m_max..=m_max)
        .map(|m| {
            let y = x + m as f64;
            (-y * y / (2.0 * t)).exp()
        })
        .sum();
    Ok(norm * sum)
}

/// Cosine series, stopped once the next term drops below `1e-16`.
pub fn heat_kernel_spectral(t: f64, x: f64) -> Result<f64> {
    check_time(t)?;
    let x = x.rem_euclid(1.0);
    let mut sum = 1.0;
    for k in 1u64.. {
        let weight = 2.0 * (-mode_rate(k) * t).exp();
        if weight < SPECTRAL_CUTOFF {
            break;
        }
        sum += weight * (2.0 * PI * k as f64 * x).cos();
    }
    Ok(sum)
}

/// Variance of Fourier mode `k` of the stochastic convolution with unit
/// coefficient: `int_0^t exp(-2 lambda_k (t - s)) ds`.
pub fn kernel_covariance_linear(t: f64, k: u64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if k == 0 {
        return t;
    }
    let two_lambda = 2.0 * mode_rate(k);
    -(-two_lambda * t).exp_m1() / two_lambda
}

/// Periodic trapezoid rule on `[0, 1)` with `points` nodes.
///
/// Spectrally accurate for smooth periodic integrands, which is what the
/// kernel identity checks need.
pub fn periodic_trapezoid<F: Fn(f64) -> f64>(f: F, points: usize) -> f64 {
    let h = 1.0 / points as f64;
    (0..points).map(|i| f(i as f64 * h)).sum::<f64>() * h
}

/// Worst deviation of the identities checked by `kernel-check` at one time.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KernelIdentityReport {
    pub t: f64,
    /// `|int G(t, x) dx - 1|`
    pub mass_error: f64,
    /// `max_x |int G(s, x - y) G(t, y) dy - G(s + t, x)|` with `s = t`.
    pub semigroup_error: f64,
    /// `max_x |G(t, x) - G(t, 1 - x)|`
    pub symmetry_error: f64,
    pub min_value: f64,
}

/// Quadrature nodes needed to resolve a Gaussian of variance `t` on the circle.
fn quadrature_points(t: f64) -> usize {
    ((16.0 / t.sqrt()).ceil() as usize).clamp(256, 1 << 16)
}

pub fn check_kernel_identities(t: f64, probes: usize) -> Result<KernelIdentityReport> {
    check_time(t)?;
    let mass = periodic_trapezoid(|x| heat_kernel(t, x).unwrap(), quadrature_points(t));
    let mut symmetry_error: f64 = 0.0;
    let mut min_value = f64::INFINITY;
    for x in probe_points(probes) {
        let gx = heat_kernel(t, x)?;
        symmetry_error = symmetry_error.max((gx - heat_kernel(t, 1.0 - x)?).abs());
        min_value = min_value.min(gx);
    }
    Ok(KernelIdentityReport {
        t,
        mass_error: (mass - 1.0).abs(),
        semigroup_error: semigroup_error(t, t, probes)?,
        symmetry_error,
        min_value,
    })
}

fn probe_points(probes: usize) -> impl Iterator<Item = f64> {
    (0..probes).map(move |p| (p as f64 + 0.37) / probes as f64)
}

/// `max_x |int G(s, x - y) G(t, y) dy - G(s + t, x)|` over `probes` points,
/// with the integral taken by the periodic trapezoid rule.
pub fn semigroup_error(s: f64, t: f64, probes: usize) -> Result<f64> {
    check_time(s)?;
    check_time(t)?;
    let points = quadrature_points(s.min(t));
    let h = 1.0 / points as f64;
    // tabulate G(t, .) on the quadrature nodes once; reused for every probe
    let g_t: Vec<f64> = (0..points)
        .map(|i| heat_kernel(t, i as f64 * h))
        .collect::<Result<_>>()?;
    let mut worst: f64 = 0.0;
    for x in probe_points(probes) {
        let conv = g_t
            .iter()
            .enumerate()
            .map(|(i, g)| heat_kernel(s, x - i as f64 * h).map(|v| v * g))
            .sum::<Result<f64>>()?
            * h;
        worst = worst.max((conv - heat_kernel(s + t, x)?).abs());
    }
    Ok(worst)
}

/// Largest `|images - spectral|` over `samples` pseudo-random points with
/// `log10 t` uniform on `[-4, 0]` and `x` uniform on `[0, 1)`; also returns
/// the worst point.
pub fn cross_representation_error(samples: usize, seed: u64) -> Result<(f64, f64, f64)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut worst = (0.0, f64::NAN, f64::NAN);
    for _ in 0..samples {
        let t = 10f64.powf(-4.0 * rng.random::<f64>());
        let x = rng.random::<f64>();
        let d = (heat_kernel_images(t, x)? - heat_kernel_spectral(t, x)?).abs();
        if d >= worst.0 {
            worst = (d, t, x);
        }
    }
    Ok(worst)
}
