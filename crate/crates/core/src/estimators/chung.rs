use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{window_grid, Budget, ParabolicWindow, ScaleParams};
use crate::error::{Error, Result};
use crate::noise::{streams, NoiseSource, SeedSpec};
use crate::solver::{solve_spde_streamed, sup_on_window, window_columns, Coefficient};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub params: ScaleParams,
    pub replicates: Range<u64>,
    /// Points per window axis, one entry per resolution.
    pub resolutions: Vec<usize>,
    pub master_seed: u64,
    /// Drive every replicate with zero noise.
    pub zero_noise: bool,
}

/// Order statistics of a sample, quartiles by linear interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() || values.iter().any(|v| v.is_nan()) {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Some(Summary {
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        })
    }
}

/// `S_n = sup_window |u| / f(r_n)` per replicate at one scale and resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleScan {
    pub n: u32,
    pub r: f64,
    pub normalizer: f64,
    pub resolution: usize,
    pub nx: usize,
    pub nt: usize,
    pub replicates: Range<u64>,
    pub statistics: Vec<f64>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleFailure {
    pub n: u32,
    pub resolution: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChungScanResult {
    pub scales: Vec<ScaleScan>,
    pub failures: Vec<ScaleFailure>,
}

impl ChungScanResult {
    pub fn at_resolution(&self, resolution: usize) -> impl Iterator<Item = &ScaleScan> {
        self.scales.iter().filter(move |s| s.resolution == resolution)
    }

    /// Running minimum of the per-scale medians, in increasing `n`.
    pub fn running_min_of_medians(&self, resolution: usize) -> Vec<(u32, f64)> {
        let mut best = f64::INFINITY;
        self.at_resolution(resolution)
            .map(|s| {
                best = best.min(s.summary.median);
                (s.n, best)
            })
            .collect()
    }

    /// `max median / min median` across scales at one resolution.
    pub fn median_spread(&self, resolution: usize) -> f64 {
        let medians: Vec<f64> = self.at_resolution(resolution).map(|s| s.summary.median).collect();
        let hi = medians.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = medians.iter().cloned().fold(f64::INFINITY, f64::min);
        hi / lo
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Seed of replicate `replicate` at scale `n`; every `(n, replicate)` pair
/// gets its own stream, shared across resolutions and coefficients.
pub fn scan_seed(master_seed: u64, n: u32, replicate: u64) -> SeedSpec {
    SeedSpec::new(master_seed, replicate, streams::for_scale(streams::CHUNG_SCAN, n))
}

/// Distribution of `S_n` for each scale and resolution. Scales whose grid
/// exceeds the budget are reported in `failures` and the rest still run;
/// solver errors abort the scan.
pub fn chung_scan(sigma: &Coefficient, config: &ScanConfig, budget: &Budget) -> Result<ChungScanResult> {
    if sigma.sigma0() == 0.0 {
        return Err(Error::Precondition(format!("{}: scan needs sigma(0) != 0", sigma.tag())));
    }
    config.params.validate()?;
    if config.resolutions.is_empty() || config.replicates.is_empty() {
        return Err(Error::Config("scan needs at least one resolution and one replicate".into()));
    }
    let mut result = ChungScanResult {
        scales: Vec::new(),
        failures: Vec::new(),
    };
    for &resolution in &config.resolutions {
        for n in config.params.indices() {
            match scan_scale(sigma, config, n, resolution, budget) {
                Ok(scan) => result.scales.push(scan),
                Err(Error::Resource { what, requested, cap }) => result.failures.push(ScaleFailure {
                    n,
                    resolution,
                    reason: format!("{what}: {requested} requested, cap {cap}"),
                }),
                Err(e) => return Err(e),
            }
        }
    }
    result
        .scales
        .sort_by(|a, b| (a.resolution, a.n).cmp(&(b.resolution, b.n)));
    Ok(result)
}

/// `S_n` for one scale and resolution.
pub fn scan_scale(
    sigma: &Coefficient,
    config: &ScanConfig,
    n: u32,
    resolution: usize,
    budget: &Budget,
) -> Result<ScaleScan> {
    let window = ParabolicWindow::new(config.params.scale(n))?;
    let grid = window_grid(&window, resolution, budget)?;
    let cols = window_columns(&grid, &window);
    let normalizer = window.normalizer();
    let statistics = config
        .replicates
        .clone()
        .into_par_iter()
        .map(|rep| {
            let source = if config.zero_noise {
                NoiseSource::Zero
            } else {
                NoiseSource::Seeded(scan_seed(config.master_seed, n, rep))
            };
            let field = solve_spde_streamed(sigma, &grid, source, cols)?;
            Ok(sup_on_window(&field, &window)? / normalizer)
        })
        .collect::<Result<Vec<f64>>>()?;
    let summary = Summary::of(&statistics)
        .ok_or_else(|| Error::Precondition("scan produced no usable statistics".into()))?;
    Ok(ScaleScan {
        n,
        r: window.r(),
        normalizer,
        resolution,
        nx: grid.nx,
        nt: grid.nt,
        replicates: config.replicates.clone(),
        statistics,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn config(zero_noise: bool) -> ScanConfig {
        ScanConfig {
            params: ScaleParams::new(2.0, 2, 3, 0.5).unwrap(),
            replicates: 0..6,
            resolutions: vec![16],
            master_seed: 17,
            zero_noise,
        }
    }

    #[test]
    fn zero_noise_scan_vanishes() {
        let res = chung_scan(&Coefficient::affine(1.0, 0.5), &config(true), &Budget::default()).unwrap();
        assert_eq!(res.scales.len(), 2);
        assert!(res.scales.iter().all(|s| s.statistics.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn constant_coefficient_scales_linearly() {
        let cfg = config(false);
        let one = chung_scan(&Coefficient::constant(1.0), &cfg, &Budget::default()).unwrap();
        let three = chung_scan(&Coefficient::constant(-3.0), &cfg, &Budget::default()).unwrap();
        for (a, b) in one.scales.iter().zip(&three.scales) {
            for (x, y) in a.statistics.iter().zip(&b.statistics) {
                assert!((y - 3.0 * x).abs() <= 1e-12 * y.abs());
            }
        }
    }

    #[test]
    fn budget_failures_are_partial() {
        let cfg = config(false);
        let budget = Budget {
            max_cells: 200_000,
            ..Budget::default()
        };
        let res = chung_scan(&Coefficient::constant(1.0), &cfg, &budget).unwrap();
        assert!(!res.is_complete());
        assert_eq!(res.scales.len() + res.failures.len(), 2);
        assert!(!res.scales.is_empty());
    }

    #[test]
    fn rejects_vanishing_sigma0() {
        assert!(chung_scan(&Coefficient::affine(0.0, 1.0), &config(false), &Budget::default()).is_err());
    }

    #[test]
    fn streams_differ_across_scales() {
        assert_ne!(scan_seed(1, 3, 0).state_words(), scan_seed(1, 4, 0).state_words());
    }

    proptest! {
        #[test]
        fn summary_is_ordered(v in proptest::collection::vec(0.0f64..10.0, 1..40)) {
            let s = Summary::of(&v).unwrap();
            prop_assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
        }
    }
}
