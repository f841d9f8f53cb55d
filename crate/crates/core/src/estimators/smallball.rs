use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::wilson::wilson95;
use crate::domain::{GridSpec, ParabolicWindow};
use crate::error::{Error, Result};
use crate::noise::{NoiseSource, SeedSpec};
use crate::solver::{solve_spde_streamed, sup_on_window, window_columns, Coefficient};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailMode {
    /// `sup > lambda r`
    Exceedance,
    /// `sup <= lambda r`, the complement of exceedance on every path.
    Containment,
}

impl TailMode {
    pub fn name(self) -> &'static str {
        match self {
            TailMode::Exceedance => "exceedance",
            TailMode::Containment => "containment",
        }
    }

    pub fn hit(self, sup: f64, level: f64) -> bool {
        match self {
            TailMode::Exceedance => sup > level,
            TailMode::Containment => sup <= level,
        }
    }
}

/// Everything that must agree for two estimates to be merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallBallKey {
    pub window: ParabolicWindow,
    pub lambda: f64,
    pub mode: TailMode,
    pub grid: GridSpec,
    pub coefficient: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallBallEstimate {
    pub key: SmallBallKey,
    pub trials: u64,
    pub hits: u64,
}

impl SmallBallEstimate {
    pub fn empty(key: SmallBallKey) -> Self {
        Self { key, trials: 0, hits: 0 }
    }

    pub fn lambda(&self) -> f64 {
        self.key.lambda
    }

    /// `hits / trials`, or NaN without trials.
    pub fn p_hat(&self) -> f64 {
        if self.trials == 0 {
            f64::NAN
        } else {
            self.hits as f64 / self.trials as f64
        }
    }

    pub fn ci(&self) -> (f64, f64) {
        wilson95(self.hits, self.trials)
    }

    /// `hits` is 0 or `trials`, where the interval is one-sided.
    pub fn is_degenerate(&self) -> bool {
        self.hits == 0 || self.hits == self.trials
    }
}

/// Add the counts of two estimates of the same quantity.
pub fn merge_estimates(a: &SmallBallEstimate, b: &SmallBallEstimate) -> Result<SmallBallEstimate> {
    if a.key != b.key {
        return Err(Error::Precondition(format!(
            "cannot merge estimates with different configurations ({:?} vs {:?})",
            a.key, b.key
        )));
    }
    Ok(SmallBallEstimate {
        key: a.key.clone(),
        trials: a.trials + b.trials,
        hits: a.hits + b.hits,
    })
}

/// Window sups of independent replicates `replicates`, in replicate order.
/// Replicate `i` uses `SeedSpec::new(master_seed, i, stream)`.
pub fn sample_window_sups(
    sigma: &Coefficient,
    window: &ParabolicWindow,
    grid: &GridSpec,
    master_seed: u64,
    stream: u32,
    replicates: Range<u64>,
) -> Result<Vec<f64>> {
    check_resolution(window, grid)?;
    let cols = window_columns(grid, window);
    replicates
        .into_par_iter()
        .map(|i| {
            let source = NoiseSource::Seeded(SeedSpec::new(master_seed, i, stream));
            let field = solve_spde_streamed(sigma, grid, source, cols)?;
            sup_on_window(&field, window)
        })
        .collect()
}

fn check_resolution(window: &ParabolicWindow, grid: &GridSpec) -> Result<()> {
    if grid.resolves(window) {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "grid (nx={}, dt={:e}) does not resolve the window r={}",
            grid.nx,
            grid.dt,
            window.r()
        )))
    }
}

/// Count hits of each `lambda` against the same set of sups.
pub fn tally_sups(
    sups: &[f64],
    key_for: impl Fn(f64, TailMode) -> SmallBallKey,
    lambdas: &[f64],
    mode: TailMode,
    r: f64,
) -> Vec<SmallBallEstimate> {
    lambdas
        .iter()
        .map(|&lambda| {
            let level = lambda * r;
            SmallBallEstimate {
                key: key_for(lambda, mode),
                trials: sups.len() as u64,
                hits: sups.iter().filter(|&&s| mode.hit(s, level)).count() as u64,
            }
        })
        .collect()
}

/// Estimate `P(sup > lambda r)` or `P(sup <= lambda r)` on `window` from
/// replicates `0..trials`.
pub fn estimate_small_ball(
    sigma: &Coefficient,
    window: &ParabolicWindow,
    lambda: f64,
    mode: TailMode,
    trials: u64,
    master_seed: u64,
    stream: u32,
    grid: &GridSpec,
) -> Result<SmallBallEstimate> {
    Ok(estimate_small_ball_grid(sigma, window, &[lambda], mode, trials, master_seed, stream, grid)?
        .pop()
        .expect("one lambda in, one estimate out"))
}

/// As [`estimate_small_ball`] over a list of `lambda`, sharing replicates.
pub fn estimate_small_ball_grid(
    sigma: &Coefficient,
    window: &ParabolicWindow,
    lambdas: &[f64],
    mode: TailMode,
    trials: u64,
    master_seed: u64,
    stream: u32,
    grid: &GridSpec,
) -> Result<Vec<SmallBallEstimate>> {
    if trials == 0 {
        return Err(Error::Precondition("trials must be at least 1".into()));
    }
    if let Some(bad) = lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(Error::Domain(format!("lambda must be finite and >= 0, got {bad}")));
    }
    let sups = sample_window_sups(sigma, window, grid, master_seed, stream, 0..trials)?;
    let key_for = |lambda, mode| SmallBallKey {
        window: *window,
        lambda,
        mode,
        grid: *grid,
        coefficient: sigma.tag().to_string(),
    };
    Ok(tally_sups(&sups, key_for, lambdas, mode, window.r()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{window_grid, Budget};
    use proptest::prelude::*;

    fn key(lambda: f64) -> SmallBallKey {
        let w = ParabolicWindow::new(0.25).unwrap();
        SmallBallKey {
            window: w,
            lambda,
            mode: TailMode::Exceedance,
            grid: window_grid(&w, 16, &Budget::default()).unwrap(),
            coefficient: "constant(1)".into(),
        }
    }

    #[test]
    fn small_campaign_basics() {
        let w = ParabolicWindow::new(0.25).unwrap();
        let g = window_grid(&w, 16, &Budget::default()).unwrap();
        let sigma = Coefficient::constant(1.0);
        let lambdas = [0.0, 0.5, 1.0, 2.0];
        let exc = estimate_small_ball_grid(&sigma, &w, &lambdas, TailMode::Exceedance, 64, 1, 0, &g).unwrap();
        let con = estimate_small_ball_grid(&sigma, &w, &lambdas, TailMode::Containment, 64, 1, 0, &g).unwrap();
        assert_eq!(exc[0].hits, 64);
        for (e, c) in exc.iter().zip(&con) {
            assert_eq!(e.hits + c.hits, e.trials);
        }
        for pair in exc.windows(2) {
            assert!(pair[0].hits >= pair[1].hits);
        }
        let single = estimate_small_ball(&sigma, &w, 1.0, TailMode::Exceedance, 64, 1, 0, &g).unwrap();
        assert_eq!(single, exc[2]);
    }

    #[test]
    fn preconditions() {
        let w = ParabolicWindow::new(0.25).unwrap();
        let g = window_grid(&w, 16, &Budget::default()).unwrap();
        let sigma = Coefficient::constant(1.0);
        assert!(estimate_small_ball(&sigma, &w, 1.0, TailMode::Exceedance, 0, 1, 0, &g).is_err());
        assert!(estimate_small_ball(&sigma, &w, -1.0, TailMode::Exceedance, 4, 1, 0, &g).is_err());
        let coarse = GridSpec::new(16, 4, 1e-3).unwrap();
        assert!(estimate_small_ball(&sigma, &w, 1.0, TailMode::Exceedance, 4, 1, 0, &coarse).is_err());
    }

    #[test]
    fn merge_refuses_mismatch() {
        let a = SmallBallEstimate { key: key(1.0), trials: 10, hits: 3 };
        let b = SmallBallEstimate { key: key(1.5), trials: 10, hits: 3 };
        assert!(merge_estimates(&a, &b).is_err());
        assert_eq!(merge_estimates(&a, &SmallBallEstimate::empty(key(1.0))).unwrap(), a);
    }

    proptest! {
        #[test]
        fn merge_is_commutative_and_associative(
            counts in proptest::collection::vec((0u64..1000, 0u64..1000), 3)
        ) {
            let est: Vec<_> = counts
                .iter()
                .map(|&(a, b)| SmallBallEstimate { key: key(2.0), trials: a + b, hits: a })
                .collect();
            let ab = merge_estimates(&est[0], &est[1]).unwrap();
            prop_assert_eq!(&ab, &merge_estimates(&est[1], &est[0]).unwrap());
            let left = merge_estimates(&ab, &est[2]).unwrap();
            let right = merge_estimates(&est[0], &merge_estimates(&est[1], &est[2]).unwrap()).unwrap();
            prop_assert_eq!(&left, &right);
            let (lo, hi) = left.ci();
            prop_assert!(lo <= left.p_hat() && left.p_hat() <= hi);
        }

        #[test]
        fn exceedance_and_containment_partition(
            sups in proptest::collection::vec(0.0f64..2.0, 1..50),
            lambda in 0.0f64..8.0,
        ) {
            let k = |l, m| SmallBallKey { mode: m, ..key(l) };
            let e = tally_sups(&sups, k, &[lambda], TailMode::Exceedance, 0.25);
            let c = tally_sups(&sups, k, &[lambda], TailMode::Containment, 0.25);
            prop_assert_eq!(e[0].hits + c[0].hits, sups.len() as u64);
        }
    }
}
