//! Small-ball probability of standard Brownian motion on `[0, 1]`.

use std::f64::consts::PI;
use std::ops::Range;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::wilson::wilson95;
use crate::error::{Error, Result};
use crate::noise::{streams, SeedSpec};

/// `P(sup_{0<=s<=1} |B_s| <= eps)` by the reflection series
/// `(4/pi) sum_k (-1)^k / (2k+1) exp(-(2k+1)^2 pi^2 / (8 eps^2))`, summed until
/// a term falls below `1e-16`.
pub fn bm_smallball_oracle(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("small-ball radius must be positive, got {eps}")));
    }
    let c = PI * PI / (8.0 * eps * eps);
    let mut sum = 0.0;
    let mut k = 0u64;
    loop {
        let m = (2 * k + 1) as f64;
        let term = (-c * m * m).exp() / m;
        if term < 1e-16 && k > 0 {
            break;
        }
        sum += if k % 2 == 0 { term } else { -term };
        k += 1;
    }
    Ok((4.0 / PI * sum).clamp(0.0, 1.0))
}

/// Monte Carlo counts of `max_k |B(k/steps)| <= eps` for each radius, using
/// the same paths for every radius, on the fine grid and on the grid
/// subsampled to every other point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmSmallBallMc {
    pub epsilons: Vec<f64>,
    pub paths: u64,
    pub steps: u64,
    pub hits_fine: Vec<u64>,
    pub hits_coarse: Vec<u64>,
}

impl BmSmallBallMc {
    /// Pool two runs over disjoint path sets with the same radii and steps.
    pub fn merge(&self, other: &BmSmallBallMc) -> Result<BmSmallBallMc> {
        if self.epsilons != other.epsilons || self.steps != other.steps {
            return Err(Error::Precondition("cannot merge runs with different radii or steps".into()));
        }
        let add = |a: &[u64], b: &[u64]| a.iter().zip(b).map(|(x, y)| x + y).collect();
        Ok(BmSmallBallMc {
            epsilons: self.epsilons.clone(),
            paths: self.paths + other.paths,
            steps: self.steps,
            hits_fine: add(&self.hits_fine, &other.hits_fine),
            hits_coarse: add(&self.hits_coarse, &other.hits_coarse),
        })
    }

    pub fn p_fine(&self, i: usize) -> f64 {
        self.hits_fine[i] as f64 / self.paths as f64
    }

    pub fn p_coarse(&self, i: usize) -> f64 {
        self.hits_coarse[i] as f64 / self.paths as f64
    }

    pub fn ci_fine(&self, i: usize) -> (f64, f64) {
        wilson95(self.hits_fine[i], self.paths)
    }

    /// Discretisation allowance for the fine estimate: the monitoring bias
    /// scales like `h^(1/2)`, so with `d = p(2h) - p(h)` the bias remaining at
    /// step `h` is about `d / (sqrt(2) - 1)`.
    pub fn allowance(&self, i: usize) -> f64 {
        (self.p_coarse(i) - self.p_fine(i)).abs() / (std::f64::consts::SQRT_2 - 1.0)
    }

    /// Whether the oracle value lies in the fine Wilson interval widened by
    /// the allowance.
    pub fn consistent_with_oracle(&self, i: usize) -> Result<bool> {
        let exact = bm_smallball_oracle(self.epsilons[i])?;
        let (lo, hi) = self.ci_fine(i);
        let a = self.allowance(i);
        Ok(lo - a <= exact && exact <= hi + a)
    }
}

/// Simulate random-walk approximations of Brownian motion with `steps`
/// steps (an even number), one per path index. Path `i` uses
/// `SeedSpec::new(master_seed, i, BROWNIAN)`.
pub fn bm_smallball_mc(
    epsilons: &[f64],
    paths: Range<u64>,
    steps: u64,
    master_seed: u64,
) -> Result<BmSmallBallMc> {
    if epsilons.is_empty() {
        return Err(Error::Config("no radii given".into()));
    }
    if let Some(bad) = epsilons.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::Domain(format!("small-ball radius must be positive, got {bad}")));
    }
    if paths.is_empty() || steps < 2 || steps % 2 != 0 {
        return Err(Error::Precondition(format!(
            "need at least one path and an even step count >= 2, got paths {paths:?} and {steps} steps"
        )));
    }
    let sd = (1.0 / steps as f64).sqrt();
    let maxima: Vec<(f64, f64)> = paths
        .clone()
        .into_par_iter()
        .map(|i| {
            let mut rng = SeedSpec::new(master_seed, i, streams::BROWNIAN).rng();
            let mut b = 0.0f64;
            let (mut fine, mut coarse) = (0.0f64, 0.0f64);
            for k in 1..=steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                b += sd * z;
                fine = fine.max(b.abs());
                if k % 2 == 0 {
                    coarse = coarse.max(b.abs());
                }
            }
            (fine, coarse)
        })
        .collect();
    let count = |eps: f64, pick: fn(&(f64, f64)) -> f64| {
        maxima.iter().filter(|m| pick(m) <= eps).count() as u64
    };
    Ok(BmSmallBallMc {
        epsilons: epsilons.to_vec(),
        paths: paths.end - paths.start,
        steps,
        hits_fine: epsilons.iter().map(|&e| count(e, |m| m.0)).collect(),
        hits_coarse: epsilons.iter().map(|&e| count(e, |m| m.1)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_values() {
        // reference values from a 50-digit evaluation of the series
        assert!((bm_smallball_oracle(1.0).unwrap() - 0.370_777_429_799_523_9).abs() < 1e-15);
        assert!((bm_smallball_oracle(0.75).unwrap() - 0.142_035_116_140_754_7).abs() < 1e-15);
        assert!(bm_smallball_oracle(10.0).unwrap() > 1.0 - 1e-10);
        assert!(bm_smallball_oracle(0.1).unwrap() < 1e-50);
        assert!(bm_smallball_oracle(0.0).is_err());
        assert!(bm_smallball_oracle(-1.0).is_err());
    }

    #[test]
    fn series_is_monotone_in_radius() {
        let mut prev = 0.0;
        for i in 1..200 {
            let p = bm_smallball_oracle(i as f64 * 0.02).unwrap();
            assert!(p >= prev);
            prev = p;
        }
    }

    #[test]
    fn small_monte_carlo_is_consistent() {
        let mc = bm_smallball_mc(&[1.0, 0.75], 0..4000, 400, 3).unwrap();
        let halves = bm_smallball_mc(&[1.0, 0.75], 0..1500, 400, 3)
            .unwrap()
            .merge(&bm_smallball_mc(&[1.0, 0.75], 1500..4000, 400, 3).unwrap())
            .unwrap();
        assert_eq!(halves, mc);
        for i in 0..2 {
            assert!(mc.hits_coarse[i] >= mc.hits_fine[i]);
            assert!(mc.consistent_with_oracle(i).unwrap(), "eps={}", mc.epsilons[i]);
        }
        assert!(bm_smallball_mc(&[], 0..10, 10, 0).is_err());
        assert!(bm_smallball_mc(&[1.0], 0..10, 11, 0).is_err());
        assert!(bm_smallball_mc(&[1.0], 5..5, 10, 0).is_err());
    }
}
