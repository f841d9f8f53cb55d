use serde::{Deserialize, Serialize};

use super::smallball::SmallBallEstimate;
use super::wilson::wilson95;
use crate::error::{Error, Result};

/// Minimum hits (and misses) for a point to enter the regression.
pub const MIN_INFORMATIVE_HITS: u64 = 5;

/// Weighted affine fit `log p = intercept + slope * lambda^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub lambdas: Vec<f64>,
    pub log_p: Vec<f64>,
    pub weights: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    /// `log_p - fitted`, per used point.
    pub residuals: Vec<f64>,
    /// `sqrt(weight) * residual`, per used point.
    pub standardized_residuals: Vec<f64>,
    /// `lambda` values left out for having too few hits or misses.
    pub excluded: Vec<f64>,
}

impl TailFit {
    pub fn predict_log(&self, lambda: f64) -> f64 {
        self.intercept + self.slope * lambda * lambda
    }

    pub fn predict(&self, lambda: f64) -> f64 {
        self.predict_log(lambda).exp()
    }

    /// Largest `|standardized residual|`.
    pub fn max_standardized_residual(&self) -> f64 {
        self.standardized_residuals
            .iter()
            .fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Estimates whose Wilson interval misses the fitted probability, among
    /// the points that entered the fit.
    pub fn band_violations<'a>(&self, estimates: &'a [SmallBallEstimate]) -> Vec<&'a SmallBallEstimate> {
        estimates
            .iter()
            .filter(|e| self.misses_band(e.lambda(), e.hits, e.trials))
            .collect()
    }

    /// Whether the Wilson interval of `hits / trials` at a fitted `lambda`
    /// misses the fitted probability (always `false` for unfitted `lambda`).
    pub fn misses_band(&self, lambda: f64, hits: u64, trials: u64) -> bool {
        if !self.lambdas.contains(&lambda) {
            return false;
        }
        let (lo, hi) = wilson95(hits, trials);
        let fitted = self.predict(lambda);
        !(lo <= fitted && fitted <= hi)
    }
}

fn informative(hits: u64, trials: u64) -> bool {
    hits >= MIN_INFORMATIVE_HITS && trials.saturating_sub(hits) >= MIN_INFORMATIVE_HITS
}

/// Delta-method weight `N p / (1 - p)`, the inverse variance of `log p_hat`.
fn log_weight(hits: u64, trials: u64) -> f64 {
    let p = hits as f64 / trials as f64;
    trials as f64 * p / (1.0 - p)
}

/// Weighted least squares of `log p_hat` on `lambda^2` with delta-method
/// weights, over estimates with at least [`MIN_INFORMATIVE_HITS`] hits and
/// misses.
pub fn fit_tail_exponent(estimates: &[SmallBallEstimate]) -> Result<TailFit> {
    let counts: Vec<_> = estimates.iter().map(|e| (e.lambda(), e.hits, e.trials)).collect();
    fit_tail_counts(&counts)
}

/// As [`fit_tail_exponent`] on raw `(lambda, hits, trials)` triples.
pub fn fit_tail_counts(counts: &[(f64, u64, u64)]) -> Result<TailFit> {
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for &(lambda, hits, trials) in counts {
        if informative(hits, trials) {
            let p = hits as f64 / trials as f64;
            points.push((lambda, p.ln(), log_weight(hits, trials)));
        } else {
            excluded.push(lambda);
        }
    }
    let mut fit = fit_weighted(&points)?;
    fit.excluded = excluded;
    Ok(fit)
}

/// Weighted fit `log p = intercept + slope * x` to frequencies `(x, hits, trials)`,
/// with the same informativeness filter and weights as the tail fit.
pub fn fit_log_linear(counts: &[(f64, u64, u64)]) -> Result<LineFit> {
    let points: Vec<_> = counts
        .iter()
        .filter(|c| informative(c.1, c.2))
        .map(|&(x, h, n)| (x, (h as f64 / n as f64).ln(), log_weight(h, n)))
        .collect();
    weighted_line(&points)
}

/// Fit exact probabilities `(lambda, p)` with unit weights.
pub fn fit_log_probabilities(points: &[(f64, f64)]) -> Result<TailFit> {
    if let Some(&(l, p)) = points.iter().find(|(_, p)| !(*p > 0.0 && p.is_finite())) {
        return Err(Error::Fit(format!("probability {p} at lambda={l} is not positive")));
    }
    let pts: Vec<_> = points.iter().map(|&(l, p)| (l, p.ln(), 1.0)).collect();
    fit_weighted(&pts)
}

/// Straight-line fit `y = intercept + slope * x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub residuals: Vec<f64>,
    pub standardized_residuals: Vec<f64>,
}

/// Weighted least squares on `(x, y, weight)` with at least 3 points;
/// standard errors treat the weights as inverse variances.
pub fn weighted_line(points: &[(f64, f64, f64)]) -> Result<LineFit> {
    if points.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 usable points, got {}",
            points.len()
        )));
    }
    let sw: f64 = points.iter().map(|p| p.2).sum();
    let xbar = points.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ybar = points.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - xbar).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("abscissae do not span a range".into()));
    }
    let sxy: f64 = points.iter().map(|p| p.2 * (p.0 - xbar) * (p.1 - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let residuals: Vec<f64> = points.iter().map(|p| p.1 - (intercept + slope * p.0)).collect();
    let standardized_residuals = points
        .iter()
        .zip(&residuals)
        .map(|(p, r)| p.2.sqrt() * r)
        .collect();
    Ok(LineFit {
        slope,
        intercept,
        slope_se: (1.0 / sxx).sqrt(),
        intercept_se: (1.0 / sw + xbar * xbar / sxx).sqrt(),
        residuals,
        standardized_residuals,
    })
}

/// Weighted affine regression of `log_p` on `lambda^2` over `(lambda, log_p, weight)`.
pub fn fit_weighted(points: &[(f64, f64, f64)]) -> Result<TailFit> {
    let squared: Vec<_> = points.iter().map(|&(l, y, w)| (l * l, y, w)).collect();
    let line = weighted_line(&squared)?;
    Ok(TailFit {
        lambdas: points.iter().map(|p| p.0).collect(),
        log_p: points.iter().map(|p| p.1).collect(),
        weights: points.iter().map(|p| p.2).collect(),
        slope: line.slope,
        intercept: line.intercept,
        slope_se: line.slope_se,
        intercept_se: line.intercept_se,
        residuals: line.residuals,
        standardized_residuals: line.standardized_residuals,
        excluded: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{GridSpec, ParabolicWindow};
    use crate::estimators::smallball::{SmallBallKey, TailMode};
    use proptest::prelude::*;

    fn estimate(lambda: f64, trials: u64, hits: u64) -> SmallBallEstimate {
        SmallBallEstimate {
            key: SmallBallKey {
                window: ParabolicWindow::new(0.25).unwrap(),
                lambda,
                mode: TailMode::Exceedance,
                grid: GridSpec::new(256, 512, 1e-5).unwrap(),
                coefficient: "constant(1)".into(),
            },
            trials,
            hits,
        }
    }

    #[test]
    fn exact_affine_input_is_recovered() {
        let pts: Vec<_> = [0.5, 1.0, 1.5, 2.0, 2.5]
            .iter()
            .map(|&l: &f64| (l, (1.0 - 2.0 * l * l).exp()))
            .collect();
        let fit = fit_log_probabilities(&pts).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-10);
        assert!((fit.intercept - 1.0).abs() < 1e-10);
        assert!(fit.max_standardized_residual() < 1e-10);
    }

    #[test]
    fn uninformative_points_are_excluded_and_reported() {
        let est = [
            estimate(1.0, 1000, 600),
            estimate(1.5, 1000, 300),
            estimate(2.0, 1000, 100),
            estimate(2.5, 1000, 20),
            estimate(3.0, 1000, 3),
            estimate(3.5, 1000, 0),
        ];
        let fit = fit_tail_exponent(&est).unwrap();
        assert_eq!(fit.lambdas, vec![1.0, 1.5, 2.0, 2.5]);
        assert_eq!(fit.excluded, vec![3.0, 3.5]);
        assert!(fit.slope < 0.0);

        let too_few = [estimate(1.0, 100, 50), estimate(2.0, 100, 2), estimate(3.0, 100, 0)];
        assert!(fit_tail_exponent(&too_few).is_err());
        // saturated points are uninformative as well
        let saturated = [estimate(0.0, 100, 100), estimate(0.1, 100, 98), estimate(1.0, 100, 50)];
        assert!(fit_tail_exponent(&saturated).is_err());
    }

    proptest! {
        #[test]
        fn recovers_any_exact_line(slope in -5.0f64..-0.1, intercept in -2.0f64..0.5) {
            let pts: Vec<_> = [0.5, 0.75, 1.0, 1.25]
                .iter()
                .map(|&l: &f64| (l, (intercept + slope * l * l).exp().min(1.0)))
                .filter(|&(_, p)| p < 1.0)
                .collect();
            prop_assume!(pts.len() >= 3);
            let fit = fit_log_probabilities(&pts).unwrap();
            prop_assert!((fit.slope - slope).abs() < 1e-9);
            prop_assert!((fit.intercept - intercept).abs() < 1e-9);
        }

        #[test]
        fn log_linear_fit_on_exact_counts(slope in -3.0f64..-0.5) {
            let counts: Vec<_> = [1.0, 2.0, 3.0, 4.0]
                .iter()
                .map(|&x: &f64| (x, ((slope * x).exp() * 1e12).round() as u64, 1_000_000_000_000u64))
                .collect();
            let line = fit_log_linear(&counts).unwrap();
            prop_assert!((line.slope - slope).abs() < 1e-6);
        }
    }
}
