//! Monte Carlo estimators: small-ball and tail probabilities with Wilson
//! intervals, the tail-exponent regression, the Chung-scaling scan and the
//! Brownian small-ball oracle.

mod brownian;
mod chung;
mod smallball;
mod tailfit;
mod wilson;

pub use brownian::{bm_smallball_mc, bm_smallball_oracle, BmSmallBallMc};
pub use chung::{chung_scan, scan_scale, scan_seed, ChungScanResult, ScaleFailure, ScaleScan, ScanConfig, Summary};
pub use smallball::{
    estimate_small_ball, estimate_small_ball_grid, merge_estimates, sample_window_sups, tally_sups,
    SmallBallEstimate, SmallBallKey, TailMode,
};
pub use tailfit::{
    fit_log_linear, fit_log_probabilities, fit_tail_counts, fit_tail_exponent, fit_weighted, weighted_line,
    LineFit, TailFit, MIN_INFORMATIVE_HITS,
};
pub use wilson::{
    difference_lower_bound, nonincreasing_one_sided, wilson95, wilson_interval, Z95, Z95_ONE_SIDED,
};
