//! Pathwise coupling of the solution `u`, its truncated version `u_trunc`,
//! the frozen-coefficient Gaussian field `u_frozen` and the unit-coefficient
//! field `v`, all driven by one noise realisation on one grid.
//!
//! Events per window `r_n`:
//! - truncation divergence: `u != u_trunc` somewhere on the window;
//! - `F_n^c`: the truncated path leaves the band `|u_trunc(t,x) - u_trunc(0,x)| <= r_n^((1+eps)/2)`
//!   on the window's spatial strip strictly before `t = r_n^4`;
//! - `sup |D| > r_n^(1+eps)` with `D = u_trunc - u_frozen`.
//!
//! Stopping happens at step boundaries: the stopped coefficient used for the
//! `D~_n` comparison path is frozen from the first step index whose values
//! exceed the band.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{window_grid, Budget, GridSpec, ParabolicWindow, ScaleParams, NODE_SLACK};
use crate::error::{Error, Result};
use crate::noise::{streams, NoiseSource, SeedSpec};
use crate::solver::{
    truncate_coefficient, window_columns, Coefficient, Field, Forcing, FrozenCoefficient,
    ImplicitHeatStep, TruncatedCoefficient,
};

/// Default tolerance separating rounding from genuine truncation divergence.
pub const DEFAULT_DIVERGENCE_TOL: f64 = 1e-9;

/// Default freezing exponent.
pub const DEFAULT_EPSILON: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingOptions {
    pub epsilon: f64,
    pub divergence_tol: f64,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            divergence_tol: DEFAULT_DIVERGENCE_TOL,
        }
    }
}

/// The four coupled fields, recorded on the window strip.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPaths {
    pub u: Field,
    pub u_trunc: Field,
    pub u_frozen: Field,
    pub v: Field,
    pub sigma0: f64,
}

impl CoupledPaths {
    /// `max |u_frozen - sigma(0) v| / max |sigma(0) v|` over all recorded nodes
    /// (0 when both fields vanish).
    pub fn frozen_identity_error(&self) -> f64 {
        let scaled = self.v.scaled(self.sigma0);
        let scale = scaled.max_abs();
        let diff = self
            .u_frozen
            .max_abs_diff(&scaled)
            .expect("coupled fields share a grid");
        if scale == 0.0 {
            diff
        } else {
            diff / scale
        }
    }

    /// `D = u_trunc - u_frozen`.
    pub fn freezing_difference(&self) -> Field {
        self.u_trunc
            .difference(&self.u_frozen)
            .expect("coupled fields share a grid")
    }
}

/// Discrete stopping time of the truncated path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRecord {
    /// `g(r_n) = r_n^((1+eps)/2)`
    pub threshold: f64,
    /// First step index with `|u_trunc(t_j, x) - u_trunc(0, x)| > g` for some
    /// window column, or `None` if that never happens within the horizon.
    pub tau_index: Option<usize>,
    pub window: ParabolicWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingOutcome {
    pub truncation_diverged: bool,
    /// `tau < r_n^4`, the complement of `F_n`.
    pub fn_failed: bool,
    /// `sup |u_trunc - u_frozen|` on the window.
    pub sup_d: f64,
    /// `r_n^(1+eps)`
    pub sup_d_threshold: f64,
    pub sup_d_exceeds: bool,
    /// `max |u - u_trunc|` on the window.
    pub truncation_gap: f64,
    pub frozen_identity_error: f64,
}

/// `true` iff `max |u - u_trunc| > tol` over the window nodes.
pub fn truncation_divergence_check(
    u: &Field,
    u_trunc: &Field,
    window: &ParabolicWindow,
    tol: f64,
) -> Result<bool> {
    Ok(window_max_abs_diff(u, u_trunc, window)? > tol)
}

fn window_max_abs_diff(a: &Field, b: &Field, window: &ParabolicWindow) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::Precondition("fields live on different grids".into()));
    }
    let (rows, cols) = crate::solver::window_extent(a, window)?;
    let (rows_b, cols_b) = crate::solver::window_extent(b, window)?;
    debug_assert_eq!((rows, cols), (rows_b, cols_b));
    let mut worst: f64 = 0.0;
    for j in 0..rows {
        for (x, y) in a.row(j)[..cols].iter().zip(&b.row(j)[..cols]) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

fn stopping_index(u_trunc: &Field, window: &ParabolicWindow, threshold: f64) -> Result<Option<usize>> {
    let (_, cols) = crate::solver::window_extent(u_trunc, window)?;
    let base = u_trunc.row(0)[..cols].to_vec();
    Ok((1..u_trunc.rows()).find(|&j| {
        u_trunc.row(j)[..cols]
            .iter()
            .zip(&base)
            .any(|(v, b)| (v - b).abs() > threshold)
    }))
}

fn check_setup(sigma: &Coefficient, window: &ParabolicWindow, grid: &GridSpec, eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("freezing exponent {eps} must lie in (0, 1)")));
    }
    if !grid.resolves(window) {
        return Err(Error::Precondition(format!(
            "grid (nx={}, dt={:e}) does not resolve the window r={}",
            grid.nx,
            grid.dt,
            window.r()
        )));
    }
    if sigma.sigma0() == 0.0 {
        return Err(Error::Precondition(format!("{}: coupling needs sigma(0) != 0", sigma.tag())));
    }
    Ok(())
}

/// Integrate the four coupled fields and evaluate the window events.
pub fn run_coupled(
    sigma: &Coefficient,
    window: &ParabolicWindow,
    grid: &GridSpec,
    source: impl Into<NoiseSource>,
    eps: f64,
) -> Result<(CoupledPaths, StoppingRecord, CouplingOutcome)> {
    run_coupled_with(
        sigma,
        window,
        grid,
        source.into(),
        &CouplingOptions {
            epsilon: eps,
            ..CouplingOptions::default()
        },
    )
}

pub fn run_coupled_with(
    sigma: &Coefficient,
    window: &ParabolicWindow,
    grid: &GridSpec,
    source: NoiseSource,
    options: &CouplingOptions,
) -> Result<(CoupledPaths, StoppingRecord, CouplingOutcome)> {
    let eps = options.epsilon;
    check_setup(sigma, window, grid, eps)?;
    let truncated = truncate_coefficient(sigma)?;
    let nx = grid.nx;
    let cols = window_columns(grid, window);
    let seed = source.seed();

    let mut u = vec![0.0; nx];
    let mut ut = vec![0.0; nx];
    let mut ug = vec![0.0; nx];
    let mut v = vec![0.0; nx];
    // the frozen coefficient is sigma_tilde at the initial profile u_trunc(0, .)
    let frozen = FrozenCoefficient::freeze(&truncated, &ut);
    let unit = Coefficient::constant(1.0);

    let mut f_u = Field::with_capacity(*grid, cols, sigma.tag().to_string(), seed);
    let mut f_ut = Field::with_capacity(*grid, cols, Forcing::tag(&truncated), seed);
    let mut f_ug = Field::with_capacity(*grid, cols, Forcing::tag(&frozen), seed);
    let mut f_v = Field::with_capacity(*grid, cols, unit.tag().to_string(), seed);

    let stepper = ImplicitHeatStep::new(grid);
    let mut rows = source.rows(grid);
    let mut dw = vec![0.0; nx];
    // u_trunc equals u bitwise until the clip first becomes active, so it is
    // only integrated separately from that step on
    let mut split = false;
    for step in 0..grid.nt {
        rows.fill_next(&mut dw);
        if !split && u.iter().any(|&x| truncated.clips(x)) {
            ut.copy_from_slice(&u);
            split = true;
        }
        let ok = stepper.step(&mut u, &dw, sigma)
            & (!split || stepper.step(&mut ut, &dw, &truncated))
            & stepper.step(&mut ug, &dw, &frozen)
            & stepper.step(&mut v, &dw, &unit);
        if !ok {
            return Err(Error::NonFinite { step: step + 1 });
        }
        f_u.push_row(&u);
        f_ut.push_row(if split { &ut } else { &u });
        f_ug.push_row(&ug);
        f_v.push_row(&v);
    }

    let paths = CoupledPaths {
        u: f_u,
        u_trunc: f_ut,
        u_frozen: f_ug,
        v: f_v,
        sigma0: sigma.sigma0(),
    };
    let r = window.r();
    let threshold = r.powf((1.0 + eps) / 2.0);
    let tau_index = stopping_index(&paths.u_trunc, window, threshold)?;
    let stopping = StoppingRecord {
        threshold,
        tau_index,
        window: *window,
    };
    let truncation_gap = window_max_abs_diff(&paths.u, &paths.u_trunc, window)?;
    let sup_d = window_max_abs_diff(&paths.u_trunc, &paths.u_frozen, window)?;
    let sup_d_threshold = r.powf(1.0 + eps);
    let fn_failed = tau_index
        .map(|j| (j as f64) * grid.dt < window.t_max() * (1.0 - NODE_SLACK))
        .unwrap_or(false);
    let outcome = CouplingOutcome {
        truncation_diverged: truncation_gap > options.divergence_tol,
        fn_failed,
        sup_d,
        sup_d_threshold,
        sup_d_exceeds: sup_d > sup_d_threshold,
        truncation_gap,
        frozen_identity_error: paths.frozen_identity_error(),
    };
    Ok((paths, stopping, outcome))
}

/// Coefficient `sigma_tilde(u_trunc(s ^ tau, x))`: solution-dependent before
/// step `tau`, frozen at the profile reached at `tau` afterwards.
struct StoppedCoefficient<'a> {
    truncated: &'a TruncatedCoefficient,
    frozen: Option<Vec<f64>>,
}

impl Forcing for StoppedCoefficient<'_> {
    #[inline]
    fn sigma(&self, i: usize, u: f64) -> f64 {
        match &self.frozen {
            Some(values) => values[i],
            None => self.truncated.eval(u),
        }
    }

    fn tag(&self) -> String {
        format!("stopped[{}]", self.truncated.base().tag())
    }
}

/// Direct integration of `D~_n = (stopped truncated field) - u_frozen` for a
/// given stopping index. With `tau = None` the stopped path is the truncated
/// path itself.
pub fn stopped_difference(
    sigma: &Coefficient,
    window: &ParabolicWindow,
    grid: &GridSpec,
    source: NoiseSource,
    tau_index: Option<usize>,
) -> Result<Field> {
    let truncated = truncate_coefficient(sigma)?;
    let nx = grid.nx;
    let cols = window_columns(grid, window);
    let mut stopped = StoppedCoefficient {
        truncated: &truncated,
        frozen: None,
    };
    let frozen = FrozenCoefficient::freeze(&truncated, &vec![0.0; nx]);
    let mut us = vec![0.0; nx];
    let mut ug = vec![0.0; nx];
    let mut f_s = Field::with_capacity(*grid, cols, stopped.tag(), source.seed());
    let mut f_g = Field::with_capacity(*grid, cols, Forcing::tag(&frozen), source.seed());
    let stepper = ImplicitHeatStep::new(grid);
    let mut rows = source.rows(grid);
    let mut dw = vec![0.0; nx];
    for step in 0..grid.nt {
        if tau_index == Some(step) {
            stopped.frozen = Some(us.iter().map(|&x| truncated.eval(x)).collect());
        }
        rows.fill_next(&mut dw);
        if !(stepper.step(&mut us, &dw, &stopped) & stepper.step(&mut ug, &dw, &frozen)) {
            return Err(Error::NonFinite { step: step + 1 });
        }
        f_s.push_row(&us);
        f_g.push_row(&ug);
    }
    f_s.difference(&f_g)
}

/// Seed of replicate `replicate` at scale index `n` in a coupling campaign.
pub fn coupling_seed(master_seed: u64, n: u32, replicate: u64) -> SeedSpec {
    SeedSpec::new(master_seed, replicate, streams::for_scale(streams::COUPLING, n))
}

/// Per-replicate result of a coupling campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub n: u32,
    pub replicate: u64,
    pub tau_index: Option<usize>,
    pub outcome: CouplingOutcome,
}

/// Event counts over a set of replicates at one scale. Merging is
/// associative and commutative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CouplingTally {
    pub trials: u64,
    pub truncation_diverged: u64,
    pub fn_failed: u64,
    pub sup_d_exceeds: u64,
    pub max_frozen_identity_error: f64,
}

impl CouplingTally {
    pub fn record(&mut self, o: &CouplingOutcome) {
        self.trials += 1;
        self.truncation_diverged += u64::from(o.truncation_diverged);
        self.fn_failed += u64::from(o.fn_failed);
        self.sup_d_exceeds += u64::from(o.sup_d_exceeds);
        self.max_frozen_identity_error = self.max_frozen_identity_error.max(o.frozen_identity_error);
    }

    pub fn merge(&self, other: &CouplingTally) -> CouplingTally {
        CouplingTally {
            trials: self.trials + other.trials,
            truncation_diverged: self.truncation_diverged + other.truncation_diverged,
            fn_failed: self.fn_failed + other.fn_failed,
            sup_d_exceeds: self.sup_d_exceeds + other.sup_d_exceeds,
            max_frozen_identity_error: self
                .max_frozen_identity_error
                .max(other.max_frozen_identity_error),
        }
    }
}

/// Run `replicates` of the coupling at scale `r_n`, in parallel, returning
/// outcomes in replicate order.
pub fn coupling_replicates(
    sigma: &Coefficient,
    params: &ScaleParams,
    n: u32,
    replicates: Range<u64>,
    points_per_axis: usize,
    master_seed: u64,
    options: &CouplingOptions,
    budget: &Budget,
) -> Result<Vec<ReplicateOutcome>> {
    let window = ParabolicWindow::new(params.scale(n))?;
    let grid = window_grid(&window, points_per_axis, budget)?;
    replicates
        .into_par_iter()
        .map(|rep| {
            let seed = coupling_seed(master_seed, n, rep);
            let (_, stop, outcome) = run_coupled_with(sigma, &window, &grid, seed.into(), options)?;
            Ok(ReplicateOutcome {
                n,
                replicate: rep,
                tau_index: stop.tau_index,
                outcome,
            })
        })
        .collect()
}
