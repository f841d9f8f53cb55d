//! Python bindings: `import chung_lab`.

use chung_lab_core::coupling::{self, CouplingOptions};
use chung_lab_core::domain::{self, Budget};
use chung_lab_core::estimators::{self, TailMode};
use chung_lab_core::noise::{streams, NoiseSource};
use chung_lab_core::{kernel, solver, Error};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Precondition(_) | Error::Config(_) | Error::Format(_) | Error::Fit(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn mode_from(name: &str) -> PyResult<TailMode> {
    match name {
        "exceedance" => Ok(TailMode::Exceedance),
        "containment" => Ok(TailMode::Containment),
        other => Err(PyValueError::new_err(format!(
            "mode must be 'exceedance' or 'containment', got {other:?}"
        ))),
    }
}

/// Noise coefficient sigma(u).
#[pyclass(frozen, skip_from_py_object, name = "Coefficient")]
#[derive(Clone)]
struct PyCoefficient(solver::Coefficient);

#[pymethods]
impl PyCoefficient {
    /// sigma(u) = c
    #[staticmethod]
    fn constant(c: f64) -> Self {
        Self(solver::Coefficient::constant(c))
    }

    /// sigma(u) = c0 + c1 u
    #[staticmethod]
    fn affine(c0: f64, c1: f64) -> Self {
        Self(solver::Coefficient::affine(c0, c1))
    }

    /// sigma(u) = c0 + c1 sin(u)
    #[staticmethod]
    fn sine(c0: f64, c1: f64) -> Self {
        Self(solver::Coefficient::sine(c0, c1))
    }

    fn __call__(&self, u: f64) -> f64 {
        self.0.eval(u)
    }

    fn negated(&self) -> Self {
        Self(self.0.negated())
    }

    #[getter]
    fn lipschitz(&self) -> f64 {
        self.0.lipschitz()
    }

    #[getter]
    fn sigma0(&self) -> f64 {
        self.0.sigma0()
    }

    #[getter]
    fn tag(&self) -> String {
        self.0.tag().to_string()
    }

    fn __repr__(&self) -> String {
        format!("Coefficient({})", self.0.tag())
    }
}

/// The window 0 <= t <= r^4, 0 <= x <= r^2.
#[pyclass(frozen, skip_from_py_object, name = "ParabolicWindow")]
#[derive(Clone, Copy)]
struct PyWindow(domain::ParabolicWindow);

#[pymethods]
impl PyWindow {
    #[new]
    fn new(r: f64) -> PyResult<Self> {
        domain::ParabolicWindow::new(r).map(Self).map_err(to_py)
    }

    #[getter]
    fn r(&self) -> f64 {
        self.0.r()
    }

    #[getter]
    fn t_max(&self) -> f64 {
        self.0.t_max()
    }

    #[getter]
    fn x_max(&self) -> f64 {
        self.0.x_max()
    }

    #[getter]
    fn normalizer(&self) -> f64 {
        self.0.normalizer()
    }

    /// Grid resolving the window with `points_per_axis` spacings across it.
    #[pyo3(signature = (points_per_axis = 16))]
    fn grid(&self, points_per_axis: usize) -> PyResult<PyGrid> {
        domain::window_grid(&self.0, points_per_axis, &Budget::default())
            .map(PyGrid)
            .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("ParabolicWindow(r={})", self.0.r())
    }
}

/// Space-time grid on the unit circle with `nx` points and `nt` steps of `dt`.
#[pyclass(frozen, skip_from_py_object, name = "GridSpec")]
#[derive(Clone, Copy)]
struct PyGrid(domain::GridSpec);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(nx: usize, nt: usize, dt: f64) -> PyResult<Self> {
        domain::GridSpec::new(nx, nt, dt).map(Self).map_err(to_py)
    }

    #[getter]
    fn nx(&self) -> usize {
        self.0.nx
    }

    #[getter]
    fn nt(&self) -> usize {
        self.0.nt
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.0.dt
    }

    #[getter]
    fn dx(&self) -> f64 {
        self.0.dx()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.0.horizon()
    }

    fn __repr__(&self) -> String {
        format!("GridSpec(nx={}, nt={}, dt={:e})", self.0.nx, self.0.nt, self.0.dt)
    }
}

/// A simulated field: `nt + 1` rows (t = 0 included) of the first `cols` spatial nodes.
#[pyclass(frozen, name = "Field")]
struct PyField(solver::Field);

#[pymethods]
impl PyField {
    #[getter]
    fn rows(&self) -> usize {
        self.0.rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.0.cols()
    }

    fn value(&self, j: usize, i: usize) -> PyResult<f64> {
        if j >= self.0.rows() || i >= self.0.cols() {
            return Err(PyValueError::new_err(format!("node ({j}, {i}) is outside the field")));
        }
        Ok(self.0.value(j, i))
    }

    fn row(&self, j: usize) -> PyResult<Vec<f64>> {
        if j >= self.0.rows() {
            return Err(PyValueError::new_err(format!("row {j} is outside the field")));
        }
        Ok(self.0.row(j).to_vec())
    }

    /// Row-major values.
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn max_abs(&self) -> f64 {
        self.0.max_abs()
    }

    /// sup |u| over the window's grid nodes.
    fn window_sup(&self, window: &PyWindow) -> PyResult<f64> {
        solver::sup_on_window(&self.0, &window.0).map_err(to_py)
    }
}

/// Integrate du = u_xx/2 dt + sigma(u) dW from u0 = 0, recording `cols`
/// spatial nodes (all by default). The noise is replicate `replicate` of
/// stream `stream` under `seed`.
#[pyfunction]
#[pyo3(signature = (sigma, grid, seed, replicate = 0, stream = streams::WHITE_NOISE, cols = None))]
fn solve(
    py: Python<'_>,
    sigma: &PyCoefficient,
    grid: &PyGrid,
    seed: u64,
    replicate: u64,
    stream: u32,
    cols: Option<usize>,
) -> PyResult<PyField> {
    let source = NoiseSource::Seeded(chung_lab_core::noise::SeedSpec::new(seed, replicate, stream));
    let (sigma, grid) = (sigma.0.clone(), grid.0);
    py.detach(|| solver::solve_spde_streamed(&sigma, &grid, source, cols.unwrap_or(grid.nx)))
        .map(PyField)
        .map_err(to_py)
}

/// Run the truncation / freezing coupling for one replicate. Returns a dict
/// of the stopping index and the event outcome.
#[pyfunction]
#[pyo3(signature = (sigma, window, seed, replicate = 0, points_per_axis = 16, epsilon = 0.5))]
fn run_coupled<'py>(
    py: Python<'py>,
    sigma: &PyCoefficient,
    window: &PyWindow,
    seed: u64,
    replicate: u64,
    points_per_axis: usize,
    epsilon: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let (sigma, window) = (sigma.0.clone(), window.0);
    let (stop, outcome) = py
        .detach(|| {
            let grid = domain::window_grid(&window, points_per_axis, &Budget::default())?;
            let seed = coupling::coupling_seed(seed, 0, replicate);
            let options = CouplingOptions {
                epsilon,
                ..CouplingOptions::default()
            };
            coupling::run_coupled_with(&sigma, &window, &grid, seed.into(), &options)
                .map(|(_, stop, outcome)| (stop, outcome))
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("threshold", stop.threshold)?;
    d.set_item("tau_index", stop.tau_index)?;
    d.set_item("truncation_diverged", outcome.truncation_diverged)?;
    d.set_item("fn_failed", outcome.fn_failed)?;
    d.set_item("sup_d", outcome.sup_d)?;
    d.set_item("sup_d_threshold", outcome.sup_d_threshold)?;
    d.set_item("sup_d_exceeds", outcome.sup_d_exceeds)?;
    d.set_item("truncation_gap", outcome.truncation_gap)?;
    d.set_item("frozen_identity_error", outcome.frozen_identity_error)?;
    Ok(d)
}

/// Monte Carlo estimates of P(sup > lambda r) ("exceedance") or
/// P(sup <= lambda r) ("containment") on the window, one dict per lambda.
#[pyfunction]
#[pyo3(signature = (sigma, window, lambdas, trials, seed, mode = "exceedance", points_per_axis = 16))]
fn small_ball<'py>(
    py: Python<'py>,
    sigma: &PyCoefficient,
    window: &PyWindow,
    lambdas: Vec<f64>,
    trials: u64,
    seed: u64,
    mode: &str,
    points_per_axis: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mode = mode_from(mode)?;
    let (sigma, window) = (sigma.0.clone(), window.0);
    let estimates = py
        .detach(|| {
            let grid = domain::window_grid(&window, points_per_axis, &Budget::default())?;
            estimators::estimate_small_ball_grid(
                &sigma,
                &window,
                &lambdas,
                mode,
                trials,
                seed,
                streams::SMALL_BALL,
                &grid,
            )
        })
        .map_err(to_py)?;
    estimates
        .iter()
        .map(|e| {
            let d = PyDict::new(py);
            d.set_item("lambda", e.lambda())?;
            d.set_item("hits", e.hits)?;
            d.set_item("trials", e.trials)?;
            d.set_item("p_hat", e.p_hat())?;
            d.set_item("ci", e.ci())?;
            Ok(d)
        })
        .collect()
}

/// Weighted fit of log p on lambda^2 from `(lambda, hits, trials)` counts.
#[pyfunction]
fn fit_tail<'py>(py: Python<'py>, counts: Vec<(f64, u64, u64)>) -> PyResult<Bound<'py, PyDict>> {
    let fit = estimators::fit_tail_counts(&counts).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("slope", fit.slope)?;
    d.set_item("intercept", fit.intercept)?;
    d.set_item("slope_se", fit.slope_se)?;
    d.set_item("intercept_se", fit.intercept_se)?;
    d.set_item("lambdas", fit.lambdas.clone())?;
    d.set_item("excluded", fit.excluded.clone())?;
    d.set_item("max_standardized_residual", fit.max_standardized_residual())?;
    let violations: Vec<f64> = counts
        .iter()
        .filter(|(l, h, n)| fit.misses_band(*l, *h, *n))
        .map(|c| c.0)
        .collect();
    d.set_item("band_violations", violations)?;
    Ok(d)
}

/// Chung statistics S_n = sup / f(r_n) for replicates `0..replicates` at
/// scale r = a^-n.
#[pyfunction]
#[pyo3(signature = (sigma, a, n, replicates, seed, points_per_axis = 16))]
fn chung_statistics(
    py: Python<'_>,
    sigma: &PyCoefficient,
    a: f64,
    n: u32,
    replicates: u64,
    seed: u64,
    points_per_axis: usize,
) -> PyResult<Vec<f64>> {
    let sigma = sigma.0.clone();
    py.detach(|| {
        let config = estimators::ScanConfig {
            params: domain::ScaleParams::new(a, n, n, 0.5)?,
            replicates: 0..replicates,
            resolutions: vec![points_per_axis],
            master_seed: seed,
            zero_noise: false,
        };
        estimators::scan_scale(&sigma, &config, n, points_per_axis, &Budget::default())
    })
    .map(|s| s.statistics)
    .map_err(to_py)
}

/// P(sup_{t<=1} |B_t| < eps) for standard Brownian motion.
#[pyfunction]
fn bm_smallball(eps: f64) -> PyResult<f64> {
    estimators::bm_smallball_oracle(eps).map_err(to_py)
}

/// Heat kernel of u_t = u_xx / 2 on the unit circle.
#[pyfunction]
fn heat_kernel(t: f64, x: f64) -> PyResult<f64> {
    kernel::heat_kernel(t, x).map_err(to_py)
}

/// Variance (1 - exp(-4 pi^2 k^2 t)) / (4 pi^2 k^2) of Fourier mode k.
#[pyfunction]
fn mode_variance(t: f64, k: u64) -> f64 {
    kernel::kernel_covariance_linear(t, k)
}

/// f(r) = r (log log 1/r)^(-1/6)
#[pyfunction]
fn chung_normalizer(r: f64) -> PyResult<f64> {
    domain::chung_normalizer(r).map_err(to_py)
}

/// 95% Wilson score interval.
#[pyfunction]
fn wilson_interval(hits: u64, trials: u64) -> (f64, f64) {
    estimators::wilson95(hits, trials)
}

#[pymodule]
fn chung_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCoefficient>()?;
    m.add_class::<PyWindow>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyField>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_coupled, m)?)?;
    m.add_function(wrap_pyfunction!(small_ball, m)?)?;
    m.add_function(wrap_pyfunction!(fit_tail, m)?)?;
    m.add_function(wrap_pyfunction!(chung_statistics, m)?)?;
    m.add_function(wrap_pyfunction!(bm_smallball, m)?)?;
    m.add_function(wrap_pyfunction!(heat_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(mode_variance, m)?)?;
    m.add_function(wrap_pyfunction!(chung_normalizer, m)?)?;
    m.add_function(wrap_pyfunction!(wilson_interval, m)?)?;
    m.add("WHITE_NOISE", streams::WHITE_NOISE)?;
    Ok(())
}
