//! Python bindings for the `finder` optimizer.

use finder::baselines::{adam_step as core_adam_step, gd_step as core_gd_step, run_first_order, AdamState, BaselineStatus, FirstOrder};
use finder::ensemble::{diagonal_gain as core_diagonal_gain, full_gain as core_full_gain};
use finder::finder::{noisy_preset, run, HyperParams, RunStatus, ZetaSchedule};
use finder::harness::{cmd_bench, run_golden, GoldenConfig, RunConfig};
use finder::objectives::{self, Benchmark, BenchmarkId};
use finder::Error;
use nalgebra::DMatrix;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e @ (Error::NonFiniteLoss { .. } | Error::SingularGain(_)) => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn benchmark_id(name: &str) -> PyResult<BenchmarkId> {
    name.parse().map_err(to_py)
}

/// Rows are coordinates, columns are particles.
fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if n == 0 || p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(PyValueError::new_err("expected a non-empty rectangular list of rows"));
    }
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Hyperparameters of the ensemble optimizer.
#[pyclass(name = "HyperParams", module = "finder_opt", get_all, set_all, from_py_object)]
#[derive(Clone)]
struct PyHyperParams {
    p: usize,
    theta: f64,
    gamma: f64,
    c_s: f64,
    c_alpha: f64,
    zeta1: f64,
    zeta2: f64,
    delta_min: f64,
    alpha_fallback: f64,
    alpha_cap: f64,
    eps_tol: f64,
    max_epochs: usize,
    seed: u64,
    cache_retained: bool,
}

impl From<HyperParams> for PyHyperParams {
    fn from(h: HyperParams) -> Self {
        Self {
            p: h.p,
            theta: h.theta,
            gamma: h.gamma,
            c_s: h.c_s,
            c_alpha: h.c_alpha,
            zeta1: h.zeta1,
            zeta2: h.zeta2,
            delta_min: h.delta_min,
            alpha_fallback: h.alpha_fallback,
            alpha_cap: h.alpha_cap,
            eps_tol: h.eps_tol,
            max_epochs: h.max_epochs,
            seed: h.seed,
            cache_retained: h.cache_retained,
        }
    }
}

impl From<&PyHyperParams> for HyperParams {
    fn from(h: &PyHyperParams) -> Self {
        HyperParams {
            p: h.p,
            theta: h.theta,
            gamma: h.gamma,
            c_s: h.c_s,
            c_alpha: h.c_alpha,
            zeta1: h.zeta1,
            zeta2: h.zeta2,
            delta_min: h.delta_min,
            alpha_fallback: h.alpha_fallback,
            alpha_cap: h.alpha_cap,
            eps_tol: h.eps_tol,
            max_epochs: h.max_epochs,
            seed: h.seed,
            cache_retained: h.cache_retained,
        }
    }
}

#[pymethods]
impl PyHyperParams {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut hp = Self::from(HyperParams::default());
        if let Some(kwargs) = kwargs {
            let obj = Bound::new(kwargs.py(), hp)?;
            for (key, value) in kwargs.iter() {
                obj.setattr(key.extract::<String>()?.as_str(), value)?;
            }
            hp = obj.borrow().clone();
        }
        Ok(hp)
    }

    /// Preset for mini-batch losses.
    #[staticmethod]
    fn noisy() -> Self {
        Self::from(noisy_preset())
    }

    fn validate(&self) -> PyResult<()> {
        HyperParams::from(self).validate().map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", HyperParams::from(self))
    }
}

/// Result of a benchmark minimization.
#[pyclass(name = "RunResult", module = "finder_opt", get_all)]
struct PyRunResult {
    x: Vec<f64>,
    best_loss: f64,
    converged: bool,
    epochs: usize,
    /// Best loss after each epoch.
    losses: Vec<f64>,
    forward_evals: u64,
    grad_evals: u64,
}

#[pymethods]
impl PyRunResult {
    fn __repr__(&self) -> String {
        format!(
            "RunResult(best_loss={:e}, converged={}, epochs={}, forward_evals={}, grad_evals={})",
            self.best_loss,
            if self.converged { "True" } else { "False" },
            self.epochs,
            self.forward_evals,
            self.grad_evals
        )
    }
}

#[pyfunction]
fn benchmarks() -> Vec<&'static str> {
    BenchmarkId::ALL.iter().map(|id| id.name()).collect()
}

#[pyfunction]
fn evaluate(name: &str, x: Vec<f64>) -> PyResult<f64> {
    objectives::evaluate(benchmark_id(name)?, &x).map_err(to_py)
}

#[pyfunction]
fn gradient(name: &str, x: Vec<f64>) -> PyResult<Vec<f64>> {
    objectives::gradient(benchmark_id(name)?, &x).map_err(to_py)
}

#[pyfunction]
fn minimizer(name: &str, dim: usize) -> PyResult<Vec<f64>> {
    Ok(benchmark_id(name)?.minimizer(dim))
}

/// Minimizes a named benchmark from `x0`.
#[pyfunction]
#[pyo3(signature = (name, x0, params=None))]
fn minimize(py: Python<'_>, name: &str, x0: Vec<f64>, params: Option<PyHyperParams>) -> PyResult<PyRunResult> {
    let objective = Benchmark::new(benchmark_id(name)?, x0.len()).map_err(to_py)?;
    let hp = params.as_ref().map_or_else(HyperParams::default, HyperParams::from);
    let out = py
        .detach(|| run(&x0, &objective, &hp, &ZetaSchedule::constant()))
        .map_err(to_py)?;
    Ok(PyRunResult {
        converged: out.status == RunStatus::Converged,
        epochs: out.trace.len(),
        losses: out.trace.iter().map(|r| r.best_loss).collect(),
        forward_evals: out.counters.forward(),
        grad_evals: out.counters.gradient,
        x: out.x_star,
        best_loss: out.best_loss,
    })
}

/// Full-batch Adam or gradient descent on a named benchmark.
#[pyfunction]
#[pyo3(signature = (name, x0, method="adam", lr=1e-3, epochs=1000, eps_tol=1e-12))]
fn minimize_first_order(
    py: Python<'_>,
    name: &str,
    x0: Vec<f64>,
    method: &str,
    lr: f64,
    epochs: usize,
    eps_tol: f64,
) -> PyResult<PyRunResult> {
    let objective = Benchmark::new(benchmark_id(name)?, x0.len()).map_err(to_py)?;
    let method = match method {
        "adam" => {
            let d = AdamState::new(0);
            FirstOrder::Adam { lr, beta1: d.beta1, beta2: d.beta2, eps: d.eps }
        }
        "gd" => FirstOrder::gd(lr),
        other => return Err(PyValueError::new_err(format!("unknown method `{other}` (expected adam|gd)"))),
    };
    let out = py
        .detach(|| run_first_order(&x0, &objective, method, eps_tol, epochs))
        .map_err(to_py)?;
    let last = out.trace.last();
    Ok(PyRunResult {
        converged: out.status == BaselineStatus::Converged,
        epochs: out.trace.len(),
        losses: out.trace.iter().map(|r| r.best_loss).collect(),
        forward_evals: last.map_or(0, |r| r.forward_evals),
        grad_evals: last.map_or(0, |r| r.grad_evals),
        x: out.x_best,
        best_loss: out.best_loss,
    })
}

/// Diagonal gain of an ensemble given as row lists (rows are coordinates).
#[pyfunction]
#[pyo3(signature = (particles, gradients, gamma=1.0))]
fn diagonal_gain(particles: Vec<Vec<f64>>, gradients: Vec<Vec<f64>>, gamma: f64) -> PyResult<Vec<f64>> {
    let gain = core_diagonal_gain(&matrix(&particles)?, &matrix(&gradients)?, gamma).map_err(to_py)?;
    Ok(gain.scaled().to_vec())
}

#[pyfunction]
#[pyo3(signature = (particles, gradients, q_eps=1e-10))]
fn full_gain(particles: Vec<Vec<f64>>, gradients: Vec<Vec<f64>>, q_eps: f64) -> PyResult<Vec<Vec<f64>>> {
    let g = core_full_gain(&matrix(&particles)?, &matrix(&gradients)?, q_eps).map_err(to_py)?;
    Ok(rows_of(&g))
}

/// Bias-corrected Adam optimizer state.
#[pyclass(name = "Adam", module = "finder_opt")]
struct PyAdam {
    state: AdamState,
}

#[pymethods]
impl PyAdam {
    #[new]
    #[pyo3(signature = (dim, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8))]
    fn new(dim: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            state: AdamState {
                lr,
                beta1,
                beta2,
                eps,
                ..AdamState::new(dim)
            },
        }
    }

    fn step(&mut self, x: Vec<f64>, g: Vec<f64>) -> PyResult<Vec<f64>> {
        core_adam_step(&mut self.state, &x, &g).map_err(to_py)
    }

    #[getter]
    fn t(&self) -> u64 {
        self.state.t
    }
}

#[pyfunction]
fn gd_step(x: Vec<f64>, g: Vec<f64>, lr: f64) -> PyResult<Vec<f64>> {
    core_gd_step(&x, &g, lr).map_err(to_py)
}

/// Single-epoch check on the five-dimensional sphere.
#[pyfunction]
#[pyo3(signature = (p=5, gamma=1.0, seed=None))]
fn golden(py: Python<'_>, p: usize, gamma: f64, seed: Option<u64>) -> PyResult<Bound<'_, PyDict>> {
    let report = run_golden(&GoldenConfig { p, gamma, seed }).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("passed", report.passed())?;
    d.set_item("summary", report.summary())?;
    d.set_item("permutation", report.permutation.clone())?;
    d.set_item("gain", report.gain.clone())?;
    d.set_item("alpha", report.alpha)?;
    d.set_item("final_anchor", report.final_anchor.clone())?;
    d.set_item("final_loss", report.final_loss)?;
    d.set_item("failures", report.failures.clone())?;
    Ok(d)
}

fn json_value(value: &Bound<'_, PyAny>) -> PyResult<Value> {
    if let Ok(b) = value.extract::<bool>() {
        return Ok(Value::Bool(b));
    }
    if let Ok(i) = value.extract::<u64>() {
        return Ok(Value::from(i));
    }
    if let Ok(f) = value.extract::<f64>() {
        return Ok(Value::from(f));
    }
    if let Ok(s) = value.extract::<String>() {
        return Ok(Value::String(s));
    }
    if let Ok(list) = value.cast::<PyList>() {
        return list.iter().map(|v| json_value(&v)).collect::<PyResult<Vec<_>>>().map(Value::Array);
    }
    Err(PyValueError::new_err(format!("unsupported config value {value}")))
}

/// Runs one experiment configured by keyword arguments (the keys accepted by
/// the command line `--set` flag) and returns its per-epoch trace as dicts.
#[pyfunction]
#[pyo3(name = "bench", signature = (**kwargs))]
fn run_bench<'py>(py: Python<'py>, kwargs: Option<&Bound<'py, PyDict>>) -> PyResult<Bound<'py, PyDict>> {
    let mut config = RunConfig::default();
    if let Some(kwargs) = kwargs {
        for (key, value) in kwargs.iter() {
            config
                .set(&key.extract::<String>()?, &json_value(&value)?)
                .map_err(to_py)?;
        }
    }
    let summary = py.detach(|| cmd_bench(&config)).map_err(to_py)?;
    let rows = PyList::empty(py);
    for r in &summary.rows {
        let row = PyDict::new(py);
        row.set_item("epoch", r.epoch)?;
        row.set_item("best_loss", r.best_loss)?;
        row.set_item("alpha", r.alpha)?;
        row.set_item("forward_evals", r.forward_evals)?;
        row.set_item("grad_evals", r.grad_evals)?;
        row.set_item("wall_ms", r.wall_ms)?;
        rows.append(row)?;
    }
    let d = PyDict::new(py);
    d.set_item("final_loss", summary.final_loss)?;
    d.set_item("exit_code", summary.outcome.exit_code())?;
    d.set_item("start", summary.start.clone())?;
    d.set_item("trace", rows)?;
    Ok(d)
}

#[pymodule]
fn finder_opt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHyperParams>()?;
    m.add_class::<PyRunResult>()?;
    m.add_class::<PyAdam>()?;
    m.add_function(wrap_pyfunction!(benchmarks, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(gradient, m)?)?;
    m.add_function(wrap_pyfunction!(minimizer, m)?)?;
    m.add_function(wrap_pyfunction!(minimize, m)?)?;
    m.add_function(wrap_pyfunction!(minimize_first_order, m)?)?;
    m.add_function(wrap_pyfunction!(diagonal_gain, m)?)?;
    m.add_function(wrap_pyfunction!(full_gain, m)?)?;
    m.add_function(wrap_pyfunction!(gd_step, m)?)?;
    m.add_function(wrap_pyfunction!(golden, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    Ok(())
}
