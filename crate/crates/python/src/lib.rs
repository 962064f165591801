//! Python bindings. Fields cross the boundary as lists of floats (node
//! values including the two boundary nodes); paths as lists of such lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use spde_control::backward::{penalization_rate as rate, solve_reflected_with};
use spde_control::control::{extract_policy as extract, performance_j as perf};
use spde_control::forward::{simulate_ensemble, simulate_path as simulate_one, FieldPath, NoisePath};
use spde_control::harness::{parse_config, run_suite, RunConfig, RunReport, Suite, Validated};
use spde_control::spatial::{self, build_grid, check_garding as garding};
use spde_control::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Parse(_) | Error::Validation { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn rows(p: &FieldPath) -> Vec<Vec<f64>> {
    p.fields.iter().map(|f| f.values.clone()).collect()
}

/// Run configuration; `Config()` holds the defaults.
#[pyclass(from_py_object)]
#[derive(Clone)]
pub struct Config {
    inner: RunConfig,
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (json=None))]
    fn new(json: Option<&str>) -> PyResult<Self> {
        let inner = match json {
            Some(text) => parse_config(text).map_err(py_err)?,
            None => RunConfig::default(),
        };
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner).expect("config serializes")
    }

    /// Validation warnings; raises `ValueError` naming the field on errors.
    fn validate(&self) -> PyResult<Vec<String>> {
        Ok(self.validated()?.warnings)
    }

    #[getter]
    fn seed(&self) -> Option<u64> {
        self.inner.mc.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: Option<u64>) {
        self.inner.mc.seed = seed;
    }

    #[getter]
    fn n_paths(&self) -> usize {
        self.inner.mc.n_paths
    }

    #[setter]
    fn set_n_paths(&mut self, n: usize) {
        self.inner.mc.n_paths = n;
    }

    fn __repr__(&self) -> String {
        let seed = self.inner.mc.seed.map_or("None".to_string(), |s| s.to_string());
        format!("Config(seed={seed}, n_paths={})", self.inner.mc.n_paths)
    }
}

impl Config {
    fn validated(&self) -> PyResult<Validated> {
        self.inner.clone().validate().map_err(py_err)
    }
}

fn validated(config: Option<&Config>) -> PyResult<Validated> {
    config.cloned().unwrap_or(Config { inner: RunConfig::default() }).validated()
}

/// Uniform grid with `n_cells` interior nodes.
#[pyclass(skip_from_py_object)]
pub struct Grid {
    inner: spatial::Grid,
}

#[pymethods]
impl Grid {
    #[new]
    fn new(x_min: f64, x_max: f64, n_cells: usize) -> PyResult<Self> {
        Ok(Self { inner: build_grid(x_min, x_max, n_cells).map_err(py_err)? })
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }

    #[getter]
    fn n_cells(&self) -> usize {
        self.inner.n_cells
    }

    fn nodes(&self) -> Vec<f64> {
        self.inner.node_positions()
    }
}

/// Windowed space mean with half-width `theta` on a grid.
#[pyclass(skip_from_py_object)]
pub struct SpaceMean {
    inner: spatial::SpaceMean,
    grid: spatial::Grid,
}

#[pymethods]
impl SpaceMean {
    #[new]
    fn new(grid: &Grid, theta: f64) -> PyResult<Self> {
        Ok(Self { inner: spatial::SpaceMean::new(&grid.inner, theta).map_err(py_err)?, grid: grid.inner })
    }

    fn apply(&self, values: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&values)?;
        Ok(self.inner.apply(&values))
    }

    fn apply_adjoint(&self, values: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&values)?;
        Ok(self.inner.apply_adjoint(&values))
    }

    fn dual_weight(&self) -> PyResult<Vec<f64>> {
        Ok(spatial::space_mean_dual_weight(&self.grid, self.inner.theta()).map_err(py_err)?.values)
    }
}

impl SpaceMean {
    fn check(&self, values: &[f64]) -> PyResult<()> {
        if values.len() != self.grid.n_nodes() {
            return Err(PyValueError::new_err(format!("expected {} node values, got {}", self.grid.n_nodes(), values.len())));
        }
        Ok(())
    }
}

/// Forward ensemble under the configured control: mean path, positivity and
/// the smallest value with its location.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn simulate<'py>(py: Python<'py>, config: Option<&Config>) -> PyResult<Bound<'py, PyDict>> {
    let v = validated(config)?;
    let seed = v.config.seed().map_err(py_err)?;
    let e = py.detach(|| -> spde_control::Result<_> { simulate_ensemble(&v.problem, &v.control()?, v.config.mc.n_paths, seed) }).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("times", e.mean.times.clone())?;
    d.set_item("mean", rows(&e.mean))?;
    d.set_item("positive", e.positive)?;
    d.set_item("min_value", e.min_site.value)?;
    d.set_item("min_seed", e.min_site.seed)?;
    d.set_item("min_t", e.min_site.t)?;
    d.set_item("min_x", e.min_site.x)?;
    Ok(d)
}

/// One path under the configured control with the noise of `seed`.
#[pyfunction]
#[pyo3(signature = (seed, config=None))]
fn simulate_path(py: Python<'_>, seed: u64, config: Option<&Config>) -> PyResult<Vec<Vec<f64>>> {
    let v = validated(config)?;
    let (n, dt) = (v.problem.time.n_steps, v.problem.time.dt());
    let path = py.detach(|| simulate_one(&v.problem, &v.control()?, &NoisePath::generate(seed, n, dt))).map_err(py_err)?;
    Ok(rows(&path))
}

/// Threshold policy read off the reflected adjoint, its cumulative control
/// and maximum-principle residuals, and its Monte Carlo performance.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn extract_policy<'py>(py: Python<'py>, config: Option<&Config>) -> PyResult<Bound<'py, PyDict>> {
    let v = validated(config)?;
    let seed = v.config.seed().map_err(py_err)?;
    let (pol, j) = py
        .detach(|| -> spde_control::Result<_> {
            let pol = extract(&v.problem, &v.policy_options())?;
            let j = perf(&v.problem, &pol.xi_hat, v.config.mc.n_paths, seed)?;
            Ok((pol, j))
        })
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("xi_cumulative", pol.xi_hat.cumulative())?;
    d.set_item("adjoint", rows(&pol.reflected.y))?;
    d.set_item("slack_violation", pol.report.slack_violation)?;
    d.set_item("complementarity_residual", pol.report.complementarity_residual)?;
    d.set_item("vi_residual", pol.report.vi_residual)?;
    d.set_item("degenerate", pol.degenerate)?;
    d.set_item("performance", (j.estimate, j.stderr))?;
    Ok(d)
}

/// Reflected solve of the configured backward benchmark.
#[pyfunction]
#[pyo3(signature = (config=None, levels=None))]
fn solve_reflected<'py>(py: Python<'py>, config: Option<&Config>, levels: Option<Vec<u64>>) -> PyResult<Bound<'py, PyDict>> {
    let v = validated(config)?;
    let levels = levels.unwrap_or_else(|| v.config.backward.levels.clone());
    let sol = py.detach(|| solve_reflected_with(&v.backward, &levels, v.config.backward.extrapolation)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("times", sol.y.times.clone())?;
    d.set_item("y", rows(&sol.y))?;
    d.set_item("eta", rows(&sol.eta))?;
    d.set_item("skorokhod_relative", sol.diagnostics.skorokhod_relative)?;
    d.set_item("min_gap", sol.diagnostics.min_gap)?;
    Ok(d)
}

/// Penalty energies over `levels` and their log-log slope.
#[pyfunction]
#[pyo3(signature = (config=None, levels=None))]
fn penalization_rate<'py>(py: Python<'py>, config: Option<&Config>, levels: Option<Vec<u64>>) -> PyResult<Bound<'py, PyDict>> {
    let v = validated(config)?;
    let levels = levels.unwrap_or_else(|| v.config.backward.levels.clone());
    let rep = py.detach(|| rate(&v.backward, &levels)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("levels", rep.levels)?;
    d.set_item("energies", rep.energies)?;
    d.set_item("slope", rep.loglog_slope)?;
    Ok(d)
}

/// Coercivity constants `(alpha, lambda, satisfied)` of the configured operator.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn check_garding(config: Option<&Config>) -> PyResult<(f64, f64, bool)> {
    let v = validated(config)?;
    let r = garding(&v.problem.op, &v.problem.grid);
    Ok((r.alpha, r.lambda, r.satisfied))
}

/// Runs a named verification suite; returns `(name, value, passed)` per check.
#[pyfunction]
#[pyo3(signature = (suite, config=None))]
fn verify(py: Python<'_>, suite: &str, config: Option<&Config>) -> PyResult<Vec<(String, f64, bool)>> {
    let v = validated(config)?;
    let s: Suite = suite.parse().map_err(PyValueError::new_err)?;
    let report = py
        .detach(|| -> spde_control::Result<RunReport> {
            let mut r = RunReport::new("verify", &v.config);
            run_suite(s, &v, &mut r)?;
            Ok(r)
        })
        .map_err(py_err)?;
    Ok(report.checks.into_iter().map(|c| (c.name, c.value, c.passed)).collect())
}

/// Runs the `smc` command line with `args` (without the program name).
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    py.detach(|| spde_control::harness::cli_main(std::iter::once("smc".to_string()).chain(args)))
}

#[pymodule]
fn pyspde(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Config>()?;
    m.add_class::<Grid>()?;
    m.add_class::<SpaceMean>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_path, m)?)?;
    m.add_function(wrap_pyfunction!(extract_policy, m)?)?;
    m.add_function(wrap_pyfunction!(solve_reflected, m)?)?;
    m.add_function(wrap_pyfunction!(penalization_rate, m)?)?;
    m.add_function(wrap_pyfunction!(check_garding, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
