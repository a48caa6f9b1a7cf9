//! Python bindings for the layerflow solver.
//!
//! ```python
//! import layerflow_py as lf
//! problem = lf.Problem.model1()
//! path = lf.WienerPath.generate(1, 3.0, 30, seed=1)
//! layers = lf.run_solver(problem, path, method="B", h=0.1, cutoff=2)
//! ```

use std::path::PathBuf;

use layerflow_core::experiment::{self, ExperimentConfig};
use layerflow_core::layer::{self, LayerState, Method, MethodParams};
use layerflow_core::metrics::{self, ErrorReport, TrajectorySample};
use layerflow_core::problems::{self, ModelParams, ProblemSpec};
use layerflow_core::spectral::{ModeIndex, SpectralField};
use layerflow_core::stochastic::{self, WienerPath};
use layerflow_core::Error;
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

create_exception!(layerflow_py, LayerflowError, PyValueError);
create_exception!(layerflow_py, BlowUpError, PyRuntimeError);

fn py_err(e: Error) -> PyErr {
    if e.is_blow_up() {
        BlowUpError::new_err(e.to_string())
    } else {
        LayerflowError::new_err(e.to_string())
    }
}

trait OrPy<T> {
    fn or_py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for layerflow_core::Result<T> {
    fn or_py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn parse_method(name: &str) -> PyResult<Method> {
    name.parse::<Method>().or_py()
}

/// Fourier coefficients of a periodic scalar or vector field.
#[pyclass(name = "SpectralField", module = "layerflow_py", from_py_object)]
#[derive(Clone)]
struct PyField {
    inner: SpectralField,
}

impl From<SpectralField> for PyField {
    fn from(inner: SpectralField) -> Self {
        Self { inner }
    }
}

#[pymethods]
impl PyField {
    #[new]
    #[pyo3(signature = (cutoff, period = 1.0, components = 2))]
    fn new(cutoff: usize, period: f64, components: usize) -> PyResult<Self> {
        if cutoff == 0 || components == 0 || !(period > 0.0) {
            return Err(LayerflowError::new_err("cutoff, components and period must be positive"));
        }
        Ok(SpectralField::zeros(cutoff, period, components).into())
    }

    /// Taylor-Green vortex `(A sin(k x1) cos(k x2), -A cos(k x1) sin(k x2))`.
    #[staticmethod]
    #[pyo3(signature = (amplitude = 1.0, kappa = 1, period = 1.0, cutoff = 2))]
    fn taylor_green(amplitude: f64, kappa: i64, period: f64, cutoff: usize) -> Self {
        problems::taylor_green(amplitude, kappa, period, cutoff).into()
    }

    /// Samples on the uniform `g x g` grid, one list per component.
    #[staticmethod]
    #[pyo3(signature = (values, g, cutoff, period = 1.0))]
    fn from_grid(values: Vec<Vec<f64>>, g: usize, cutoff: usize, period: f64) -> PyResult<Self> {
        Ok(SpectralField::from_grid(&values, g, period, cutoff).or_py()?.into())
    }

    #[getter]
    fn cutoff(&self) -> usize {
        self.inner.cutoff()
    }

    #[getter]
    fn period(&self) -> f64 {
        self.inner.period()
    }

    #[getter]
    fn components(&self) -> usize {
        self.inner.components()
    }

    fn coeff(&self, n1: i64, n2: i64, component: usize) -> PyResult<Complex64> {
        let n = ModeIndex::new(n1, n2);
        if !n.in_band(self.inner.cutoff()) || component >= self.inner.components() {
            return Err(LayerflowError::new_err(format!("mode ({n1}, {n2}) component {component} out of range")));
        }
        Ok(self.inner.coeff(n, component))
    }

    fn set_coeff(&mut self, n1: i64, n2: i64, component: usize, value: Complex64) -> PyResult<()> {
        self.inner.set_coeff(ModeIndex::new(n1, n2), component, value).or_py()
    }

    /// Modes with some coefficient above `tol`.
    #[pyo3(signature = (tol = 0.0))]
    fn support(&self, tol: f64) -> Vec<(i64, i64)> {
        self.inner.support(tol).into_iter().map(|n| (n.n1, n.n2)).collect()
    }

    fn parseval_norm(&self) -> f64 {
        self.inner.parseval_norm()
    }

    fn truncate(&self, cutoff: usize) -> Self {
        self.inner.truncate(cutoff).into()
    }

    fn resample(&self, cutoff: usize) -> PyResult<Self> {
        Ok(self.inner.resample(cutoff).or_py()?.into())
    }

    fn project(&self) -> PyResult<Self> {
        Ok(self.inner.project().or_py()?.into())
    }

    /// `(P u, P_perp u)`.
    fn leray_project(&self) -> PyResult<(Self, Self)> {
        let pair = self.inner.leray_project().or_py()?;
        Ok((pair.solenoidal.into(), pair.gradient_part.into()))
    }

    fn divergence(&self) -> PyResult<Self> {
        Ok(self.inner.divergence().or_py()?.into())
    }

    fn gradient(&self) -> PyResult<Self> {
        Ok(self.inner.gradient().or_py()?.into())
    }

    /// Point values, one list of components per point.
    fn evaluate(&self, points: Vec<(f64, f64)>) -> PyResult<Vec<Vec<f64>>> {
        let pts: Vec<[f64; 2]> = points.into_iter().map(|(x, y)| [x, y]).collect();
        self.inner.evaluate_at(&pts).or_py()
    }

    fn to_grid(&self, g: usize) -> PyResult<Vec<Vec<f64>>> {
        self.inner.to_grid(g).or_py()
    }

    /// Product of two fields restricted to `out_cutoff`; `other` may be scalar.
    fn multiply(&self, other: &PyField, out_cutoff: usize) -> PyResult<Self> {
        Ok(SpectralField::multiply(&self.inner, &other.inner, out_cutoff).or_py()?.into())
    }

    fn __add__(&self, other: &PyField) -> PyResult<Self> {
        Ok(self.inner.add(&other.inner).or_py()?.into())
    }

    fn __sub__(&self, other: &PyField) -> PyResult<Self> {
        Ok(self.inner.sub(&other.inner).or_py()?.into())
    }

    fn __mul__(&self, alpha: f64) -> Self {
        self.inner.scaled(alpha).into()
    }

    fn __rmul__(&self, alpha: f64) -> Self {
        self.inner.scaled(alpha).into()
    }

    fn __repr__(&self) -> String {
        format!(
            "SpectralField(cutoff={}, period={}, components={}, support={})",
            self.inner.cutoff(),
            self.inner.period(),
            self.inner.components(),
            self.inner.support(0.0).len()
        )
    }
}

/// Discretely sampled Wiener path with optional running time integral.
#[pyclass(name = "WienerPath", module = "layerflow_py", from_py_object)]
#[derive(Clone)]
struct PyPath {
    inner: WienerPath,
}

#[pymethods]
impl PyPath {
    #[staticmethod]
    #[pyo3(signature = (q, horizon, steps, seed = 1, run_index = 0, with_integral = true))]
    fn generate(q: usize, horizon: f64, steps: usize, seed: u64, run_index: u64, with_integral: bool) -> PyResult<Self> {
        let inner = stochastic::generate_path(q, horizon, steps, seed, run_index, with_integral).or_py()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: WienerPath::from_csv(text).or_py()?,
        })
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn coarsen(&self, factor: usize) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.coarsen(factor).or_py()?,
        })
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon()
    }

    fn value(&self, k: usize) -> PyResult<Vec<f64>> {
        self.check(k)?;
        Ok(self.inner.value(k).to_vec())
    }

    fn integral(&self, k: usize) -> PyResult<Option<f64>> {
        self.check(k)?;
        Ok(self.inner.integral(k))
    }
}

impl PyPath {
    fn check(&self, k: usize) -> PyResult<()> {
        if k > self.inner.steps() {
            return Err(LayerflowError::new_err(format!("layer {k} beyond N = {}", self.inner.steps())));
        }
        Ok(())
    }
}

/// One stochastic Navier-Stokes instance.
#[pyclass(name = "Problem", module = "layerflow_py", from_py_object)]
#[derive(Clone)]
struct PyProblem {
    inner: ProblemSpec,
}

#[pymethods]
impl PyProblem {
    #[staticmethod]
    #[pyo3(signature = (sigma = 0.1, amplitude = 1.0, kappa = 1, period = 1.0, horizon = 3.0))]
    fn model1(sigma: f64, amplitude: f64, kappa: i64, period: f64, horizon: f64) -> PyResult<Self> {
        let inner = problems::model1(ModelParams {
            sigma,
            amplitude,
            kappa,
            period,
            horizon,
        })
        .or_py()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (gamma = (0.5, 0.2), sigma = 0.1, amplitude = 1.0, kappa = 1, period = 1.0, horizon = 3.0))]
    fn model2(gamma: (f64, f64), sigma: f64, amplitude: f64, kappa: i64, period: f64, horizon: f64) -> PyResult<Self> {
        let params = ModelParams {
            sigma,
            amplitude,
            kappa,
            period,
            horizon,
        };
        Ok(Self {
            inner: problems::model2(params, [gamma.0, gamma.1]).or_py()?,
        })
    }

    /// Time-independent problem from a TOML mode list.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: problems::custom_problem_from_toml(text).or_py()?,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon
    }

    #[getter]
    fn noise_dim(&self) -> usize {
        self.inner.noise_dim
    }

    #[getter]
    fn needs_integral(&self) -> bool {
        self.inner.needs_integral
    }

    #[getter]
    fn has_exact(&self) -> bool {
        self.inner.exact.is_some()
    }

    /// Exact `(velocity, pressure)` at time `t` for noise values `w` and integral `I`.
    #[pyo3(signature = (t, w, integral = 0.0))]
    fn exact(&self, t: f64, w: Vec<f64>, integral: f64) -> PyResult<(PyField, PyField)> {
        let exact = self
            .inner
            .exact
            .as_ref()
            .ok_or_else(|| LayerflowError::new_err("problem has no exact solution"))?;
        let s = stochastic::PathSummary::new(w, integral);
        Ok((exact.velocity_at(t, &s).into(), exact.pressure_at(t, &s).into()))
    }
}

/// Velocity and pressure on one time layer.
#[pyclass(name = "Layer", module = "layerflow_py", skip_from_py_object)]
struct PyLayer {
    #[pyo3(get)]
    k: usize,
    #[pyo3(get)]
    t: f64,
    #[pyo3(get)]
    velocity: PyField,
    #[pyo3(get)]
    pressure: Option<PyField>,
}

impl From<LayerState> for PyLayer {
    fn from(s: LayerState) -> Self {
        Self {
            k: s.k,
            t: s.t,
            velocity: s.velocity.into(),
            pressure: s.pressure.map(Into::into),
        }
    }
}

#[pymethods]
impl PyLayer {
    fn divergence_residual(&self) -> PyResult<f64> {
        let s = LayerState::new(self.k, self.t, self.velocity.inner.clone());
        s.divergence_residual().or_py()
    }
}

/// Mean-square or fixed-trajectory error row.
#[pyclass(name = "ErrorReport", module = "layerflow_py", get_all, skip_from_py_object)]
struct PyReport {
    h: f64,
    steps: usize,
    err_v: f64,
    halfwidth_v: f64,
    err_p: f64,
    halfwidth_p: f64,
    denom_v: f64,
    denom_p: f64,
    runs: u64,
    seed: u64,
}

impl From<&ErrorReport> for PyReport {
    fn from(r: &ErrorReport) -> Self {
        Self {
            h: r.h,
            steps: r.steps,
            err_v: r.err_v,
            halfwidth_v: r.halfwidth_v,
            err_p: r.err_p,
            halfwidth_p: r.halfwidth_p,
            denom_v: r.denom_v,
            denom_p: r.denom_p,
            runs: r.runs,
            seed: r.seed,
        }
    }
}

#[pymethods]
impl PyReport {
    fn __repr__(&self) -> String {
        format!(
            "ErrorReport(h={}, err_v={:.6}, err_p={:.6}, runs={})",
            self.h, self.err_v, self.err_p, self.runs
        )
    }
}

fn method_params(problem: &ProblemSpec, method: &str, h: f64, cutoff: usize) -> PyResult<MethodParams> {
    MethodParams::new(problem.sigma, h, cutoff, parse_method(method)?).or_py()
}

/// Marches `problem` along `path`; returns every layer from `t = 0`.
#[pyfunction]
#[pyo3(signature = (problem, path, method = "B", h = None, cutoff = 2))]
fn run_solver(
    py: Python<'_>,
    problem: &PyProblem,
    path: &PyPath,
    method: &str,
    h: Option<f64>,
    cutoff: usize,
) -> PyResult<Vec<PyLayer>> {
    let params = method_params(&problem.inner, method, h.unwrap_or(path.inner.h()), cutoff)?;
    let layers = py
        .detach(|| layer::run_solver(&problem.inner, &params, &path.inner))
        .or_py()?;
    Ok(layers.into_iter().map(Into::into).collect())
}

/// Relative errors of the final layer against the exact solution on `path`.
#[pyfunction]
#[pyo3(signature = (problem, path, method = "B", cutoff = 2))]
fn trajectory_error(problem: &PyProblem, path: &PyPath, method: &str, cutoff: usize) -> PyResult<PyReport> {
    let p = &problem.inner;
    let exact = p
        .exact
        .as_ref()
        .ok_or_else(|| LayerflowError::new_err("problem has no exact solution"))?;
    let params = method_params(p, method, path.inner.h(), cutoff)?;
    let last = layer::run_to_final(p, &params, &path.inner).or_py()?;
    let s = path.inner.final_summary();
    let pressure = last
        .pressure
        .ok_or_else(|| LayerflowError::new_err("final layer has no pressure"))?;
    let sample = TrajectorySample::compare(
        &last.velocity,
        &exact.velocity_at(last.t, &s),
        &pressure,
        &exact.pressure_at(last.t, &s),
    )
    .or_py()?;
    let report = ErrorReport::single(params.h, path.inner.steps(), path.inner.seed(), &sample).or_py()?;
    Ok((&report).into())
}

fn run_command(py: Python<'_>, config_toml: &str, cmd: fn(&ExperimentConfig) -> layerflow_core::Result<experiment::Outcome>) -> PyResult<(String, Vec<PyReport>)> {
    let config = ExperimentConfig::parse(config_toml).or_py()?;
    let outcome = py.detach(|| cmd(&config)).or_py()?;
    Ok((outcome.csv.clone(), outcome.reports.iter().map(Into::into).collect()))
}

/// Fixed-trajectory sweep from a configuration string; returns `(csv, reports)`.
#[pyfunction]
fn converge(py: Python<'_>, config_toml: &str) -> PyResult<(String, Vec<PyReport>)> {
    run_command(py, config_toml, experiment::cmd_converge)
}

/// Mean-square Monte Carlo sweep from a configuration string; returns `(csv, reports)`.
#[pyfunction]
fn mc(py: Python<'_>, config_toml: &str) -> PyResult<(String, Vec<PyReport>)> {
    run_command(py, config_toml, experiment::cmd_mc)
}

/// Trajectory CSV of `run` from a configuration file path.
#[pyfunction]
fn run_config(py: Python<'_>, config_path: PathBuf) -> PyResult<String> {
    let config = ExperimentConfig::load(&config_path).or_py()?;
    let outcome = py.detach(|| experiment::cmd_run(&config)).or_py()?;
    Ok(outcome.csv)
}

/// Least-squares `(slope, intercept, r_squared)` of `ln err` against `ln h`.
#[pyfunction]
fn fit_order(points: Vec<(f64, f64)>) -> PyResult<(f64, f64, f64)> {
    let fit = metrics::fit_order(&points).or_py()?;
    Ok((fit.slope, fit.intercept, fit.r_squared))
}

#[pymodule]
fn layerflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyField>()?;
    m.add_class::<PyPath>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PyLayer>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(run_solver, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory_error, m)?)?;
    m.add_function(wrap_pyfunction!(converge, m)?)?;
    m.add_function(wrap_pyfunction!(mc, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(fit_order, m)?)?;
    m.add("LayerflowError", m.py().get_type::<LayerflowError>())?;
    m.add("BlowUpError", m.py().get_type::<BlowUpError>())?;
    Ok(())
}
