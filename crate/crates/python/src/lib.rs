//! Python bindings for the `spdelab` core crate.
//!
//! Enum-valued arguments (models, mollifiers, schedule kinds, schemes) are
//! passed as their snake_case names. Study and report results come back as
//! plain dicts built from the same JSON the command-line tool writes.

use std::sync::Arc;

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

use spdelab::analysis::sobolev_norm;
use spdelab::check::{run_checks, CheckOptions};
use spdelab::config::{RunConfigFile, StudyMode};
use spdelab::experiments::{regime_scan, run_convergence_study, theorem_inequality_check};
use spdelab::noise::NoisePath;
use spdelab::renorm::{self, Cutoff, Regime};
use spdelab::solver::{self, Scheme, SolveConfig};
use spdelab::{
    dealiased_cube, dealiased_square, make_grid, FourierGrid, Model, ModelSpec, Mollifier, NoiseSeed, RealField,
    SigmaSchedule, SpectralField, Trajectory,
};

fn to_py(err: spdelab::Error) -> PyErr {
    if err.is_usage_error() {
        PyValueError::new_err(err.to_string())
    } else {
        PyRuntimeError::new_err(err.to_string())
    }
}

fn parse_name<T: DeserializeOwned>(what: &str, name: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown {what} '{name}'")))
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "Grid", module = "spdelab", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid(Arc<FourierGrid>);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(n: usize) -> PyResult<Self> {
        make_grid(n).map(Self).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn dealias_cutoff(&self) -> usize {
        self.0.dealias_cutoff()
    }

    #[getter]
    fn padded_n(&self) -> usize {
        self.0.padded_n()
    }

    /// `|k|²` for every mode, in FFT order.
    fn mu(&self) -> Vec<f64> {
        self.0.mu().to_vec()
    }

    fn wavenumbers(&self) -> Vec<(i64, i64)> {
        self.0.wavenumbers().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Grid(n={})", self.0.n())
    }
}

/// A real field held by its Fourier coefficients.
#[pyclass(name = "Field", module = "spdelab", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyField(SpectralField);

#[pymethods]
impl PyField {
    #[staticmethod]
    fn zeros(grid: &PyGrid) -> Self {
        Self(SpectralField::zeros(&grid.0))
    }

    #[staticmethod]
    fn constant(grid: &PyGrid, c: f64) -> Self {
        Self(SpectralField::constant(&grid.0, c))
    }

    /// `a cos(k·x)`.
    #[staticmethod]
    fn cosine(grid: &PyGrid, amplitude: f64, k: (i64, i64)) -> PyResult<Self> {
        SpectralField::cosine(&grid.0, amplitude, k).map(Self).map_err(to_py)
    }

    /// From point values on the `n × n` grid, row-major.
    #[staticmethod]
    fn from_values(grid: &PyGrid, values: Vec<f64>) -> PyResult<Self> {
        let real = RealField::new(&grid.0, values).map_err(to_py)?;
        Ok(Self(real.forward()))
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid().clone())
    }

    fn values(&self) -> Vec<f64> {
        self.0.inverse().values().to_vec()
    }

    fn coeff(&self, k: (i64, i64)) -> Option<Complex64> {
        self.0.coeff(k)
    }

    fn l2_norm(&self) -> f64 {
        self.0.l2_norm()
    }

    /// Sobolev norm of order `s`; `s = -1` gives the `H⁻¹` norm.
    fn sobolev_norm(&self, s: f64) -> f64 {
        sobolev_norm(&self.0, s)
    }

    fn masked(&self) -> Self {
        Self(self.0.masked())
    }

    fn square(&self) -> Self {
        Self(dealiased_square(&self.0))
    }

    fn cube(&self) -> Self {
        Self(dealiased_cube(&self.0))
    }

    /// `self² - c`.
    fn wick_square(&self, c: f64) -> Self {
        Self(renorm::wick_square(&self.0, c))
    }

    fn __add__(&self, other: &Self) -> PyResult<Self> {
        self.0.add(&other.0).map(Self).map_err(to_py)
    }

    fn __sub__(&self, other: &Self) -> PyResult<Self> {
        self.0.sub(&other.0).map(Self).map_err(to_py)
    }

    fn __mul__(&self, a: f64) -> Self {
        Self(self.0.scale(a))
    }

    fn __rmul__(&self, a: f64) -> Self {
        Self(self.0.scale(a))
    }

    fn __repr__(&self) -> String {
        format!("Field(n={}, l2={:.6e})", self.0.grid().n(), self.0.l2_norm())
    }
}

#[pyclass(name = "Schedule", module = "spdelab", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySchedule(SigmaSchedule);

#[pymethods]
impl PySchedule {
    #[new]
    #[pyo3(signature = (kind, amplitude, exponent=None))]
    fn new(kind: &str, amplitude: f64, exponent: Option<f64>) -> PyResult<Self> {
        let s = SigmaSchedule {
            kind: parse_name("schedule kind", kind)?,
            amplitude,
            exponent,
        };
        s.validate().map_err(to_py)?;
        Ok(Self(s))
    }

    fn sigma(&self, eps: f64) -> PyResult<f64> {
        self.0.sigma(eps).map_err(to_py)
    }

    /// `"C0=0"`, `"C0 finite"` or `"C0 divergent"`.
    #[getter]
    fn regime(&self) -> &'static str {
        Regime::of(&self.0).tag()
    }

    fn __repr__(&self) -> String {
        format!("Schedule({}, amplitude={})", self.0.kind.as_str(), self.0.amplitude)
    }
}

#[pyclass(name = "ModelSpec", module = "spdelab", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModelSpec(ModelSpec);

#[pymethods]
impl PyModelSpec {
    #[new]
    #[pyo3(signature = (model, eps, sigma, mollifier=None, c_zero=None))]
    fn new(model: &str, eps: f64, sigma: f64, mollifier: Option<&str>, c_zero: Option<f64>) -> PyResult<Self> {
        let model: Model = parse_name("model", model)?;
        let mut spec = ModelSpec::new(model, eps, sigma).map_err(to_py)?;
        if let Some(m) = mollifier {
            spec = spec.with_mollifier(parse_name::<Mollifier>("mollifier", m)?).map_err(to_py)?;
        }
        if let Some(c) = c_zero {
            spec = spec.with_c_zero(c).map_err(to_py)?;
        }
        Ok(Self(spec))
    }

    #[getter]
    fn model(&self) -> &'static str {
        self.0.model.as_str()
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.0.eps
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma
    }

    /// Linear symbol `λ_k(ε)` at `μ = |k|²`.
    fn lambda_(&self, mu: f64) -> f64 {
        self.0.lambda(mu)
    }

    fn noise_amp(&self, mu: f64) -> f64 {
        self.0.noise_amp(mu)
    }

    /// `C_ε` over the box `0 < max|k_i| ≤ cutoff`, or over the grid's
    /// retained modes when `grid` is given.
    #[pyo3(signature = (cutoff=None, grid=None))]
    fn c_eps(&self, cutoff: Option<u64>, grid: Option<&PyGrid>) -> PyResult<f64> {
        match (cutoff, grid) {
            (Some(k), None) => renorm::c_eps(&self.0, Cutoff::Box(k)).map_err(to_py),
            (None, Some(g)) => Ok(renorm::c_eps_grid(&self.0, &g.0)),
            _ => Err(PyValueError::new_err("give exactly one of cutoff and grid")),
        }
    }

    /// `C_ε` over the whole lattice.
    fn c_eps_lattice(&self, py: Python<'_>) -> PyResult<f64> {
        py.detach(|| renorm::c_eps_lattice(&self.0)).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("ModelSpec({}, eps={}, sigma={})", self.0.model, self.0.eps, self.0.sigma)
    }
}

#[pyclass(name = "NoisePath", module = "spdelab")]
struct PyNoisePath(NoisePath);

#[pymethods]
impl PyNoisePath {
    #[new]
    #[pyo3(signature = (spec, grid, h, master_seed, sample=0))]
    fn new(spec: &PyModelSpec, grid: &PyGrid, h: f64, master_seed: u64, sample: u64) -> PyResult<Self> {
        NoisePath::new(&spec.0, &grid.0, h, NoiseSeed::new(master_seed, sample))
            .map(Self)
            .map_err(to_py)
    }

    #[getter]
    fn t(&self) -> f64 {
        self.0.t()
    }

    #[pyo3(signature = (steps=1))]
    fn advance(&mut self, steps: usize) {
        for _ in 0..steps {
            self.0.advance();
        }
    }

    fn z(&self) -> PyField {
        PyField(self.0.z())
    }
}

#[pyclass(name = "Trajectory", module = "spdelab", frozen)]
struct PyTrajectory(Trajectory);

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn label(&self) -> &str {
        self.0.label()
    }

    fn times(&self) -> Vec<f64> {
        self.0.times().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __getitem__(&self, i: isize) -> PyResult<PyField> {
        let len = self.0.len() as isize;
        let j = if i < 0 { i + len } else { i };
        if !(0..len).contains(&j) {
            return Err(pyo3::exceptions::PyIndexError::new_err("snapshot index out of range"));
        }
        Ok(PyField(self.0.snapshots()[j as usize].clone()))
    }

    /// `‖·‖_{L²}` at every saved time.
    fn l2_norms(&self) -> Vec<f64> {
        self.0.series(|f| f.l2_norm())
    }
}

fn solve_config(initial: &PyField, dt: f64, t_end: f64, scheme: &str, save_every: usize) -> PyResult<SolveConfig> {
    let scheme: Scheme = parse_name("scheme", scheme)?;
    Ok(SolveConfig::new(dt, t_end, initial.0.clone())
        .with_scheme(scheme)
        .with_save_every(save_every))
}

/// Solves the noisy model by the split `u_ε = Z_ε + v_ε`. Returns the
/// trajectories `(z, v, u_eps)`.
#[pyfunction]
#[pyo3(signature = (spec, initial, dt, t_end, master_seed, sample=0, scheme="imex", save_every=1))]
#[allow(clippy::too_many_arguments)]
fn solve_coupled(
    py: Python<'_>,
    spec: &PyModelSpec,
    initial: &PyField,
    dt: f64,
    t_end: f64,
    master_seed: u64,
    sample: u64,
    scheme: &str,
    save_every: usize,
) -> PyResult<(PyTrajectory, PyTrajectory, PyTrajectory)> {
    let cfg = solve_config(initial, dt, t_end, scheme, save_every)?;
    let run = py
        .detach(|| solver::solve_coupled(&spec.0, &cfg, NoiseSeed::new(master_seed, sample)))
        .map_err(to_py)?;
    Ok((PyTrajectory(run.z), PyTrajectory(run.v), PyTrajectory(run.u_eps)))
}

/// Solves the renormalized limit `∂ₜu = Δu + u - u³ - 3C₀u`.
#[pyfunction]
#[pyo3(signature = (c_zero, initial, dt, t_end, scheme="imex", save_every=1))]
fn solve_limit(
    py: Python<'_>,
    c_zero: f64,
    initial: &PyField,
    dt: f64,
    t_end: f64,
    scheme: &str,
    save_every: usize,
) -> PyResult<PyTrajectory> {
    let cfg = solve_config(initial, dt, t_end, scheme, save_every)?;
    py.detach(|| solver::solve_limit(c_zero, &cfg)).map(PyTrajectory).map_err(to_py)
}

/// Solves the noiseless model at one ε.
#[pyfunction]
#[pyo3(signature = (spec, initial, dt, t_end, scheme="imex", save_every=1))]
fn solve_deterministic(
    py: Python<'_>,
    spec: &PyModelSpec,
    initial: &PyField,
    dt: f64,
    t_end: f64,
    scheme: &str,
    save_every: usize,
) -> PyResult<PyTrajectory> {
    let cfg = solve_config(initial, dt, t_end, scheme, save_every)?;
    py.detach(|| solver::solve_deterministic(&spec.0, &cfg))
        .map(PyTrajectory)
        .map_err(to_py)
}

/// Tail-controlled `C_ε` along a decreasing ε grid and its ε → 0 limit.
#[pyfunction]
#[pyo3(signature = (model, schedule, eps_grid, mollifier=None))]
fn c_zero_estimate<'py>(
    py: Python<'py>,
    model: &str,
    schedule: &PySchedule,
    eps_grid: Vec<f64>,
    mollifier: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let model: Model = parse_name("model", model)?;
    let mollifier = match mollifier {
        Some(m) => parse_name("mollifier", m)?,
        None => ModelSpec::new(model, 0.5, 0.0).map_err(to_py)?.mollifier,
    };
    let est = py
        .detach(|| renorm::c_zero_estimate_mollified(model, mollifier, &schedule.0, &eps_grid))
        .map_err(to_py)?;
    to_dict(py, &est)
}

/// Runs a study from a TOML document in the command-line config format.
/// `mode` overrides the document's `mode` key.
#[pyfunction]
#[pyo3(signature = (config_toml, mode=None))]
fn run_study<'py>(py: Python<'py>, config_toml: &str, mode: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let file = RunConfigFile::from_toml_str(config_toml).map_err(to_py)?;
    let mode: StudyMode = match mode {
        Some(m) => parse_name("study mode", m)?,
        None => file.study_mode(),
    };
    let study = file.study_config().map_err(to_py)?;
    match mode {
        StudyMode::Convergence => {
            let res = py.detach(|| run_convergence_study(&study)).map_err(to_py)?;
            let d = PyDict::new(py);
            d.set_item("c_zero", res.c_zero)?;
            d.set_item("records", to_dict(py, &res.records)?)?;
            d.set_item("summaries", to_dict(py, &res.summaries)?)?;
            Ok(d.into_any())
        }
        StudyMode::Theorem => {
            let rep = py.detach(|| theorem_inequality_check(&study)).map_err(to_py)?;
            to_dict(py, &rep)
        }
        StudyMode::Regimes => {
            let schedules = file.regime_schedules().map_err(to_py)?;
            let rep = py.detach(|| regime_scan(&study, &schedules)).map_err(to_py)?;
            to_dict(py, &rep)
        }
    }
}

/// Fast invariant checks; a list of `(name, passed, detail)`.
#[pyfunction]
fn check(py: Python<'_>) -> Vec<(String, bool, String)> {
    py.detach(|| run_checks(CheckOptions::default()))
        .results
        .into_iter()
        .map(|r| (r.name, r.pass, r.detail))
        .collect()
}

#[pymodule]
#[pyo3(name = "spdelab")]
fn spdelab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PySchedule>()?;
    m.add_class::<PyModelSpec>()?;
    m.add_class::<PyNoisePath>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(solve_coupled, m)?)?;
    m.add_function(wrap_pyfunction!(solve_limit, m)?)?;
    m.add_function(wrap_pyfunction!(solve_deterministic, m)?)?;
    m.add_function(wrap_pyfunction!(c_zero_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    Ok(())
}
