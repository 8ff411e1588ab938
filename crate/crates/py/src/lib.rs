//! Python bindings: systems, schedules, targets and noise models as classes,
//! and the propagation, estimation, optimization and testing routines as
//! module functions. Matrices cross the boundary as nested lists; reports
//! come back as dicts.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

use clockrobust::config;
use clockrobust::estimator::{self, EstimatorOptions};
use clockrobust::linalg::{CMatrix, RMatrix};
use clockrobust::montecarlo;
use clockrobust::noise::{self, ClockNoiseModel, EdgeConventions, JitterSharing, UniformRange};
use clockrobust::operators;
use clockrobust::optimizers::{self, OptimizationTrace, OptimizerOptions, Projection};
use clockrobust::presets;
use clockrobust::runner;
use clockrobust::system::{self, PhaseMode};
use clockrobust::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::NotConverged(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py_json<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn cmatrix_to_rows(m: &CMatrix) -> Vec<Vec<Complex64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn rows_to_cmatrix(rows: &[Vec<Complex64>]) -> PyResult<CMatrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("matrix rows must have equal length"));
    }
    Ok(CMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn rmatrix_to_rows(m: &RMatrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn phase_mode(name: &str) -> PyResult<PhaseMode> {
    match name {
        "plain" => Ok(PhaseMode::Plain),
        "phase_invariant" => Ok(PhaseMode::PhaseInvariant),
        other => Err(PyValueError::new_err(format!("unknown phase mode `{other}`"))),
    }
}

fn trace_to_py<'py>(py: Python<'py>, trace: &OptimizationTrace) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::json!({
        "records": trace.records,
        "converged": trace.converged,
        "restorations": trace.restorations,
        "note": trace.note,
    });
    to_py_json(py, &value)
}

/// Drift plus controls `H(t) = H0 + Σ_k u_k(t) H_k`, each control on a clock
/// channel.
#[pyclass(name = "QuantumSystem", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySystem(system::QuantumSystem);

#[pymethods]
impl PySystem {
    /// `QuantumSystem(drift, [(expr, channel), ...])` with operator
    /// expressions such as `"2*pi*0.01 Z⊗Z"`.
    #[new]
    fn new(drift: &str, controls: Vec<(String, usize)>) -> PyResult<Self> {
        let h0 = operators::build_operator(drift).map_err(err)?;
        let hs = controls
            .iter()
            .map(|(e, _)| operators::build_operator(e))
            .collect::<clockrobust::Result<Vec<_>>>()
            .map_err(err)?;
        let channels = controls.iter().map(|(_, c)| *c).collect();
        system::QuantumSystem::new(h0, hs, channels).map(PySystem).map_err(err)
    }

    /// The two-qubit CNOT benchmark system.
    #[staticmethod]
    fn cnot() -> Self {
        PySystem(presets::cnot_system())
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn n_controls(&self) -> usize {
        self.0.n_controls()
    }

    #[getter]
    fn n_channels(&self) -> usize {
        self.0.n_channels()
    }

    #[getter]
    fn channel_of(&self) -> Vec<usize> {
        self.0.channel_of().to_vec()
    }
}

/// Piecewise-constant amplitudes, one row per control.
#[pyclass(name = "ControlSchedule", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySchedule(system::ControlSchedule);

#[pymethods]
impl PySchedule {
    #[new]
    #[pyo3(signature = (amplitudes, sample_period = 1.0))]
    fn new(amplitudes: Vec<Vec<f64>>, sample_period: f64) -> PyResult<Self> {
        let m = amplitudes.len();
        let slices = amplitudes.first().map_or(0, Vec::len);
        if amplitudes.iter().any(|r| r.len() != slices) {
            return Err(PyValueError::new_err("amplitude rows must have equal length"));
        }
        let a = RMatrix::from_fn(m, slices, |k, s| amplitudes[k][s]);
        system::ControlSchedule::new(sample_period, a).map(PySchedule).map_err(err)
    }

    /// I.i.d. uniform amplitudes in `[-amplitude, amplitude]`.
    #[staticmethod]
    #[pyo3(signature = (system, slices, sample_period = 1.0, amplitude = presets::INITIAL_AMPLITUDE, seed = 0))]
    fn random(system: &PySystem, slices: usize, sample_period: f64, amplitude: f64, seed: u64) -> Self {
        PySchedule(presets::random_schedule(&system.0, slices, sample_period, amplitude, seed))
    }

    #[getter]
    fn amplitudes(&self) -> Vec<Vec<f64>> {
        rmatrix_to_rows(self.0.amplitudes())
    }

    #[getter]
    fn sample_period(&self) -> f64 {
        self.0.sample_period()
    }

    #[getter]
    fn slices(&self) -> usize {
        self.0.slices()
    }

    #[getter]
    fn n_controls(&self) -> usize {
        self.0.n_controls()
    }
}

/// Target unitary and the gate-error convention.
#[pyclass(name = "GateTarget", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTarget(system::GateTarget);

#[pymethods]
impl PyTarget {
    #[new]
    #[pyo3(signature = (matrix, phase_mode = "plain"))]
    fn new(matrix: Vec<Vec<Complex64>>, phase_mode: &str) -> PyResult<Self> {
        let u = rows_to_cmatrix(&matrix)?;
        system::GateTarget::new(u, self::phase_mode(phase_mode)?).map(PyTarget).map_err(err)
    }

    /// A named gate (`cnot`, `cz`, `swap`, `iswap`, `x`, `y`, `z`, `h`)
    /// multiplied by `e^{i·phase}`.
    #[staticmethod]
    #[pyo3(signature = (name, phase = 0.0, phase_mode = "plain"))]
    fn named(name: &str, phase: f64, phase_mode: &str) -> PyResult<Self> {
        let u = system::with_global_phase(&config::named_gate(name).map_err(err)?, phase);
        system::GateTarget::new(u, self::phase_mode(phase_mode)?).map(PyTarget).map_err(err)
    }

    #[getter]
    fn unitary(&self) -> Vec<Vec<Complex64>> {
        cmatrix_to_rows(&self.0.unitary)
    }
}

/// Per-channel uniform latency and per-edge uniform jitter.
#[pyclass(name = "ClockNoiseModel", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyNoise(ClockNoiseModel);

#[pymethods]
impl PyNoise {
    #[new]
    #[pyo3(signature = (latency, jitter_half_width = 0.0, per_control_jitter = false, shift_turn_on = true, seed = 0))]
    fn new(
        latency: Vec<(f64, f64)>,
        jitter_half_width: f64,
        per_control_jitter: bool,
        shift_turn_on: bool,
        seed: u64,
    ) -> PyResult<Self> {
        let ranges = latency.iter().map(|(a, b)| UniformRange::new(*a, *b)).collect();
        let sharing = if per_control_jitter { JitterSharing::PerControl } else { JitterSharing::PerChannel };
        let conventions = EdgeConventions { shift_turn_on, ..Default::default() };
        ClockNoiseModel::new(ranges, jitter_half_width, sharing, conventions, seed).map(PyNoise).map_err(err)
    }

    /// Latency `U(0, 0.4)` ns per channel, jitter `U(−0.05, 0.05)` ns.
    #[staticmethod]
    #[pyo3(signature = (jitter = true, seed = 0))]
    fn cnot(jitter: bool, seed: u64) -> Self {
        PyNoise(presets::clock_noise(jitter, seed))
    }

    fn scaled(&self, factor: f64) -> PyResult<Self> {
        self.0.scaled(factor).map(PyNoise).map_err(err)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed()
    }
}

#[pyfunction]
fn build_operator(expr: &str) -> PyResult<Vec<Vec<Complex64>>> {
    operators::build_operator(expr).map(|m| cmatrix_to_rows(&m)).map_err(err)
}

/// Final unitary of the ideally clocked schedule.
#[pyfunction]
fn propagate_ideal(system: &PySystem, schedule: &PySchedule) -> PyResult<Vec<Vec<Complex64>>> {
    let traj = system::propagate_ideal(&system.0, &schedule.0).map_err(err)?;
    Ok(cmatrix_to_rows(traj.final_unitary()))
}

/// Ideal gate error `J₀`.
#[pyfunction]
fn gate_error(system: &PySystem, schedule: &PySchedule, target: &PyTarget) -> PyResult<f64> {
    optimizers::j0_value(&system.0, &schedule.0, &target.0).map_err(err)
}

#[pyfunction]
fn grad_j0(system: &PySystem, schedule: &PySchedule, target: &PyTarget) -> PyResult<Vec<Vec<f64>>> {
    optimizers::grad_j0(&system.0, &schedule.0, &target.0).map(|g| rmatrix_to_rows(&g)).map_err(err)
}

/// `{"ctau": [[...]], "mu0sq": float}` in ns².
#[pyfunction]
fn second_moments<'py>(py: Python<'py>, noise: &PyNoise, system: &PySystem) -> PyResult<Bound<'py, PyAny>> {
    let m = noise::second_moments(&noise.0, &system.0).map_err(err)?;
    to_py_json(py, &serde_json::json!({ "ctau": rmatrix_to_rows(&m.ctau), "mu0sq": m.mu0sq }))
}

/// Estimated noise-averaged error `J_N` with its latency/jitter split.
#[pyfunction]
#[pyo3(signature = (system, schedule, noise, include_turn_on = false))]
fn estimate_jn<'py>(
    py: Python<'py>,
    system: &PySystem,
    schedule: &PySchedule,
    noise: &PyNoise,
    include_turn_on: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let moments = noise::second_moments(&noise.0, &system.0).map_err(err)?;
    let iset = estimator::interaction_set(&system.0, &schedule.0, EstimatorOptions { include_turn_on }).map_err(err)?;
    let report = estimator::estimate_jn(&iset, &moments).map_err(err)?;
    to_py_json(py, &report)
}

#[pyfunction]
#[pyo3(signature = (system, schedule, noise, include_turn_on = false))]
fn grad_jn(
    system: &PySystem,
    schedule: &PySchedule,
    noise: &PyNoise,
    include_turn_on: bool,
) -> PyResult<Vec<Vec<f64>>> {
    let moments = noise::second_moments(&noise.0, &system.0).map_err(err)?;
    estimator::grad_jn(&system.0, &schedule.0, &moments, EstimatorOptions { include_turn_on })
        .map(|g| rmatrix_to_rows(&g))
        .map_err(err)
}

/// GRAPE on `J₀`. Returns `(schedule, trace)`.
#[pyfunction]
#[pyo3(signature = (system, schedule, target, max_iters = 5000, j0_target = 1e-10))]
fn grape<'py>(
    py: Python<'py>,
    system: &PySystem,
    schedule: &PySchedule,
    target: &PyTarget,
    max_iters: usize,
    j0_target: f64,
) -> PyResult<(PySchedule, Bound<'py, PyAny>)> {
    let opts = OptimizerOptions { max_iters, j0_target, ..Default::default() };
    let (s, t) =
        py.detach(|| optimizers::grape_minimize(&system.0, &schedule.0, &target.0, &opts, None)).map_err(err)?;
    Ok((PySchedule(s), trace_to_py(py, &t)?))
}

/// Homotopic refinement of `J_N` at fixed precision. `projection` is
/// `"gate_gradient"` or `"unitary_jacobian"`.
#[pyfunction]
#[pyo3(signature = (system, schedule, target, noise, max_iters = 5000, projection = "gate_gradient", include_turn_on = false))]
#[allow(clippy::too_many_arguments)]
fn homotopic<'py>(
    py: Python<'py>,
    system: &PySystem,
    schedule: &PySchedule,
    target: &PyTarget,
    noise: &PyNoise,
    max_iters: usize,
    projection: &str,
    include_turn_on: bool,
) -> PyResult<(PySchedule, Bound<'py, PyAny>)> {
    let projection = match projection {
        "gate_gradient" => Projection::GateGradient,
        "unitary_jacobian" => Projection::UnitaryJacobian,
        other => return Err(PyValueError::new_err(format!("unknown projection `{other}`"))),
    };
    let moments = noise::second_moments(&noise.0, &system.0).map_err(err)?;
    let opts = OptimizerOptions {
        max_iters,
        projection,
        estimator: EstimatorOptions { include_turn_on },
        ..Default::default()
    };
    let (s, t) = py
        .detach(|| optimizers::homotopic_refine(&system.0, &schedule.0, &target.0, &moments, &opts, None))
        .map_err(err)?;
    Ok((PySchedule(s), trace_to_py(py, &t)?))
}

/// b-GRAPE over batches drawn from `noise`.
#[pyfunction]
#[pyo3(signature = (system, schedule, target, noise, max_iters = 1000, learning_rate = 0.05, batch_size = 5, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn bgrape<'py>(
    py: Python<'py>,
    system: &PySystem,
    schedule: &PySchedule,
    target: &PyTarget,
    noise: &PyNoise,
    max_iters: usize,
    learning_rate: f64,
    batch_size: usize,
    seed: u64,
) -> PyResult<(PySchedule, Bound<'py, PyAny>)> {
    let opts = OptimizerOptions { max_iters, learning_rate, batch_size, seed, ..Default::default() };
    let (s, t) = py
        .detach(|| optimizers::bgrape_optimize(&system.0, &schedule.0, &target.0, &noise.0, &opts, None))
        .map_err(err)?;
    Ok((PySchedule(s), trace_to_py(py, &t)?))
}

/// Monte-Carlo average gate error over `samples` noise realizations.
#[pyfunction]
#[pyo3(signature = (system, schedule, target, noise, samples = 10_000, seed = 0))]
fn test_average_error<'py>(
    py: Python<'py>,
    system: &PySystem,
    schedule: &PySchedule,
    target: &PyTarget,
    noise: &PyNoise,
    samples: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let report = py
        .detach(|| montecarlo::test_average_error(&system.0, &schedule.0, &target.0, &noise.0, samples, seed))
        .map_err(err)?;
    to_py_json(py, &report)
}

/// Error over a grid of fixed channel latencies without jitter.
#[pyfunction]
fn latency_sweep<'py>(
    py: Python<'py>,
    system: &PySystem,
    schedule: &PySchedule,
    target: &PyTarget,
    tau1: Vec<f64>,
    tau2: Vec<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let s = py
        .detach(|| {
            montecarlo::latency_sweep(&system.0, &schedule.0, &target.0, &tau1, &tau2, EdgeConventions::default())
        })
        .map_err(err)?;
    let value = serde_json::json!({
        "tau1": s.tau1,
        "tau2": s.tau2,
        "errors": rmatrix_to_rows(&s.errors),
        "argmin": s.argmin_taus(),
        "min_error": s.min_error,
    });
    to_py_json(py, &value)
}

/// `Σ_j (u_k^j − u_k^{j+1})²` per control.
#[pyfunction]
fn smoothness(schedule: &PySchedule) -> Vec<f64> {
    montecarlo::smoothness_metric(&schedule.0)
}

/// Loads and validates a config file; returns it as a dict with every
/// default filled in.
#[pyfunction]
fn load_config<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config::load_config(&path).map_err(err)?;
    to_py_json(py, &cfg)
}

/// Runs a config file (optionally overriding its algorithm and seed) and
/// returns the run summary.
#[pyfunction]
#[pyo3(signature = (config_path, out_dir, algorithm = None, seed = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config_path: PathBuf,
    out_dir: PathBuf,
    algorithm: Option<&str>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = config::load_config(&config_path).map_err(err)?;
    if let Some(name) = algorithm {
        cfg.run.algorithm = serde_json::from_value(serde_json::Value::String(name.to_string()))
            .map_err(|_| PyValueError::new_err(format!("unknown algorithm `{name}`")))?;
    }
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    let outcome = py.detach(|| runner::run_experiment(&cfg, &out_dir)).map_err(err)?;
    to_py_json(py, &outcome.summary)
}

#[pymodule]
#[pyo3(name = "clockrobust")]
fn clockrobust_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_class::<PySchedule>()?;
    m.add_class::<PyTarget>()?;
    m.add_class::<PyNoise>()?;
    m.add_function(wrap_pyfunction!(build_operator, m)?)?;
    m.add_function(wrap_pyfunction!(propagate_ideal, m)?)?;
    m.add_function(wrap_pyfunction!(gate_error, m)?)?;
    m.add_function(wrap_pyfunction!(grad_j0, m)?)?;
    m.add_function(wrap_pyfunction!(second_moments, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_jn, m)?)?;
    m.add_function(wrap_pyfunction!(grad_jn, m)?)?;
    m.add_function(wrap_pyfunction!(grape, m)?)?;
    m.add_function(wrap_pyfunction!(homotopic, m)?)?;
    m.add_function(wrap_pyfunction!(bgrape, m)?)?;
    m.add_function(wrap_pyfunction!(test_average_error, m)?)?;
    m.add_function(wrap_pyfunction!(latency_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(smoothness, m)?)?;
    m.add_function(wrap_pyfunction!(load_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
