//! Python bindings: preset tasks, fidelity and gradients, single runs,
//! experiment commands and the statistics helpers.

use std::path::PathBuf;
use std::str::FromStr;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

use padmm_core::bench::run_method;
use padmm_core::commands::{dispatch, Command, RunSelection};
use padmm_core::config::{load_config, ExperimentConfig};
use padmm_core::dynamics::{fidelity, fidelity_gradient, GradientMode, TaskSpec};
use padmm_core::pareto::nondominated_front;
use padmm_core::record::{Method, RunRecord};
use padmm_core::stats::{aggregate, bh_adjust, welch_test, Direction};
use padmm_core::structure::{bandlimit_project, bandwidth_excess, soft_threshold, total_variation};
use padmm_core::{tasks, ControlField};

create_exception!(padmm_py, PadmmError, PyException);

fn err(e: padmm_core::Error) -> PyErr {
    PadmmError::new_err(e.to_string())
}

fn parse<T: FromStr>(what: &str, s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| PadmmError::new_err(format!("{what}: {e}")))
}

fn field(rows: Vec<Vec<f64>>) -> PyResult<ControlField> {
    ControlField::from_rows(&rows).map_err(err)
}

/// Serializable value to plain Python objects via JSON.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PadmmError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A gate synthesis task.
#[pyclass(name = "Task", module = "padmm_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTask {
    inner: TaskSpec,
}

#[pymethods]
impl PyTask {
    /// Built-in task: `1q-x`, `qutrit-x` or `2q-ent`.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: tasks::preset_task(name).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PadmmError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PadmmError::new_err(e.to_string()))
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels()
    }

    #[getter]
    fn slices(&self) -> usize {
        self.inner.slices
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn u_max(&self) -> f64 {
        self.inner.u_max
    }

    #[getter]
    fn cutoff(&self) -> f64 {
        self.inner.cutoff
    }

    /// Gate fidelity of a `channels x slices` field.
    fn fidelity(&self, u: Vec<Vec<f64>>) -> PyResult<f64> {
        fidelity(&self.inner, &field(u)?).map_err(err)
    }

    /// Gradient of `1 - F`; `mode` is `exact` or `paper-form`.
    #[pyo3(signature = (u, mode = "exact"))]
    fn gradient(&self, u: Vec<Vec<f64>>, mode: &str) -> PyResult<Vec<Vec<f64>>> {
        let mode: GradientMode = parse("gradient mode", mode)?;
        Ok(fidelity_gradient(&self.inner, &field(u)?, mode).map_err(err)?.to_rows())
    }

    fn __repr__(&self) -> String {
        format!(
            "Task({:?}, dim={}, slices={})",
            self.inner.name, self.inner.dim, self.inner.slices
        )
    }
}

/// The outcome of one optimizer run.
#[pyclass(name = "RunRecord", module = "padmm_py", frozen)]
struct PyRunRecord {
    inner: RunRecord,
}

#[pymethods]
impl PyRunRecord {
    #[getter]
    fn task(&self) -> &str {
        &self.inner.task
    }

    #[getter]
    fn method(&self) -> &str {
        self.inner.method.as_str()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn fidelity(&self) -> f64 {
        self.inner.fidelity
    }

    #[getter]
    fn final_field(&self) -> Vec<Vec<f64>> {
        self.inner.final_field.to_rows()
    }

    #[getter]
    fn total_variation(&self) -> f64 {
        self.inner.metrics.total_variation
    }

    #[getter]
    fn bandwidth_excess(&self) -> f64 {
        self.inner.metrics.bandwidth_excess
    }

    #[getter]
    fn objective_evals(&self) -> u64 {
        self.inner.objective_evals
    }

    #[getter]
    fn gradient_evals(&self) -> u64 {
        self.inner.gradient_evals
    }

    #[getter]
    fn flags(&self) -> Vec<String> {
        self.inner.flags.clone()
    }

    /// Full record as a dictionary.
    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "RunRecord({} {} seed={} fidelity={:.6})",
            self.inner.task, self.inner.method, self.inner.seed, self.inner.fidelity
        )
    }
}

/// Experiment configuration: a preset with optional JSON overrides.
#[pyclass(name = "Config", module = "padmm_py")]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (path = None, preset = None))]
    fn new(path: Option<PathBuf>, preset: Option<&str>) -> PyResult<Self> {
        Ok(Self {
            inner: load_config(path.as_deref(), preset).map_err(err)?,
        })
    }

    #[getter]
    fn tasks(&self) -> Vec<String> {
        self.inner.tasks.keys().cloned().collect()
    }

    #[getter]
    fn seeds(&self) -> Vec<u64> {
        self.inner.seeds.clone()
    }

    #[setter]
    fn set_seeds(&mut self, seeds: Vec<u64>) {
        self.inner.seeds = seeds;
    }

    #[getter]
    fn methods(&self) -> Vec<String> {
        self.inner.methods.iter().map(|m| m.to_string()).collect()
    }

    #[setter]
    fn set_methods(&mut self, methods: Vec<String>) -> PyResult<()> {
        self.inner.methods = methods.iter().map(|m| parse("method", m)).collect::<PyResult<_>>()?;
        Ok(())
    }

    #[getter]
    fn output_dir(&self) -> PathBuf {
        self.inner.output_dir.clone()
    }

    #[setter]
    fn set_output_dir(&mut self, dir: PathBuf) {
        self.inner.output_dir = dir;
    }

    #[getter]
    fn workers(&self) -> usize {
        self.inner.workers
    }

    #[setter]
    fn set_workers(&mut self, workers: usize) {
        self.inner.workers = workers;
    }

    fn set_gradient_mode(&mut self, mode: &str) -> PyResult<()> {
        self.inner.set_gradient_mode(parse("gradient mode", mode)?);
        Ok(())
    }

    fn task(&self, name: &str) -> PyResult<PyTask> {
        Ok(PyTask {
            inner: self.inner.task(name).map_err(err)?.task.clone(),
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json_string().map_err(err)
    }

    /// One run of `method` on `task` with the configured settings.
    fn run(&self, py: Python<'_>, task: &str, method: &str, seed: u64) -> PyResult<PyRunRecord> {
        let method: Method = parse("method", method)?;
        self.inner.validate().map_err(err)?;
        let tc = self.inner.task(task).map_err(err)?;
        let cfg = &self.inner;
        let rec = py.detach(|| run_method(cfg, tc, method, seed)).map_err(err)?;
        Ok(PyRunRecord { inner: rec })
    }

    /// Runs a CLI command (`bench`, `pareto`, ...) into `output_dir` and
    /// returns its summary.
    #[pyo3(signature = (command, task = None, method = None, seed = None))]
    fn dispatch<'py>(
        &self,
        py: Python<'py>,
        command: &str,
        task: Option<String>,
        method: Option<&str>,
        seed: Option<u64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let command: Command = parse("command", command)?;
        let selection = RunSelection {
            task,
            method: method.map(|m| parse("method", m)).transpose()?,
            seed,
        };
        let cfg = &self.inner;
        let out = py.detach(|| dispatch(command, cfg, &selection)).map_err(err)?;
        to_py(py, &out.summary)
    }
}

/// Welch test of `mean(a) = mean(b)` with Hedges' g.
#[pyfunction]
fn welch<'py>(py: Python<'py>, a: Vec<f64>, b: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &welch_test(&a, &b).map_err(err)?)
}

/// Benjamini-Hochberg q-values in input order.
#[pyfunction]
fn bh(p: Vec<f64>) -> PyResult<Vec<f64>> {
    bh_adjust(&p).map_err(err)
}

/// Summary statistics of a sample.
#[pyfunction]
#[pyo3(signature = (sample, higher_is_better = true))]
fn summarize<'py>(py: Python<'py>, sample: Vec<f64>, higher_is_better: bool) -> PyResult<Bound<'py, PyAny>> {
    let dir = if higher_is_better {
        Direction::HigherIsBetter
    } else {
        Direction::LowerIsBetter
    };
    to_py(py, &aggregate(&sample, dir).map_err(err)?)
}

/// Indices of the non-dominated `(fidelity, complexity)` points.
#[pyfunction]
fn pareto_front(points: Vec<(f64, f64)>) -> PyResult<Vec<usize>> {
    nondominated_front(&points).map_err(err)
}

#[pyfunction]
fn shrink(u: Vec<Vec<f64>>, tau: f64) -> PyResult<Vec<Vec<f64>>> {
    Ok(soft_threshold(&field(u)?, tau).map_err(err)?.to_rows())
}

#[pyfunction]
fn band_limit(u: Vec<Vec<f64>>, cutoff: f64, dt: f64) -> PyResult<Vec<Vec<f64>>> {
    Ok(bandlimit_project(&field(u)?, cutoff, dt).map_err(err)?.to_rows())
}

#[pyfunction]
fn tv(u: Vec<Vec<f64>>) -> PyResult<f64> {
    Ok(total_variation(&field(u)?))
}

#[pyfunction]
fn excess(u: Vec<Vec<f64>>, cutoff: f64, dt: f64) -> PyResult<f64> {
    Ok(bandwidth_excess(&field(u)?, cutoff, dt))
}

#[pymodule]
fn padmm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PadmmError", m.py().get_type::<PadmmError>())?;
    m.add("PRESETS", tasks::PRESET_NAMES.to_vec())?;
    m.add_class::<PyTask>()?;
    m.add_class::<PyRunRecord>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(welch, m)?)?;
    m.add_function(wrap_pyfunction!(bh, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    m.add_function(wrap_pyfunction!(pareto_front, m)?)?;
    m.add_function(wrap_pyfunction!(shrink, m)?)?;
    m.add_function(wrap_pyfunction!(band_limit, m)?)?;
    m.add_function(wrap_pyfunction!(tv, m)?)?;
    m.add_function(wrap_pyfunction!(excess, m)?)?;
    Ok(())
}
