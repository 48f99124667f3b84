//! Python bindings: networks, reservoir runs, the circuit solver,
//! classifiers and whole experiment tasks.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde_json::Value;

use nanores::audio::{build_manifest, standardize_samples, NamingPattern, DEFAULT_PATTERN};
use nanores::classify::{
    evaluate, subsample, train as train_model, ClassifierKind, ClassifierModel, ClassifierParams,
    FeatureMatrix, Source,
};
use nanores::dynamics::{self, DynamicsParams};
use nanores::harness::{run_experiment as run_task, ExperimentConfig};
use nanores::network::{assemble, AssemblyConfig, NetworkTopology};
use nanores::reservoir::{ClipRef, Reservoir, ReservoirConfig, Simulation};
use nanores::solver::{self, ConductanceMatrix};
use nanores::synth::{write_corpus, SynthConfig};
use nanores::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::Shape(_)
        | Error::DegenerateLabels(_)
        | Error::InsufficientData(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Deserialize an optional Python mapping into a config struct; missing
/// keys take their defaults and unknown keys are rejected.
fn from_py<T: DeserializeOwned>(py: Python<'_>, obj: Option<&Bound<'_, PyAny>>) -> PyResult<T> {
    let text = match obj {
        Some(o) if !o.is_none() => py
            .import("json")?
            .call_method1("dumps", (o,))?
            .extract::<String>()?,
        _ => "{}".to_string(),
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

/// An assembled nanowire network.
#[pyclass(name = "Network", frozen)]
struct PyNetwork {
    inner: NetworkTopology,
}

#[pymethods]
impl PyNetwork {
    /// Assemble from an assembly config mapping, e.g. `{"n_wires": 300, "seed": 2}`.
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(py: Python<'_>, config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let cfg: AssemblyConfig = from_py(py, config)?;
        let inner = py.detach(|| assemble(&cfg)).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        NetworkTopology::from_json(text)
            .map(|inner| Self { inner })
            .map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[getter]
    fn n_wires(&self) -> usize {
        self.inner.n_wires()
    }

    #[getter]
    fn n_junctions(&self) -> usize {
        self.inner.n_junctions()
    }

    #[getter]
    fn source_wire(&self) -> usize {
        self.inner.source_wire
    }

    #[getter]
    fn ground_wire(&self) -> usize {
        self.inner.ground_wire
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn substrate_side(&self) -> f64 {
        self.inner.substrate_side
    }

    /// Wire pairs joined by each junction, in junction id order.
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner
            .junctions
            .iter()
            .map(|j| (j.wire_a, j.wire_b))
            .collect()
    }

    /// Drive the network from the low-conductance state and return the
    /// effective conductance after each step.
    #[pyo3(signature = (drive, dynamics=None))]
    fn simulate(
        &self,
        py: Python<'_>,
        drive: Vec<f64>,
        dynamics: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<Vec<f64>> {
        let params: DynamicsParams = from_py(py, dynamics)?;
        let v_max = drive.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        py.detach(|| {
            let mut sim = Simulation::new(&self.inner, params, v_max)?;
            sim.run(&drive).map_err(|(_, e)| e)
        })
        .map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(wires={}, junctions={}, seed={})",
            self.inner.n_wires(),
            self.inner.n_junctions(),
            self.inner.seed
        )
    }
}

/// A configured reservoir; its network is assembled once at construction.
#[pyclass(name = "Reservoir", frozen)]
struct PyReservoir {
    inner: Reservoir,
}

#[pymethods]
impl PyReservoir {
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(py: Python<'_>, config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let cfg: ReservoirConfig = from_py(py, config)?;
        let inner = py.detach(|| Reservoir::new(cfg)).map_err(err)?;
        Ok(Self { inner })
    }

    /// The shared network, or `None` in fresh-topology mode.
    #[getter]
    fn network(&self) -> Option<PyNetwork> {
        self.inner
            .topology()
            .map(|t| PyNetwork { inner: t.clone() })
    }

    #[getter]
    fn t(&self) -> usize {
        self.inner.config().t
    }

    /// Standardize raw audio samples and return the conductance readout.
    #[pyo3(signature = (samples, speaker="clip", digit=0, trial=0))]
    fn run(
        &self,
        py: Python<'_>,
        samples: Vec<f64>,
        speaker: &str,
        digit: u8,
        trial: u32,
    ) -> PyResult<Vec<f64>> {
        let cfg = self.inner.config();
        let clip = ClipRef::new(speaker, digit, trial);
        py.detach(|| {
            let drive = standardize_samples(&samples, cfg.t, cfg.v_p)?;
            self.inner.run_clip(&drive, &clip).map(|t| t.values)
        })
        .map_err(err)
    }
}

/// A trained linear classifier.
#[pyclass(name = "Classifier", frozen)]
struct PyClassifier {
    inner: ClassifierModel,
}

#[pymethods]
impl PyClassifier {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        ClassifierModel::load(path)
            .map(|inner| Self { inner })
            .map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.as_str()
    }

    #[getter]
    fn classes(&self) -> Vec<u8> {
        self.inner.classes.clone()
    }

    fn predict(&self, row: Vec<f64>) -> PyResult<u8> {
        self.inner.predict(&row).map_err(err)
    }

    fn scores(&self, row: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.scores(&row).map_err(err)
    }

    /// Accuracy, confusion matrix and per-class metrics on a labeled set.
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        rows: Vec<Vec<f64>>,
        labels: Vec<u8>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let data = FeatureMatrix::new(rows, labels, Source::Raw).map_err(err)?;
        let report = evaluate(&self.inner, &data).map_err(err)?;
        to_py(
            py,
            &serde_json::to_value(&report).map_err(|e| err(e.into()))?,
        )
    }
}

/// Train `kind` (`lr`, `lda` or `svm`) on feature rows.
#[pyfunction]
#[pyo3(signature = (kind, rows, labels, params=None))]
fn train(
    py: Python<'_>,
    kind: &str,
    rows: Vec<Vec<f64>>,
    labels: Vec<u8>,
    params: Option<&Bound<'_, PyAny>>,
) -> PyResult<PyClassifier> {
    let kind: ClassifierKind = kind.parse().map_err(err)?;
    let params: ClassifierParams = from_py(py, params)?;
    let data = FeatureMatrix::new(rows, labels, Source::Raw).map_err(err)?;
    let inner = py
        .detach(|| train_model(kind, &data, &params))
        .map_err(err)?;
    Ok(PyClassifier { inner })
}

/// Bin, scale and pad raw samples into a `t`-step drive with peak `v_p`.
#[pyfunction]
#[pyo3(name = "standardize", signature = (samples, t=1024, v_p=1.0))]
fn py_standardize(samples: Vec<f64>, t: usize, v_p: f64) -> PyResult<Vec<f64>> {
    standardize_samples(&samples, t, v_p)
        .map(|v| v.values)
        .map_err(err)
}

/// Evenly spaced `k`-element subset of a trace.
#[pyfunction]
#[pyo3(name = "subsample")]
fn py_subsample(trace: Vec<f64>, k: usize) -> PyResult<Vec<f64>> {
    subsample(&trace, k).map_err(err)
}

/// Nodal analysis of a resistor network driven at `source` with `ground` at 0 V.
#[pyfunction]
#[pyo3(signature = (n, edges, weights, source, ground, v=1.0))]
fn solve<'py>(
    py: Python<'py>,
    n: usize,
    edges: Vec<(usize, usize)>,
    weights: Vec<f64>,
    source: usize,
    ground: usize,
    v: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let m = ConductanceMatrix::from_edges(n, &edges, &weights).map_err(err)?;
    let r = solver::solve(&m, source, ground, v).map_err(err)?;
    let value = serde_json::json!({
        "node_voltages": r.node_voltages,
        "junction_drops": r.junction_drops,
        "source_current": r.source_current,
        "g_eff": r.g_eff,
    });
    to_py(py, &value)
}

/// Potentiation and depression rates at junction voltage `v`.
#[pyfunction]
#[pyo3(signature = (v, dynamics=None))]
fn rates(py: Python<'_>, v: f64, dynamics: Option<&Bound<'_, PyAny>>) -> PyResult<(f64, f64)> {
    let p: DynamicsParams = from_py(py, dynamics)?;
    dynamics::rates(v, &p).map_err(err)
}

/// Scan a directory of WAV files into manifest entries.
#[pyfunction]
#[pyo3(signature = (root, pattern=None))]
fn manifest<'py>(
    py: Python<'py>,
    root: &str,
    pattern: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let naming = NamingPattern::new(pattern.unwrap_or(DEFAULT_PATTERN)).map_err(err)?;
    let m = build_manifest(root, &naming).map_err(err)?;
    let entries: Vec<Value> = m
        .entries
        .iter()
        .map(|e| {
            serde_json::json!({
                "path": e.path, "speaker": e.speaker, "digit": e.digit, "trial": e.trial,
            })
        })
        .collect();
    to_py(py, &Value::Array(entries))
}

/// Write the synthetic spoken-digit corpus and its `manifest.json` into `out`.
/// Returns the number of clips.
#[pyfunction]
#[pyo3(signature = (out, config=None))]
fn synth(py: Python<'_>, out: &str, config: Option<&Bound<'_, PyAny>>) -> PyResult<usize> {
    let cfg: SynthConfig = from_py(py, config)?;
    let m = py.detach(|| write_corpus(out, &cfg)).map_err(err)?;
    m.save(std::path::Path::new(out).join("manifest.json"))
        .map_err(err)?;
    Ok(m.len())
}

/// Run one experiment task from a config mapping; returns the run summary.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let cfg: ExperimentConfig = from_py(py, Some(config))?;
    let summary = py.detach(|| run_task(&cfg)).map_err(err)?;
    to_py(
        py,
        &serde_json::to_value(&summary).map_err(|e| err(e.into()))?,
    )
}

#[pymodule]
#[pyo3(name = "nanores")]
fn nanores_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyReservoir>()?;
    m.add_class::<PyClassifier>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(py_standardize, m)?)?;
    m.add_function(wrap_pyfunction!(py_subsample, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(rates, m)?)?;
    m.add_function(wrap_pyfunction!(manifest, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
