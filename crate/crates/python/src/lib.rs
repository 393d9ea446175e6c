//! Python bindings for the simulator core.
//!
//! ```python
//! import lmeec
//! cfg = lmeec.Config()
//! cfg.set("sim.duration=100")
//! m = lmeec.run(100, seed=1, protocol="lmeec", config=cfg)
//! print(m["avg_dissipated_per_node"], m["lifetime_fnd"])
//! ```

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use lmeec_core::energy;
use lmeec_core::engine::{self, Protocol};
use lmeec_core::experiment;
use lmeec_core::leach;
use lmeec_core::lmeec::{self as proto, NodeProtocolState, Role};
use lmeec_core::topology::{self, NetworkTopology, NodeId};
use lmeec_core::{Error, RunConfig};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config { .. }
        | Error::Parse(_)
        | Error::NegativeDebit(_)
        | Error::Unlayered
        | Error::SingletonCluster => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn cfg_or_default(config: Option<&Config>) -> RunConfig {
    config.map(|c| c.inner.clone()).unwrap_or_default()
}

/// Full run configuration. Mutate it with dotted overrides.
#[pyclass(module = "lmeec")]
#[derive(Default)]
struct Config {
    inner: RunConfig,
}

#[pymethods]
impl Config {
    #[new]
    fn new() -> Self {
        Self::default()
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let inner = RunConfig::from_toml_str(text).map_err(to_py)?;
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    /// Apply `section.key=value`.
    fn set(&mut self, assignment: &str) -> PyResult<()> {
        self.inner.apply_override(assignment).map_err(to_py)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(node_counts={:?}, seeds={:?}, threshold_base={})",
            self.inner.experiment.node_counts, self.inner.experiment.seeds, self.inner.lmeec.threshold_base
        )
    }
}

/// A deployed field with its unit-disk graph.
#[pyclass(module = "lmeec")]
struct Topology {
    inner: NetworkTopology,
}

#[pymethods]
impl Topology {
    #[staticmethod]
    #[pyo3(signature = (n, seed, config=None))]
    fn deploy(n: usize, seed: u64, config: Option<&Config>) -> PyResult<Self> {
        let cfg = cfg_or_default(config);
        let inner = NetworkTopology::deploy(n, &cfg.topology, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn positions(&self) -> Vec<(f64, f64)> {
        self.inner.positions.iter().map(|p| (p.x, p.y)).collect()
    }

    #[getter]
    fn base_station(&self) -> (f64, f64) {
        (self.inner.base_station.x, self.inner.base_station.y)
    }

    fn neighbors(&self, node: usize) -> PyResult<Vec<usize>> {
        self.check(node)?;
        Ok(self.inner.neighbors(NodeId(node)).iter().map(|n| n.0).collect())
    }

    fn distance_to_bs(&self, node: usize) -> PyResult<f64> {
        self.check(node)?;
        Ok(self.inner.distance_to_bs(NodeId(node)))
    }

    /// Hop layer per node, `None` where the base station is unreachable.
    fn layers(&self) -> Vec<Option<u32>> {
        topology::assign_layers(&self.inner).as_slice().to_vec()
    }
}

impl Topology {
    fn check(&self, node: usize) -> PyResult<()> {
        if node < self.inner.len() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!("node {node} out of range")))
        }
    }
}

#[pyfunction]
#[pyo3(signature = (bits, distance, config=None))]
fn tx_cost(bits: u64, distance: f64, config: Option<&Config>) -> f64 {
    energy::tx_cost(bits, distance, &cfg_or_default(config).radio)
}

#[pyfunction]
#[pyo3(signature = (bits, config=None))]
fn rx_cost(bits: u64, config: Option<&Config>) -> f64 {
    energy::rx_cost(bits, &cfg_or_default(config).radio)
}

#[pyfunction]
#[pyo3(signature = (bits, config=None))]
fn aggregate_cost(bits: u64, config: Option<&Config>) -> f64 {
    energy::aggregate_cost(bits, &cfg_or_default(config).radio)
}

#[pyfunction]
#[pyo3(signature = (layer, degree, num_ch, e_res, e_total, n_total, config=None))]
fn election_weight(
    layer: u32,
    degree: usize,
    num_ch: u32,
    e_res: f64,
    e_total: f64,
    n_total: usize,
    config: Option<&Config>,
) -> PyResult<f64> {
    let state = NodeProtocolState {
        node: NodeId(0),
        layer,
        degree,
        num_ch,
        role: Role::Member,
    };
    proto::compute_election_weight(&state, e_res, e_total, n_total, &cfg_or_default(config).lmeec).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (layer, config=None))]
fn election_threshold(layer: u32, config: Option<&Config>) -> PyResult<f64> {
    if layer == 0 {
        return Err(to_py(Error::Unlayered));
    }
    Ok(proto::election_threshold(layer, &cfg_or_default(config).lmeec))
}

#[pyfunction]
fn announcement_weight(e_res: f64, degree: usize, layer: u32) -> PyResult<f64> {
    proto::compute_announcement_weight(e_res, degree, layer).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (p, round, eligible=true))]
fn leach_threshold(p: f64, round: u64, eligible: bool) -> f64 {
    leach::leach_threshold(p, round, eligible)
}

/// One simulation; returns the metrics record as a dict.
#[pyfunction]
#[pyo3(signature = (n, seed, protocol="lmeec", config=None))]
fn run<'py>(
    py: Python<'py>,
    n: usize,
    seed: u64,
    protocol: &str,
    config: Option<&Config>,
) -> PyResult<Bound<'py, PyAny>> {
    let protocol: Protocol = protocol.parse().map_err(to_py)?;
    let sim = cfg_or_default(config).sim_config(n, seed, protocol);
    let out = engine::run(&sim).map_err(to_py)?;
    json_to_py(py, &out.metrics)
}

/// The full sweep; returns `runs.csv` text and the summary rows.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn sweep<'py>(py: Python<'py>, config: Option<&Config>) -> PyResult<(String, Bound<'py, PyAny>)> {
    let cfg = cfg_or_default(config);
    let (records, failures) = experiment::execute(&cfg).map_err(to_py)?;
    if let Some(f) = failures.first() {
        return Err(PyRuntimeError::new_err(format!(
            "{} run(s) failed; first: {} n={} seed={}: {}",
            failures.len(),
            f.key.protocol,
            f.key.n,
            f.key.seed,
            f.error
        )));
    }
    let csv = experiment::runs_csv(&records).map_err(to_py)?;
    let summary = lmeec_core::metrics::summarize(&records).map_err(to_py)?;
    Ok((csv, json_to_py(py, &summary)?))
}

#[pyfunction]
#[pyo3(signature = (target, n=100, trials=20, config=None))]
fn calibrate<'py>(
    py: Python<'py>,
    target: f64,
    n: usize,
    trials: usize,
    config: Option<&Config>,
) -> PyResult<Bound<'py, PyAny>> {
    let c = experiment::calibrate_threshold(&cfg_or_default(config), target, n, trials).map_err(to_py)?;
    json_to_py(py, &c)
}

#[pymodule]
fn lmeec(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Config>()?;
    m.add_class::<Topology>()?;
    m.add_function(wrap_pyfunction!(tx_cost, m)?)?;
    m.add_function(wrap_pyfunction!(rx_cost, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_cost, m)?)?;
    m.add_function(wrap_pyfunction!(election_weight, m)?)?;
    m.add_function(wrap_pyfunction!(election_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(announcement_weight, m)?)?;
    m.add_function(wrap_pyfunction!(leach_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    Ok(())
}
