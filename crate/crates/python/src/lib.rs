// SPDX-License-Identifier: MIT OR Apache-2.0

//! Python bindings: Intel Hex parsing, message framing, throttle ladder,
//! channel and model formulas, and the transfer simulator.

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use wisent::channel;
use wisent::config::ScenarioConfig;
use wisent::fixture;
use wisent::host::{HostConfig, PayloadMode, Variant};
use wisent::ihex;
use wisent::metrics::{compute_metrics, SessionMetrics};
use wisent::model;
use wisent::protocol;
use wisent::scenario;
use wisent::sim::{self, DistanceProfile, SimParams};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Parsed Intel Hex content: one row per data record.
#[pyclass(name = "RecordMatrix", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyRecordMatrix {
    inner: ihex::RecordMatrix,
}

#[pymethods]
impl PyRecordMatrix {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        ihex::parse_file(text).map(|inner| Self { inner }).map_err(value_err)
    }

    #[staticmethod]
    fn firmware() -> Self {
        Self {
            inner: fixture::firmware(),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (bytes, row_len = 32, seed = 1))]
    fn random(bytes: usize, row_len: usize, seed: u64) -> PyResult<Self> {
        if bytes == 0 || row_len == 0 || row_len > 255 || bytes > 0xBC00 {
            return Err(PyValueError::new_err("need 0 < row_len <= 255 and 0 < bytes <= 48128"));
        }
        Ok(Self {
            inner: fixture::random_image(bytes, row_len, seed),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn total_bytes(&self) -> usize {
        self.inner.total_bytes()
    }

    /// `(address, data)` pairs in file order.
    fn rows<'py>(&self, py: Python<'py>) -> Vec<(u16, Bound<'py, PyBytes>)> {
        self.inner
            .rows()
            .iter()
            .map(|r| (r.address, PyBytes::new(py, &r.data)))
            .collect()
    }

    fn image(&self) -> Vec<(u16, u8)> {
        self.inner.image()
    }

    fn to_hex(&self) -> String {
        self.inner.to_hex_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "RecordMatrix(rows={}, bytes={})",
            self.inner.len(),
            self.inner.total_bytes()
        )
    }
}

#[pyfunction]
fn record_checksum(bytes: &[u8]) -> u8 {
    ihex::record_checksum(bytes)
}

#[pyfunction]
fn ex_checksum(bytes: &[u8]) -> u8 {
    protocol::ex_checksum(bytes)
}

#[pyfunction]
fn crc16(bytes: &[u8]) -> u16 {
    wisent::crc16::crc16(bytes)
}

/// Wisent Basic words for one record.
#[pyfunction]
fn basic_messages(address: u16, data: Vec<u8>) -> PyResult<Vec<u16>> {
    let row = ihex::Row::new(address, data);
    protocol::build_basic_messages(&row)
        .map(|ms| ms.into_iter().map(|m| m.word()).collect())
        .map_err(value_err)
}

/// Wisent EX words for one chunk.
#[pyfunction]
#[pyo3(signature = (address, data, s_max = protocol::DEFAULT_S_MAX))]
fn ex_message(address: u16, data: Vec<u8>, s_max: usize) -> PyResult<Vec<u16>> {
    let chunk = ihex::Chunk { address, data };
    protocol::build_ex_message(&chunk, s_max)
        .map(|m| m.to_words())
        .map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (s_r, s_max = protocol::DEFAULT_S_MAX))]
fn build_ladder(s_r: usize, s_max: usize) -> Vec<usize> {
    protocol::build_ladder(s_r, s_max).values().to_vec()
}

#[pyfunction]
fn derive_r_max(ladder_len: usize, t_de: i32) -> u32 {
    protocol::derive_r_max(ladder_len, t_de)
}

#[pyfunction]
fn bit_error_rate(d: f64) -> PyResult<f64> {
    channel::bit_error_rate(d).map_err(value_err)
}

#[pyfunction]
fn blockwrite_throughput(bits: u32, d: f64) -> PyResult<f64> {
    channel::blockwrite_throughput(bits, d).map_err(value_err)
}

/// Fitted model values `(psi_t, eta, psi_s, theta)` at a tabulated distance.
#[pyfunction]
fn model_curves(distance_cm: f64, words: f64) -> PyResult<(f64, f64, f64, f64)> {
    let p = model::params_for(distance_cm).map_err(value_err)?;
    let v = model::model_curves(p, words).map_err(value_err)?;
    Ok((v.psi_t, v.eta, v.psi_s, v.theta))
}

fn metrics_dict<'py>(py: Python<'py>, m: &SessionMetrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("n_s", m.n_s)?;
    d.set_item("n_t", m.n_t)?;
    d.set_item("t", m.t)?;
    d.set_item("psi_s", m.psi_s)?;
    d.set_item("psi_t", m.psi_t)?;
    d.set_item("eta", m.eta)?;
    d.set_item("theta", m.theta)?;
    d.set_item("m_t", m.m_t)?;
    d.set_item("m_r", m.m_r)?;
    d.set_item("m_s", m.m_s)?;
    d.set_item("v", m.v)?;
    d.set_item("p_r", m.p_r)?;
    d.set_item("mean_s_p", m.mean_s_p)?;
    Ok(d)
}

/// Outcome of one simulated transfer.
#[pyclass(name = "SessionResult", frozen)]
struct PySessionResult {
    inner: sim::SessionResult,
    rounds_per_sec: f64,
}

#[pymethods]
impl PySessionResult {
    #[getter]
    fn completed(&self) -> bool {
        self.inner.completed()
    }

    #[getter]
    fn rounds(&self) -> u64 {
        self.inner.rounds
    }

    #[getter]
    fn seconds(&self) -> f64 {
        self.inner.seconds(self.rounds_per_sec)
    }

    #[getter]
    fn application_valid(&self) -> bool {
        self.inner.tag.application_valid()
    }

    fn log_csv(&self) -> String {
        self.inner.log.to_csv()
    }

    fn fram<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.inner.tag.fram().as_bytes())
    }

    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let m = compute_metrics(&self.inner.log, self.inner.rounds, self.rounds_per_sec).map_err(value_err)?;
        metrics_dict(py, &m)
    }

    fn __repr__(&self) -> String {
        format!(
            "SessionResult(completed={}, seconds={:.2})",
            self.inner.completed(),
            self.inner.seconds(self.rounds_per_sec)
        )
    }
}

fn payload_mode(payload: &Bound<'_, PyAny>) -> PyResult<PayloadMode> {
    if let Ok(words) = payload.extract::<usize>() {
        return Ok(PayloadMode::Fixed(words));
    }
    match payload.extract::<String>()?.as_str() {
        "throttle" => Ok(PayloadMode::Throttle),
        other => Err(PyValueError::new_err(format!(
            "payload must be an int or 'throttle', got '{other}'"
        ))),
    }
}

/// Transfer `matrix` to a fresh simulated tag.
#[pyfunction]
#[pyo3(signature = (matrix, *, variant = "ex", payload = None, distance_cm = 20.0, oscillate_to_cm = None, speed = 0.1, bootloader = false, brownout = None, seed = 1))]
#[allow(clippy::too_many_arguments)]
fn run_session(
    py: Python<'_>,
    matrix: &PyRecordMatrix,
    variant: &str,
    payload: Option<&Bound<'_, PyAny>>,
    distance_cm: f64,
    oscillate_to_cm: Option<f64>,
    speed: f64,
    bootloader: bool,
    brownout: Option<f64>,
    seed: u64,
) -> PyResult<PySessionResult> {
    let variant = match variant {
        "ex" => Variant::Ex,
        "basic" => Variant::Basic,
        other => return Err(PyValueError::new_err(format!("unknown variant '{other}'"))),
    };
    let payload = payload.map(payload_mode).transpose()?.unwrap_or(PayloadMode::Throttle);
    let config = HostConfig {
        variant,
        payload,
        bootloader,
        ..Default::default()
    };
    let profile = match oscillate_to_cm {
        None => DistanceProfile::Static { d_cm: distance_cm },
        Some(max_cm) => DistanceProfile::Oscillate {
            min_cm: distance_cm,
            max_cm,
            speed,
        },
    };
    let mut params = SimParams::default();
    params.power.brownout = brownout;
    let matrix = matrix.inner.clone();
    let inner = py
        .detach(|| sim::run_session(config, matrix, &params, profile, seed))
        .map_err(value_err)?;
    Ok(PySessionResult {
        inner,
        rounds_per_sec: params.rounds_per_sec,
    })
}

/// Run a scenario config file; returns the summary CSV and the exit code.
#[pyfunction]
#[pyo3(signature = (config, out = None, seed = None))]
fn simulate(py: Python<'_>, config: PathBuf, out: Option<PathBuf>, seed: Option<u64>) -> PyResult<(String, i32)> {
    let mut cfg = ScenarioConfig::from_file(&config).map_err(|e| PyIOError::new_err(e.to_string()))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let report = py
        .detach(|| scenario::run_scenario(&cfg, out.as_deref().map(Path::new)))
        .map_err(|e| PyIOError::new_err(e.to_string()))?;
    Ok((
        scenario::summary_csv(&report, cfg.sim.rounds_per_sec),
        report.exit_code(),
    ))
}

#[pymodule]
fn pywisent(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRecordMatrix>()?;
    m.add_class::<PySessionResult>()?;
    m.add_function(wrap_pyfunction!(record_checksum, m)?)?;
    m.add_function(wrap_pyfunction!(ex_checksum, m)?)?;
    m.add_function(wrap_pyfunction!(crc16, m)?)?;
    m.add_function(wrap_pyfunction!(basic_messages, m)?)?;
    m.add_function(wrap_pyfunction!(ex_message, m)?)?;
    m.add_function(wrap_pyfunction!(build_ladder, m)?)?;
    m.add_function(wrap_pyfunction!(derive_r_max, m)?)?;
    m.add_function(wrap_pyfunction!(bit_error_rate, m)?)?;
    m.add_function(wrap_pyfunction!(blockwrite_throughput, m)?)?;
    m.add_function(wrap_pyfunction!(model_curves, m)?)?;
    m.add_function(wrap_pyfunction!(run_session, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
