//! Python bindings for the monitoring simulator: config generation, full
//! runs, parameter sweeps, and direct access to the dwell and transit-time
//! solvers for scripting and analysis.
//!
//! Build the cdylib with `cargo build -p patrol-py`, then import the shared
//! library as `patrol_py` (see `python/smoke_test.py` for the loader dance).

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;

use patrol_core::sensing::{self, NeighborTarget, NeighborhoodSnapshot};
use patrol_core::simulator::{self, SimConfig, Topology};
use patrol_core::transit::{self, TransitPlan, ValueCurve};
use patrol_core::{targets, Error};

fn to_py_err(e: Error) -> PyErr {
    match &e {
        Error::Config(_) | Error::Json(_) | Error::Domain(_) => {
            PyValueError::new_err(e.to_string())
        }
        Error::Infeasible(_) | Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Recursively convert a JSON value into the matching Python object.
fn json_to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    match v {
        serde_json::Value::Null => Ok(py.None()),
        serde_json::Value::Bool(b) => b.into_py_any(py),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_py_any(py)
            } else if let Some(u) = n.as_u64() {
                u.into_py_any(py)
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_py_any(py)
            }
        }
        serde_json::Value::String(s) => s.into_py_any(py),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_py_any(py)
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, val) in map {
                dict.set_item(k, json_to_py(py, val)?)?;
            }
            dict.into_py_any(py)
        }
    }
}

fn serialize_to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let v = serde_json::to_value(value)
        .map_err(|e| PyRuntimeError::new_err(format!("serialize: {e}")))?;
    json_to_py(py, &v)
}

fn parse_config(config_json: &str) -> PyResult<SimConfig> {
    let cfg: SimConfig = serde_json::from_str(config_json)
        .map_err(|e| PyValueError::new_err(format!("invalid config: {e}")))?;
    cfg.validate().map_err(to_py_err)?;
    Ok(cfg)
}

/// Generate a canonical-form network config as a JSON string.
#[pyfunction]
#[pyo3(signature = (topology, targets, agents, seed = 0, bbox = (600.0, 600.0)))]
fn generate_config(
    topology: &str,
    targets: usize,
    agents: usize,
    seed: u64,
    bbox: (f64, f64),
) -> PyResult<String> {
    let topology: Topology = topology.parse().map_err(to_py_err)?;
    let cfg = simulator::generate_config(topology, targets, agents, seed, [bbox.0, bbox.1])
        .map_err(to_py_err)?;
    cfg.canonical_json().map_err(to_py_err)
}

/// Re-emit a config in canonical form (sorted keys, explicit defaults).
#[pyfunction]
fn canonical_json(config_json: &str) -> PyResult<String> {
    parse_config(config_json)?.canonical_json().map_err(to_py_err)
}

/// Content hash of a config's canonical form (16 hex digits).
#[pyfunction]
fn config_hash(config_json: &str) -> PyResult<String> {
    parse_config(config_json)?.config_hash().map_err(to_py_err)
}

/// Run one simulation from a config JSON string.
///
/// Returns a dict with `metrics` (j_t, j_e, j_s, v_max, u_max, visits,
/// agent_energy, event_count, solve_count), the event count under `events`,
/// `first_departure` diagnostics, the FO calibration when one was computed,
/// the sampled `timeseries` when the config asks for one, and `config_hash`.
#[pyfunction]
fn run(py: Python<'_>, config_json: &str) -> PyResult<Py<PyAny>> {
    let cfg = parse_config(config_json)?;
    let out = simulator::run(&cfg).map_err(to_py_err)?;
    let dict = PyDict::new(py);
    dict.set_item("config_hash", cfg.config_hash().map_err(to_py_err)?)?;
    dict.set_item("metrics", serialize_to_py(py, &out.metrics)?)?;
    dict.set_item("events", out.log.len())?;
    dict.set_item("first_departure", serialize_to_py(py, &out.first_departure)?)?;
    dict.set_item("calibration", serialize_to_py(py, &out.calibration)?)?;
    dict.set_item("timeseries", serialize_to_py(py, &out.timeseries)?)?;
    dict.into_py_any(py)
}

/// Sweep one parameter over explicit values; returns a list of dicts with
/// `value`, `metrics`, and first-departure `diag` per point.
#[pyfunction]
fn sweep(py: Python<'_>, config_json: &str, param: &str, values: Vec<f64>) -> PyResult<Py<PyAny>> {
    let cfg = parse_config(config_json)?;
    let rows = simulator::sweep(&cfg, param, &values).map_err(to_py_err)?;
    serialize_to_py(py, &rows)
}

fn build_snapshot(
    members: Vec<(usize, f64, f64, f64)>,
    current: usize,
    horizon: f64,
    t_s: f64,
) -> PyResult<NeighborhoodSnapshot> {
    let snap = NeighborhoodSnapshot {
        t_s,
        current,
        members: members
            .into_iter()
            .map(|(id, a, b, r)| NeighborTarget { id, a, b, r })
            .collect(),
        horizon,
    };
    snap.validate().map_err(to_py_err)?;
    Ok(snap)
}

/// Departure-readiness dwell solve at the current target: members are
/// `(id, a, b, r)` tuples forming the closed neighborhood, `j` is the
/// candidate next target, `rho` the transit time to it.
#[pyfunction]
#[pyo3(signature = (members, current, j, rho, horizon, t_s = 0.0))]
fn rhcp3_dwell(
    py: Python<'_>,
    members: Vec<(usize, f64, f64, f64)>,
    current: usize,
    j: usize,
    rho: f64,
    horizon: f64,
    t_s: f64,
) -> PyResult<Py<PyAny>> {
    let snap = build_snapshot(members, current, horizon, t_s)?;
    let sol = sensing::rhcp3_dwell(&snap, j, rho).map_err(to_py_err)?;
    serialize_to_py(py, &sol)
}

/// Arrival dwell solve (fresh uncertainty at the current target).
#[pyfunction]
#[pyo3(signature = (members, current, j, rho, horizon, t_s = 0.0))]
fn rhcp1_dwell(
    py: Python<'_>,
    members: Vec<(usize, f64, f64, f64)>,
    current: usize,
    j: usize,
    rho: f64,
    horizon: f64,
    t_s: f64,
) -> PyResult<Py<PyAny>> {
    let snap = build_snapshot(members, current, horizon, t_s)?;
    let sol = sensing::rhcp1_dwell(&snap, j, rho).map_err(to_py_err)?;
    serialize_to_py(py, &sol)
}

/// Arrival dwell solve with the current target already clean (its active
/// dwell pinned to zero).
#[pyfunction]
#[pyo3(signature = (members, current, j, rho, horizon, t_s = 0.0))]
fn rhcp2_dwell(
    py: Python<'_>,
    members: Vec<(usize, f64, f64, f64)>,
    current: usize,
    j: usize,
    rho: f64,
    horizon: f64,
    t_s: f64,
) -> PyResult<Py<PyAny>> {
    let snap = build_snapshot(members, current, horizon, t_s)?;
    let sol = sensing::rhcp2_dwell(&snap, j, rho).map_err(to_py_err)?;
    serialize_to_py(py, &sol)
}

/// Affine stand-in for the sensing value curve, for direct transversality
/// checks: J*_sH(ρ) = intercept + slope·ρ.
struct AffineCurve {
    slope: f64,
    intercept: f64,
    horizon: f64,
}

impl ValueCurve for AffineCurve {
    fn horizon(&self) -> f64 {
        self.horizon
    }
    fn pieces(&self) -> Vec<(f64, f64)> {
        vec![(0.0, self.horizon)]
    }
    fn value(&self, rho: f64) -> patrol_core::Result<f64> {
        Ok(self.intercept + self.slope * rho)
    }
    fn derivative(&self, _rho: f64) -> patrol_core::Result<f64> {
        Ok(self.slope)
    }
}

fn transit_time_py(
    py: Python<'_>,
    tt: transit::TransitTime,
) -> PyResult<Py<PyAny>> {
    let dict = PyDict::new(py);
    dict.set_item("rho", tt.rho)?;
    dict.set_item("boundary", tt.boundary)?;
    dict.set_item("residual", tt.residual)?;
    dict.into_py_any(py)
}

/// Optimal energy-aware transit time against an affine value curve
/// J*_sH(ρ) = intercept + slope·ρ: an interior root solves
/// ρ⁴·slope = 36·alpha·y². Returns {rho, boundary, residual}.
#[pyfunction]
#[pyo3(signature = (alpha, y, slope, intercept = 0.0, horizon = 1e6))]
fn so_transit_time_affine(
    py: Python<'_>,
    alpha: f64,
    y: f64,
    slope: f64,
    intercept: f64,
    horizon: f64,
) -> PyResult<Py<PyAny>> {
    let curve = AffineCurve {
        slope,
        intercept,
        horizon,
    };
    let tt = transit::so_transit_time(&curve, alpha, y, horizon).map_err(to_py_err)?;
    transit_time_py(py, tt)
}

/// First-order counterpart of `so_transit_time_affine`: an interior root
/// solves ρ⁴·slope = 40.5·alpha·y².
#[pyfunction]
#[pyo3(signature = (alpha, y, slope, intercept = 0.0, horizon = 1e6))]
fn fo3_transit_time_affine(
    py: Python<'_>,
    alpha: f64,
    y: f64,
    slope: f64,
    intercept: f64,
    horizon: f64,
) -> PyResult<Py<PyAny>> {
    let curve = AffineCurve {
        slope,
        intercept,
        horizon,
    };
    let tt = transit::fo3_transit_time(&curve, alpha, y, horizon).map_err(to_py_err)?;
    transit_time_py(py, tt)
}

fn plan_to_py(py: Python<'_>, plan: &TransitPlan) -> PyResult<Py<PyAny>> {
    let dict = PyDict::new(py);
    dict.set_item("rho", plan.rho)?;
    dict.set_item("t_o", plan.t_o)?;
    dict.set_item("t_f", plan.t_f)?;
    dict.set_item("y", plan.y)?;
    dict.set_item("energy", plan.energy)?;
    dict.set_item("v_peak", plan.v_peak)?;
    dict.set_item("u_peak", plan.u_peak)?;
    dict.into_py_any(py)
}

/// Minimum-energy second-order transit plan for a fixed transit time:
/// parabolic velocity pulse with E = 12y²/ρ³.
#[pyfunction]
#[pyo3(signature = (rho, y, t_o = 0.0))]
fn so_profile(py: Python<'_>, rho: f64, y: f64, t_o: f64) -> PyResult<Py<PyAny>> {
    plan_to_py(py, &transit::so_profile(rho, y, t_o))
}

/// Optimal-split first-order transit plan for a fixed transit time:
/// ramp–cruise–ramp with E = 13.5y²/ρ³.
#[pyfunction]
#[pyo3(signature = (rho, y, t_o = 0.0))]
fn fo3_profile(py: Python<'_>, rho: f64, y: f64, t_o: f64) -> PyResult<Py<PyAny>> {
    plan_to_py(py, &transit::fo3_profile(rho, y, t_o))
}

/// Energy weight that spends fraction `beta` of the combined cost on energy
/// for a reference hop of length `y_ref` at peak velocity `v_max`.
#[pyfunction]
fn alpha_from_budget(beta: f64, y_ref: f64, v_max: f64) -> PyResult<f64> {
    simulator::alpha_from_budget(beta, y_ref, v_max).map_err(to_py_err)
}

/// Energy weight pinned to a peak-acceleration budget.
#[pyfunction]
fn alpha_from_accel(beta: f64, u_max: f64) -> PyResult<f64> {
    simulator::alpha_from_accel(beta, u_max).map_err(to_py_err)
}

/// Exact integral of a linear uncertainty trajectory over an event-free
/// interval: R(0) = r0 evolving at `slope` for `dt`.
#[pyfunction]
fn interval_cost(r0: f64, slope: f64, dt: f64) -> f64 {
    targets::interval_cost(r0, slope, dt)
}

#[pymodule]
fn patrol_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DEFAULT_ALPHA", simulator::DEFAULT_ALPHA)?;
    m.add_function(wrap_pyfunction!(generate_config, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_json, m)?)?;
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(rhcp1_dwell, m)?)?;
    m.add_function(wrap_pyfunction!(rhcp2_dwell, m)?)?;
    m.add_function(wrap_pyfunction!(rhcp3_dwell, m)?)?;
    m.add_function(wrap_pyfunction!(so_transit_time_affine, m)?)?;
    m.add_function(wrap_pyfunction!(fo3_transit_time_affine, m)?)?;
    m.add_function(wrap_pyfunction!(so_profile, m)?)?;
    m.add_function(wrap_pyfunction!(fo3_profile, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_from_budget, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_from_accel, m)?)?;
    m.add_function(wrap_pyfunction!(interval_cost, m)?)?;
    Ok(())
}
