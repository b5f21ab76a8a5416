//! Python bindings for the grald workbench.
//!
//! Every function speaks JSON strings on the wire — the same formats the
//! `grald` binary reads and writes — so results can be inspected with
//! `json.loads` and states can be built by any tool that emits the state
//! wire format.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use grald::definetti::{self, MixtureModel};
use grald::graded::GradedSpace;
use grald::linalg::{ComplexMatrix, ToleranceConfig};
use grald::states::StateFunctional;
use grald::suites::{self, RunParams, RunSpec, SuiteKind};

fn err(e: grald::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn tolerances(tol_eq: f64, tol_rank: f64) -> ToleranceConfig {
    ToleranceConfig {
        eq_tol: tol_eq,
        rank_tol: tol_rank,
        ..ToleranceConfig::default()
    }
}

/// Crate version of the underlying workbench.
#[pyfunction]
fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Run a named verification suite and return the JSON report.
///
/// `suite` is one of car, twist, commutant, symmetry, definetti, classify,
/// all. The report carries one entry per check with the observed value, the
/// bound, and the verdict; `all_passed` summarizes the run.
#[pyfunction]
#[pyo3(signature = (suite, sites=8, dims=vec![2, 4], trials=100, seed=0, tol_eq=1e-10, tol_rank=1e-8))]
fn run_suite(
    suite: &str,
    sites: usize,
    dims: Vec<usize>,
    trials: usize,
    seed: u64,
    tol_eq: f64,
    tol_rank: f64,
) -> PyResult<String> {
    let kind: SuiteKind = suite.parse().map_err(err)?;
    let spec = RunSpec {
        suite: kind,
        params: RunParams {
            sites,
            dims,
            trials,
            seed,
        },
        tolerances: tolerances(tol_eq, tol_rank),
        state: None,
        max_components: 4,
    };
    let report = suites::run(&spec).map_err(err)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Decompose a permutation-invariant even state (state wire JSON, qubit
/// factors) into a mixture of product states. Returns the mixture model as
/// JSON: weights, component states, and the achieved residual.
#[pyfunction]
#[pyo3(signature = (state_json, sites, max_components=4, seed=0))]
fn decompose_state(
    state_json: &str,
    sites: usize,
    max_components: usize,
    seed: u64,
) -> PyResult<String> {
    let wire = serde_json::from_str(state_json)
        .map_err(|e| PyValueError::new_err(format!("malformed state: {e}")))?;
    let spec = RunSpec {
        suite: SuiteKind::Definetti,
        params: RunParams {
            sites,
            dims: vec![2],
            trials: 1,
            seed,
        },
        tolerances: ToleranceConfig::default(),
        state: Some(wire),
        max_components,
    };
    let report = suites::run(&spec).map_err(err)?;
    let model = report
        .model
        .ok_or_else(|| PyValueError::new_err("no model recovered"))?;
    serde_json::to_string(&model).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Classify the infinite-product factor type of a single-site even state
/// (state wire JSON on the graded qubit). Returns one of
/// "I_1", "I_inf", "II_1", "II_inf", "III".
#[pyfunction]
fn classify_state(state_json: &str) -> PyResult<String> {
    let wire = serde_json::from_str(state_json)
        .map_err(|e| PyValueError::new_err(format!("malformed state: {e}")))?;
    let spec = RunSpec {
        suite: SuiteKind::Classify,
        params: RunParams::default(),
        tolerances: ToleranceConfig::default(),
        state: Some(wire),
        max_components: 4,
    };
    let report = suites::run(&spec).map_err(err)?;
    let label = report
        .classification
        .ok_or_else(|| PyValueError::new_err("no classification produced"))?;
    match serde_json::to_value(label) {
        Ok(serde_json::Value::String(s)) => Ok(s),
        _ => Err(PyValueError::new_err("label did not serialize to a string")),
    }
}

/// State wire JSON of a single-site state with the given diagonal density
/// on the graded qubit (entries must be nonnegative and sum to 1).
#[pyfunction]
fn single_site_state(diag: Vec<f64>) -> PyResult<String> {
    if diag.len() != 2 {
        return Err(PyValueError::new_err("expected two diagonal entries"));
    }
    let tol = ToleranceConfig::default();
    let f = StateFunctional::on_full(
        &GradedSpace::qubit(),
        format!("diag:{},{}", diag[0], diag[1]),
        ComplexMatrix::diag(&diag),
        &tol,
    )
    .map_err(err)?;
    serde_json::to_string(&f.to_wire()).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// State wire JSON of the `sites`-fold mixture
/// `weight * (diag(p, 1-p))^x sites + (1-weight) * (diag(q, 1-q))^x sites`
/// on qubit factors — a convenient decomposition target.
#[pyfunction]
#[pyo3(signature = (p, q, weight=0.5, sites=3))]
fn planted_mixture_state(p: f64, q: f64, weight: f64, sites: usize) -> PyResult<String> {
    let tol = ToleranceConfig::default();
    let qubit = GradedSpace::qubit();
    let comp = |x: f64| -> PyResult<StateFunctional> {
        StateFunctional::on_full(
            &qubit,
            format!("diag:{x}"),
            ComplexMatrix::diag(&[x, 1.0 - x]),
            &tol,
        )
        .map_err(err)
    };
    let model = MixtureModel::new(vec![weight, 1.0 - weight], vec![comp(p)?, comp(q)?], sites)
        .map_err(err)?;
    let mix = definetti::mixture_state(&model, &tol).map_err(err)?;
    serde_json::to_string(&mix.to_wire()).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn grald_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(version, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    m.add_function(wrap_pyfunction!(decompose_state, m)?)?;
    m.add_function(wrap_pyfunction!(classify_state, m)?)?;
    m.add_function(wrap_pyfunction!(single_site_state, m)?)?;
    m.add_function(wrap_pyfunction!(planted_mixture_state, m)?)?;
    Ok(())
}
