//! Python bindings: mode sets, model parameters and the main analyses.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

use spinboson::eigen::{eigensolve_with, EigenOptions};
use spinboson::fock::enumerate_basis;
use spinboson::harness::{self, HarnessError};
use spinboson::model::{build_bundle, build_fiber, decompose};
use spinboson::onebody::{self, validate_hypotheses, CouplingFamily, Mode, ModeTag};
use spinboson::pullthrough::pull_through_residual;
use spinboson::spectra::{ground_state_analysis, hvz_threshold_diagnostic, AnalysisConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn harness_err(e: HarnessError) -> PyErr {
    match e.exit_code() {
        1 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(f)) => f.into_pyobject(py)?.into_any(),
            _ => py.None().into_bound(py),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => {
            let items = a.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn report<'py>(py: Python<'py>, r: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(r).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &v)
}

/// Boson modes: energies, quadrature weights and discrete/essential tags.
#[pyclass(name = "ModeSet", from_py_object)]
#[derive(Clone)]
struct PyModeSet {
    inner: onebody::ModeSet,
}

#[pymethods]
impl PyModeSet {
    #[new]
    #[pyo3(signature = (energies, weights=None, tags=None))]
    fn new(energies: Vec<f64>, weights: Option<Vec<f64>>, tags: Option<Vec<String>>) -> PyResult<Self> {
        let n = energies.len();
        let weights = weights.unwrap_or_else(|| vec![1.0; n]);
        let tags = tags.unwrap_or_else(|| vec!["discrete".into(); n]);
        if weights.len() != n || tags.len() != n {
            return Err(PyValueError::new_err("energies, weights and tags must have equal length"));
        }
        let modes = energies
            .iter()
            .zip(&weights)
            .zip(&tags)
            .map(|((&e, &w), t)| {
                let tag = match t.as_str() {
                    "discrete" => ModeTag::Discrete,
                    "essential" => ModeTag::Essential,
                    other => return Err(PyValueError::new_err(format!("unknown tag '{other}'"))),
                };
                Ok(Mode::new(e, w, tag))
            })
            .collect::<PyResult<Vec<_>>>()?;
        Ok(Self {
            inner: onebody::ModeSet::new(modes, "python").map_err(value_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn energies(&self) -> Vec<f64> {
        self.inner.energies()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights()
    }

    /// `(m, m_ess)`; `m_ess` is infinite without essential modes.
    fn masses(&self) -> (f64, f64) {
        onebody::masses(&self.inner)
    }
}

/// Spin-boson model: `eta`, coefficients `alpha_1..alpha_2n` and coupling
/// vectors `f_1..f_2n` over a mode set.
#[pyclass(name = "ModelParams", from_py_object)]
#[derive(Clone)]
struct PyModelParams {
    inner: onebody::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    fn new(eta: f64, alpha: Vec<f64>, couplings: Vec<Vec<Complex64>>, modes: &PyModeSet) -> PyResult<Self> {
        if alpha.len() % 2 != 0 || alpha.is_empty() {
            return Err(PyValueError::new_err("alpha must have length 2n"));
        }
        let coupling = CouplingFamily::new(alpha.len() / 2, couplings).map_err(value_err)?;
        Ok(Self {
            inner: onebody::ModelParams::new(eta, alpha, coupling, modes.inner.clone()).map_err(value_err)?,
        })
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.inner.alpha().to_vec()
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    fn with_eta(&self, eta: f64) -> Self {
        Self {
            inner: self.inner.with_eta(eta),
        }
    }

    fn hypotheses<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        report(py, &validate_hypotheses(&self.inner))
    }
}

fn analysis(n_max: usize, tol: Option<f64>) -> AnalysisConfig {
    let cfg = AnalysisConfig::new(n_max);
    match tol {
        Some(t) => cfg.with_eigen(EigenOptions::with_tol(t)),
        None => cfg,
    }
}

/// Ground-state report of the full operator and both fibers.
#[pyfunction]
#[pyo3(signature = (params, n_max, tol=None))]
fn ground_state<'py>(py: Python<'py>, params: &PyModelParams, n_max: usize, tol: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    let r = py
        .detach(|| ground_state_analysis(&params.inner, &analysis(n_max, tol)))
        .map_err(value_err)?;
    report(py, &r)
}

/// `(offblock, block_defect)` of the parity decomposition.
#[pyfunction]
fn parity_decomposition(py: Python<'_>, params: &PyModelParams, n_max: usize) -> PyResult<(f64, f64)> {
    py.detach(|| {
        let b = enumerate_basis(params.inner.modes().len(), n_max)?;
        let d = decompose(&build_bundle(&params.inner, &b)?)?;
        Ok::<_, spinboson::Error>((d.offblock, d.block_defect))
    })
    .map_err(value_err)
}

/// Lowest `k` eigenvalues of the fiber with sign `+1` or `-1` on `eta`.
#[pyfunction]
#[pyo3(signature = (params, n_max, sign, k=1))]
fn fiber_spectrum(py: Python<'_>, params: &PyModelParams, n_max: usize, sign: i8, k: usize) -> PyResult<Vec<f64>> {
    if sign != 1 && sign != -1 {
        return Err(PyValueError::new_err("sign must be +1 or -1"));
    }
    py.detach(|| {
        let b = enumerate_basis(params.inner.modes().len(), n_max)?;
        let f = build_fiber(&params.inner, &b, sign)?;
        Ok::<_, spinboson::Error>(eigensolve_with(&f, k, &EigenOptions::default())?.eigenvalues)
    })
    .map_err(value_err)
}

/// First-order pull-through residuals of the lower fiber ground state.
#[pyfunction]
fn pull_through<'py>(py: Python<'py>, params: &PyModelParams, n_max: usize) -> PyResult<Bound<'py, PyAny>> {
    let r = py
        .detach(|| pull_through_residual(&params.inner, &AnalysisConfig::new(n_max)))
        .map_err(value_err)?;
    report(py, &r)
}

/// Threshold diagnostic for essential-tagged modes.
#[pyfunction]
fn hvz<'py>(py: Python<'py>, params: &PyModelParams, n_max: usize) -> PyResult<Bound<'py, PyAny>> {
    let r = py
        .detach(|| hvz_threshold_diagnostic(&params.inner, &AnalysisConfig::new(n_max)))
        .map_err(value_err)?;
    report(py, &r)
}

/// Single-point report of a configuration file.
#[pyfunction]
fn analyze_config<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let cfg = harness::load_config(&path).map_err(value_err)?;
    let r = py.detach(|| harness::analyze(&cfg));
    report(py, &r)
}

/// Run the sweep of a configuration file into `output`; returns the number
/// of grid points with failures.
#[pyfunction]
#[pyo3(signature = (path, output, workers=None))]
fn run_sweep(py: Python<'_>, path: PathBuf, output: PathBuf, workers: Option<usize>) -> PyResult<usize> {
    let cfg = harness::load_config(&path).map_err(value_err)?;
    let n = harness::resolve_workers(workers, &cfg);
    let out = py.detach(|| harness::run_sweep(&cfg, &output, n)).map_err(harness_err)?;
    Ok(out.failure_count())
}

#[pymodule]
fn spinboson_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModeSet>()?;
    m.add_class::<PyModelParams>()?;
    m.add_function(wrap_pyfunction!(ground_state, m)?)?;
    m.add_function(wrap_pyfunction!(parity_decomposition, m)?)?;
    m.add_function(wrap_pyfunction!(fiber_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(pull_through, m)?)?;
    m.add_function(wrap_pyfunction!(hvz, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_values_become_python_objects() {
        Python::initialize();
        Python::attach(|py| {
            let v = serde_json::json!({"a": [1, 2.5, null, true], "b": "x"});
            let o = to_py(py, &v).unwrap();
            let a = o.get_item("a").unwrap();
            assert_eq!(a.get_item(0).unwrap().extract::<i64>().unwrap(), 1);
            assert_eq!(a.get_item(1).unwrap().extract::<f64>().unwrap(), 2.5);
            assert!(a.get_item(2).unwrap().is_none());
            assert!(a.get_item(3).unwrap().extract::<bool>().unwrap());
            assert_eq!(o.get_item("b").unwrap().extract::<String>().unwrap(), "x");
        });
    }

    #[test]
    fn mode_set_rejects_unknown_tags() {
        Python::initialize();
        assert!(PyModeSet::new(vec![1.0], None, Some(vec!["bogus".into()])).is_err());
        assert_eq!(PyModeSet::new(vec![1.0, 2.0], None, None).unwrap().__len__(), 2);
    }
}
