use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Deserialize;
use tcfbm::harnack::{self, FactorOptions, InequalityKind, VerifyOptions};
use tcfbm::sde::{Model, TestFunction};
use tcfbm::HurstExponent;

fn py_err(e: tcfbm::Error) -> PyErr {
    match e {
        tcfbm::Error::Divergence(_) => PyArithmeticError::new_err(e.to_string()),
        tcfbm::Error::Domain { .. } | tcfbm::Error::Precondition(_) | tcfbm::Error::Hypothesis(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn hurst(h: f64) -> PyResult<HurstExponent> {
    HurstExponent::new(h).map_err(py_err)
}

fn parse<T: for<'de> Deserialize<'de>>(what: &str, json: &str) -> PyResult<T> {
    serde_json::from_str(json).map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

/// `Θ_H`.
#[pyfunction]
fn theta_h(h: f64) -> PyResult<f64> {
    tcfbm::specfun::theta_h(hurst(h)?).map_err(py_err)
}

/// `B(3/2-H, 1/2-H)/Γ(1/2-H)`.
#[pyfunction]
fn kernel_constant(h: f64) -> PyResult<f64> {
    tcfbm::specfun::kernel_constant(hurst(h)?).map_err(py_err)
}

#[pyfunction]
fn fbm_covariance(h: f64, t: f64, s: f64) -> f64 {
    tcfbm::fbm::fbm_covariance(h, t, s)
}

/// One standard fBM path at `times`.
#[pyfunction]
#[pyo3(signature = (h, times, seed=0))]
fn fbm_at(h: f64, times: Vec<f64>, seed: u64) -> PyResult<Vec<f64>> {
    Ok(tcfbm::fbm::fbm_at(hurst(h)?, &times, 1, seed).map_err(py_err)?.values)
}

#[pyfunction]
fn inverse_moment_bound(sigma: f64, theta: f64, c: f64, t: f64) -> PyResult<f64> {
    harnack::inverse_moment_bound(sigma, theta, c, t).map_err(py_err)
}

/// `(mean, se)` of the log-Harnack bound for a model given as JSON.
#[pyfunction]
#[pyo3(signature = (model, horizon, x, y, n_z_samples=10_000, seed=0))]
fn log_harnack_bound(model: &str, horizon: f64, x: Vec<f64>, y: Vec<f64>, n_z_samples: usize, seed: u64) -> PyResult<(f64, f64)> {
    let model: Model = parse("model", model)?;
    let opts = FactorOptions {
        n_samples: n_z_samples,
        seed,
        ..Default::default()
    };
    let e = harnack::log_harnack_bound(&model, horizon, &x, &y, &opts).map_err(py_err)?;
    Ok((e.mean, e.se))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyRequest {
    inequality: InequalityKind,
    f: TestFunction,
    x: Vec<f64>,
    y: Vec<f64>,
    model: Model,
    #[serde(default)]
    options: VerifyOptions,
}

/// Run one inequality check; takes and returns JSON.
#[pyfunction]
fn verify_inequality(py: Python<'_>, request: &str) -> PyResult<String> {
    let req: VerifyRequest = parse("request", request)?;
    let report = py
        .detach(|| harnack::verify_inequality(req.inequality, &req.f, &req.x, &req.y, &req.model, &req.options))
        .map_err(py_err)?;
    Ok(report.to_json())
}

#[pymodule]
fn tcfbm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(theta_h, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_constant, m)?)?;
    m.add_function(wrap_pyfunction!(fbm_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(fbm_at, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_moment_bound, m)?)?;
    m.add_function(wrap_pyfunction!(log_harnack_bound, m)?)?;
    m.add_function(wrap_pyfunction!(verify_inequality, m)?)?;
    Ok(())
}
