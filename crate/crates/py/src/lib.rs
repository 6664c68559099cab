//! Python bindings for the waveplate laboratory.
//!
//! The main entry points mirror the CLI: configs travel as JSON strings and
//! reports come back as JSON, so Python-side orchestration composes with the
//! same artifacts the binary writes. A few scalar kernels are exposed
//! directly for quick interactive checks.

#![allow(clippy::useless_conversion)]

use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use waveplate::cli;
use waveplate::decay;
use waveplate::dynamics;
use waveplate::nonlinearity::{self, DampingProfile, ModelParams};
use waveplate::well;

fn to_py_err(e: waveplate::Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn params_from_json(params_json: &str) -> PyResult<ModelParams> {
    serde_json::from_str(params_json)
        .map_err(|e| PyValueError::new_err(format!("params parse error: {e}")))
}

/// Validate a full run config; returns the summary as JSON.
#[pyfunction]
fn validate_config(config_json: &str) -> PyResult<String> {
    let cfg = cli::parse_config(config_json).map_err(to_py_err)?;
    let summary = cli::run_validate(&cfg);
    serde_json::to_string_pretty(&summary).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Validate a bare params block; returns {"violations": [...], "warnings": [...]}.
#[pyfunction]
fn validate_params(params_json: &str) -> PyResult<String> {
    let params = params_from_json(params_json)?;
    let report = nonlinearity::validate_params(&params);
    serde_json::to_string_pretty(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Wave source f(u) for a params block.
#[pyfunction]
fn eval_f(u: f64, params_json: &str) -> PyResult<f64> {
    Ok(nonlinearity::eval_f(u, &params_from_json(params_json)?))
}

/// Source potential F(u).
#[pyfunction]
fn eval_big_f(u: f64, params_json: &str) -> PyResult<f64> {
    Ok(nonlinearity::eval_big_f(u, &params_from_json(params_json)?))
}

/// Damping force g(s) for a profile given as (near_exp, far_exp, coeff).
#[pyfunction]
fn eval_g(s: f64, near_exp: f64, far_exp: f64, coeff: f64) -> f64 {
    nonlinearity::eval_g(
        s,
        &DampingProfile {
            near_exp,
            far_exp,
            coeff,
        },
    )
}

/// Solve v + lambda g(v) = a for the monotone damping profile.
#[pyfunction]
fn solve_damping_scalar(a: f64, lambda: f64, near_exp: f64, far_exp: f64, coeff: f64) -> f64 {
    dynamics::solve_damping_scalar(
        a,
        lambda,
        &DampingProfile {
            near_exp,
            far_exp,
            coeff,
        },
        0.0,
    )
}

/// (s*, Lambda(s*)) from given constants: the synthetic well mode.
#[pyfunction]
fn s_star_from_constants(
    m_f: f64,
    m_h: f64,
    k1: f64,
    k2: f64,
    p: f64,
    q: f64,
) -> PyResult<(f64, f64)> {
    let root = well::find_s_star(m_f, m_h, k1, k2, p, q).map_err(to_py_err)?;
    Ok((root.s_star, root.lambda_at_s_star))
}

/// Decay branch decision for two damping profiles, as JSON.
#[pyfunction]
fn decay_profile(
    near_u: f64,
    far_u: f64,
    coeff_u: f64,
    near_w: f64,
    far_w: f64,
    coeff_w: f64,
) -> PyResult<String> {
    let du = DampingProfile {
        near_exp: near_u,
        far_exp: far_u,
        coeff: coeff_u,
    };
    let dw = DampingProfile {
        near_exp: near_w,
        far_exp: far_w,
        coeff: coeff_w,
    };
    let prof = decay::beta_and_b(&du, &dw).map_err(to_py_err)?;
    serde_json::to_string_pretty(&prof).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Integrate the comparison ODE sigma' = -(I + Phi~)^{-1} sigma for a
/// two-power-plus-identity majorant; returns (t, sigma) sample pairs.
#[pyfunction]
fn solve_decay_ode(
    e0: f64,
    phi_coeff1: f64,
    phi_exp1: f64,
    phi_coeff2: f64,
    phi_exp2: f64,
    t_end: f64,
    n_out: usize,
) -> Vec<(f64, f64)> {
    let phi = move |s: f64| {
        let s = s.max(0.0);
        phi_coeff1 * s.powf(phi_exp1) + phi_coeff2 * s.powf(phi_exp2) + s
    };
    decay::solve_decay_ode(e0, phi, t_end, n_out.max(1))
}

/// Compute the well constants for a config; returns the report JSON (and
/// writes report.json when out_dir is given).
#[pyfunction]
#[pyo3(signature = (config_json, out_dir=None))]
fn run_well(config_json: &str, out_dir: Option<&str>) -> PyResult<String> {
    let cfg = cli::parse_config(config_json).map_err(to_py_err)?;
    let report = cli::run_well(&cfg, out_dir.map(Path::new)).map_err(to_py_err)?;
    serde_json::to_string_pretty(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Run the coupled simulation; writes ledger.csv/report.json under out_dir
/// and returns the report JSON.
#[pyfunction]
fn run_simulate(config_json: &str, out_dir: &str) -> PyResult<String> {
    let cfg = cli::parse_config(config_json).map_err(to_py_err)?;
    let outcome = cli::run_simulate(&cfg, Some(Path::new(out_dir))).map_err(to_py_err)?;
    serde_json::to_string_pretty(&outcome.report)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Run the decay pipeline (simulation + fits + stabilization check); writes
/// artifacts under out_dir and returns the report JSON.
#[pyfunction]
fn run_decay(config_json: &str, out_dir: &str) -> PyResult<String> {
    let cfg = cli::parse_config(config_json).map_err(to_py_err)?;
    let outcome = cli::run_decay(&cfg, Some(Path::new(out_dir))).map_err(to_py_err)?;
    serde_json::to_string_pretty(&outcome.report)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn _waveplate(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(validate_params, m)?)?;
    m.add_function(wrap_pyfunction!(eval_f, m)?)?;
    m.add_function(wrap_pyfunction!(eval_big_f, m)?)?;
    m.add_function(wrap_pyfunction!(eval_g, m)?)?;
    m.add_function(wrap_pyfunction!(solve_damping_scalar, m)?)?;
    m.add_function(wrap_pyfunction!(s_star_from_constants, m)?)?;
    m.add_function(wrap_pyfunction!(decay_profile, m)?)?;
    m.add_function(wrap_pyfunction!(solve_decay_ode, m)?)?;
    m.add_function(wrap_pyfunction!(run_well, m)?)?;
    m.add_function(wrap_pyfunction!(run_simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_decay, m)?)?;
    Ok(())
}
