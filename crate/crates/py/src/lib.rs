//! Python bindings: config-driven solvers returning plain lists and dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use spp_core::analytic::{self, LogBranch};
use spp_core::config::{parse_config, CaseConfig};
use spp_core::continuation::continue_branch;
use spp_core::expansion::expand;
use spp_core::materials::{LayerStack, MaterialModel};
use spp_core::{cli, Complex64, SppError};
use std::path::Path;

fn to_py(e: SppError) -> PyErr {
    match e {
        SppError::Config(_) | SppError::InvalidParameter { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn load(path: &str) -> PyResult<CaseConfig> {
    parse_config(Path::new(path)).map_err(to_py)
}

fn log_branch(name: &str) -> PyResult<LogBranch> {
    LogBranch::parse(name).ok_or_else(|| PyValueError::new_err(format!("unknown log branch `{name}`")))
}

/// Runs the command-line tool with `args` (without the program name) and returns its exit code.
#[pyfunction]
fn run(args: Vec<String>) -> i32 {
    cli::run_from(std::iter::once("spp".to_string()).chain(args))
}

/// Width `dtilde_m(omega)` of a constant | Drude | constant stack.
#[pyfunction]
#[pyo3(signature = (omega, m, eta_minus, gamma, eta_plus, k, branch = "clockwise"))]
fn dtilde(omega: f64, m: i32, eta_minus: Complex64, gamma: f64, eta_plus: Complex64, k: f64, branch: &str) -> PyResult<Complex64> {
    let stack =
        LayerStack::three_layer(MaterialModel::constant(eta_minus), MaterialModel::drude(gamma), MaterialModel::constant(eta_plus), 1.0, k)
            .map_err(to_py)?;
    analytic::dtilde(&stack, omega, m, log_branch(branch)?).map_err(to_py)
}

/// Width scan of a config's stack; singular samples are `None`.
#[pyfunction]
fn scan_dtilde<'py>(py: Python<'py>, config: &str, m: i32) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load(config)?;
    let scan = cfg.require_scan().map_err(to_py)?;
    let samples = analytic::scan_dtilde(&cfg.stack, scan.omega_range, scan.steps, m, cfg.log_branch);
    let d = PyDict::new(py);
    d.set_item("omega", samples.iter().map(|s| s.omega).collect::<Vec<_>>())?;
    d.set_item("dtilde", samples.iter().map(|s| s.value).collect::<Vec<_>>())?;
    d.set_item("decaying", samples.iter().map(|s| s.decaying).collect::<Vec<_>>())?;
    d.set_item("admissible", samples.iter().map(|s| s.is_admissible(scan.im_tol)).collect::<Vec<_>>())?;
    d.set_item("positivity_onset", analytic::positivity_onset(&samples, scan.im_tol))?;
    Ok(d)
}

/// Analytic real root of `Re dtilde_m(omega) = d` for a config.
#[pyfunction]
fn find_omega0(config: &str) -> PyResult<f64> {
    let cfg = load(config)?;
    let lin = cfg.require_linear().map_err(to_py)?;
    analytic::find_omega0(&cfg.stack, lin.d, lin.m, cfg.log_branch, lin.bracket).map_err(to_py)
}

/// Discrete linear eigenpair and first-order coefficient `nu`.
#[pyfunction]
fn solve_linear<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load(config)?;
    let eig = cli::linear_solve(&cfg).map_err(to_py)?;
    let exp = expand(&eig, &cfg.stack).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("omega0", eig.omega0)?;
    d.set_item("x", eig.grid.nodes())?;
    d.set_item("phi0", eig.phi0.clone())?;
    d.set_item("phi0_star", eig.phi0_star.clone())?;
    d.set_item("transversality", eig.transversality)?;
    d.set_item("gap", eig.gap)?;
    d.set_item("nu", exp.nu)?;
    Ok(d)
}

/// Nonlinear branch from the bifurcation point to the configured end frequency.
#[pyfunction]
fn branch<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load(config)?;
    let br = cfg.require_branch().map_err(to_py)?;
    let eig = cli::linear_solve(&cfg).map_err(to_py)?;
    let exp = expand(&eig, &cfg.stack).map_err(to_py)?;
    let b = continue_branch(&eig, &exp, &cfg.stack, br.omega_end, br.steps, cfg.newton, &cfg.label).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("omega0", eig.omega0)?;
    d.set_item("omega", b.points.iter().map(|p| p.omega).collect::<Vec<_>>())?;
    d.set_item("eps", b.points.iter().map(|p| p.eps).collect::<Vec<_>>())?;
    d.set_item("l2norm", b.points.iter().map(|p| p.l2norm).collect::<Vec<_>>())?;
    d.set_item("residual", b.points.iter().map(|p| p.residual).collect::<Vec<_>>())?;
    d.set_item("aborted", b.aborted)?;
    Ok(d)
}

#[pymodule]
fn spp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(dtilde, m)?)?;
    m.add_function(wrap_pyfunction!(scan_dtilde, m)?)?;
    m.add_function(wrap_pyfunction!(find_omega0, m)?)?;
    m.add_function(wrap_pyfunction!(solve_linear, m)?)?;
    m.add_function(wrap_pyfunction!(branch, m)?)?;
    Ok(())
}
