//! Python module `cyfam_py`: the scenario runner plus a few direct entry points.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cyfam::cli::{parse_complex, run_scenario, BasePoint, ScenarioConfig};
use cyfam::curvature::{relative_canonical_curvature, verify_first_chern, wp_metric};
use cyfam::family::{build_admissible, BuildOptions, SParameterStencil};
use cyfam::green::{green_lower_bound, GreenOperator};
use cyfam::torus::{self, PeriodMatrix};
use cyfam::{Complex64, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::InvalidPeriod(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// `(name, description)` for every preset family.
#[pyfunction]
fn presets() -> PyResult<Vec<(String, String)>> {
    torus::preset_names()
        .iter()
        .map(|n| torus::preset(n).map(|p| (p.name.to_string(), p.description.to_string())).map_err(to_py))
        .collect()
}

/// Run a scenario given as TOML; returns the report as a JSON string.
#[pyfunction]
fn run(py: Python<'_>, config: &str) -> PyResult<String> {
    let cfg = ScenarioConfig::from_toml(config).map_err(to_py)?;
    let report = py.detach(|| run_scenario(&cfg)).map_err(to_py)?;
    Ok(report.to_json())
}

/// Weil-Petersson metric and relative canonical curvature of a preset at one base point.
#[pyfunction]
#[pyo3(signature = (family, tau=None, s=None, grid=None, step=1e-2))]
fn curvature<'py>(
    py: Python<'py>,
    family: &str,
    tau: Option<Complex64>,
    s: Option<Complex64>,
    grid: Option<usize>,
    step: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let fam = torus::preset(family).map_err(to_py)?.family;
    let s = match tau {
        Some(t) => BasePoint::At(t.to_string()).resolve(&fam).map_err(to_py)?,
        None => s.unwrap_or_default(),
    };
    let (wp, theta, eq1) = py
        .detach(|| -> cyfam::Result<(f64, f64, f64)> {
            let local = if s == Complex64::default() { fam.clone() } else { fam.recentered(s)? };
            let points = grid.unwrap_or(if local.dim() == 1 { 32 } else { 16 });
            let st = SParameterStencil::new(Complex64::default(), step)?;
            let w = build_admissible(&local, &st, &BuildOptions::closed_form(points))?;
            let wp = wp_metric(&w)?;
            let curv = relative_canonical_curvature(&w, 1e-6)?;
            Ok((wp, curv.ss.components()[0][0].re, verify_first_chern(&curv, wp)))
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("wp", wp)?;
    d.set_item("theta_ss", theta)?;
    d.set_item("eq1", eq1)?;
    Ok(d)
}

/// Green kernel of the flat torus with period `tau` at the offset `(x, y)`.
#[pyfunction]
fn green_kernel(tau: Complex64, x: f64, y: f64) -> PyResult<f64> {
    let op = GreenOperator::for_period(PeriodMatrix::from_tau(tau).map_err(to_py)?, None).map_err(to_py)?;
    op.green_kernel(&[x, y]).map_err(to_py)
}

/// Uniform constant `c` with `G >= -c` on the torus with period `tau`.
#[pyfunction]
#[pyo3(signature = (tau, points=32, tol=1e-6))]
fn green_bound(py: Python<'_>, tau: Complex64, points: usize, tol: f64) -> PyResult<f64> {
    py.detach(|| {
        let op = GreenOperator::for_period(PeriodMatrix::from_tau(tau)?, None)?;
        Ok(green_lower_bound(&op, tol, points)?.c)
    })
    .map_err(to_py)
}

/// Parse a complex number the way the command line does, e.g. `"1+i"`.
#[pyfunction]
fn complex_from_str(text: &str) -> PyResult<Complex64> {
    parse_complex(text).map_err(to_py)
}

#[pymodule]
fn cyfam_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(curvature, m)?)?;
    m.add_function(wrap_pyfunction!(green_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(green_bound, m)?)?;
    m.add_function(wrap_pyfunction!(complex_from_str, m)?)?;
    Ok(())
}
