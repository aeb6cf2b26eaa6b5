//! Python bindings. Structured results come back as plain dicts and lists.

use std::path::PathBuf;

use ionlink::config::RunConfig;
use ionlink::fiber::Dipole;
use ionlink::system::Design;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: ionlink::Error) -> PyErr {
    match e {
        ionlink::Error::Config(_) | ionlink::Error::InvalidParameter(_) | ionlink::Error::RatioOutOfRange(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

fn load(config: Option<PathBuf>) -> ionlink::Result<RunConfig> {
    match config {
        Some(p) => RunConfig::load(&p),
        None => RunConfig::shipped_default(),
    }
}

/// Fraction of the full sphere inside a cone of numerical aperture `na`.
#[pyfunction]
fn solid_angle_fraction(na: f64) -> PyResult<f64> {
    ionlink::budget::solid_angle_fraction(na).map_err(err)
}

/// Micromotion modulation index from the sideband-to-carrier Rabi ratio.
#[pyfunction]
fn beta_from_ratio(ratio: f64) -> PyResult<f64> {
    ionlink::micromotion::beta_from_ratio(ratio).map_err(err)
}

#[pyfunction]
fn ratio_from_beta(beta: f64) -> f64 {
    ionlink::micromotion::ratio_from_beta(beta)
}

#[pyfunction]
#[pyo3(signature = (wavelength_nm, mass_u, secular_khz, projection = 1.0))]
fn lamb_dicke(wavelength_nm: f64, mass_u: f64, secular_khz: f64, projection: f64) -> PyResult<f64> {
    ionlink::thermometry::lamb_dicke(wavelength_nm, mass_u, secular_khz, projection).map_err(err)
}

/// Heating-limited two-qubit gate error for a rate in quanta/s.
#[pyfunction]
fn gate_infidelity(rate: f64, gate_time_us: f64) -> PyResult<f64> {
    ionlink::thermometry::gate_infidelity(rate, gate_time_us).map_err(err)
}

/// Fraction of collected power that a single-mode fiber can accept given
/// the polarization structure of the dipole pattern.
#[pyfunction]
#[pyo3(signature = (collection_na, dipole = "sigma-dipole"))]
fn polarization_loss(collection_na: f64, dipole: &str) -> PyResult<f64> {
    let d = match dipole {
        "isotropic" => Dipole::Isotropic,
        "pi-dipole" => Dipole::PiDipole,
        "sigma-dipole" => Dipole::SigmaDipole,
        _ => return Err(PyValueError::new_err(format!("unknown dipole `{dipole}`"))),
    };
    ionlink::fiber::polarization_loss(collection_na, d).map_err(err)
}

/// Monte Carlo rod shadowing for the default trap geometry.
#[pyfunction]
#[pyo3(signature = (collection_na = 0.8, samples = 1_000_000, seed = 1))]
fn rod_clipping<'py>(py: Python<'py>, collection_na: f64, samples: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let geom = ionlink::trap::TrapGeometry::default();
    let est = py
        .detach(|| ionlink::raytrace::rod_clipping(&geom, collection_na, samples, seed))
        .map_err(err)?;
    to_py(py, &est)
}

/// Build and analyze the collection optics; returns the design summary.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn design_summary<'py>(py: Python<'py>, config: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let report = py
        .detach(|| {
            let cfg = load(config)?;
            Design::build(&cfg.optics)?.analyze()
        })
        .map_err(err)?;
    to_py(py, &report)
}

/// Run the acceptance suite and return one dict per criterion.
#[pyfunction]
#[pyo3(signature = (config = None, tolerance_scale = None))]
fn acceptance<'py>(py: Python<'py>, config: Option<PathBuf>, tolerance_scale: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    let checks = py
        .detach(|| {
            let mut cfg = load(config)?;
            if let Some(s) = tolerance_scale {
                cfg.tolerance_scale = s;
            }
            cfg.validate()?;
            ionlink::reproduce::acceptance(&cfg)
        })
        .map_err(err)?;
    to_py(py, &checks)
}

#[pymodule]
pub fn ionlink_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(solid_angle_fraction, m)?)?;
    m.add_function(wrap_pyfunction!(beta_from_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(ratio_from_beta, m)?)?;
    m.add_function(wrap_pyfunction!(lamb_dicke, m)?)?;
    m.add_function(wrap_pyfunction!(gate_infidelity, m)?)?;
    m.add_function(wrap_pyfunction!(polarization_loss, m)?)?;
    m.add_function(wrap_pyfunction!(rod_clipping, m)?)?;
    m.add_function(wrap_pyfunction!(design_summary, m)?)?;
    m.add_function(wrap_pyfunction!(acceptance, m)?)?;
    Ok(())
}
