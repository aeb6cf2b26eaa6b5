//! Excess micromotion: modulation index from Rabi frequency ratios,
//! sideband lineshapes and the displacement model.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::numeric::bisect;
use crate::special::{bessel_j, bessel_j0, bessel_j1};

/// Upper end of the bracket used to invert J1/J0, just below the first zero
/// of J0.
pub const BETA_BRACKET: f64 = 2.4;

/// Carrier and sideband Rabi frequencies measured on one transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicromotionMeasurement {
    pub carrier_rabi: f64,
    pub sideband_rabi: f64,
    pub probe_time_us: f64,
    #[serde(default = "default_transition")]
    pub transition: String,
    #[serde(default = "one")]
    pub beam_projection: f64,
}

fn default_transition() -> String {
    "S1/2 -> D5/2 1762 nm".into()
}

fn one() -> f64 {
    1.0
}

impl MicromotionMeasurement {
    pub fn ratio(&self) -> f64 {
        self.sideband_rabi / self.carrier_rabi
    }

    pub fn beta(&self) -> Result<f64> {
        ensure(self.carrier_rabi > 0.0, || "carrier Rabi frequency must be positive".into())?;
        beta_from_ratio(self.ratio())
    }
}

pub fn ratio_from_beta(beta: f64) -> f64 {
    bessel_j1(beta) / bessel_j0(beta)
}

/// Solve J1(beta)/J0(beta) = ratio on [0, 2.4).
pub fn beta_from_ratio(ratio: f64) -> Result<f64> {
    let max = ratio_from_beta(BETA_BRACKET);
    if !(0.0..max).contains(&ratio) {
        return Err(Error::RatioOutOfRange(ratio));
    }
    if ratio == 0.0 {
        return Ok(0.0);
    }
    bisect(|b| ratio_from_beta(b) - ratio, 0.0, BETA_BRACKET, 1e-16)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SidebandSpectrum {
    pub order: i32,
    pub detuning_khz: Vec<f64>,
    pub probability: Vec<f64>,
    /// J_k(beta) times the carrier Rabi frequency (rad/s).
    pub effective_rabi: f64,
    pub warnings: Vec<String>,
}

/// Rabi lineshape of micromotion sideband `order` against detuning from
/// that sideband.
///
/// `sideband_spacing` is the micromotion frequency in rad/s; it only drives
/// the resolved-sideband check.
pub fn sideband_spectrum(
    beta: f64,
    carrier_rabi: f64,
    probe_time_us: f64,
    detuning_khz: &[f64],
    order: i32,
    sideband_spacing: f64,
) -> Result<SidebandSpectrum> {
    ensure(beta >= 0.0 && beta.is_finite(), || "beta must be >= 0".into())?;
    ensure(carrier_rabi >= 0.0 && probe_time_us >= 0.0, || {
        "Rabi frequency and probe time must be >= 0".into()
    })?;
    ensure(sideband_spacing > 0.0, || "sideband spacing must be positive".into())?;
    let omega = bessel_j(order, beta).abs() * carrier_rabi;
    let t = probe_time_us * 1e-6;
    let mut warnings = Vec::new();
    let first = bessel_j1(beta).abs() * carrier_rabi;
    if first.max(bessel_j0(beta).abs() * carrier_rabi) > sideband_spacing / 10.0 {
        warnings.push(format!(
            "Rabi frequency {:.3e} rad/s is not small against sideband spacing {:.3e} rad/s",
            first.max(bessel_j0(beta).abs() * carrier_rabi),
            sideband_spacing
        ));
    }
    let probability = detuning_khz
        .iter()
        .map(|d| {
            let delta = std::f64::consts::TAU * d * 1e3;
            rabi_probability(omega, delta, t)
        })
        .collect();
    Ok(SidebandSpectrum {
        order,
        detuning_khz: detuning_khz.to_vec(),
        probability,
        effective_rabi: omega,
        warnings,
    })
}

/// Two-level excitation probability for Rabi frequency `omega` and
/// detuning `delta` (rad/s) after `t` seconds.
pub fn rabi_probability(omega: f64, delta: f64, t: f64) -> f64 {
    let g2 = omega * omega + delta * delta;
    if g2 == 0.0 {
        return 0.0;
    }
    omega * omega / g2 * (0.5 * g2.sqrt() * t).sin().powi(2)
}

fn check_micromotion_inputs(q_radial: f64, wavevector: f64, projection: f64) -> Result<()> {
    ensure(q_radial.is_finite() && q_radial != 0.0, || "q must be finite and nonzero".into())?;
    ensure(wavevector > 0.0, || "wavevector must be positive".into())?;
    ensure((-1.0..=1.0).contains(&projection) && projection != 0.0, || {
        "projection must lie in [-1, 1] and be nonzero".into()
    })
}

/// Modulation index for an ion displaced `displacement_um` from the RF null.
/// `wavevector` is in rad/um.
pub fn displacement_to_beta(displacement_um: f64, q_radial: f64, wavevector: f64, projection: f64) -> Result<f64> {
    check_micromotion_inputs(q_radial, wavevector, projection)?;
    ensure(displacement_um.is_finite(), || "displacement must be finite".into())?;
    Ok((wavevector * projection * 0.5 * q_radial * displacement_um).abs())
}

/// Inverse of [`displacement_to_beta`]; returns the displacement magnitude.
pub fn beta_to_displacement(beta: f64, q_radial: f64, wavevector: f64, projection: f64) -> Result<f64> {
    check_micromotion_inputs(q_radial, wavevector, projection)?;
    ensure(beta >= 0.0 && beta.is_finite(), || "beta must be >= 0".into())?;
    Ok(beta / (wavevector * projection.abs() * 0.5 * q_radial.abs()))
}

pub fn wavevector_rad_per_um(wavelength_nm: f64) -> f64 {
    std::f64::consts::TAU / (wavelength_nm * 1e-3)
}
