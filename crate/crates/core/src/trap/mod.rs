//! Four-rod Paul trap: Mathieu parameters, secular frequencies, fitting of
//! geometric efficiency factors and a line-charge electrode model.
//!
//! Axes: the trap axis runs along the rods and needles. The two radial
//! principal axes of the RF quadrupole lie along the rod diagonals. Mathieu
//! arrays are ordered `[radial_u, radial_v, axial]`.

mod potential;

pub use potential::{potential_map, rf_laplace_residual, GridSpec, PotentialMap};

use serde::{Deserialize, Serialize};

use crate::constants::{ATOMIC_MASS_UNIT, ELEMENTARY_CHARGE, MASS_BA138_U, MASS_YB171_U};
use crate::error::{ensure, Error, Result};
use crate::numeric::levenberg_marquardt;

/// Which transverse rod spacing the optical axis is perpendicular to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CollectionOrientation {
    /// Optical axis normal to the plane holding the widely spaced rod pairs,
    /// so the wide pitch runs across the field of view.
    #[default]
    NormalToWidePitch,
    /// Rotated by 90 degrees: the narrow pitch runs across the field.
    NormalToNarrowPitch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrapGeometry {
    /// mm
    pub rod_diameter: f64,
    /// Centre-to-centre rod pitch across the wide side of the rectangle (mm).
    pub wide_pitch: f64,
    /// Centre-to-centre rod pitch across the narrow side (mm).
    pub narrow_pitch: f64,
    /// Tip-to-tip needle separation (mm).
    pub needle_gap: f64,
    pub orientation: CollectionOrientation,
}

impl Default for TrapGeometry {
    fn default() -> Self {
        Self {
            rod_diameter: 0.25,
            wide_pitch: 1.0,
            narrow_pitch: 0.56,
            needle_gap: 3.3,
            orientation: CollectionOrientation::NormalToWidePitch,
        }
    }
}

impl TrapGeometry {
    pub fn validate(&self) -> Result<()> {
        ensure(
            self.rod_diameter > 0.0 && self.wide_pitch > 0.0 && self.narrow_pitch > 0.0,
            || "rod dimensions must be positive".into(),
        )?;
        ensure(self.needle_gap > 0.0, || "needle gap must be positive".into())?;
        let r0 = self.r0();
        ensure(r0 > self.rod_diameter / 2.0, || "rods enclose the trap centre".into())?;
        ensure(
            self.narrow_pitch > self.rod_diameter,
            || "neighbouring rods overlap".into(),
        )
    }

    /// Distance from the trap centre to a rod centre (mm).
    pub fn r0(&self) -> f64 {
        (0.5 * self.wide_pitch).hypot(0.5 * self.narrow_pitch)
    }

    pub fn ion_rod_surface_distance(&self) -> f64 {
        self.r0() - 0.5 * self.rod_diameter
    }

    /// Half the needle gap (mm).
    pub fn z0(&self) -> f64 {
        0.5 * self.needle_gap
    }

    /// Rod centres as (transverse, optical-axis) coordinates in mm, together
    /// with the RF pair sign (+1 for one diagonal, -1 for the other).
    pub fn rod_centres(&self) -> [([f64; 2], f64); 4] {
        let (h, v) = match self.orientation {
            CollectionOrientation::NormalToWidePitch => (0.5 * self.wide_pitch, 0.5 * self.narrow_pitch),
            CollectionOrientation::NormalToNarrowPitch => (0.5 * self.narrow_pitch, 0.5 * self.wide_pitch),
        };
        [
            ([h, v], 1.0),
            ([-h, -v], 1.0),
            ([h, -v], -1.0),
            ([-h, v], -1.0),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ion {
    pub species: String,
    /// u
    pub mass: f64,
    /// In units of e.
    pub charge: f64,
}

impl Ion {
    pub fn ba138() -> Self {
        Self {
            species: "138Ba+".into(),
            mass: MASS_BA138_U,
            charge: 1.0,
        }
    }

    pub fn yb171() -> Self {
        Self {
            species: "171Yb+".into(),
            mass: MASS_YB171_U,
            charge: 1.0,
        }
    }

    fn mass_kg(&self) -> f64 {
        self.mass * ATOMIC_MASS_UNIT
    }

    fn charge_c(&self) -> f64 {
        self.charge * ELEMENTARY_CHARGE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveParameters {
    /// V
    pub rf_peak_to_peak: f64,
    /// rad/s
    pub rf_angular_frequency: f64,
    /// V on both needles.
    pub needle_dc: f64,
    /// V between the two diagonal rod pairs.
    pub dc_quadrupole: f64,
    pub kappa_r: f64,
    pub kappa_z: f64,
}

impl Default for DriveParameters {
    fn default() -> Self {
        Self {
            rf_peak_to_peak: 1000.0,
            rf_angular_frequency: 2.0 * std::f64::consts::PI * 20e6,
            needle_dc: 600.0,
            dc_quadrupole: 1.01,
            kappa_r: 0.87,
            kappa_z: 0.014,
        }
    }
}

impl DriveParameters {
    pub fn validate(&self) -> Result<()> {
        ensure(
            self.rf_peak_to_peak.is_finite()
                && self.needle_dc.is_finite()
                && self.dc_quadrupole.is_finite(),
            || "voltages must be finite".into(),
        )?;
        ensure(
            self.rf_angular_frequency > 0.0 && self.rf_angular_frequency.is_finite(),
            || "RF frequency must be positive".into(),
        )
    }

    /// RF amplitude (V).
    pub fn rf_amplitude(&self) -> f64 {
        0.5 * self.rf_peak_to_peak
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MathieuPoint {
    pub a: [f64; 3],
    pub q: [f64; 3],
    pub rf_angular_frequency: f64,
    pub ion: Ion,
}

/// Lower edge `a0(q)` and upper edge `b1(q)` of the first stability region,
/// from the series expansions of the Mathieu characteristic values.
fn stability_edges(q: f64) -> (f64, f64) {
    let q2 = q * q;
    let a0 = -q2 / 2.0 + 7.0 * q2 * q2 / 128.0 - 29.0 * q2 * q2 * q2 / 2304.0;
    let b1 = 1.0 - q - q2 / 8.0 + q2 * q / 64.0 - q2 * q2 / 1536.0 - 11.0 * q2 * q2 * q / 36864.0;
    (a0, b1)
}

impl MathieuPoint {
    pub fn is_stable(&self) -> bool {
        (0..3).all(|i| {
            let q = self.q[i].abs();
            if q >= 0.908 {
                return false;
            }
            let (lo, hi) = stability_edges(q);
            self.a[i] >= lo && self.a[i] < hi
        })
    }

    pub fn dc_trace(&self) -> f64 {
        self.a.iter().sum()
    }
}

/// DC field curvatures (V/m^2) on `[radial_u, radial_v, axial]`.
fn dc_curvatures(drive: &DriveParameters, geom: &TrapGeometry) -> [f64; 3] {
    let z0 = geom.z0() * 1e-3;
    let r0 = geom.r0() * 1e-3;
    let kz = 2.0 * drive.kappa_z * drive.needle_dc / (z0 * z0);
    let kq = drive.kappa_r * drive.dc_quadrupole / (r0 * r0);
    [-kz / 2.0 + kq, -kz / 2.0 - kq, kz]
}

pub fn mathieu_params(drive: &DriveParameters, geom: &TrapGeometry, ion: &Ion) -> Result<MathieuPoint> {
    drive.validate()?;
    geom.validate()?;
    ensure(ion.mass > 0.0, || "ion mass must be positive".into())?;
    let m = ion.mass_kg();
    let e = ion.charge_c();
    let om2 = drive.rf_angular_frequency.powi(2);
    let r0 = geom.r0() * 1e-3;
    let q = 2.0 * e * drive.kappa_r * drive.rf_amplitude() / (m * r0 * r0 * om2);
    let k = dc_curvatures(drive, geom);
    let a = k.map(|k| 4.0 * e * k / (m * om2));
    Ok(MathieuPoint {
        a,
        q: [q, -q, 0.0],
        rf_angular_frequency: drive.rf_angular_frequency,
        ion: ion.clone(),
    })
}

/// Lowest-order secular frequencies `omega/2pi` in kHz.
pub fn secular_frequencies(mp: &MathieuPoint) -> Result<[f64; 3]> {
    if !mp.is_stable() {
        return Err(Error::Unstable(format!("a = {:?}, q = {:?}", mp.a, mp.q)));
    }
    Ok(secular_unchecked(mp))
}

fn secular_unchecked(mp: &MathieuPoint) -> [f64; 3] {
    let half = 0.5 * mp.rf_angular_frequency;
    let mut out = [0.0; 3];
    for i in 0..3 {
        let beta2 = mp.a[i] + 0.5 * mp.q[i] * mp.q[i];
        out[i] = half * beta2.max(0.0).sqrt() / (2.0 * std::f64::consts::PI) / 1e3;
    }
    out
}

/// Axial frequency of a DC-confined mode after changing the ion mass.
pub fn scale_dc_frequency(freq: f64, mass_from: f64, mass_to: f64) -> f64 {
    freq * (mass_from / mass_to).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrapAxis {
    RadialU,
    RadialV,
    Axial,
}

impl TrapAxis {
    fn index(self) -> usize {
        match self {
            TrapAxis::RadialU => 0,
            TrapAxis::RadialV => 1,
            TrapAxis::Axial => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredFrequency {
    pub axis: TrapAxis,
    pub khz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeFactors {
    Both,
    KappaZOnly,
    KappaROnly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryFit {
    pub kappa_r: f64,
    pub kappa_z: f64,
    /// model - measured (kHz), in input order.
    pub residuals_khz: Vec<f64>,
    pub rf_angular_frequency: f64,
}

/// Least-squares geometric efficiencies reproducing the measured secular
/// frequencies. Factors not listed in `free` keep their values from `drive`.
pub fn fit_geometry_factors(
    measured: &[MeasuredFrequency],
    drive: &DriveParameters,
    geom: &TrapGeometry,
    ion: &Ion,
    free: FreeFactors,
) -> Result<GeometryFit> {
    let nfree = if free == FreeFactors::Both { 2 } else { 1 };
    if measured.len() < nfree {
        return Err(Error::Underdetermined(format!(
            "{} measurements for {nfree} free factors",
            measured.len()
        )));
    }
    drive.validate()?;
    geom.validate()?;
    let build = |p: &[f64]| -> DriveParameters {
        let mut d = drive.clone();
        match free {
            FreeFactors::Both => {
                d.kappa_r = p[0];
                d.kappa_z = p[1];
            }
            FreeFactors::KappaZOnly => d.kappa_z = p[0],
            FreeFactors::KappaROnly => d.kappa_r = p[0],
        }
        d
    };
    let model = |p: &[f64]| -> Vec<f64> {
        let d = build(p);
        let mp = match mathieu_params(&d, geom, ion) {
            Ok(mp) => mp,
            Err(_) => return vec![1e6; measured.len()],
        };
        let f = secular_unchecked(&mp);
        measured.iter().map(|m| f[m.axis.index()] - m.khz).collect()
    };

    // axial-only fit has a closed form since omega_z^2 is linear in kappa_z
    if free == FreeFactors::KappaZOnly && measured.iter().all(|m| m.axis == TrapAxis::Axial) {
        let mut unit = drive.clone();
        unit.kappa_z = 1.0;
        let mp = mathieu_params(&unit, geom, ion)?;
        let f1 = secular_unchecked(&mp)[2];
        let mean_sq = measured.iter().map(|m| m.khz * m.khz).sum::<f64>() / measured.len() as f64;
        let kz = mean_sq / (f1 * f1);
        let mut d = drive.clone();
        d.kappa_z = kz;
        return Ok(GeometryFit {
            kappa_r: d.kappa_r,
            kappa_z: kz,
            residuals_khz: model(&[kz]),
            rf_angular_frequency: drive.rf_angular_frequency,
        });
    }

    let (start, lo, hi) = match free {
        FreeFactors::Both => (vec![drive.kappa_r, drive.kappa_z], vec![1e-9; 2], vec![100.0; 2]),
        FreeFactors::KappaZOnly => (vec![drive.kappa_z], vec![1e-9], vec![100.0]),
        FreeFactors::KappaROnly => (vec![drive.kappa_r], vec![1e-9], vec![100.0]),
    };
    // coarse log-spaced starts; keep the best local solution
    let mut best: Option<crate::numeric::LmResult> = None;
    for s in [1.0, 0.1, 0.01, 10.0] {
        let st: Vec<f64> = start.iter().map(|v| (v * s).clamp(1e-6, 50.0)).collect();
        let res = levenberg_marquardt(&model, &st, &lo, &hi, 500);
        if best.as_ref().map_or(true, |b| res.cost < b.cost) {
            best = Some(res);
        }
    }
    let best = best.expect("at least one start");
    let d = build(&best.params);
    Ok(GeometryFit {
        kappa_r: d.kappa_r,
        kappa_z: d.kappa_z,
        residuals_khz: model(&best.params),
        rf_angular_frequency: drive.rf_angular_frequency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn point(a: f64, q: f64) -> MathieuPoint {
        MathieuPoint {
            a: [a, a, 0.0],
            q: [q, -q, 0.0],
            rf_angular_frequency: 2.0 * PI * 20e6,
            ion: Ion::ba138(),
        }
    }

    #[test]
    fn derived_surface_distance() {
        let g = TrapGeometry::default();
        assert!((g.ion_rod_surface_distance() - 0.448).abs() < 5e-4);
        assert!((g.r0() - (0.25f64 + 0.0784).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_rf_gives_zero_q() {
        let d = DriveParameters { rf_peak_to_peak: 0.0, ..Default::default() };
        let mp = mathieu_params(&d, &TrapGeometry::default(), &Ion::ba138()).unwrap();
        assert_eq!(mp.q, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn q_inverse_in_mass() {
        let d = DriveParameters::default();
        let g = TrapGeometry::default();
        let ion = Ion::ba138();
        let heavy = Ion { mass: 2.0 * ion.mass, ..ion.clone() };
        let a = mathieu_params(&d, &g, &ion).unwrap();
        let b = mathieu_params(&d, &g, &heavy).unwrap();
        assert!((a.q[0] / b.q[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn dc_a_terms_are_traceless() {
        let mp = mathieu_params(&DriveParameters::default(), &TrapGeometry::default(), &Ion::ba138()).unwrap();
        assert!(mp.dc_trace().abs() < 1e-15 * mp.a[2].abs());
    }

    #[test]
    fn closed_form_secular_frequency() {
        let mut mp = point(0.0, 0.2);
        mp.a[2] = 0.0;
        let f = secular_frequencies(&mp).unwrap();
        assert!((f[0] - 10e3 * 0.02f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn axial_frequency_ignores_rf() {
        let mut a = point(0.0, 0.1);
        a.a[2] = 1e-3;
        let mut b = point(0.0, 0.3);
        b.a[2] = 1e-3;
        assert_eq!(secular_frequencies(&a).unwrap()[2], secular_frequencies(&b).unwrap()[2]);
        assert!((secular_frequencies(&a).unwrap()[2] - 10e3 * 1e-3f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn small_q_limit() {
        let q = 1e-4;
        let f = secular_frequencies(&point(0.0, q)).unwrap();
        let expect = 0.5 * 2.0 * PI * 20e6 * q / 2f64.sqrt() / (2.0 * PI) / 1e3;
        assert!((f[0] / expect - 1.0).abs() < 1e-9);
    }

    #[test]
    fn instability_beyond_q_edge() {
        assert!(matches!(secular_frequencies(&point(0.0, 0.95)), Err(Error::Unstable(_))));
        assert!(secular_frequencies(&point(0.0, 0.9)).is_ok());
    }

    #[test]
    fn a_z_matches_axial_frequency() {
        let d = DriveParameters { kappa_z: 0.014, ..Default::default() };
        let mp = mathieu_params(&d, &TrapGeometry::default(), &Ion::ba138()).unwrap();
        let f = secular_frequencies(&mp).unwrap()[2];
        let direct = 0.5 * d.rf_angular_frequency * mp.a[2].sqrt() / (2.0 * PI) / 1e3;
        assert!((f / direct - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_rf_frequency_inverse_in_mass() {
        let d = DriveParameters { needle_dc: 0.0, dc_quadrupole: 0.0, ..Default::default() };
        let g = TrapGeometry::default();
        let ba = secular_frequencies(&mathieu_params(&d, &g, &Ion::ba138()).unwrap()).unwrap();
        let yb = secular_frequencies(&mathieu_params(&d, &g, &Ion::yb171()).unwrap()).unwrap();
        assert!((ba[0] / yb[0] - MASS_YB171_U / MASS_BA138_U).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_synthetic_factors() {
        let g = TrapGeometry::default();
        let truth = DriveParameters { kappa_r: 0.62, kappa_z: 0.031, ..Default::default() };
        let f = secular_frequencies(&mathieu_params(&truth, &g, &Ion::ba138()).unwrap()).unwrap();
        let measured = [
            MeasuredFrequency { axis: TrapAxis::RadialU, khz: f[0] },
            MeasuredFrequency { axis: TrapAxis::RadialV, khz: f[1] },
            MeasuredFrequency { axis: TrapAxis::Axial, khz: f[2] },
        ];
        let start = DriveParameters { kappa_r: 0.3, kappa_z: 0.05, ..truth.clone() };
        let fit = fit_geometry_factors(&measured, &start, &g, &Ion::ba138(), FreeFactors::Both).unwrap();
        assert!((fit.kappa_r - 0.62).abs() < 1e-9, "{}", fit.kappa_r);
        assert!((fit.kappa_z - 0.031).abs() < 1e-9, "{}", fit.kappa_z);
    }

    #[test]
    fn axial_only_fit_is_closed_form() {
        let g = TrapGeometry::default();
        let d = DriveParameters::default();
        let m = [MeasuredFrequency { axis: TrapAxis::Axial, khz: 330.0 }];
        let fit = fit_geometry_factors(&m, &d, &g, &Ion::ba138(), FreeFactors::KappaZOnly).unwrap();
        let unit_drive = DriveParameters { kappa_z: 1.0, ..d };
        let unit = secular_unchecked(&mathieu_params(&unit_drive, &g, &Ion::ba138()).unwrap())[2];
        assert!((fit.kappa_z - (330.0 / unit).powi(2)).abs() < 1e-12);
        assert!(fit.residuals_khz[0].abs() < 1e-9);
    }

    #[test]
    fn underdetermined_fit_rejected() {
        let m = [MeasuredFrequency { axis: TrapAxis::Axial, khz: 330.0 }];
        let r = fit_geometry_factors(&m, &DriveParameters::default(), &TrapGeometry::default(), &Ion::ba138(), FreeFactors::Both);
        assert!(matches!(r, Err(Error::Underdetermined(_))));
    }

    #[test]
    fn measured_ba_frequencies_give_physical_factors() {
        let m = [
            MeasuredFrequency { axis: TrapAxis::Axial, khz: 330.0 },
            MeasuredFrequency { axis: TrapAxis::RadialU, khz: 888.0 },
            MeasuredFrequency { axis: TrapAxis::RadialV, khz: 705.0 },
        ];
        let d = DriveParameters { kappa_r: 0.5, kappa_z: 0.02, ..Default::default() };
        let fit = fit_geometry_factors(&m, &d, &TrapGeometry::default(), &Ion::ba138(), FreeFactors::Both).unwrap();
        assert!(fit.kappa_r > 0.0 && fit.kappa_r <= 1.0, "{fit:?}");
        assert!(fit.kappa_z > 0.0 && fit.kappa_z <= 1.0, "{fit:?}");
    }
}
