//! Transverse electrode potentials from four line charges matched to the rod
//! surfaces, plus the harmonic needle term.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DriveParameters, Ion, TrapGeometry};
use crate::error::{ensure, Error, Result};

/// Points sampled on each rod surface for the boundary fit.
const SURFACE_POINTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// [min, max] of the transverse coordinate (mm).
    pub h_range: [f64; 2],
    /// [min, max] along the optical axis (mm).
    pub v_range: [f64; 2],
    pub n_h: usize,
    pub n_v: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::square(0.3, 61)
    }
}

impl GridSpec {
    pub fn square(half_width: f64, n: usize) -> Self {
        Self {
            h_range: [-half_width, half_width],
            v_range: [-half_width, half_width],
            n_h: n,
            n_v: n,
        }
    }

    pub fn coords(&self) -> (Vec<f64>, Vec<f64>) {
        let lin = |r: [f64; 2], n: usize| -> Vec<f64> {
            if n == 1 {
                return vec![0.5 * (r[0] + r[1])];
            }
            (0..n).map(|i| r[0] + (r[1] - r[0]) * i as f64 / (n - 1) as f64).collect()
        };
        (lin(self.h_range, self.n_h), lin(self.v_range, self.n_v))
    }
}

/// Line-charge solution for one set of rod voltages.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LineCharges {
    centres: [[f64; 2]; 4],
    /// Coefficient of -ln(d / 1 mm) for each rod (V).
    strength: [f64; 4],
    offset: f64,
    /// RMS mismatch to the prescribed rod voltages on the sampled surfaces (V).
    boundary_rms: f64,
}

impl LineCharges {
    /// Least-squares match of the potential to `voltages` on the rod surfaces.
    pub(crate) fn fit(geom: &TrapGeometry, voltages: [f64; 4]) -> Result<Self> {
        let rods = geom.rod_centres();
        let centres = rods.map(|(c, _)| c);
        let radius = 0.5 * geom.rod_diameter;
        let m = 4 * SURFACE_POINTS;
        let mut a = DMatrix::<f64>::zeros(m, 5);
        let mut b = DVector::<f64>::zeros(m);
        for (k, c) in centres.iter().enumerate() {
            for j in 0..SURFACE_POINTS {
                let t = std::f64::consts::TAU * j as f64 / SURFACE_POINTS as f64;
                let p = [c[0] + radius * t.cos(), c[1] + radius * t.sin()];
                let row = k * SURFACE_POINTS + j;
                for (i, ci) in centres.iter().enumerate() {
                    a[(row, i)] = -((p[0] - ci[0]).hypot(p[1] - ci[1])).ln();
                }
                a[(row, 4)] = 1.0;
                b[row] = voltages[k];
            }
        }
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smin <= 1e-12 * smax {
            return Err(Error::RankDeficient("line-charge boundary system".into()));
        }
        let x = svd
            .solve(&b, 1e-14 * smax)
            .map_err(|e| Error::RankDeficient(e.to_string()))?;
        let resid = &a * &x - &b;
        Ok(Self {
            centres,
            strength: [x[0], x[1], x[2], x[3]],
            offset: x[4],
            boundary_rms: resid.norm() / (m as f64).sqrt(),
        })
    }

    pub(crate) fn value(&self, h: f64, v: f64) -> f64 {
        let mut s = self.offset;
        for (c, q) in self.centres.iter().zip(&self.strength) {
            s -= q * (h - c[0]).hypot(v - c[1]).ln();
        }
        s
    }

    /// Gradient (V/mm).
    pub(crate) fn gradient(&self, h: f64, v: f64) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (c, q) in self.centres.iter().zip(&self.strength) {
            let dh = h - c[0];
            let dv = v - c[1];
            let d2 = dh * dh + dv * dv;
            g[0] -= q * dh / d2;
            g[1] -= q * dv / d2;
        }
        g
    }

    /// Hessian [hh, hv, vv] (V/mm^2).
    pub(crate) fn hessian(&self, h: f64, v: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (c, q) in self.centres.iter().zip(&self.strength) {
            let dh = h - c[0];
            let dv = v - c[1];
            let d2 = dh * dh + dv * dv;
            let d4 = d2 * d2;
            out[0] -= q * (dv * dv - dh * dh) / d4;
            out[1] -= q * (-2.0 * dh * dv) / d4;
            out[2] -= q * (dh * dh - dv * dv) / d4;
        }
        out
    }
}

/// Potentials sampled on a transverse grid through the trap centre.
#[derive(Debug, Clone, Serialize)]
pub struct PotentialMap {
    pub grid: GridSpec,
    pub h: Vec<f64>,
    pub v: Vec<f64>,
    /// Static potential (V), row-major with `v` outer.
    pub static_potential: Vec<f64>,
    /// RF potential amplitude (V).
    pub rf_amplitude: Vec<f64>,
    /// Pseudopotential (eV).
    pub pseudopotential_ev: Vec<f64>,
    /// Model geometric efficiency: quadrupole curvature at the centre in
    /// units of V_RF / r0^2.
    pub kappa_r_model: f64,
    /// Trace of the static Hessian at the centre including the axial needle
    /// curvature (V/mm^2).
    pub static_hessian_trace: f64,
    /// RMS deviation of the RF solution from the rod voltages (V).
    pub rf_boundary_rms: f64,
    pub rf_angular_frequency: f64,
    #[serde(skip)]
    pub(crate) rf: Option<LineCharges>,
}

/// Model quadrupole efficiency for a geometry: the RF curvature at the
/// centre relative to an ideal hyperbolic electrode set.
pub fn kappa_r_model(geom: &TrapGeometry) -> Result<f64> {
    let lc = LineCharges::fit(geom, rod_voltages(geom, 1.0))?;
    let hs = lc.hessian(0.0, 0.0);
    let eig = (0.25 * (hs[0] - hs[2]).powi(2) + hs[1] * hs[1]).sqrt();
    Ok(eig * geom.r0().powi(2))
}

fn rod_voltages(geom: &TrapGeometry, amplitude: f64) -> [f64; 4] {
    geom.rod_centres().map(|(_, s)| 0.5 * s * amplitude)
}

/// Largest finite-difference Laplacian of the RF line-charge potential over
/// `points` (mm), relative to `amplitude / r0^2`.
pub fn rf_laplace_residual(geom: &TrapGeometry, amplitude: f64, points: &[[f64; 2]]) -> Result<f64> {
    ensure(amplitude != 0.0, || "amplitude must be nonzero".into())?;
    let lc = LineCharges::fit(geom, rod_voltages(geom, amplitude))?;
    let scale = (amplitude / geom.r0().powi(2)).abs();
    let h = 1e-4;
    Ok(points
        .iter()
        .map(|&[x, y]| {
            let lap = (lc.value(x + h, y) + lc.value(x - h, y) + lc.value(x, y + h) + lc.value(x, y - h) - 4.0 * lc.value(x, y))
                / (h * h);
            lap.abs() / scale
        })
        .fold(0.0, f64::max))
}

pub fn potential_map(
    geom: &TrapGeometry,
    drive: &DriveParameters,
    ion: &Ion,
    grid: &GridSpec,
) -> Result<PotentialMap> {
    geom.validate()?;
    drive.validate()?;
    ensure(grid.n_h >= 1 && grid.n_v >= 1, || "empty grid".into())?;
    let (hs, vs) = grid.coords();
    let radius = 0.5 * geom.rod_diameter;
    let rods = geom.rod_centres();
    for &v in &vs {
        for &h in &hs {
            for (c, _) in &rods {
                if (h - c[0]).hypot(v - c[1]) <= radius {
                    return Err(Error::GridTouchesElectrode { x: h, y: v });
                }
            }
        }
    }
    let rf = LineCharges::fit(geom, rod_voltages(geom, drive.rf_amplitude()))?;
    let dc = LineCharges::fit(geom, rod_voltages(geom, drive.dc_quadrupole))?;
    let z0 = geom.z0();
    let needle = drive.kappa_z * drive.needle_dc / (z0 * z0);

    let m = ion.mass * crate::constants::ATOMIC_MASS_UNIT;
    let e = ion.charge * crate::constants::ELEMENTARY_CHARGE;
    let om = drive.rf_angular_frequency;
    // |grad V|^2 in V^2/mm^2 -> V^2/m^2 and energy J -> eV
    let pseudo_scale = e * 1e6 / (4.0 * m * om * om);

    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = vs
        .par_iter()
        .map(|&v| {
            let mut s = Vec::with_capacity(hs.len());
            let mut r = Vec::with_capacity(hs.len());
            let mut p = Vec::with_capacity(hs.len());
            for &h in &hs {
                s.push(dc.value(h, v) - 0.5 * needle * (h * h + v * v));
                r.push(rf.value(h, v));
                let g = rf.gradient(h, v);
                p.push(pseudo_scale * (g[0] * g[0] + g[1] * g[1]));
            }
            (s, r, p)
        })
        .collect();
    let mut static_potential = Vec::with_capacity(hs.len() * vs.len());
    let mut rf_amplitude = Vec::with_capacity(hs.len() * vs.len());
    let mut pseudopotential_ev = Vec::with_capacity(hs.len() * vs.len());
    for (s, r, p) in rows {
        static_potential.extend(s);
        rf_amplitude.extend(r);
        pseudopotential_ev.extend(p);
    }
    let hr = rf.hessian(0.0, 0.0);
    let eig = (0.25 * (hr[0] - hr[2]).powi(2) + hr[1] * hr[1]).sqrt();
    let kappa_r_model = if drive.rf_amplitude() != 0.0 {
        eig * geom.r0().powi(2) / drive.rf_amplitude()
    } else {
        kappa_r_model(geom)?
    };
    let hd = dc.hessian(0.0, 0.0);
    let static_hessian_trace = (hd[0] - needle) + (hd[2] - needle) + 2.0 * needle;
    Ok(PotentialMap {
        grid: grid.clone(),
        h: hs,
        v: vs,
        static_potential,
        rf_amplitude,
        pseudopotential_ev,
        kappa_r_model,
        static_hessian_trace,
        rf_boundary_rms: rf.boundary_rms,
        rf_angular_frequency: om,
        rf: Some(rf),
    })
}

impl PotentialMap {
    pub fn index(&self, ih: usize, iv: usize) -> usize {
        iv * self.h.len() + ih
    }

    /// Radial secular frequencies (kHz) from a quadratic fit of the
    /// pseudopotential over the map, along the two principal directions.
    pub fn pseudopotential_frequencies(&self, ion: &Ion, fit_radius: f64) -> Result<[f64; 2]> {
        // fit Phi = c0 + a h^2 + b h v + c v^2 over points inside fit_radius
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for (iv, &v) in self.v.iter().enumerate() {
            for (ih, &h) in self.h.iter().enumerate() {
                if h.hypot(v) <= fit_radius {
                    rows.push([1.0, h * h, h * v, v * v]);
                    rhs.push(self.pseudopotential_ev[self.index(ih, iv)]);
                }
            }
        }
        if rows.len() < 8 {
            return Err(Error::InsufficientSampling("too few points inside the fit radius".into()));
        }
        let a = DMatrix::from_fn(rows.len(), 4, |i, j| rows[i][j]);
        let b = DVector::from_vec(rhs);
        let x = a
            .svd(true, true)
            .solve(&b, 1e-14)
            .map_err(|e| Error::RankDeficient(e.to_string()))?;
        // Hessian of Phi in eV/mm^2
        let hxx = 2.0 * x[1];
        let hxy = x[2];
        let hyy = 2.0 * x[3];
        let mean = 0.5 * (hxx + hyy);
        let dev = (0.25 * (hxx - hyy).powi(2) + hxy * hxy).sqrt();
        let m = ion.mass * crate::constants::ATOMIC_MASS_UNIT;
        let to_si = crate::constants::ELEMENTARY_CHARGE * 1e6;
        let f = |k: f64| (k * to_si / m).max(0.0).sqrt() / (2.0 * std::f64::consts::PI) / 1e3;
        Ok([f(mean + dev), f(mean - dev)])
    }

    /// Gradient of the RF potential amplitude at a point (V/mm).
    pub fn rf_gradient(&self, h: f64, v: f64) -> Option<[f64; 2]> {
        self.rf.as_ref().map(|lc| lc.gradient(h, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trap::{mathieu_params, secular_frequencies};

    #[test]
    fn boundary_values_are_reproduced() {
        let g = TrapGeometry::default();
        let lc = LineCharges::fit(&g, rod_voltages(&g, 500.0)).unwrap();
        assert!(lc.boundary_rms < 0.1 * 250.0, "{}", lc.boundary_rms);
        let r = 0.5 * g.rod_diameter;
        for (c, s) in g.rod_centres() {
            for k in 0..7 {
                let t = 0.37 + k as f64;
                let val = lc.value(c[0] + r * t.cos(), c[1] + r * t.sin());
                // four line charges cannot make each closely spaced rod an
                // exact equipotential
                assert!((val - 250.0 * s).abs() < 0.15 * 250.0, "{val}");
            }
        }
    }

    #[test]
    fn quadrupole_saddle_at_centre() {
        let g = TrapGeometry::default();
        let lc = LineCharges::fit(&g, rod_voltages(&g, 500.0)).unwrap();
        let grad = lc.gradient(0.0, 0.0);
        assert!(grad[0].abs() < 1e-9 && grad[1].abs() < 1e-9, "{grad:?}");
        let hs = lc.hessian(0.0, 0.0);
        // saddle: Hessian determinant negative
        assert!(hs[0] * hs[2] - hs[1] * hs[1] < 0.0);
    }

    #[test]
    fn laplace_residual_by_finite_differences() {
        let g = TrapGeometry::default();
        let amp = 500.0;
        let lc = LineCharges::fit(&g, rod_voltages(&g, amp)).unwrap();
        let scale = amp / g.r0().powi(2);
        let h = 1e-4;
        for &(x, y) in &[(0.0, 0.0), (0.1, 0.05), (-0.2, 0.1), (0.25, -0.12), (0.05, 0.2)] {
            let lap = (lc.value(x + h, y) + lc.value(x - h, y) + lc.value(x, y + h) + lc.value(x, y - h)
                - 4.0 * lc.value(x, y))
                / (h * h);
            assert!(lap.abs() < 1e-6 * scale, "{lap} vs {scale}");
        }
    }

    #[test]
    fn grid_on_electrode_is_rejected() {
        let r = potential_map(
            &TrapGeometry::default(),
            &DriveParameters::default(),
            &Ion::ba138(),
            &GridSpec::square(0.6, 31),
        );
        assert!(matches!(r, Err(Error::GridTouchesElectrode { .. })));
    }

    #[test]
    fn pseudopotential_nonnegative_and_static_traceless() {
        let map = potential_map(
            &TrapGeometry::default(),
            &DriveParameters::default(),
            &Ion::ba138(),
            &GridSpec::square(0.25, 41),
        )
        .unwrap();
        assert!(map.pseudopotential_ev.iter().all(|&p| p >= 0.0));
        assert!(map.static_hessian_trace.abs() < 1e-9);
    }

    #[test]
    fn pseudopotential_matches_mathieu_frequencies() {
        let g = TrapGeometry::default();
        let mut d = DriveParameters { needle_dc: 0.0, dc_quadrupole: 0.0, ..Default::default() };
        let ion = Ion::ba138();
        let map = potential_map(&g, &d, &ion, &GridSpec::square(0.02, 41)).unwrap();
        let fp = map.pseudopotential_frequencies(&ion, 0.02).unwrap();
        d.kappa_r = map.kappa_r_model;
        let fm = secular_frequencies(&mathieu_params(&d, &g, &ion).unwrap()).unwrap();
        for k in 0..2 {
            assert!((fp[k] / fm[k] - 1.0).abs() < 0.02, "{fp:?} vs {fm:?}");
        }
    }
}
