//! Rotationally symmetric refracting surfaces, glass dispersion tables and
//! vector refraction.
//!
//! Conventions: light travels toward +z, lengths are in millimetres and a
//! positive radius places the centre of curvature downstream of the vertex.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Number of even polynomial terms, A4 through A16.
pub const N_POLY: usize = 7;

/// A conic-plus-even-polynomial surface.
///
/// The sag is evaluated in the normalised form
/// `z/R = rho^2 / (1 + sqrt(1 - (1+k) rho^2)) + sum A_n rho^n` with
/// `rho = r/R`, so the polynomial coefficients are dimensionless and the whole
/// right-hand side is scaled by `R`. A `radius` of `None` is an explicit plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsphericSurface {
    /// Axial position of the vertex (mm).
    pub vertex_z: f64,
    /// Signed on-axis radius of curvature (mm); `None` for a plane.
    pub radius: Option<f64>,
    pub conic: f64,
    /// A4, A6, ..., A16.
    pub poly: [f64; N_POLY],
    pub clear_semi_diameter: f64,
}

impl AsphericSurface {
    pub fn plane(vertex_z: f64, clear_semi_diameter: f64) -> Self {
        Self {
            vertex_z,
            radius: None,
            conic: 0.0,
            poly: [0.0; N_POLY],
            clear_semi_diameter,
        }
    }

    pub fn sphere(vertex_z: f64, radius: f64, clear_semi_diameter: f64) -> Self {
        Self::conic(vertex_z, radius, 0.0, clear_semi_diameter)
    }

    pub fn conic(vertex_z: f64, radius: f64, conic: f64, clear_semi_diameter: f64) -> Self {
        Self {
            vertex_z,
            radius: Some(radius),
            conic,
            poly: [0.0; N_POLY],
            clear_semi_diameter,
        }
    }

    pub fn with_poly(mut self, poly: [f64; N_POLY]) -> Self {
        self.poly = poly;
        self
    }

    pub fn shifted(&self, dz: f64) -> Self {
        let mut s = self.clone();
        s.vertex_z += dz;
        s
    }

    pub fn is_plane(&self) -> bool {
        self.radius.is_none()
    }

    /// Sag without the aperture check. Still rejects a negative conic root.
    pub fn sag_unchecked(&self, r: f64) -> Result<f64> {
        let Some(radius) = self.radius else {
            return Ok(0.0);
        };
        let rho = r / radius;
        let rho2 = rho * rho;
        let arg = 1.0 - (1.0 + self.conic) * rho2;
        if arg < 0.0 {
            return Err(Error::SagDomain { r });
        }
        let conic_term = rho2 / (1.0 + arg.sqrt());
        // Horner in rho^2 starting from A16.
        let mut poly = 0.0;
        for a in self.poly.iter().rev() {
            poly = poly * rho2 + a;
        }
        poly *= rho2 * rho2;
        Ok(radius * (conic_term + poly))
    }

    /// dz/dr without the aperture check.
    pub fn slope_unchecked(&self, r: f64) -> Result<f64> {
        let Some(radius) = self.radius else {
            return Ok(0.0);
        };
        let rho = r / radius;
        let rho2 = rho * rho;
        let arg = 1.0 - (1.0 + self.conic) * rho2;
        if arg <= 0.0 {
            return Err(Error::SagDomain { r });
        }
        let mut dpoly = 0.0;
        for (i, a) in self.poly.iter().enumerate().rev() {
            let n = (2 * i + 4) as f64;
            dpoly = dpoly * rho2 + n * a;
        }
        // sum n A_n rho^(n-1)
        dpoly *= rho2 * rho;
        Ok(rho / arg.sqrt() + dpoly)
    }

    fn check_aperture(&self, r: f64) -> Result<()> {
        if r.abs() > self.clear_semi_diameter {
            Err(Error::Aperture {
                r,
                limit: self.clear_semi_diameter,
            })
        } else {
            Ok(())
        }
    }

    /// Axial sag z(r) relative to the vertex (mm).
    pub fn sag(&self, r: f64) -> Result<f64> {
        self.check_aperture(r)?;
        self.sag_unchecked(r)
    }

    /// Derivative dz/dr of the sag.
    pub fn slope(&self, r: f64) -> Result<f64> {
        self.check_aperture(r)?;
        self.slope_unchecked(r)
    }

    /// Unit normal at radial coordinate `r` in the meridional (x, z) plane,
    /// oriented with a positive axial component.
    pub fn surface_normal(&self, r: f64) -> Result<Vec3> {
        let m = self.slope(r)?;
        Ok(Vec3::new(-m, 0.0, 1.0).normalize())
    }

    /// Unit normal at a transverse point (x, y), positive axial component.
    pub fn normal_at(&self, x: f64, y: f64) -> Result<Vec3> {
        let r = x.hypot(y);
        if r == 0.0 || self.is_plane() {
            return Ok(Vec3::z());
        }
        let m = self.slope_unchecked(r)?;
        Ok(Vec3::new(-m * x / r, -m * y / r, 1.0).normalize())
    }
}

/// Refract `incident` through an interface with normal `normal` (either
/// orientation) going from index `n1` into `n2`.
pub fn refract(incident: &Vec3, normal: &Vec3, n1: f64, n2: f64) -> Result<Vec3> {
    let mut nrm = *normal;
    let mut cos_i = -incident.dot(&nrm);
    if cos_i < 0.0 {
        nrm = -nrm;
        cos_i = -cos_i;
    }
    let mu = n1 / n2;
    let k = 1.0 - mu * mu * (1.0 - cos_i * cos_i);
    if k < 0.0 {
        return Err(Error::TotalInternalReflection);
    }
    let t = incident * mu + nrm * (mu * cos_i - k.sqrt());
    Ok(t.normalize())
}

/// Glass dispersion as a table of (wavelength nm, index) with linear
/// interpolation in wavelength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    pub table: Vec<(f64, f64)>,
}

impl Material {
    pub fn new(name: impl Into<String>, table: Vec<(f64, f64)>) -> Result<Self> {
        let name = name.into();
        if table.is_empty() {
            return Err(Error::InvalidParameter(format!("{name}: empty index table")));
        }
        for w in table.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidParameter(format!(
                    "{name}: wavelengths must be strictly increasing"
                )));
            }
        }
        if table.iter().any(|&(_, n)| !(n >= 1.0)) {
            return Err(Error::InvalidParameter(format!("{name}: index below 1")));
        }
        Ok(Self { name, table })
    }

    /// Non-dispersive medium, valid at every wavelength.
    pub fn constant(name: impl Into<String>, index: f64) -> Self {
        Self {
            name: name.into(),
            table: vec![(0.0, index), (f64::MAX, index)],
        }
    }

    pub fn vacuum() -> Self {
        Self::constant("vacuum", 1.0)
    }

    pub fn index_at(&self, wavelength_nm: f64) -> Result<f64> {
        let first = self.table[0];
        let last = self.table[self.table.len() - 1];
        if !(wavelength_nm >= first.0 && wavelength_nm <= last.0) {
            return Err(Error::WavelengthOutOfRange {
                material: self.name.clone(),
                wavelength: wavelength_nm,
                min: first.0,
                max: last.0,
            });
        }
        if self.table.len() == 1 {
            return Ok(first.1);
        }
        let i = self
            .table
            .partition_point(|&(w, _)| w <= wavelength_nm)
            .clamp(1, self.table.len() - 1);
        let (w0, n0) = self.table[i - 1];
        let (w1, n1) = self.table[i];
        let t = (wavelength_nm - w0) / (w1 - w0);
        Ok(n0 + t * (n1 - n0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn table1() -> AsphericSurface {
        AsphericSurface::conic(0.0, 10.367, -1.059, 12.0).with_poly([
            6.238e-2, -4.388e-4, -7.678e-3, -4.428e-4, -5.500e-3, 5.822e-3, -1.518e-3,
        ])
    }

    #[test]
    fn vertex_sag_is_zero() {
        assert_eq!(table1().sag(0.0).unwrap(), 0.0);
        assert_eq!(AsphericSurface::plane(3.0, 5.0).sag(2.0).unwrap(), 0.0);
    }

    #[test]
    fn parabola_sag() {
        let s = AsphericSurface::conic(0.0, 68.592, -1.0, 20.0);
        assert_relative_eq!(s.sag(10.0).unwrap(), 100.0 / (2.0 * 68.592), epsilon = 1e-14);
        assert_relative_eq!(s.sag(10.0).unwrap(), 0.728_947_982_271_985_1, epsilon = 1e-12);
    }

    #[test]
    fn table1_sag_golden() {
        // arbitrary-precision evaluation (mpmath, 50 digits) of the normalised sag form
        let z = table1().sag(8.0).unwrap();
        assert!((z - 3.276_891_499_394_381_9).abs() < 1e-9, "{z}");
    }

    #[test]
    fn sphere_matches_exact_sag() {
        let r0 = 25.0;
        let s = AsphericSurface::sphere(0.0, r0, 20.0);
        for i in 0..=40 {
            let r = 0.5 * i as f64;
            let exact = r0 - (r0 * r0 - r * r).sqrt();
            let z = s.sag(r).unwrap();
            assert!((z - exact).abs() <= 1e-12 * exact.abs().max(1e-300), "r={r}");
        }
    }

    #[test]
    fn domain_and_aperture_errors() {
        let s = AsphericSurface::sphere(0.0, 5.0, 10.0);
        assert!(matches!(s.sag(6.0), Err(Error::SagDomain { .. })));
        assert!(matches!(s.sag(11.0), Err(Error::Aperture { .. })));
        assert!(matches!(table1().sag(12.5), Err(Error::Aperture { .. })));
    }

    #[test]
    fn normal_on_axis_and_parabola() {
        let n = table1().surface_normal(0.0).unwrap();
        assert_relative_eq!(n, Vec3::z(), epsilon = 1e-15);
        let r0 = 68.592;
        let p = AsphericSurface::conic(0.0, r0, -1.0, 30.0);
        for r in [0.5, 3.0, 12.0, 25.0] {
            let expect = Vec3::new(-r / r0, 0.0, 1.0).normalize();
            assert_relative_eq!(p.surface_normal(r).unwrap(), expect, epsilon = 1e-14);
        }
    }

    fn fd_slope(s: &AsphericSurface, r: f64) -> f64 {
        let h = 1e-6;
        (s.sag_unchecked(r + h).unwrap() - s.sag_unchecked(r - h).unwrap()) / (2.0 * h)
    }

    #[test]
    fn slope_matches_finite_difference() {
        let s = table1();
        let m = s.slope(5.0).unwrap();
        assert!(((m - fd_slope(&s, 5.0)) / m).abs() < 1e-7);
        for i in 1..=100 {
            let r = 11.9 * i as f64 / 100.0;
            let m = s.slope(r).unwrap();
            let fd = fd_slope(&s, r);
            assert!(((m - fd) / m).abs() < 1e-7, "r={r} m={m} fd={fd}");
        }
    }

    #[test]
    fn refraction_cases() {
        let n = Vec3::z();
        let d = Vec3::z();
        assert_relative_eq!(refract(&d, &n, 1.0, 1.87).unwrap(), d, epsilon = 1e-15);

        let th = 30f64.to_radians();
        let d = Vec3::new(th.sin(), 0.0, th.cos());
        let t = refract(&d, &n, 1.0, 1.5).unwrap();
        assert_relative_eq!(t.x, 1.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(t.norm(), 1.0, epsilon = 1e-14);

        let th = 60f64.to_radians();
        let d = Vec3::new(th.sin(), 0.0, th.cos());
        assert_eq!(refract(&d, &n, 1.87, 1.0), Err(Error::TotalInternalReflection));
    }

    #[test]
    fn index_interpolation() {
        let m = Material::new("x", vec![(500.0, 1.5)]).unwrap();
        assert_eq!(m.index_at(500.0).unwrap(), 1.5);
        assert!(m.index_at(501.0).is_err());
        let m = Material::new("y", vec![(400.0, 1.6), (600.0, 1.5)]).unwrap();
        assert_relative_eq!(m.index_at(500.0).unwrap(), 1.55, epsilon = 1e-15);
        assert!(m.index_at(399.0).is_err());
        assert!(Material::new("z", vec![(600.0, 1.5), (400.0, 1.6)]).is_err());
        assert!(Material::new("z", vec![(600.0, 0.9)]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sag_is_even(r in 0.0f64..11.9) {
                let s = table1();
                prop_assert_eq!(s.sag(r).unwrap(), s.sag(-r).unwrap());
            }

            #[test]
            fn refraction_is_reversible(
                th in 0.0f64..1.2, ph in 0.0f64..6.28, tilt in 0.0f64..0.5,
                n1 in 1.0f64..2.0, n2 in 1.0f64..2.0,
            ) {
                let d = Vec3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos());
                let n = Vec3::new(tilt.sin(), 0.0, tilt.cos());
                if let Ok(t) = refract(&d, &n, n1, n2) {
                    let back = refract(&t, &(-n), n2, n1).unwrap();
                    prop_assert!((back - d).norm() < 1e-12);
                }
            }
        }
    }
}
