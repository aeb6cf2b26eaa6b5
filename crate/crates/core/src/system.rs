//! The collection train: in-vacuum asphere, vacuum window and fiber-coupling
//! lens, with working-distance and focus search, exit-pupil construction,
//! image quality and fiber coupling.
//!
//! Coordinates: the ion sits at the origin, light travels along +z, lengths
//! in mm unless a field name says otherwise.

use serde::{Deserialize, Serialize};

use crate::data::{material, PublishedConstants};
use crate::error::{ensure, Result};
use crate::fiber::{couple_pupil, couple_pupil_plane, gaussian_mode, optimize_defocus, CouplingEstimate, FiberAlignment, FiberMode};
use crate::geometry::{AsphericSurface, Vec3};
use crate::numeric::brent_min;
use crate::raytrace::{trace, Element, OpticalAssembly, Reference, Sampling, SourceSpec, SpotDiagram, TracedBundle};
use crate::wave::{airy_radius_um, build_pupil, strehl, zernike, zernike_fit, Apodization, PupilField};

/// Plane-parallel vacuum window, optionally bowed into a meniscus shell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    /// Air gap from the asphere back vertex to the window.
    pub gap_mm: f64,
    pub thickness_mm: f64,
    pub material: String,
    pub semi_diameter_mm: f64,
    /// Common radius of both faces; `None` keeps the faces flat.
    pub bow_radius_mm: Option<f64>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            gap_mm: 20.0,
            thickness_mm: 4.8,
            material: "fused-silica".into(),
            semi_diameter_mm: 20.0,
            bow_radius_mm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub wavelength_nm: f64,
    pub collection_na: f64,
    /// Ion to plane face; `None` selects the value that best collimates.
    pub working_distance_mm: Option<f64>,
    pub asphere_front_semi_diameter_mm: f64,
    pub asphere_back_semi_diameter_mm: f64,
    pub window: Option<WindowConfig>,
    /// Air gap in front of the fiber lens, measured from the window (or the
    /// asphere when there is no window).
    pub fiber_lens_gap_mm: f64,
    pub fiber_lens_semi_diameter_mm: f64,
    pub fiber_na: f64,
    pub pupil_samples: usize,
    /// Launch grid is `ray_grid x ray_grid` direction cosines.
    pub ray_grid: usize,
    pub apodization: Apodization,
    /// Fiber focus search range (um).
    pub defocus_range_um: f64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            wavelength_nm: 493.5,
            collection_na: 0.8,
            working_distance_mm: None,
            asphere_front_semi_diameter_mm: 10.0,
            asphere_back_semi_diameter_mm: 12.0,
            window: Some(WindowConfig::default()),
            fiber_lens_gap_mm: 40.0,
            fiber_lens_semi_diameter_mm: 12.7,
            fiber_na: 0.093,
            pupil_samples: 1024,
            ray_grid: 129,
            apodization: Apodization::CosineCubed,
            defocus_range_um: 100.0,
        }
    }
}

impl DesignConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.collection_na > 0.0 && self.collection_na < 1.0, || {
            format!("collection NA {} outside (0, 1)", self.collection_na)
        })?;
        ensure(self.wavelength_nm > 0.0, || "wavelength must be positive".into())?;
        ensure(self.fiber_lens_gap_mm > 0.0, || "fiber lens gap must be positive".into())?;
        if let Some(w) = &self.window {
            ensure(w.gap_mm > 0.0 && w.thickness_mm > 0.0, || "window gap and thickness must be positive".into())?;
        }
        if let Some(wd) = self.working_distance_mm {
            ensure(wd > 0.0, || "working distance must be positive".into())?;
        }
        ensure(self.ray_grid >= 16, || "ray grid must be >= 16".into())?;
        ensure(self.defocus_range_um > 0.0, || "defocus range must be positive".into())
    }
}

/// The in-vacuum asphere with its plane face `wd` from the ion.
pub fn asphere_element(c: &PublishedConstants, cfg: &DesignConfig, wd: f64) -> Result<Element> {
    let a = &c.asphere;
    let front = AsphericSurface::plane(wd, cfg.asphere_front_semi_diameter_mm);
    let back = AsphericSurface::conic(wd + a.center_thickness_mm, a.radius_mm, a.conic, cfg.asphere_back_semi_diameter_mm)
        .with_poly(a.poly);
    Ok(Element::lens(front, back, material(&a.material)?))
}

fn window_element(w: &WindowConfig, z: f64) -> Result<Element> {
    let (front, back) = match w.bow_radius_mm {
        None => (
            AsphericSurface::plane(z, w.semi_diameter_mm),
            AsphericSurface::plane(z + w.thickness_mm, w.semi_diameter_mm),
        ),
        Some(r) => (
            AsphericSurface::sphere(z, r, w.semi_diameter_mm),
            AsphericSurface::sphere(z + w.thickness_mm, r, w.semi_diameter_mm),
        ),
    };
    Ok(Element::lens(front, back, material(&w.material)?))
}

fn fiber_lens_element(c: &PublishedConstants, cfg: &DesignConfig, z: f64) -> Result<Element> {
    let f = &c.fiber_lens;
    let csd = cfg.fiber_lens_semi_diameter_mm;
    let front = AsphericSurface::conic(z, f.front_radius_mm, f.front_conic, csd);
    let back = AsphericSurface::sphere(z + f.center_thickness_mm, f.back_radius_mm, csd);
    Ok(Element::lens(front, back, material(&f.material)?))
}

/// Working distance that minimises the RMS exit-direction spread of the
/// asphere alone over the collection cone.
pub fn optimize_working_distance(cfg: &DesignConfig) -> Result<f64> {
    let c = PublishedConstants::load()?;
    let source = SourceSpec::new(cfg.collection_na, Sampling::Fan { n: 96 });
    let spread = |wd: f64| -> f64 {
        let run = || -> Result<f64> {
            let el = asphere_element(&c, cfg, wd)?;
            let asm = OpticalAssembly::new(vec![el], Vec3::zeros(), wd + 50.0)?;
            let b = trace(&source, &asm, cfg.wavelength_nm)?;
            if b.vignetted_count > 0 {
                return Ok(f64::INFINITY);
            }
            Ok(b.direction_spread_rms())
        };
        run().unwrap_or(f64::INFINITY)
    };
    let nominal = c.asphere.working_distance_mm;
    let (wd, _) = brent_min(spread, nominal - 0.5, nominal + 0.5, 1e-9);
    Ok(wd)
}

/// A built collection train with its nominal focus.
#[derive(Debug, Clone)]
pub struct Design {
    pub config: DesignConfig,
    pub assembly: OpticalAssembly,
    pub working_distance_mm: f64,
    /// Axial position of the best geometric focus for an on-axis ion.
    pub focus_z: f64,
    pub mode: FiberMode,
}

/// Ion displacement from the nominal object point (um); +z moves the ion
/// toward the asphere.
pub type IonOffset = [f64; 3];

impl Design {
    pub fn build(cfg: &DesignConfig) -> Result<Self> {
        cfg.validate()?;
        let c = PublishedConstants::load()?;
        let wd = match cfg.working_distance_mm {
            Some(w) => w,
            None => optimize_working_distance(cfg)?,
        };
        let mut elements = vec![asphere_element(&c, cfg, wd)?];
        let mut z = wd + c.asphere.center_thickness_mm;
        if let Some(w) = &cfg.window {
            elements.push(window_element(w, z + w.gap_mm)?);
            z += w.gap_mm + w.thickness_mm;
        }
        elements.push(fiber_lens_element(&c, cfg, z + cfg.fiber_lens_gap_mm)?);
        let last = z + cfg.fiber_lens_gap_mm + c.fiber_lens.center_thickness_mm;
        let mut assembly = OpticalAssembly::new(elements, Vec3::zeros(), last + 100.0)?;
        let mode = gaussian_mode(cfg.fiber_na, cfg.wavelength_nm)?;
        let mut d = Self {
            config: cfg.clone(),
            assembly: assembly.clone(),
            working_distance_mm: wd,
            focus_z: 0.0,
            mode,
        };
        let focus = d.trace([0.0; 3])?.best_focus_z()?;
        assembly.image_z = focus;
        d.assembly = assembly;
        d.focus_z = focus;
        Ok(d)
    }

    pub fn build_default() -> Result<Self> {
        Self::build(&DesignConfig::default())
    }

    fn with_ion(&self, offset: IonOffset) -> OpticalAssembly {
        let mut asm = self.assembly.clone();
        asm.object = Vec3::new(offset[0] * 1e-3, offset[1] * 1e-3, offset[2] * 1e-3);
        asm
    }

    pub fn trace(&self, offset: IonOffset) -> Result<TracedBundle> {
        let src = SourceSpec::new(self.config.collection_na, Sampling::Grid { n: self.config.ray_grid }).with_overfill(0.02);
        trace(&src, &self.with_ion(offset), self.config.wavelength_nm)
    }

    pub fn trace_fan(&self, n: usize) -> Result<TracedBundle> {
        trace(&SourceSpec::new(self.config.collection_na, Sampling::Fan { n }), &self.assembly, self.config.wavelength_nm)
    }

    /// Reference sphere centred on the nominal focus, passing 10 mm behind
    /// the last lens vertex.
    pub fn reference(&self) -> Reference {
        let start = self.assembly.last_vertex_z() + 10.0;
        Reference::Sphere {
            center: Vec3::new(0.0, 0.0, self.focus_z),
            radius: self.focus_z - start,
        }
    }

    /// Exit pupil on the reference sphere and the image-side NA.
    pub fn pupil(&self, offset: IonOffset) -> Result<(PupilField, f64)> {
        let bundle = self.trace(offset)?;
        self.pupil_from(&bundle)
    }

    pub fn pupil_from(&self, bundle: &TracedBundle) -> Result<(PupilField, f64)> {
        let reference = self.reference();
        let p = build_pupil(bundle, &reference, self.config.pupil_samples, 2.0, self.config.apodization)?;
        let radius = match reference {
            Reference::Sphere { radius, .. } => radius,
            Reference::Plane { .. } => unreachable!(),
        };
        let na = p.pupil_radius / radius;
        Ok((p, na))
    }

    pub fn spot(&self, offset: IonOffset, z: Option<f64>) -> Result<SpotDiagram> {
        self.trace(offset)?.spot_diagram(z.unwrap_or(self.focus_z))
    }

    /// Full nominal-design report.
    pub fn analyze(&self) -> Result<DesignReport> {
        let bundle = self.trace([0.0; 3])?;
        let spot = bundle.spot_diagram(self.focus_z)?;
        let (pupil, image_na) = self.pupil_from(&bundle)?;
        let q = image_quality(&pupil, image_na)?;
        let (defocus, coupling) =
            optimize_defocus(&pupil, image_na, &self.mode, [0.0, 0.0], self.config.defocus_range_um)?;
        let pupil_route = couple_pupil_plane(
            &pupil,
            image_na,
            &self.mode,
            &FiberAlignment { offset_um: [0.0, 0.0], defocus_um: defocus },
        )?;
        let asphere_only = {
            let c = PublishedConstants::load()?;
            let el = asphere_element(&c, &self.config, self.working_distance_mm)?;
            let asm = OpticalAssembly::new(vec![el], Vec3::zeros(), self.working_distance_mm + 50.0)?;
            trace(&SourceSpec::new(self.config.collection_na, Sampling::Fan { n: 96 }), &asm, self.config.wavelength_nm)?
                .direction_spread_rms()
        };
        Ok(DesignReport {
            working_distance_mm: self.working_distance_mm,
            focus_z_mm: self.focus_z,
            image_na,
            pupil_radius_mm: pupil.pupil_radius,
            collimation_spread_urad: asphere_only * 1e6,
            spot_rms_um: spot.rms_radius * 1e3,
            airy_radius_um: airy_radius_um(self.config.wavelength_nm, image_na),
            wavefront_rms_waves: q.residual_rms_waves,
            strehl: q.strehl,
            mode_waist_um: self.mode.w0_um,
            coupling,
            coupling_pupil_route: pupil_route,
            fiber_defocus_um: defocus,
            vignetted: bundle.vignetted_count,
            launched: bundle.launched(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignReport {
    pub working_distance_mm: f64,
    pub focus_z_mm: f64,
    pub image_na: f64,
    pub pupil_radius_mm: f64,
    /// RMS exit-direction spread of the asphere alone.
    pub collimation_spread_urad: f64,
    pub spot_rms_um: f64,
    pub airy_radius_um: f64,
    /// After piston, tilt and defocus removal.
    pub wavefront_rms_waves: f64,
    pub strehl: f64,
    pub mode_waist_um: f64,
    pub coupling: CouplingEstimate,
    pub coupling_pupil_route: f64,
    pub fiber_defocus_um: f64,
    pub vignetted: usize,
    pub launched: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImageQuality {
    pub strehl: f64,
    pub residual_rms_waves: f64,
    /// Noll 2, 3 and 4 coefficients that were removed (waves).
    pub tilt_x: f64,
    pub tilt_y: f64,
    pub defocus: f64,
}

/// Pupil with piston, tilt and defocus removed, and the removed Noll 1-4
/// coefficients (waves).
pub fn best_focus_pupil(pupil: &PupilField) -> Result<(PupilField, [f64; 4])> {
    let fit = zernike_fit(pupil, 4)?;
    let mut p = pupil.clone();
    let c = [fit.coefficients[0], fit.coefficients[1], fit.coefficients[2], fit.coefficients[3]];
    p.add_wavefront(|u, v| {
        let (r, t) = (u.hypot(v), v.atan2(u));
        -(1..=4).map(|j| c[j - 1] * zernike(j, r, t)).sum::<f64>()
    });
    Ok((p, c))
}

/// Strehl ratio after removing piston, tilt and defocus from the pupil.
pub fn image_quality(pupil: &PupilField, image_na: f64) -> Result<ImageQuality> {
    let (p, c) = best_focus_pupil(pupil)?;
    Ok(ImageQuality {
        strehl: strehl(&p, image_na)?,
        residual_rms_waves: p.wavefront_rms(),
        tilt_x: c[1],
        tilt_y: c[2],
        defocus: c[3],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Ion moved across the optical axis.
    IonLateral,
    /// Ion moved along the optical axis.
    IonAxial,
    /// Fiber face moved across the focus.
    FiberLateral,
    /// Fiber face moved along the axis.
    FiberAxial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub offset_um: f64,
    pub coupling: f64,
    pub discretization_estimate: f64,
}

/// Coupling against one misalignment with everything else held at the
/// nominal optimum (fiber at the best focus found for the aligned ion).
pub fn misalignment_sweep(design: &Design, axis: SweepAxis, offsets_um: &[f64]) -> Result<Vec<SweepPoint>> {
    let (pupil0, na0) = design.pupil([0.0; 3])?;
    let (dz0, _) = optimize_defocus(&pupil0, na0, &design.mode, [0.0, 0.0], design.config.defocus_range_um)?;
    offsets_um
        .iter()
        .map(|&d| {
            let est = match axis {
                SweepAxis::IonLateral | SweepAxis::IonAxial => {
                    let off = if axis == SweepAxis::IonLateral { [d, 0.0, 0.0] } else { [0.0, 0.0, d] };
                    let (p, na) = design.pupil(off)?;
                    couple_pupil(&p, na, &design.mode, &FiberAlignment { offset_um: [0.0, 0.0], defocus_um: dz0 })?
                }
                SweepAxis::FiberLateral => couple_pupil(
                    &pupil0,
                    na0,
                    &design.mode,
                    &FiberAlignment { offset_um: [d, 0.0], defocus_um: dz0 },
                )?,
                SweepAxis::FiberAxial => couple_pupil(
                    &pupil0,
                    na0,
                    &design.mode,
                    &FiberAlignment { offset_um: [0.0, 0.0], defocus_um: dz0 + d },
                )?,
            };
            Ok(SweepPoint {
                offset_um: d,
                coupling: est.efficiency,
                discretization_estimate: est.discretization_estimate,
            })
        })
        .collect()
}
