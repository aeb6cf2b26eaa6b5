use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::assembly::{surface_range, Element, OpticalAssembly};
use crate::error::{Error, Result};
use crate::geometry::{refract, AsphericSurface, Vec3};

/// Axial residual accepted for a surface intersection (mm).
pub const INTERSECT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    /// Accumulated n * geometric length (mm).
    pub optical_path: f64,
    pub amplitude_weight: f64,
    pub alive: bool,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
            optical_path: 0.0,
            amplitude_weight: 1.0,
            alive: true,
        }
    }

    fn advance(&mut self, point: Vec3, index: f64) {
        self.optical_path += index * (point - self.origin).norm();
        self.origin = point;
    }
}

/// First intersection of `ray` with `surface`, returned as (point, radial
/// coordinate). Newton iteration seeded at the vertex-plane crossing, with a
/// bracketed bisection fallback.
pub fn intersect(ray: &Ray, surface: &AsphericSurface) -> Result<(Vec3, f64)> {
    let o = ray.origin;
    let d = ray.direction;
    if d.z.abs() < 1e-12 {
        return Err(Error::Miss);
    }
    let t0 = (surface.vertex_z - o.z) / d.z;
    let finish = |t: f64| -> Result<(Vec3, f64)> {
        let p = o + d * t;
        let r = p.x.hypot(p.y);
        if r > surface.clear_semi_diameter {
            return Err(Error::Aperture {
                r,
                limit: surface.clear_semi_diameter,
            });
        }
        Ok((p, r))
    };
    if surface.is_plane() {
        if t0 < -1e-12 {
            return Err(Error::Miss);
        }
        return finish(t0);
    }

    let residual = |t: f64| -> Result<(f64, f64)> {
        let p = o + d * t;
        let r = p.x.hypot(p.y);
        let z = surface.sag_unchecked(r)?;
        let g = p.z - surface.vertex_z - z;
        let drdt = if r > 0.0 { (p.x * d.x + p.y * d.y) / r } else { 0.0 };
        let m = if r > 0.0 { surface.slope_unchecked(r)? } else { 0.0 };
        Ok((g, d.z - m * drdt))
    };

    let mut t = t0;
    for _ in 0..60 {
        match residual(t) {
            Ok((g, dg)) => {
                if g.abs() < 1e-13 {
                    break;
                }
                if dg == 0.0 || !dg.is_finite() {
                    break;
                }
                t -= g / dg;
            }
            Err(_) => break,
        }
    }
    if let Ok((g, _)) = residual(t) {
        if g.abs() < INTERSECT_TOL && t >= -1e-9 {
            return finish(t);
        }
    }
    let t = bracket_intersection(ray, surface)?;
    finish(t)
}

/// Scan the axial slab occupied by the surface for the first sign change of
/// the axial residual and bisect it down to 1e-13 mm.
fn bracket_intersection(ray: &Ray, surface: &AsphericSurface) -> Result<f64> {
    let o = ray.origin;
    let d = ray.direction;
    let (zlo, zhi) = surface_range(surface);
    let margin = 1e-6;
    let ta = ((zlo - margin - o.z) / d.z).max(0.0);
    let tb = (zhi + margin - o.z) / d.z;
    if tb <= ta {
        return Err(Error::Miss);
    }
    let g = |t: f64| -> Option<f64> {
        let p = o + d * t;
        let r = p.x.hypot(p.y);
        surface
            .sag_unchecked(r)
            .ok()
            .map(|z| p.z - surface.vertex_z - z)
    };
    let steps = 400;
    let mut prev: Option<(f64, f64)> = None;
    for k in 0..=steps {
        let t = ta + (tb - ta) * k as f64 / steps as f64;
        let Some(gt) = g(t) else {
            prev = None;
            continue;
        };
        if let Some((tp, gp)) = prev {
            if gp == 0.0 {
                return Ok(tp);
            }
            if gp.signum() != gt.signum() {
                let root = crate::numeric::bisect(
                    |t| g(t).unwrap_or(f64::NAN),
                    tp,
                    t,
                    1e-13,
                )?;
                return Ok(root);
            }
        }
        prev = Some((t, gt));
    }
    Err(Error::Miss)
}

fn trace_lens(
    ray: &mut Ray,
    front: &AsphericSurface,
    back: &AsphericSurface,
    index: f64,
    decenter: [f64; 2],
) -> Result<()> {
    let shift = Vec3::new(decenter[0], decenter[1], 0.0);
    let mut local = ray.clone();
    local.origin -= shift;
    for (surface, n1, n2) in [(front, 1.0, index), (back, index, 1.0)] {
        let (p, _) = intersect(&local, surface)?;
        local.advance(p, n1);
        let normal = surface.normal_at(p.x, p.y)?;
        local.direction = refract(&local.direction, &normal, n1, n2)?;
    }
    local.origin += shift;
    *ray = local;
    Ok(())
}

fn trace_ideal_lens(ray: &mut Ray, z: f64, f: f64, csd: f64) -> Result<()> {
    let d = ray.direction;
    if d.z <= 0.0 {
        return Err(Error::Miss);
    }
    let t = (z - ray.origin.z) / d.z;
    let p = ray.origin + d * t;
    let r = p.x.hypot(p.y);
    if r > csd {
        return Err(Error::Aperture { r, limit: csd });
    }
    ray.advance(p, 1.0);
    // thin phase element with phase f - sqrt(r^2 + f^2): exactly stigmatic
    // between the axial focal point and infinity
    let root = (r * r + f * f).sqrt();
    let sgn = f.signum();
    ray.optical_path += sgn * (f.abs() - root);
    let dx = d.x - sgn * p.x / root;
    let dy = d.y - sgn * p.y / root;
    let dz2 = 1.0 - dx * dx - dy * dy;
    if dz2 <= 0.0 {
        return Err(Error::TotalInternalReflection);
    }
    ray.direction = Vec3::new(dx, dy, dz2.sqrt());
    Ok(())
}

pub(crate) fn trace_ray(ray: &mut Ray, asm: &OpticalAssembly, indices: &[f64]) -> Result<()> {
    for (el, &n) in asm.elements.iter().zip(indices) {
        let res = match el {
            Element::Lens {
                front,
                back,
                decenter,
                ..
            } => trace_lens(ray, front, back, n, *decenter),
            Element::IdealLens {
                z,
                focal_length,
                clear_semi_diameter,
            } => trace_ideal_lens(ray, *z, *focal_length, *clear_semi_diameter),
        };
        if let Err(e) = res {
            ray.alive = false;
            return Err(e);
        }
    }
    Ok(())
}

/// How launch directions are laid out.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub enum Sampling {
    /// Square grid of n x n direction cosines covering the launch cone.
    Grid { n: usize },
    /// Meridional fan of n rays in the x-z plane from the axis to the rim.
    Fan { n: usize },
    /// Uniform over solid angle within the cone.
    Random { count: usize, seed: u64 },
}

/// Point source at the assembly object position emitting into a cone.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct SourceSpec {
    pub na: f64,
    pub sampling: Sampling,
    /// Fractional over-fill of the launch cone beyond `na`; used so pupil
    /// interpolation has support at the rim.
    pub overfill: f64,
}

impl SourceSpec {
    pub fn new(na: f64, sampling: Sampling) -> Self {
        Self {
            na,
            sampling,
            overfill: 0.0,
        }
    }

    pub fn with_overfill(mut self, overfill: f64) -> Self {
        self.overfill = overfill;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BundleLayout {
    /// Grid cell (row-major, y outer) to ray index.
    Grid { n: usize, cells: Vec<Option<usize>> },
    Fan,
    Random,
}

#[derive(Debug, Clone)]
pub struct TracedBundle {
    /// Ray state after the last surface.
    pub rays: Vec<Ray>,
    /// Launch direction cosines (sx, sy) per ray.
    pub launch: Vec<[f64; 2]>,
    pub layout: BundleLayout,
    pub vignetted_count: usize,
    pub na: f64,
    pub wavelength_nm: f64,
}

/// Surface that fixes the phase reference for optical path differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    Plane { z: f64 },
    Sphere { center: Vec3, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavefrontSample {
    /// Transverse position on the reference surface (mm).
    pub pupil: [f64; 2],
    /// Optical path from the source to the reference surface (mm).
    pub optical_path: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpotDiagram {
    pub points: Vec<[f64; 2]>,
    pub centroid: [f64; 2],
    pub rms_radius: f64,
}

fn launch_directions(spec: &SourceSpec) -> Result<(Vec<[f64; 2]>, Vec<f64>, BundleLayout)> {
    if !(spec.na > 0.0 && spec.na < 1.0) {
        return Err(Error::InvalidParameter(format!("NA {} outside (0, 1)", spec.na)));
    }
    let smax = (spec.na * (1.0 + spec.overfill)).min(0.999_999);
    let mut dirs = Vec::new();
    let mut weights = Vec::new();
    let layout = match spec.sampling {
        Sampling::Grid { n } => {
            if n < 3 {
                return Err(Error::InvalidParameter("grid needs n >= 3".into()));
            }
            let h = 2.0 * smax / (n - 1) as f64;
            let mut cells = vec![None; n * n];
            for iy in 0..n {
                for ix in 0..n {
                    let sx = -smax + h * ix as f64;
                    let sy = -smax + h * iy as f64;
                    let s2 = sx * sx + sy * sy;
                    if s2.sqrt() <= smax * (1.0 + 1e-12) {
                        cells[iy * n + ix] = Some(dirs.len());
                        dirs.push([sx, sy]);
                        weights.push(h * h / (1.0 - s2).sqrt());
                    }
                }
            }
            BundleLayout::Grid { n, cells }
        }
        Sampling::Fan { n } => {
            if n < 2 {
                return Err(Error::InvalidParameter("fan needs n >= 2".into()));
            }
            let ds = smax / (n - 1) as f64;
            for i in 0..n {
                let s = ds * i as f64;
                dirs.push([s, 0.0]);
                let ring = if i == 0 { 0.25 * ds * ds } else { s * ds };
                weights.push(2.0 * std::f64::consts::PI * ring / (1.0 - s * s).sqrt());
            }
            BundleLayout::Fan
        }
        Sampling::Random { count, seed } => {
            if count == 0 {
                return Err(Error::InvalidParameter("zero samples".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cmin = (1.0 - smax * smax).sqrt();
            for _ in 0..count {
                let c: f64 = rng.random_range(cmin..=1.0);
                let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let s = (1.0 - c * c).max(0.0).sqrt();
                dirs.push([s * phi.cos(), s * phi.sin()]);
                weights.push(1.0);
            }
            BundleLayout::Random
        }
    };
    Ok((dirs, weights, layout))
}

/// Trace a point-source bundle through `asm` at `wavelength_nm`.
pub fn trace(source: &SourceSpec, asm: &OpticalAssembly, wavelength_nm: f64) -> Result<TracedBundle> {
    let indices = asm
        .elements
        .iter()
        .map(|e| match e {
            Element::Lens { material, .. } => material.index_at(wavelength_nm),
            Element::IdealLens { .. } => Ok(1.0),
        })
        .collect::<Result<Vec<_>>>()?;
    let (launch, weights, layout) = launch_directions(source)?;
    let rays: Vec<Ray> = launch
        .par_iter()
        .zip(weights.par_iter())
        .map(|(s, &w)| {
            let sz = (1.0 - s[0] * s[0] - s[1] * s[1]).sqrt();
            let mut ray = Ray::new(asm.object, Vec3::new(s[0], s[1], sz));
            ray.amplitude_weight = w;
            let _ = trace_ray(&mut ray, asm, &indices);
            ray
        })
        .collect();
    let vignetted_count = rays.iter().filter(|r| !r.alive).count();
    Ok(TracedBundle {
        rays,
        launch,
        layout,
        vignetted_count,
        na: source.na,
        wavelength_nm,
    })
}

impl TracedBundle {
    pub fn launched(&self) -> usize {
        self.rays.len()
    }

    pub fn alive_count(&self) -> usize {
        self.rays.len() - self.vignetted_count
    }

    fn within_na(&self, i: usize) -> bool {
        let s = self.launch[i];
        s[0].hypot(s[1]) <= self.na * (1.0 + 1e-12)
    }

    /// Indices of alive rays launched inside the nominal NA.
    pub fn core_rays(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.rays.len()).filter(move |&i| self.rays[i].alive && self.within_na(i))
    }

    pub fn at_plane(&self, i: usize, z: f64) -> Vec3 {
        let r = &self.rays[i];
        r.origin + r.direction * ((z - r.origin.z) / r.direction.z)
    }

    pub fn spot_diagram(&self, z: f64) -> Result<SpotDiagram> {
        let idx: Vec<usize> = self.core_rays().collect();
        if idx.len() < 3 {
            return Err(Error::InsufficientSampling(format!(
                "{} alive rays reach the plane",
                idx.len()
            )));
        }
        let mut points = Vec::with_capacity(idx.len());
        let mut sw = 0.0;
        let mut c = [0.0; 2];
        for &i in &idx {
            let p = self.at_plane(i, z);
            let w = self.rays[i].amplitude_weight;
            points.push([p.x, p.y]);
            c[0] += w * p.x;
            c[1] += w * p.y;
            sw += w;
        }
        c[0] /= sw;
        c[1] /= sw;
        let ms = idx
            .iter()
            .zip(&points)
            .map(|(&i, p)| self.rays[i].amplitude_weight * ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)))
            .sum::<f64>()
            / sw;
        Ok(SpotDiagram {
            points,
            centroid: c,
            rms_radius: ms.sqrt(),
        })
    }

    /// Axial position minimising the weighted RMS spot radius.
    pub fn best_focus_z(&self) -> Result<f64> {
        let idx: Vec<usize> = self.core_rays().collect();
        if idx.len() < 3 {
            return Err(Error::InsufficientSampling("fewer than 3 alive rays".into()));
        }
        let mut sw = 0.0;
        let (mut abar, mut bbar) = ([0.0; 2], [0.0; 2]);
        let ab: Vec<([f64; 2], [f64; 2], f64)> = idx
            .iter()
            .map(|&i| {
                let r = &self.rays[i];
                let b = [r.direction.x / r.direction.z, r.direction.y / r.direction.z];
                let a = [r.origin.x - r.origin.z * b[0], r.origin.y - r.origin.z * b[1]];
                (a, b, r.amplitude_weight)
            })
            .collect();
        for (a, b, w) in &ab {
            for k in 0..2 {
                abar[k] += w * a[k];
                bbar[k] += w * b[k];
            }
            sw += w;
        }
        for k in 0..2 {
            abar[k] /= sw;
            bbar[k] /= sw;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for (a, b, w) in &ab {
            for k in 0..2 {
                num += w * (a[k] - abar[k]) * (b[k] - bbar[k]);
                den += w * (b[k] - bbar[k]).powi(2);
            }
        }
        if den == 0.0 {
            return Err(Error::InvalidParameter("bundle is collimated; no focus".into()));
        }
        Ok(-num / den)
    }

    /// Weighted RMS angle (rad) between exit directions and their mean.
    pub fn direction_spread_rms(&self) -> f64 {
        let idx: Vec<usize> = self.core_rays().collect();
        let mut mean = Vec3::zeros();
        let mut sw = 0.0;
        for &i in &idx {
            mean += self.rays[i].direction * self.rays[i].amplitude_weight;
            sw += self.rays[i].amplitude_weight;
        }
        let mean = mean.normalize();
        let ms = idx
            .iter()
            .map(|&i| {
                let ang = 2.0 * ((self.rays[i].direction - mean).norm() / 2.0).asin();
                self.rays[i].amplitude_weight * ang * ang
            })
            .sum::<f64>()
            / sw;
        ms.sqrt()
    }

    /// Optical path to the reference surface for every alive ray.
    pub fn wavefront(&self, reference: &Reference) -> Vec<Option<WavefrontSample>> {
        self.rays
            .iter()
            .map(|r| {
                if !r.alive {
                    return None;
                }
                let s = match *reference {
                    Reference::Plane { z } => (z - r.origin.z) / r.direction.z,
                    Reference::Sphere { center, radius } => {
                        let pc = r.origin - center;
                        let b = r.direction.dot(&pc);
                        let c = pc.norm_squared() - radius * radius;
                        let disc = b * b - c;
                        if disc < 0.0 {
                            return None;
                        }
                        -b - disc.sqrt()
                    }
                };
                let p = r.origin + r.direction * s;
                Some(WavefrontSample {
                    pupil: [p.x, p.y],
                    optical_path: r.optical_path + s,
                })
            })
            .collect()
    }

    /// Weighted RMS optical path difference (mm) over the nominal cone.
    pub fn opd_rms(&self, reference: &Reference) -> f64 {
        let wf = self.wavefront(reference);
        let idx: Vec<usize> = self.core_rays().filter(|&i| wf[i].is_some()).collect();
        let sw: f64 = idx.iter().map(|&i| self.rays[i].amplitude_weight).sum();
        let mean = idx
            .iter()
            .map(|&i| self.rays[i].amplitude_weight * wf[i].unwrap().optical_path)
            .sum::<f64>()
            / sw;
        (idx.iter()
            .map(|&i| self.rays[i].amplitude_weight * (wf[i].unwrap().optical_path - mean).powi(2))
            .sum::<f64>()
            / sw)
            .sqrt()
    }
}
