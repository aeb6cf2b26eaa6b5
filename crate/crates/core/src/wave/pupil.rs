use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::raytrace::{BundleLayout, Reference, TracedBundle};

/// Radial amplitude weighting of the pupil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Apodization {
    /// Intensity proportional to cos^3 of the emission angle.
    #[default]
    CosineCubed,
    Uniform,
}

impl Apodization {
    fn amplitude(self, sin_theta: f64) -> f64 {
        match self {
            Apodization::CosineCubed => (1.0 - sin_theta * sin_theta).max(0.0).powf(0.75),
            Apodization::Uniform => 1.0,
        }
    }
}

/// Sampled scalar field over the exit pupil.
///
/// Grid sample `(i, j)` sits at normalised coordinates
/// `u = (i - n/2) du`, `v = (j - n/2) du` with `du = 2 extent / n`; the pupil
/// rim is at radius 1. Storage is row-major with `v` outer.
#[derive(Debug, Clone, PartialEq)]
pub struct PupilField {
    pub n: usize,
    pub extent: f64,
    /// Physical rim radius (mm).
    pub pupil_radius: f64,
    pub wavelength_nm: f64,
    pub amplitude: Vec<f64>,
    pub wavefront_waves: Vec<f64>,
}

impl PupilField {
    pub fn du(&self) -> f64 {
        2.0 * self.extent / self.n as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.du()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    /// Build a field from a function of normalised coordinates returning
    /// (amplitude, wavefront in waves). Samples outside the unit disk are
    /// forced to zero.
    pub fn from_fn<F>(n: usize, extent: f64, wavelength_nm: f64, pupil_radius: f64, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> (f64, f64) + Sync,
    {
        ensure(n >= 8 && n % 2 == 0, || format!("grid size {n} must be even and >= 8"))?;
        if extent < 2.0 {
            return Err(Error::Aliasing(format!(
                "pupil spans more than half the grid (extent {extent} < 2)"
            )));
        }
        ensure(wavelength_nm > 0.0 && pupil_radius > 0.0, || "wavelength and pupil radius must be positive".into())?;
        let du = 2.0 * extent / n as f64;
        let half = (n / 2) as f64;
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|j| {
                let v = (j as f64 - half) * du;
                let mut a = vec![0.0; n];
                let mut w = vec![0.0; n];
                for i in 0..n {
                    let u = (i as f64 - half) * du;
                    if u * u + v * v <= 1.0 {
                        let (amp, wav) = f(u, v);
                        a[i] = amp;
                        w[i] = if amp != 0.0 { wav } else { 0.0 };
                    }
                }
                (a, w)
            })
            .collect();
        let mut amplitude = Vec::with_capacity(n * n);
        let mut wavefront_waves = Vec::with_capacity(n * n);
        for (a, w) in rows {
            amplitude.extend(a);
            wavefront_waves.extend(w);
        }
        let field = Self {
            n,
            extent,
            pupil_radius,
            wavelength_nm,
            amplitude,
            wavefront_waves,
        };
        ensure(field.power() > 0.0, || "pupil has no power".into())?;
        Ok(field)
    }

    pub fn uniform(n: usize, extent: f64, wavelength_nm: f64) -> Result<Self> {
        Self::from_fn(n, extent, wavelength_nm, 1.0, |_, _| (1.0, 0.0))
    }

    /// Sum of |field|^2 over samples.
    pub fn power(&self) -> f64 {
        self.amplitude.iter().map(|a| a * a).sum()
    }

    /// Add a wavefront contribution in waves, evaluated on normalised
    /// coordinates, over the support of the field.
    pub fn add_wavefront<F: Fn(f64, f64) -> f64 + Sync>(&mut self, f: F) {
        let n = self.n;
        let du = self.du();
        let half = (n / 2) as f64;
        self.wavefront_waves
            .par_chunks_mut(n)
            .zip(self.amplitude.par_chunks(n))
            .enumerate()
            .for_each(|(j, (w, a))| {
                let v = (j as f64 - half) * du;
                for i in 0..n {
                    if a[i] != 0.0 {
                        w[i] += f((i as f64 - half) * du, v);
                    }
                }
            });
    }

    /// Amplitude-weighted RMS wavefront about its weighted mean (waves).
    pub fn wavefront_rms(&self) -> f64 {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (a, w) in self.amplitude.iter().zip(&self.wavefront_waves) {
            let p = a * a;
            s0 += p;
            s1 += p * w;
            s2 += p * w * w;
        }
        let mean = s1 / s0;
        (s2 / s0 - mean * mean).max(0.0).sqrt()
    }

    /// Bilinear interpolation of the wavefront (waves) at normalised
    /// coordinates. `None` if any contributing sample lies outside the
    /// support.
    pub fn sample_wavefront(&self, u: f64, v: f64) -> Option<f64> {
        let du = self.du();
        let half = (self.n / 2) as f64;
        let x = u / du + half;
        let y = v / du + half;
        let i0 = x.floor();
        let j0 = y.floor();
        if i0 < 0.0 || j0 < 0.0 || i0 + 1.0 >= self.n as f64 || j0 + 1.0 >= self.n as f64 {
            return None;
        }
        let (i0, j0) = (i0 as usize, j0 as usize);
        let fx = x - i0 as f64;
        let fy = y - j0 as f64;
        let mut acc = 0.0;
        for (di, dj, w) in [
            (0, 0, (1.0 - fx) * (1.0 - fy)),
            (1, 0, fx * (1.0 - fy)),
            (0, 1, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ] {
            let k = self.index(i0 + di, j0 + dj);
            if w > 0.0 && self.amplitude[k] == 0.0 {
                return None;
            }
            acc += w * self.wavefront_waves[k];
        }
        Some(acc)
    }
}

/// Interpolated launch direction cosines and optical path at one pupil point.
#[derive(Clone, Copy)]
struct Sample {
    s: [f64; 2],
    opl: f64,
}

/// Pupil coordinates (mm) of every ray on the reference surface.
fn pupil_points(bundle: &TracedBundle, reference: &Reference) -> Vec<Option<([f64; 2], f64)>> {
    bundle
        .wavefront(reference)
        .into_iter()
        .map(|w| w.map(|w| (w.pupil, w.optical_path)))
        .collect()
}

fn rasterize_grid(
    n_launch: usize,
    cells: &[Option<usize>],
    pts: &[Option<([f64; 2], f64)>],
    bundle: &TracedBundle,
    n: usize,
    du_mm: f64,
) -> Vec<Option<Sample>> {
    let half = (n / 2) as f64;
    let mut out: Vec<Option<Sample>> = vec![None; n * n];
    let node = |ix: usize, iy: usize| -> Option<usize> {
        let k = cells[iy * n_launch + ix]?;
        pts[k].map(|_| k)
    };
    let mut tris = Vec::new();
    for iy in 0..n_launch - 1 {
        for ix in 0..n_launch - 1 {
            let a = node(ix, iy);
            let b = node(ix + 1, iy);
            let c = node(ix, iy + 1);
            let d = node(ix + 1, iy + 1);
            if let (Some(a), Some(b), Some(d)) = (a, b, d) {
                tris.push([a, b, d]);
            }
            if let (Some(a), Some(d), Some(c)) = (a, d, c) {
                tris.push([a, d, c]);
            }
        }
    }
    for t in tris {
        let p = t.map(|k| pts[k].unwrap().0);
        let denom = (p[1][1] - p[2][1]) * (p[0][0] - p[2][0]) + (p[2][0] - p[1][0]) * (p[0][1] - p[2][1]);
        if denom.abs() < 1e-300 {
            continue;
        }
        let xmin = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min);
        let xmax = p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max);
        let ymin = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min);
        let ymax = p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max);
        let i0 = ((xmin / du_mm + half).ceil().max(0.0)) as usize;
        let i1 = ((xmax / du_mm + half).floor()).min(n as f64 - 1.0);
        let j0 = ((ymin / du_mm + half).ceil().max(0.0)) as usize;
        let j1 = ((ymax / du_mm + half).floor()).min(n as f64 - 1.0);
        if i1 < 0.0 || j1 < 0.0 {
            continue;
        }
        for j in j0..=(j1 as usize) {
            let y = (j as f64 - half) * du_mm;
            for i in i0..=(i1 as usize) {
                let x = (i as f64 - half) * du_mm;
                let l0 = ((p[1][1] - p[2][1]) * (x - p[2][0]) + (p[2][0] - p[1][0]) * (y - p[2][1])) / denom;
                let l1 = ((p[2][1] - p[0][1]) * (x - p[2][0]) + (p[0][0] - p[2][0]) * (y - p[2][1])) / denom;
                let l2 = 1.0 - l0 - l1;
                let eps = -1e-12;
                if l0 < eps || l1 < eps || l2 < eps {
                    continue;
                }
                let w = [l0, l1, l2];
                let mut s = [0.0; 2];
                let mut opl = 0.0;
                for k in 0..3 {
                    let launch = bundle.launch[t[k]];
                    s[0] += w[k] * launch[0];
                    s[1] += w[k] * launch[1];
                    opl += w[k] * pts[t[k]].unwrap().1;
                }
                out[j * n + i] = Some(Sample { s, opl });
            }
        }
    }
    out
}

/// Piecewise-linear radial mapping for a meridional fan.
fn rasterize_fan(pts: &[Option<([f64; 2], f64)>], bundle: &TracedBundle, n: usize, du_mm: f64) -> Result<Vec<Option<Sample>>> {
    let mut nodes: Vec<(f64, f64, f64)> = pts
        .iter()
        .zip(&bundle.launch)
        .filter_map(|(p, l)| p.map(|(xy, opl)| (xy[0].hypot(xy[1]), l[0].hypot(l[1]), opl)))
        .collect();
    nodes.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if nodes.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InsufficientSampling("fan mapping to the pupil is not monotone".into()));
    }
    let half = (n / 2) as f64;
    let rmax = nodes.last().unwrap().0;
    Ok((0..n * n)
        .into_par_iter()
        .map(|k| {
            let x = ((k % n) as f64 - half) * du_mm;
            let y = ((k / n) as f64 - half) * du_mm;
            let r = x.hypot(y);
            if r > rmax {
                return None;
            }
            let idx = nodes.partition_point(|nd| nd.0 < r).max(1).min(nodes.len() - 1);
            let (a, b) = (nodes[idx - 1], nodes[idx]);
            let t = ((r - a.0) / (b.0 - a.0)).clamp(0.0, 1.0);
            let s = a.1 + t * (b.1 - a.1);
            let opl = a.2 + t * (b.2 - a.2);
            let (c, sn) = if r > 0.0 { (x / r, y / r) } else { (1.0, 0.0) };
            Some(Sample { s: [s * c, s * sn], opl })
        })
        .collect())
}

/// Resample a traced bundle onto an `n x n` pupil grid with `extent` times
/// the rim radius as the grid half-width.
///
/// The rim is where the interpolated launch direction reaches the bundle NA;
/// amplitude follows `apodization` of the interpolated emission angle and the
/// wavefront is the optical path to `reference` relative to its mean.
pub fn build_pupil(
    bundle: &TracedBundle,
    reference: &Reference,
    n: usize,
    extent: f64,
    apodization: Apodization,
) -> Result<PupilField> {
    if extent < 2.0 {
        return Err(Error::Aliasing(format!("extent {extent} < 2")));
    }
    ensure(n >= 8 && n % 2 == 0, || format!("grid size {n} must be even and >= 8"))?;
    if let Reference::Plane { .. } = reference {
        let spread = bundle.direction_spread_rms();
        if spread > 1e-3 {
            return Err(Error::InvalidParameter(format!(
                "bundle is not collimated (RMS spread {spread:.2e} rad)"
            )));
        }
    }
    match &bundle.layout {
        BundleLayout::Grid { n: nl, .. } if *nl < 16 => {
            return Err(Error::InsufficientSampling(format!("{nl} rays across the pupil; need 16")))
        }
        BundleLayout::Fan if bundle.rays.len() < 8 => {
            return Err(Error::InsufficientSampling("fewer than 8 fan rays".into()))
        }
        BundleLayout::Random => {
            return Err(Error::InsufficientSampling("random bundles cannot be resampled".into()))
        }
        _ => {}
    }
    let pts = pupil_points(bundle, reference);
    let rmax_all = pts
        .iter()
        .flatten()
        .map(|(p, _)| p[0].hypot(p[1]))
        .fold(0.0, f64::max);
    if rmax_all == 0.0 {
        return Err(Error::InsufficientSampling("no rays reach the reference".into()));
    }
    let na = bundle.na;
    let raster = |du_mm: f64| -> Result<Vec<Option<Sample>>> {
        match &bundle.layout {
            BundleLayout::Grid { n: nl, cells } => Ok(rasterize_grid(*nl, cells, &pts, bundle, n, du_mm)),
            BundleLayout::Fan => rasterize_fan(&pts, bundle, n, du_mm),
            BundleLayout::Random => unreachable!(),
        }
    };
    // first pass locates the rim, second pass samples with the rim at radius 1
    let first = raster(2.0 * extent * rmax_all / n as f64)?;
    let du1 = 2.0 * extent * rmax_all / n as f64;
    let half = (n / 2) as f64;
    let mut rim = 0.0f64;
    for (k, s) in first.iter().enumerate() {
        if let Some(s) = s {
            if s.s[0].hypot(s.s[1]) <= na {
                let x = ((k % n) as f64 - half) * du1;
                let y = ((k / n) as f64 - half) * du1;
                rim = rim.max(x.hypot(y));
            }
        }
    }
    if rim == 0.0 {
        return Err(Error::InsufficientSampling("no pupil samples inside the NA".into()));
    }
    // the rim estimate is quantised to the first-pass grid; refine it by one
    // sample so the NA edge is never clipped by the unit-disk mask
    let rim = rim + du1;
    let du_mm = 2.0 * extent * rim / n as f64;
    let second = raster(du_mm)?;
    let lambda_mm = bundle.wavelength_nm * 1e-6;

    let mut amplitude = vec![0.0; n * n];
    let mut opl = vec![0.0; n * n];
    let (mut s0, mut s1) = (0.0, 0.0);
    for (k, s) in second.iter().enumerate() {
        if let Some(s) = s {
            let st = s.s[0].hypot(s.s[1]);
            if st <= na {
                let a = apodization.amplitude(st);
                amplitude[k] = a;
                opl[k] = s.opl;
                s0 += a * a;
                s1 += a * a * s.opl;
            }
        }
    }
    if s0 == 0.0 {
        return Err(Error::InsufficientSampling("empty pupil".into()));
    }
    let mean = s1 / s0;
    let wavefront_waves = amplitude
        .iter()
        .zip(&opl)
        .map(|(a, o)| if *a != 0.0 { (o - mean) / lambda_mm } else { 0.0 })
        .collect();
    Ok(PupilField {
        n,
        extent,
        pupil_radius: rim,
        wavelength_nm: bundle.wavelength_nm,
        amplitude,
        wavefront_waves,
    })
}
