use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use super::PupilField;
use crate::error::{ensure, Result};

/// Power per sample on a square image grid. Sample `(i, j)` is centred at
/// `origin_um + (i, j) * pitch_um`; storage is row-major with y outer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntensityImage {
    pub n: usize,
    pub pitch_um: f64,
    pub origin_um: [f64; 2],
    pub values: Vec<f64>,
}

impl IntensityImage {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn position(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin_um[0] + i as f64 * self.pitch_um,
            self.origin_um[1] + j as f64 * self.pitch_um,
        ]
    }

    pub fn centroid_um(&self) -> [f64; 2] {
        let mut c = [0.0; 2];
        let mut s = 0.0;
        for j in 0..self.n {
            for i in 0..self.n {
                let v = self.values[j * self.n + i];
                let p = self.position(i, j);
                c[0] += v * p[0];
                c[1] += v * p[1];
                s += v;
            }
        }
        [c[0] / s, c[1] / s]
    }

    pub fn peak(&self) -> (usize, f64) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |a, (k, v)| if v > a.1 { (k, v) } else { a })
    }

    /// Sum `k x k` blocks into coarser pixels. Trailing rows and columns that
    /// do not fill a block are dropped.
    pub fn bin(&self, k: usize) -> IntensityImage {
        let m = self.n / k;
        let mut values = vec![0.0; m * m];
        for j in 0..m * k {
            for i in 0..m * k {
                values[(j / k) * m + i / k] += self.values[j * self.n + i];
            }
        }
        let shift = 0.5 * (k as f64 - 1.0) * self.pitch_um;
        IntensityImage {
            n: m,
            pitch_um: self.pitch_um * k as f64,
            origin_um: [self.origin_um[0] + shift, self.origin_um[1] + shift],
            values,
        }
    }
}

/// Complex focal-plane field, normalised so that `sum |E|^2 pitch^2` equals
/// the pupil power `sum |P|^2 dalpha^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FocalField {
    pub n: usize,
    pub pitch_um: f64,
    pub origin_um: [f64; 2],
    pub values: Vec<Complex64>,
}

impl FocalField {
    pub fn intensity(&self) -> IntensityImage {
        let a = self.pitch_um * self.pitch_um;
        IntensityImage {
            n: self.n,
            pitch_um: self.pitch_um,
            origin_um: self.origin_um,
            values: self.values.iter().map(|v| v.norm_sqr() * a).collect(),
        }
    }
}

pub fn airy_radius_um(wavelength_nm: f64, na: f64) -> f64 {
    0.61 * wavelength_nm * 1e-3 / na
}

fn complex_pupil(field: &PupilField) -> Vec<Complex64> {
    field
        .amplitude
        .iter()
        .zip(&field.wavefront_waves)
        .map(|(a, w)| {
            if *a == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::from_polar(*a, std::f64::consts::TAU * w)
            }
        })
        .collect()
}

/// Power in pupil units, `sum |P|^2 dalpha^2`.
pub(crate) fn pupil_power(field: &PupilField, image_na: f64) -> f64 {
    let da = field.du() * image_na;
    field.power() * da * da
}

/// Far-field intensity by FFT over the full pupil grid. Image pitch is
/// `lambda / (n dalpha)`; Parseval holds to rounding.
pub fn psf(field: &PupilField, image_na: f64) -> Result<IntensityImage> {
    ensure(image_na > 0.0 && image_na < 1.0, || format!("image NA {image_na} outside (0, 1)"))?;
    let n = field.n;
    let mut data = complex_pupil(field);
    let half = n / 2;
    // ifftshift so the pupil centre sits at index 0
    let mut shifted = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..n {
        for i in 0..n {
            shifted[((j + half) % n) * n + (i + half) % n] = data[j * n + i];
        }
    }
    data = shifted;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    data.par_chunks_mut(n).for_each(|row| fft.process(row));
    let mut t = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..n {
        for i in 0..n {
            t[i * n + j] = data[j * n + i];
        }
    }
    t.par_chunks_mut(n).for_each(|col| fft.process(col));
    let da = field.du() * image_na;
    let scale = da * da / (n * n) as f64;
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            // fftshift back to a centred image
            let v = t[i * n + j].norm_sqr() * scale;
            values[((j + half) % n) * n + (i + half) % n] = v;
        }
    }
    let lambda_um = field.wavelength_nm * 1e-3;
    let pitch = lambda_um / (n as f64 * da);
    Ok(IntensityImage {
        n,
        pitch_um: pitch,
        origin_um: [-(half as f64) * pitch, -(half as f64) * pitch],
        values,
    })
}

/// Focal field on an arbitrary `n_out x n_out` grid centred at `center_um`,
/// by a separable matrix Fourier transform.
pub fn focal_field(
    field: &PupilField,
    image_na: f64,
    pitch_um: f64,
    n_out: usize,
    center_um: [f64; 2],
) -> Result<FocalField> {
    ensure(image_na > 0.0 && image_na < 1.0, || format!("image NA {image_na} outside (0, 1)"))?;
    ensure(pitch_um > 0.0 && n_out > 0, || "output grid must be non-empty".into())?;
    let n = field.n;
    let lambda_um = field.wavelength_nm * 1e-3;
    let da = field.du() * image_na;
    let alpha: Vec<f64> = (0..n).map(|i| field.coord(i) * image_na).collect();
    let half_out = 0.5 * (n_out as f64 - 1.0);
    let xs: Vec<f64> = (0..n_out).map(|k| center_um[0] + (k as f64 - half_out) * pitch_um).collect();
    let ys: Vec<f64> = (0..n_out).map(|k| center_um[1] + (k as f64 - half_out) * pitch_um).collect();
    let kernel = |coords: &[f64]| -> Vec<Complex64> {
        // kernel[k * n + i] = exp(-i 2 pi alpha_i x_k / lambda)
        let mut out = Vec::with_capacity(coords.len() * n);
        for &x in coords {
            for &a in &alpha {
                out.push(Complex64::from_polar(1.0, -std::f64::consts::TAU * a * x / lambda_um));
            }
        }
        out
    };
    let kx = kernel(&xs);
    let ky = kernel(&ys);
    let p = complex_pupil(field);
    // stage 1: T[j][k] = sum_i P[j][i] Kx[k][i], skipping empty pupil rows
    let t: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let row = &p[j * n..(j + 1) * n];
            let nz: Vec<usize> = (0..n).filter(|&i| row[i].re != 0.0 || row[i].im != 0.0).collect();
            if nz.is_empty() {
                return Vec::new();
            }
            (0..n_out)
                .map(|k| {
                    let kr = &kx[k * n..(k + 1) * n];
                    nz.iter().map(|&i| row[i] * kr[i]).sum()
                })
                .collect()
        })
        .collect();
    let rows: Vec<usize> = (0..n).filter(|&j| !t[j].is_empty()).collect();
    let scale = da * da / lambda_um;
    // stage 2: E[l][k] = sum_j Ky[l][j] T[j][k]
    let values: Vec<Complex64> = (0..n_out)
        .into_par_iter()
        .flat_map_iter(|l| {
            let kr = &ky[l * n..(l + 1) * n];
            let mut acc = vec![Complex64::new(0.0, 0.0); n_out];
            for &j in &rows {
                let w = kr[j];
                for (a, tv) in acc.iter_mut().zip(&t[j]) {
                    *a += w * tv;
                }
            }
            acc.into_iter().map(move |v| v * scale)
        })
        .collect();
    Ok(FocalField {
        n: n_out,
        pitch_um,
        origin_um: [xs[0], ys[0]],
        values,
    })
}

/// Zoomed intensity image; see [`focal_field`].
pub fn psf_zoom(
    field: &PupilField,
    image_na: f64,
    pitch_um: f64,
    n_out: usize,
    center_um: [f64; 2],
) -> Result<IntensityImage> {
    Ok(focal_field(field, image_na, pitch_um, n_out, center_um)?.intensity())
}

/// Peak intensity relative to the same pupil amplitude without aberration.
/// The peak is located on the FFT image and refined twice by zooming.
pub fn strehl(field: &PupilField, image_na: f64) -> Result<f64> {
    let coarse = psf(field, image_na)?;
    let (k, _) = coarse.peak();
    let mut centre = coarse.position(k % coarse.n, k / coarse.n);
    let mut pitch = coarse.pitch_um;
    let mut best = 0.0;
    for _ in 0..3 {
        pitch /= 8.0;
        let img = focal_field(field, image_na, pitch, 33, centre)?;
        let (k, v) = img
            .values
            .iter()
            .map(|v| v.norm_sqr())
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |a, (k, v)| if v > a.1 { (k, v) } else { a });
        centre = [
            img.origin_um[0] + (k % img.n) as f64 * pitch,
            img.origin_um[1] + (k / img.n) as f64 * pitch,
        ];
        best = v;
    }
    let lambda_um = field.wavelength_nm * 1e-3;
    let da = field.du() * image_na;
    let sum_a: f64 = field.amplitude.iter().sum();
    let ideal = (sum_a * da * da / lambda_um).powi(2);
    Ok(best / ideal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn parseval_fft() {
        let p = PupilField::from_fn(128, 2.0, 500.0, 1.0, |u, v| (1.0 - 0.3 * (u * u + v * v), 0.2 * u * v)).unwrap();
        let img = psf(&p, 0.1).unwrap();
        let rel = (img.total() / pupil_power(&p, 0.1) - 1.0).abs();
        assert!(rel < 1e-12, "{rel}");
    }

    #[test]
    fn airy_first_zero() {
        let p = PupilField::uniform(256, 2.0, 500.0).unwrap();
        let na = 0.1;
        let airy = airy_radius_um(500.0, na);
        // radial cut along x through the centre
        let n = 201;
        let pitch = 1.2 * airy / 100.0;
        let f = focal_field(&p, na, pitch, n, [0.6 * airy, 0.0]).unwrap();
        let row = n / 2;
        let cut: Vec<f64> = (0..n).map(|i| f.values[row * n + i].norm_sqr()).collect();
        let (imin, _) = cut
            .iter()
            .enumerate()
            .skip(20)
            .take(160)
            .fold((0, f64::INFINITY), |a, (i, &v)| if v < a.1 { (i, v) } else { a });
        let x = f.origin_um[0] + imin as f64 * pitch;
        assert!((x / airy - 1.0).abs() < 0.01, "{x} vs {airy}");
    }

    #[test]
    fn zoom_agrees_with_fft_on_grid() {
        let p = PupilField::from_fn(64, 2.0, 600.0, 1.0, |u, _| (1.0, 0.1 * u * u)).unwrap();
        let img = psf(&p, 0.2).unwrap();
        let z = psf_zoom(&p, 0.2, img.pitch_um, 64, [-0.5 * img.pitch_um, -0.5 * img.pitch_um]).unwrap();
        for j in 0..64 {
            for i in 0..64 {
                let a = img.values[j * 64 + i];
                let b = z.values[j * 64 + i];
                assert!((a - b).abs() < 1e-9 * img.peak().1, "{a} {b}");
            }
        }
    }

    #[test]
    fn unaberrated_strehl_is_one() {
        let p = PupilField::from_fn(128, 2.0, 500.0, 1.0, |u, v| ((1.0 - 0.64 * (u * u + v * v)).powf(0.75), 0.0)).unwrap();
        let s = strehl(&p, 0.1).unwrap();
        assert!((s - 1.0).abs() < 1e-9, "{s}");
    }

    #[test]
    fn marechal_regime() {
        // smooth random aberration, sigma = lambda / 14
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let c: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let raw = PupilField::from_fn(256, 2.0, 500.0, 1.0, |u, v| {
            let (r, t) = (u.hypot(v), v.atan2(u));
            (1.0, (5..15).map(|j| c[j - 5] * super::super::zernike(j, r, t)).sum())
        })
        .unwrap();
        let sigma = raw.wavefront_rms();
        let target = 1.0 / 14.0;
        let mut p = raw.clone();
        for w in p.wavefront_waves.iter_mut() {
            *w *= target / sigma;
        }
        let s = strehl(&p, 0.1).unwrap();
        let m = (-(std::f64::consts::TAU * target).powi(2)).exp();
        assert!(s < 1.0);
        assert!((s / m - 1.0).abs() < 0.2, "{s} vs {m}");
    }

    #[test]
    fn even_phase_gives_symmetric_psf() {
        let p = PupilField::from_fn(64, 2.0, 500.0, 1.0, |u, v| (1.0, 0.2 * (u * u + v * v) + 0.1 * u * u * v * v)).unwrap();
        let img = psf_zoom(&p, 0.1, 0.3, 41, [0.0, 0.0]).unwrap();
        let n = img.n;
        for j in 0..n {
            for i in 0..n {
                let a = img.values[j * n + i];
                let b = img.values[(n - 1 - j) * n + (n - 1 - i)];
                assert!((a - b).abs() <= 1e-10 * img.peak().1);
            }
        }
    }

    #[test]
    fn tilt_moves_centroid() {
        let c = 0.3;
        let na = 0.1;
        // a hard-edged pupil has Airy tails whose first moment diverges, so
        // taper the amplitude to zero at the rim
        let p = PupilField::from_fn(128, 2.0, 500.0, 1.0, |u, v| {
            let r2 = u * u + v * v;
            ((1.0 - r2).powi(2), c * super::super::zernike(2, r2.sqrt(), v.atan2(u)))
        })
        .unwrap();
        let expect = 2.0 * c * 0.5 / na;
        let img = psf(&p, na).unwrap();
        let cen = img.centroid_um();
        assert!((cen[0] / expect - 1.0).abs() < 0.01, "{cen:?} vs {expect}");
        assert!(cen[1].abs() < 1e-6);
    }
}
