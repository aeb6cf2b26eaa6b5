use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;

use super::PupilField;
use crate::error::{ensure, Result};

/// Surface height error sampled on a pupil grid (nm).
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceErrorMap {
    pub n: usize,
    pub extent: f64,
    pub values_nm: Vec<f64>,
}

impl SurfaceErrorMap {
    /// RMS over the unit disk.
    pub fn rms_in_disk(&self) -> f64 {
        let du = 2.0 * self.extent / self.n as f64;
        let half = (self.n / 2) as f64;
        let (mut s, mut c) = (0.0, 0usize);
        for j in 0..self.n {
            for i in 0..self.n {
                let u = (i as f64 - half) * du;
                let v = (j as f64 - half) * du;
                if u * u + v * v <= 1.0 {
                    s += self.values_nm[j * self.n + i].powi(2);
                    c += 1;
                }
            }
        }
        (s / c as f64).sqrt()
    }

    /// Add the wavefront of this error on a refracting surface with index
    /// `index` (in vacuum) to `field`.
    pub fn apply(&self, field: &mut PupilField, index: f64) -> Result<()> {
        ensure(
            field.n == self.n && field.extent == self.extent,
            || "surface map and pupil grids differ".into(),
        )?;
        let scale = (index - 1.0) / field.wavelength_nm;
        for (k, w) in field.wavefront_waves.iter_mut().enumerate() {
            if field.amplitude[k] != 0.0 {
                *w += scale * self.values_nm[k];
            }
        }
        Ok(())
    }
}

/// Gaussian random surface with Gaussian correlation of length
/// `correlation_length_mm`, scaled so the RMS over the aperture disk equals
/// `rms_nm` after piston removal.
pub fn surface_error_map(
    rms_nm: f64,
    correlation_length_mm: f64,
    aperture_radius_mm: f64,
    n: usize,
    extent: f64,
    seed: u64,
) -> Result<SurfaceErrorMap> {
    ensure(rms_nm >= 0.0 && rms_nm.is_finite(), || "rms must be >= 0".into())?;
    ensure(correlation_length_mm > 0.0 && aperture_radius_mm > 0.0, || "lengths must be positive".into())?;
    ensure(n >= 8 && n % 2 == 0, || "grid size must be even and >= 8".into())?;
    if rms_nm == 0.0 {
        return Ok(SurfaceErrorMap { n, extent, values_nm: vec![0.0; n * n] });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data: Vec<Complex64> = (0..n * n)
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let fft2 = |d: &mut Vec<Complex64>, f: &std::sync::Arc<dyn rustfft::Fft<f64>>| {
        for row in d.chunks_mut(n) {
            f.process(row);
        }
        let mut t = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            for i in 0..n {
                t[i * n + j] = d[j * n + i];
            }
        }
        for col in t.chunks_mut(n) {
            f.process(col);
        }
        for j in 0..n {
            for i in 0..n {
                d[j * n + i] = t[i * n + j];
            }
        }
    };
    fft2(&mut data, &fwd);
    // correlation exp(-r^2 / L^2) has spectrum proportional to
    // exp(-pi^2 L^2 f^2); filter amplitude is its square root
    let pitch_mm = 2.0 * extent * aperture_radius_mm / n as f64;
    let l = correlation_length_mm;
    for j in 0..n {
        let fy = (if j <= n / 2 { j as f64 } else { j as f64 - n as f64 }) / (n as f64 * pitch_mm);
        for i in 0..n {
            let fx = (if i <= n / 2 { i as f64 } else { i as f64 - n as f64 }) / (n as f64 * pitch_mm);
            let f2 = fx * fx + fy * fy;
            data[j * n + i] *= (-0.5 * std::f64::consts::PI.powi(2) * l * l * f2).exp();
        }
    }
    fft2(&mut data, &inv);
    let mut values: Vec<f64> = data.iter().map(|c| c.re).collect();
    // remove piston over the disk and normalise
    let du = 2.0 * extent / n as f64;
    let half = (n / 2) as f64;
    let in_disk = |k: usize| {
        let u = ((k % n) as f64 - half) * du;
        let v = ((k / n) as f64 - half) * du;
        u * u + v * v <= 1.0
    };
    let (mut s, mut c) = (0.0, 0usize);
    for (k, v) in values.iter().enumerate() {
        if in_disk(k) {
            s += v;
            c += 1;
        }
    }
    let mean = s / c as f64;
    for v in values.iter_mut() {
        *v -= mean;
    }
    let map = SurfaceErrorMap { n, extent, values_nm: values };
    let scale = rms_nm / map.rms_in_disk();
    Ok(SurfaceErrorMap {
        values_nm: map.values_nm.iter().map(|v| v * scale).collect(),
        ..map
    })
}
