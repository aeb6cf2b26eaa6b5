use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::PupilField;
use crate::error::{Error, Result};

/// Noll index (from 1) to radial order n and signed azimuthal order m.
/// Positive m is a cosine term, negative m a sine term.
pub fn noll_to_nm(j: usize) -> (usize, i64) {
    assert!(j >= 1, "Noll indices start at 1");
    let mut n = 0usize;
    while (n + 1) * (n + 2) / 2 < j {
        n += 1;
    }
    // position within the radial order
    let k = j - n * (n + 1) / 2 - 1;
    let m = if n % 2 == 0 {
        2 * ((k + 1) / 2)
    } else {
        2 * (k / 2) + 1
    };
    let m = m as i64;
    if m == 0 {
        (n, 0)
    } else if j % 2 == 0 {
        (n, m)
    } else {
        (n, -m)
    }
}

fn radial(n: usize, m: usize, rho: f64) -> f64 {
    let mut sum = 0.0;
    let fact = |k: usize| -> f64 { (1..=k).map(|v| v as f64).product() };
    for s in 0..=((n - m) / 2) {
        let num = if s % 2 == 0 { 1.0 } else { -1.0 } * fact(n - s);
        let den = fact(s) * fact((n + m) / 2 - s) * fact((n - m) / 2 - s);
        sum += num / den * rho.powi((n - 2 * s) as i32);
    }
    sum
}

/// Unit-RMS Zernike polynomial with Noll index `j` at polar coordinates.
pub fn zernike(j: usize, rho: f64, theta: f64) -> f64 {
    let (n, m) = noll_to_nm(j);
    let ma = m.unsigned_abs() as usize;
    let r = radial(n, ma, rho);
    if m == 0 {
        ((n + 1) as f64).sqrt() * r
    } else if m > 0 {
        (2.0 * (n + 1) as f64).sqrt() * r * (ma as f64 * theta).cos()
    } else {
        (2.0 * (n + 1) as f64).sqrt() * r * (ma as f64 * theta).sin()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ZernikeFit {
    /// Coefficients in waves; entry k is Noll index k + 1.
    pub coefficients: Vec<f64>,
    /// RMS of the fit residual over the pupil support (waves).
    pub residual_rms: f64,
}

impl ZernikeFit {
    pub fn noll(&self, j: usize) -> f64 {
        self.coefficients[j - 1]
    }

    pub fn evaluate(&self, rho: f64, theta: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(k, c)| c * zernike(k + 1, rho, theta))
            .sum()
    }
}

/// Least-squares fit of the wavefront over the pupil support with Noll terms
/// 1..=max_noll.
pub fn zernike_fit(field: &PupilField, max_noll: usize) -> Result<ZernikeFit> {
    if max_noll == 0 {
        return Err(Error::InvalidParameter("max_noll must be >= 1".into()));
    }
    let mut pts = Vec::new();
    for j in 0..field.n {
        for i in 0..field.n {
            let k = field.index(i, j);
            if field.amplitude[k] != 0.0 {
                let u = field.coord(i);
                let v = field.coord(j);
                pts.push((u.hypot(v), v.atan2(u), field.wavefront_waves[k]));
            }
        }
    }
    if pts.len() < max_noll {
        return Err(Error::RankDeficient(format!(
            "{} pupil samples for {max_noll} terms",
            pts.len()
        )));
    }
    let a = DMatrix::from_fn(pts.len(), max_noll, |r, c| zernike(c + 1, pts[r].0, pts[r].1));
    let b = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.2));
    let qr = a.clone().qr();
    let r = qr.r();
    let diag_max = (0..max_noll).map(|k| r[(k, k)].abs()).fold(0.0, f64::max);
    for k in 0..max_noll {
        if r[(k, k)].abs() <= 1e-10 * diag_max {
            return Err(Error::RankDeficient(format!("Noll term {} is unresolved on this grid", k + 1)));
        }
    }
    let qtb = qr.q().transpose() * &b;
    let x = r
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))?;
    let resid = &a * &x - &b;
    Ok(ZernikeFit {
        coefficients: x.iter().copied().collect(),
        residual_rms: (resid.norm_squared() / pts.len() as f64).sqrt(),
    })
}
