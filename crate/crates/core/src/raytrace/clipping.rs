use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::trap::TrapGeometry;

/// Samples drawn from one random stream. Fixed so the estimate does not
/// depend on the number of worker threads.
const CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClippingEstimate {
    pub blocked_fraction: f64,
    pub standard_error: f64,
    pub samples: usize,
    pub blocked: u64,
}

/// Fraction of the collection cone around +v that is shadowed by the trap
/// rods. Rods are treated as infinite cylinders along the trap axis, so only
/// the projection of each direction onto the (h, v) cross-section matters.
/// Directions are uniform over solid angle.
pub fn rod_clipping(geom: &TrapGeometry, collection_na: f64, samples: usize, seed: u64) -> Result<ClippingEstimate> {
    if !(collection_na > 0.0 && collection_na < 1.0) {
        return Err(Error::InvalidParameter(format!("NA {collection_na} outside (0, 1)")));
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("zero samples".into()));
    }
    geom.validate()?;
    let radius = 0.5 * geom.rod_diameter;
    let rods: Vec<[f64; 2]> = geom
        .rod_centres()
        .iter()
        .map(|(c, _)| *c)
        .filter(|c| c[1] > 0.0)
        .collect();
    let cmin = (1.0 - collection_na * collection_na).sqrt();
    let chunks = samples.div_ceil(CHUNK);
    let blocked: u64 = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let n = CHUNK.min(samples - k * CHUNK);
            let mut hits = 0u64;
            for _ in 0..n {
                let c: f64 = rng.random_range(cmin..=1.0);
                let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let s = (1.0 - c * c).max(0.0).sqrt();
                let dh = s * phi.cos();
                let dv = c;
                let norm = dh.hypot(dv);
                if rods.iter().any(|r| {
                    let along = r[0] * dh + r[1] * dv;
                    let perp = (r[0] * dv - r[1] * dh).abs() / norm;
                    along > 0.0 && perp < radius
                }) {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    let p = blocked as f64 / samples as f64;
    Ok(ClippingEstimate {
        blocked_fraction: p,
        standard_error: (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
        blocked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trap::CollectionOrientation;

    /// Deterministic strip integral: for each polar angle the shadow of a rod
    /// is the set of azimuths with tan(theta) cos(phi) inside the rod's
    /// angular interval in the cross-section.
    fn strip_oracle(geom: &TrapGeometry, na: f64) -> f64 {
        let radius = 0.5 * geom.rod_diameter;
        let cmin = (1.0 - na * na).sqrt();
        let n = 200_000;
        let mut total = 0.0;
        for i in 0..n {
            let c = cmin + (1.0 - cmin) * (i as f64 + 0.5) / n as f64;
            let t = (1.0 - c * c).sqrt() / c;
            let mut meas = 0.0;
            for (r, _) in geom.rod_centres() {
                if r[1] <= 0.0 {
                    continue;
                }
                let psi = r[0].atan2(r[1]);
                let half = (radius / r[0].hypot(r[1])).asin();
                let lo = (psi - half).tan() / t;
                let hi = (psi + half).tan() / t;
                meas += 2.0 * (lo.clamp(-1.0, 1.0).acos() - hi.clamp(-1.0, 1.0).acos());
            }
            total += meas;
        }
        total * (1.0 - cmin) / n as f64 / (std::f64::consts::TAU * (1.0 - cmin))
    }

    #[test]
    fn narrow_cone_misses_rods() {
        let e = rod_clipping(&TrapGeometry::default(), 0.3, 100_000, 1).unwrap();
        assert_eq!(e.blocked, 0);
    }

    #[test]
    fn matches_strip_integral() {
        for (geom, na) in [
            (TrapGeometry::default(), 0.8),
            (TrapGeometry { rod_diameter: 0.1, wide_pitch: 3.0, narrow_pitch: 2.0, ..Default::default() }, 0.9),
        ] {
            let e = rod_clipping(&geom, na, 2_000_000, 5).unwrap();
            let oracle = strip_oracle(&geom, na);
            assert!(
                (e.blocked_fraction - oracle).abs() < 3.0 * e.standard_error,
                "{} vs {oracle} (se {})",
                e.blocked_fraction,
                e.standard_error
            );
        }
    }

    #[test]
    fn standard_error_scales_inverse_sqrt() {
        let g = TrapGeometry { orientation: CollectionOrientation::NormalToNarrowPitch, ..Default::default() };
        let se: Vec<f64> = [10_000, 100_000, 1_000_000]
            .iter()
            .map(|&n| rod_clipping(&g, 0.8, n, 9).unwrap().standard_error)
            .collect();
        for w in se.windows(2) {
            assert!((w[0] / w[1] / 10f64.sqrt() - 1.0).abs() < 0.05, "{se:?}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let g = TrapGeometry::default();
        let a = rod_clipping(&g, 0.8, 300_000, 42).unwrap();
        let b = rod_clipping(&g, 0.8, 300_000, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_input() {
        let g = TrapGeometry::default();
        assert!(rod_clipping(&g, 1.2, 10, 0).is_err());
        assert!(rod_clipping(&g, 0.5, 0, 0).is_err());
    }
}
