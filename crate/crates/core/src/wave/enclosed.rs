use serde::Serialize;

use super::IntensityImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnclosedCurve {
    pub side_lengths: Vec<usize>,
    pub fractions: Vec<f64>,
    pub pixel_pitch_um: f64,
}

impl EnclosedCurve {
    pub fn is_monotone(&self) -> bool {
        self.fractions.windows(2).all(|w| w[1] >= w[0] - 1e-15)
    }
}

/// Fraction of the total counts inside an `N x N` pixel square centred on
/// the centroid, for each N.
///
/// The square for side N starts at pixel `round(c - N/2 + 1/2)`, where `c`
/// is the centroid in pixel units; squares for increasing N are nested.
pub fn enclosed_fraction(image: &IntensityImage, side_lengths: &[usize]) -> Result<EnclosedCurve> {
    if image.values.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidParameter("image has negative counts".into()));
    }
    let total = image.total();
    if total <= 0.0 {
        return Err(Error::InvalidParameter("image has no counts".into()));
    }
    let c = image.centroid_um();
    let cx = (c[0] - image.origin_um[0]) / image.pitch_um;
    let cy = (c[1] - image.origin_um[1]) / image.pitch_um;
    let n = image.n as i64;
    // summed-area table for O(1) squares
    let m = image.n + 1;
    let mut sat = vec![0.0; m * m];
    for j in 0..image.n {
        let mut row = 0.0;
        for i in 0..image.n {
            row += image.values[j * image.n + i];
            sat[(j + 1) * m + i + 1] = sat[j * m + i + 1] + row;
        }
    }
    let mut fractions = Vec::with_capacity(side_lengths.len());
    for &side in side_lengths {
        if side == 0 {
            return Err(Error::InvalidParameter("side length must be >= 1".into()));
        }
        let s = side as i64;
        let x0 = (cx - side as f64 / 2.0 + 0.5).round() as i64;
        let y0 = (cy - side as f64 / 2.0 + 0.5).round() as i64;
        if x0 < 0 || y0 < 0 || x0 + s > n || y0 + s > n {
            return Err(Error::OutOfBounds(format!(
                "{side} x {side} square at ({x0}, {y0}) exceeds the {n} x {n} image"
            )));
        }
        let (x0, y0, x1, y1) = (x0 as usize, y0 as usize, (x0 + s) as usize, (y0 + s) as usize);
        let sum = sat[y1 * m + x1] - sat[y0 * m + x1] - sat[y1 * m + x0] + sat[y0 * m + x0];
        fractions.push((sum / total).clamp(0.0, 1.0));
    }
    Ok(EnclosedCurve {
        side_lengths: side_lengths.to_vec(),
        fractions,
        pixel_pitch_um: image.pitch_um,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn image(n: usize, values: Vec<f64>) -> IntensityImage {
        IntensityImage {
            n,
            pitch_um: 2.2,
            origin_um: [0.0, 0.0],
            values,
        }
    }

    #[test]
    fn delta_image() {
        let mut v = vec![0.0; 49];
        v[3 * 7 + 5] = 4.0;
        let c = enclosed_fraction(&image(7, v), &[1, 3]).unwrap();
        assert_eq!(c.fractions, vec![1.0, 1.0]);
    }

    #[test]
    fn full_frame_is_one() {
        let v: Vec<f64> = (0..81).map(|k| 1.0 + ((k * 7) % 5) as f64 * 1e-3).collect();
        let c = enclosed_fraction(&image(9, v), &[9]).unwrap();
        assert!((c.fractions[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn oversized_square_rejected() {
        let c = enclosed_fraction(&image(5, vec![1.0; 25]), &[7]);
        assert!(matches!(c, Err(Error::OutOfBounds(_))));
    }

    proptest! {
        #[test]
        fn monotone_in_side(vals in proptest::collection::vec(0.0f64..1.0, 121)) {
            let mut vals = vals;
            vals[60] += 10.0;
            let img = image(11, vals);
            let sides: Vec<usize> = (1..=9).collect();
            let c = enclosed_fraction(&img, &sides).unwrap();
            prop_assert!(c.is_monotone());
        }
    }
}
