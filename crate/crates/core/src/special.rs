//! Bessel functions of the first kind.

/// J_n(x) for integer order by Miller's backward recurrence, normalised with
/// J_0 + 2 sum J_2k = 1.
pub fn bessel_j(n: i32, x: f64) -> f64 {
    if n < 0 {
        let v = bessel_j(-n, x);
        return if n % 2 == 0 { v } else { -v };
    }
    if x < 0.0 {
        let v = bessel_j(n, -x);
        return if n % 2 == 0 { v } else { -v };
    }
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let n = n as usize;
    let top = n.max(x as usize);
    let start = 2 * ((top + 20 + (40.0 * top as f64).sqrt() as usize) / 2);
    let (mut jp, mut j) = (0.0_f64, 1e-300_f64);
    let mut norm = 0.0;
    let mut result = 0.0;
    for k in (1..=start).rev() {
        let jm = 2.0 * k as f64 / x * j - jp;
        jp = j;
        j = jm;
        // rescale to stay in range
        if j.abs() > 1e250 {
            j *= 1e-250;
            jp *= 1e-250;
            norm *= 1e-250;
            result *= 1e-250;
        }
        if (k - 1) % 2 == 0 && k > 1 {
            norm += 2.0 * j;
        }
        if k - 1 == n {
            result = j;
        }
    }
    norm += j;
    result / norm
}

pub fn bessel_j0(x: f64) -> f64 {
    bessel_j(0, x)
}

pub fn bessel_j1(x: f64) -> f64 {
    bessel_j(1, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Power series, adequate for |x| below about 10.
    fn series(n: u32, x: f64) -> f64 {
        let mut term = (0.5 * x).powi(n as i32) / (1..=n).map(f64::from).product::<f64>();
        let mut sum = term;
        for k in 1..200 {
            term *= -(0.25 * x * x) / (k as f64 * (k + n) as f64);
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    }

    #[test]
    fn matches_series() {
        for n in 0..6 {
            for k in 0..80 {
                let x = 0.1 * k as f64;
                let a = bessel_j(n, x);
                let b = series(n as u32, x);
                assert!((a - b).abs() < 1e-13, "J{n}({x}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn reference_values() {
        assert!((bessel_j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((bessel_j1(1.0) - 0.440_050_585_744_933_5).abs() < 1e-15);
        assert!(bessel_j0(2.404_825_557_695_773).abs() < 1e-15);
        assert!((bessel_j(2, 30.0) - 0.078_451_246_073_265_38).abs() < 1e-13);
    }

    #[test]
    fn symmetry() {
        assert_eq!(bessel_j(3, -1.3), -bessel_j(3, 1.3));
        assert_eq!(bessel_j(-3, 1.3), -bessel_j(3, 1.3));
        assert_eq!(bessel_j(2, -1.3), bessel_j(2, 1.3));
    }
}
