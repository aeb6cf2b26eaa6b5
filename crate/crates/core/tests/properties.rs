use ionlink::budget::solid_angle_fraction;
use ionlink::micromotion::{beta_from_ratio, ratio_from_beta};
use ionlink::raytrace::rod_clipping;
use ionlink::report::pgm16;
use ionlink::thermometry::{carrier_decay, fit_nbar, gate_infidelity, heating_rate, thermal_distribution};
use ionlink::trap::TrapGeometry;
use proptest::prelude::*;

proptest! {
    #[test]
    fn solid_angle_is_monotone_and_bounded(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (flo, fhi) = (solid_angle_fraction(lo).unwrap(), solid_angle_fraction(hi).unwrap());
        prop_assert!(flo <= fhi);
        prop_assert!((0.0..=0.5).contains(&flo) && fhi <= 0.5);
    }

    #[test]
    fn beta_ratio_round_trip(beta in 0.0f64..2.0) {
        let back = beta_from_ratio(ratio_from_beta(beta)).unwrap();
        prop_assert!((back - beta).abs() < 1e-10, "{beta} -> {back}");
    }

    #[test]
    fn gate_error_is_linear_in_rate(rate in 0.0f64..2000.0, k in 0.0f64..5.0, t in 1.0f64..1000.0) {
        let a = gate_infidelity(rate * k, t).unwrap();
        let b = k * gate_infidelity(rate, t).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
    }

    #[test]
    fn heating_rate_recovers_exact_lines(slope in 0.0f64..2000.0, x0 in 0.0f64..30.0, n in 3usize..12) {
        let pts: Vec<(f64, f64)> = (0..n).map(|k| {
            let d = 5.0 * k as f64;
            (d, x0 + slope * d * 1e-3)
        }).collect();
        let fit = heating_rate(&pts).unwrap();
        prop_assert!((fit.rate - slope).abs() <= 1e-9 * slope.max(1.0));
        prop_assert!((fit.intercept - x0).abs() <= 1e-9 * x0.max(1.0));
    }

    #[test]
    fn thermal_distribution_is_normalised(nbar in 0.0f64..50.0) {
        let p = thermal_distribution(nbar, 100_000).unwrap();
        let s: f64 = p.iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
        prop_assert!(p.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn pgm_size_matches_image(w in 1usize..20, h in 1usize..20) {
        let v: Vec<f64> = (0..w * h).map(|k| k as f64).collect();
        let b = pgm16(w, &v).unwrap();
        let header = format!("P5\n{w} {h}\n65535\n");
        prop_assert_eq!(b.len(), header.len() + 2 * w * h);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn nbar_fit_round_trip(nbar in 0.5f64..20.0) {
        let omega0 = std::f64::consts::TAU * 100e3;
        let eta = 0.147;
        let t: Vec<f64> = (0..60).map(|k| 50.0 * k as f64 / 59.0).collect();
        let p = carrier_decay(omega0, eta, nbar, &t, 100_000).unwrap();
        let fit = fit_nbar(&t, &p, eta, None).unwrap();
        prop_assert!((fit.nbar - nbar).abs() < 1e-6 * nbar.max(1.0), "{nbar} -> {}", fit.nbar);
    }

    #[test]
    fn clipping_is_seeded_and_bounded(seed in 0u64..1000) {
        let g = TrapGeometry::default();
        let a = rod_clipping(&g, 0.8, 50_000, seed).unwrap();
        let b = rod_clipping(&g, 0.8, 50_000, seed).unwrap();
        prop_assert_eq!(a.blocked, b.blocked);
        prop_assert!((0.0..=1.0).contains(&a.blocked_fraction));
        prop_assert!((a.blocked_fraction - 0.0419).abs() < 6.0 * a.standard_error.max(1e-4));
    }
}
