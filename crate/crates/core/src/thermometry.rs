//! Thermal carrier Rabi decay, phonon-number fits and heating rates.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{ATOMIC_MASS_UNIT, HBAR};
use crate::error::{ensure, Error, Result};
use crate::numeric::levenberg_marquardt;

/// Tail mass of the thermal distribution at which the sum stops.
pub const TAIL_BOUND: f64 = 1e-9;
pub const DEFAULT_N_MAX: usize = 100_000;

/// Lamb-Dicke parameter for a beam of `wavelength_nm` projected onto a
/// mode at `secular_khz`.
pub fn lamb_dicke(wavelength_nm: f64, mass_u: f64, secular_khz: f64, projection: f64) -> Result<f64> {
    ensure(wavelength_nm > 0.0 && mass_u > 0.0 && secular_khz > 0.0, || {
        "wavelength, mass and frequency must be positive".into()
    })?;
    ensure((0.0..=1.0).contains(&projection), || format!("projection {projection} outside [0, 1]"))?;
    let k = std::f64::consts::TAU / (wavelength_nm * 1e-9);
    let omega = std::f64::consts::TAU * secular_khz * 1e3;
    let m = mass_u * ATOMIC_MASS_UNIT;
    Ok(k * projection * (HBAR / (2.0 * m * omega)).sqrt())
}

/// Returns a message when the Lamb-Dicke expansion is doubtful.
pub fn lamb_dicke_warning(eta: f64, nbar: f64) -> Option<String> {
    let x = eta * eta * (nbar + 1.0);
    (x > 0.3).then(|| format!("eta^2 (nbar + 1) = {x:.3} exceeds 0.3; first-order carrier model is approximate"))
}

/// Number of thermal terms needed for the tail mass to fall below
/// [`TAIL_BOUND`].
fn thermal_terms(nbar: f64, n_max: usize) -> Result<usize> {
    if nbar == 0.0 {
        return Ok(1);
    }
    let q = nbar / (nbar + 1.0);
    // tail after N terms is q^N
    let n = (TAIL_BOUND.ln() / q.ln()).ceil();
    if !n.is_finite() || n as usize > n_max {
        return Err(Error::Truncation(n_max));
    }
    Ok((n as usize).max(1))
}

/// Thermal occupation probabilities p_0..p_{N-1}, renormalised after
/// truncation.
pub fn thermal_distribution(nbar: f64, n_max: usize) -> Result<Vec<f64>> {
    ensure(nbar >= 0.0 && nbar.is_finite(), || "nbar must be >= 0".into())?;
    let n = thermal_terms(nbar, n_max)?;
    let q = nbar / (nbar + 1.0);
    let mut p = Vec::with_capacity(n);
    let mut v = 1.0 / (nbar + 1.0);
    for _ in 0..n {
        p.push(v);
        v *= q;
    }
    // fold the truncated tail back in so P(0) = 0
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    Ok(p)
}

/// Thermally averaged carrier phasor sum_n p_n exp(i Omega_n t), with
/// Omega_n = Omega0 (1 - eta^2 n); `omega0` in rad/s and times in us.
pub fn carrier_phasor(omega0: f64, eta: f64, nbar: f64, t_us: &[f64], n_max: usize) -> Result<Vec<Complex64>> {
    ensure(omega0 >= 0.0 && eta >= 0.0, || "Rabi frequency and eta must be >= 0".into())?;
    let p = thermal_distribution(nbar, n_max)?;
    let e2 = eta * eta;
    Ok(t_us
        .iter()
        .map(|&t| {
            let t = t * 1e-6;
            p.iter()
                .enumerate()
                .map(|(n, pn)| Complex64::from_polar(*pn, omega0 * (1.0 - e2 * n as f64) * t))
                .sum()
        })
        .collect())
}

/// Carrier excitation probability sum_n p_n sin^2(Omega_n t / 2).
pub fn carrier_decay(omega0: f64, eta: f64, nbar: f64, t_us: &[f64], n_max: usize) -> Result<Vec<f64>> {
    Ok(carrier_phasor(omega0, eta, nbar, t_us, n_max)?
        .into_iter()
        .map(|s| 0.5 * (1.0 - s.re))
        .collect())
}

/// Oscillation contrast |sum_n p_n exp(i Omega_n t)|.
pub fn carrier_contrast(omega0: f64, eta: f64, nbar: f64, t_us: &[f64], n_max: usize) -> Result<Vec<f64>> {
    Ok(carrier_phasor(omega0, eta, nbar, t_us, n_max)?.into_iter().map(|s| s.norm()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NbarFit {
    pub nbar: f64,
    /// rad/s
    pub omega0: f64,
    pub omega0_fixed: bool,
    pub residual_rms: f64,
    pub starts: usize,
    pub warning: Option<String>,
}

/// Least-squares fit of [`carrier_decay`] to a measured curve.
///
/// With `omega0_fixed` the Rabi frequency is held; otherwise it is
/// initialised from the first maximum of the data. The phonon number starts
/// from a coarse scan, and both are restarted at 0.8, 1 and 1.2 times their
/// initial values.
pub fn fit_nbar(t_us: &[f64], probability: &[f64], eta: f64, omega0_fixed: Option<f64>) -> Result<NbarFit> {
    ensure(t_us.len() == probability.len(), || "time and probability lengths differ".into())?;
    if t_us.len() < 10 {
        return Err(Error::InsufficientSampling(format!("{} samples, need >= 10", t_us.len())));
    }
    ensure(eta >= 0.0, || "eta must be >= 0".into())?;
    let mean = probability.iter().sum::<f64>() / probability.len() as f64;
    let spread = probability.iter().map(|p| (p - mean).powi(2)).sum::<f64>().sqrt();
    if spread < 1e-9 {
        return Err(Error::DegenerateData("flat excitation curve".into()));
    }
    let omega_guess = match omega0_fixed {
        Some(w) => {
            ensure(w > 0.0, || "fixed Rabi frequency must be positive".into())?;
            w
        }
        None => first_peak_omega(t_us, probability)?,
    };
    let t_max = t_us.iter().cloned().fold(f64::NEG_INFINITY, f64::max) * 1e-6;
    let cycles = t_max * omega_guess / std::f64::consts::TAU;
    if cycles < 3.0 {
        return Err(Error::InsufficientSampling(format!(
            "data span {cycles:.2} Rabi cycles, need >= 3"
        )));
    }
    // work in rad/us to keep parameters of order one
    let w_scale = 1e-6;
    let model = |nbar: f64, w: f64| carrier_decay(w / w_scale, eta, nbar, t_us, DEFAULT_N_MAX);
    let cost = |nbar: f64, w: f64| -> f64 {
        match model(nbar, w) {
            Ok(m) => m.iter().zip(probability).map(|(a, b)| (a - b).powi(2)).sum(),
            Err(_) => f64::INFINITY,
        }
    };
    let w0 = omega_guess * w_scale;
    let scan = [0.0, 0.3, 1.0, 2.0, 3.0, 5.0, 8.0, 12.0, 18.0, 25.0, 35.0, 50.0, 70.0, 100.0, 150.0];
    let nbar_guess = scan
        .iter()
        .map(|&n| (n, cost(n, w0)))
        .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
        .0;
    let factors = [1.0, 0.8, 1.2];
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut starts = 0;
    let mut any_converged = false;
    for &fw in if omega0_fixed.is_some() { &factors[..1] } else { &factors[..] } {
        for &fn_ in &factors {
            starts += 1;
            let n0 = if nbar_guess == 0.0 { 0.1 * fn_ } else { nbar_guess * fn_ };
            let res = if omega0_fixed.is_some() {
                let r = levenberg_marquardt(
                    |p| residuals(&model, p[0], w0, probability),
                    &[n0],
                    &[0.0],
                    &[1e4],
                    300,
                );
                (vec![r.params[0], w0], r.cost, r.converged)
            } else {
                let r = levenberg_marquardt(
                    |p| residuals(&model, p[0], p[1], probability),
                    &[n0, w0 * fw],
                    &[0.0, 1e-6],
                    &[1e4, 1e6],
                    300,
                );
                (r.params.clone(), r.cost, r.converged)
            };
            any_converged |= res.2;
            if best.as_ref().is_none_or(|b| res.1 < b.1) {
                best = Some((res.0, res.1));
            }
        }
    }
    if !any_converged {
        return Err(Error::NonConvergence("no multi-start run converged".into()));
    }
    let (p, c) = best.expect("at least one start");
    Ok(NbarFit {
        nbar: p[0],
        omega0: p[1] / w_scale,
        omega0_fixed: omega0_fixed.is_some(),
        residual_rms: (c / probability.len() as f64).sqrt(),
        starts,
        warning: lamb_dicke_warning(eta, p[0]),
    })
}

fn residuals<F>(model: &F, nbar: f64, w: f64, data: &[f64]) -> Vec<f64>
where
    F: Fn(f64, f64) -> Result<Vec<f64>>,
{
    match model(nbar, w) {
        Ok(m) => m.iter().zip(data).map(|(a, b)| a - b).collect(),
        Err(_) => vec![1e3; data.len()],
    }
}

/// Rabi frequency from the first local maximum of a lightly smoothed curve.
fn first_peak_omega(t_us: &[f64], p: &[f64]) -> Result<f64> {
    let n = p.len();
    let s: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            p[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for i in 1..n - 1 {
        if s[i] >= s[i - 1] && s[i] >= s[i + 1] && s[i] > 0.5 * max && t_us[i] > 0.0 {
            return Ok(std::f64::consts::PI / (t_us[i] * 1e-6));
        }
    }
    Err(Error::DegenerateData("no oscillation maximum found".into()))
}

/// Linear heating fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatingFit {
    /// quanta per second
    pub rate: f64,
    pub rate_stderr: f64,
    /// quanta at zero delay
    pub intercept: f64,
    /// (delay ms, nbar) points used
    pub nbars: Vec<(f64, f64)>,
}

/// Ordinary least squares of nbar against delay (ms), standard error from
/// the residual variance.
pub fn heating_rate(points: &[(f64, f64)]) -> Result<HeatingFit> {
    if points.len() < 3 {
        return Err(Error::Underdetermined(format!("{} delay points, need >= 3", points.len())));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateData("all delays equal".into()));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let se = (ssr / (n - 2.0) / sxx).sqrt();
    Ok(HeatingFit {
        rate: slope * 1e3,
        rate_stderr: se * 1e3,
        intercept,
        nbars: points.to_vec(),
    })
}

/// Heating-limited gate error rate x tau / 2.
pub fn gate_infidelity(rate: f64, gate_time_us: f64) -> Result<f64> {
    ensure(rate >= 0.0 && gate_time_us >= 0.0, || "rate and gate time must be >= 0".into())?;
    Ok(rate * gate_time_us * 1e-6 / 2.0)
}

/// [`gate_infidelity`] with the rate uncertainty carried through.
pub fn gate_infidelity_with_uncertainty(rate: f64, rate_err: f64, gate_time_us: f64) -> Result<(f64, f64)> {
    ensure(rate_err >= 0.0, || "uncertainty must be >= 0".into())?;
    Ok((gate_infidelity(rate, gate_time_us)?, rate_err * gate_time_us * 1e-6 / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    use rayon::prelude::*;

    const OMEGA: f64 = 2.0 * std::f64::consts::PI * 100e3;

    fn grid(n: usize, t_max: f64) -> Vec<f64> {
        (0..n).map(|k| t_max * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn lamb_dicke_values() {
        assert_eq!(lamb_dicke(435.0, 171.0, 286.0, 0.0).unwrap(), 0.0);
        let eta = lamb_dicke(435.0, 171.0, 286.0, 1.0).unwrap();
        // evaluated independently with CODATA 2018 constants
        assert!((eta - 0.146_831_129_393_497).abs() < 1e-12, "{eta}");
        assert!((eta - 0.146).abs() < 1e-3);
        let ratio = eta / lamb_dicke(435.0, 171.0, 1144.0, 1.0).unwrap();
        assert!((ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ground_state_no_decay() {
        let t = grid(50, 40.0);
        let p = carrier_decay(OMEGA, 0.15, 0.0, &t, DEFAULT_N_MAX).unwrap();
        for (ti, pi) in t.iter().zip(&p) {
            assert!((pi - (0.5 * OMEGA * ti * 1e-6).sin().powi(2)).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_time() {
        for nbar in [0.0, 1.0, 30.0] {
            assert!(carrier_decay(OMEGA, 0.15, nbar, &[0.0], DEFAULT_N_MAX).unwrap()[0].abs() < 1e-15);
        }
    }

    #[test]
    fn geometric_closed_form() {
        let (nbar, eta) = (25.0, 0.146);
        let t = grid(200, 100.0);
        let p = carrier_decay(OMEGA, eta, nbar, &t, DEFAULT_N_MAX).unwrap();
        let q = nbar / (nbar + 1.0);
        for (ti, pi) in t.iter().zip(&p) {
            let ts = ti * 1e-6;
            let s = Complex64::from_polar(1.0, OMEGA * ts)
                / ((nbar + 1.0) * (Complex64::new(1.0, 0.0) - Complex64::from_polar(q, -OMEGA * eta * eta * ts)));
            assert!((pi - 0.5 * (1.0 - s.re)).abs() < 1e-9);
        }
    }

    #[test]
    fn thermal_normalisation_and_truncation() {
        let p = thermal_distribution(40.0, DEFAULT_N_MAX).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < TAIL_BOUND);
        assert!(matches!(thermal_distribution(1e6, 1000), Err(Error::Truncation(1000))));
    }

    #[test]
    fn contrast_falls_with_nbar() {
        let t = grid(60, 60.0);
        let first_cycle = std::f64::consts::TAU / OMEGA * 1e6;
        let c: Vec<Vec<f64>> = (0..20)
            .map(|k| carrier_contrast(OMEGA, 0.12, 2.0 * k as f64, &t, DEFAULT_N_MAX).unwrap())
            .collect();
        for i in 0..t.len() {
            if t[i] < first_cycle {
                continue;
            }
            for k in 1..c.len() {
                assert!(c[k][i] <= c[k - 1][i] + 1e-12);
            }
        }
    }

    #[test]
    fn fit_round_trip() {
        let t = grid(80, 60.0);
        let data = carrier_decay(OMEGA, 0.146, 12.5, &t, DEFAULT_N_MAX).unwrap();
        let fit = fit_nbar(&t, &data, 0.146, None).unwrap();
        assert!((fit.nbar - 12.5).abs() < 1e-6, "{}", fit.nbar);
        assert!((fit.omega0 / OMEGA - 1.0).abs() < 1e-8);
        let fixed = fit_nbar(&t, &data, 0.146, Some(OMEGA)).unwrap();
        assert!((fixed.nbar - 12.5).abs() < 1e-6);
    }

    #[test]
    fn fit_ground_state() {
        let t = grid(40, 40.0);
        let data = carrier_decay(OMEGA, 0.146, 0.0, &t, DEFAULT_N_MAX).unwrap();
        let fit = fit_nbar(&t, &data, 0.146, None).unwrap();
        assert!(fit.nbar.abs() < 1e-6, "{}", fit.nbar);
    }

    #[test]
    fn fit_rejects_bad_data() {
        let t = grid(20, 60.0);
        assert!(matches!(fit_nbar(&t, &[0.3; 20], 0.1, None), Err(Error::DegenerateData(_))));
        assert!(fit_nbar(&t[..5], &[0.1, 0.2, 0.3, 0.2, 0.1], 0.1, None).is_err());
        // under three Rabi cycles
        let short = grid(20, 12.0);
        let d = carrier_decay(OMEGA, 0.1, 3.0, &short, DEFAULT_N_MAX).unwrap();
        assert!(matches!(fit_nbar(&short, &d, 0.1, Some(OMEGA)), Err(Error::InsufficientSampling(_))));
    }

    #[test]
    fn noisy_fits() {
        let t = grid(60, 50.0);
        let clean = carrier_decay(OMEGA, 0.146, 20.0, &t, DEFAULT_N_MAX).unwrap();
        let mut errs: Vec<f64> = (0..50u64)
            .into_par_iter()
            .map(|seed| {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let noise = Normal::new(0.0, 0.01).unwrap();
                let d: Vec<f64> = clean.iter().map(|p| p + noise.sample(&mut rng)).collect();
                let f = fit_nbar(&t, &d, 0.146, None).unwrap();
                (f.nbar - 20.0).abs() / 20.0
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        let median = 0.5 * (errs[24] + errs[25]);
        assert!(median < 0.05, "{median}");
    }

    #[test]
    fn heating_exact_line() {
        let pts: Vec<(f64, f64)> = [0.0, 5.0, 10.0, 20.0, 40.0].iter().map(|&d| (d, 3.0 + 0.285 * d)).collect();
        let f = heating_rate(&pts).unwrap();
        assert!((f.rate - 285.0).abs() < 1e-9);
        assert!(f.rate_stderr < 1e-9);
        let mut rev = pts.clone();
        rev.reverse();
        rev.swap(0, 2);
        let g = heating_rate(&rev).unwrap();
        assert!((f.rate - g.rate).abs() < 1e-12 && (f.intercept - g.intercept).abs() < 1e-12);
        assert!(matches!(heating_rate(&pts[..2]), Err(Error::Underdetermined(_))));
    }

    #[test]
    fn heating_noise_calibration() {
        // noise chosen so the expected slope standard error is 65 quanta/s
        let delays = [0.0, 10.0, 20.0, 30.0, 40.0, 50.0];
        let m = delays.iter().sum::<f64>() / 6.0;
        let sxx: f64 = delays.iter().map(|d| (d - m).powi(2)).sum();
        let sigma = 0.065 * sxx.sqrt();
        let fits: Vec<HeatingFit> = (0..400u64)
            .map(|seed| {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let noise = Normal::new(0.0, sigma).unwrap();
                let pts: Vec<(f64, f64)> = delays.iter().map(|&d| (d, 0.285 * d + noise.sample(&mut rng))).collect();
                heating_rate(&pts).unwrap()
            })
            .collect();
        let spread = (fits.iter().map(|f| (f.rate - 285.0).powi(2)).sum::<f64>() / fits.len() as f64).sqrt();
        let mean_se = (fits.iter().map(|f| f.rate_stderr.powi(2)).sum::<f64>() / fits.len() as f64).sqrt();
        assert!((spread / 65.0 - 1.0).abs() < 0.1, "{spread}");
        assert!((mean_se / 65.0 - 1.0).abs() < 0.1, "{mean_se}");
    }

    #[test]
    fn gate_error() {
        let (v, e) = gate_infidelity_with_uncertainty(285.0, 65.0, 200.0).unwrap();
        assert!((v - 0.0285).abs() < 1e-15);
        assert!((e - 0.0065).abs() < 1e-15);
        assert_eq!(gate_infidelity(0.0, 200.0).unwrap(), 0.0);
        assert!((gate_infidelity(285.0, 400.0).unwrap() - 2.0 * v).abs() < 1e-15);
        assert!((gate_infidelity(285.0, 200.0).unwrap() * 2.0 / 200e-6 - 285.0).abs() < 1e-12);
    }
}
