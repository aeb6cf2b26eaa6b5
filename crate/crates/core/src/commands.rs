//! Subcommand pipelines. Each one computes its quantities, writes CSV (and
//! optionally PGM) series into the output directory and returns a report.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use crate::budget::{chain, evaluate_scenario, solid_angle_fraction, total_two_sided_with_uncertainty, EfficiencyFactor, Scenario};
use crate::budget::{ChainResult, Provenance as FactorProvenance, ScenarioOutcome};
use crate::config::{PsfConfig, RunConfig, ThermometryConfig};
use crate::data::{material, parse_toml, scenario, PublishedConstants};
use crate::error::{Error, Result};
use crate::fiber::polarization_loss;
use crate::micromotion::{beta_from_ratio, beta_to_displacement, rabi_probability, ratio_from_beta, sideband_spectrum, wavevector_rad_per_um};
use crate::raytrace::rod_clipping;
use crate::report::{fmt_f64, OutDir, PlotSpec, Provenance, Quantity, Report, Table};
use crate::special::bessel_j1;
use crate::system::{best_focus_pupil, image_quality, misalignment_sweep, Design, SweepAxis, SweepPoint};
use crate::thermometry::{carrier_decay, fit_nbar, gate_infidelity_with_uncertainty, heating_rate, lamb_dicke, lamb_dicke_warning, HeatingFit, DEFAULT_N_MAX};
use crate::trap::{
    fit_geometry_factors, mathieu_params, potential_map, scale_dc_frequency, secular_frequencies, FreeFactors, GeometryFit,
    Ion, MeasuredFrequency, TrapAxis,
};
use crate::wave::{enclosed_fraction, focal_field, surface_error_map, EnclosedCurve, IntensityImage};

use Provenance::{Assumed, Computed, Published};

/// Everything a subcommand needs besides its own section of the config.
pub struct Run<'a> {
    pub cfg: &'a RunConfig,
    pub out: &'a OutDir,
    /// Config path as given, or `default`.
    pub config_label: &'a str,
}

impl Run<'_> {
    fn report(&self, command: &str) -> Report {
        Report::new(command, self.cfg.seed, self.cfg.tolerance_scale, self.config_label)
    }

    fn finish(&self, r: Report) -> Result<Report> {
        self.out.write_json(&format!("{}.json", r.command), &r)?;
        Ok(r)
    }
}

fn line_plot(title: &str, x: &str, y: &[&str]) -> Option<PlotSpec> {
    Some(PlotSpec {
        kind: "line".into(),
        x: x.into(),
        y: y.iter().map(|s| s.to_string()).collect(),
        group_by: None,
        title: title.into(),
    })
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

fn wd_provenance(cfg: &RunConfig) -> (Provenance, &'static str) {
    match cfg.optics.working_distance_mm {
        Some(_) => (Assumed, "set in config"),
        None => (Computed, "chosen to minimise the asphere exit-direction spread"),
    }
}

pub fn trace(run: &Run) -> Result<Report> {
    let cfg = run.cfg;
    let mut r = run.report("trace");
    let d = Design::build(&cfg.optics)?;
    let c = PublishedConstants::load()?;
    let s = d.analyze()?;
    let (prov, note) = wd_provenance(cfg);
    r.push(Quantity::new("asphere_nominal_working_distance", c.asphere.working_distance_mm, "mm", Published));
    r.push(Quantity::new("working_distance", s.working_distance_mm, "mm", prov).note(note));
    r.push(Quantity::new("asphere_collimation_spread_rms", s.collimation_spread_urad, "urad", Computed));
    r.push(Quantity::new("focus_z", s.focus_z_mm, "mm", Computed).note("from the ion along the optical axis"));
    r.push(Quantity::new("image_na", s.image_na, "1", Computed));
    r.push(Quantity::new("exit_pupil_radius", s.pupil_radius_mm, "mm", Computed));
    r.push(Quantity::new("spot_rms_radius", s.spot_rms_um, "um", Computed));
    r.push(Quantity::new("airy_radius", s.airy_radius_um, "um", Computed));
    r.push(Quantity::new("wavefront_rms", s.wavefront_rms_waves, "waves", Computed).note("piston, tilt and defocus removed"));
    r.push(Quantity::new("strehl", s.strehl, "1", Computed));
    r.push(Quantity::new("rays_launched", s.launched as f64, "count", Computed));
    r.push(Quantity::new("rays_vignetted", s.vignetted as f64, "count", Computed));
    if s.vignetted > 0 {
        r.warn(format!("{} of {} rays vignetted", s.vignetted, s.launched));
    }

    let bundle = d.trace([0.0; 3])?;
    let spot = bundle.spot_diagram(d.focus_z)?;
    let mut t = Table::new(&[("x", "um"), ("y", "um")], Computed);
    for p in &spot.points {
        t.row_f64(&[p[0] * 1e3, p[1] * 1e3]);
    }
    run.out.write_csv(
        &mut r,
        "trace_spot.csv",
        "ray intersections with the nominal focal plane, on-axis ion",
        &t,
        Some(PlotSpec {
            kind: "scatter".into(),
            x: "x".into(),
            y: vec!["y".into()],
            group_by: None,
            title: "Spot diagram".into(),
        }),
    )?;

    let reference = d.reference();
    let wf = bundle.wavefront(&reference);
    let core: Vec<usize> = bundle.core_rays().filter(|&i| wf[i].is_some()).collect();
    let sw: f64 = core.iter().map(|&i| bundle.rays[i].amplitude_weight).sum();
    let mean = core.iter().map(|&i| bundle.rays[i].amplitude_weight * wf[i].unwrap().optical_path).sum::<f64>() / sw;
    let lambda_mm = cfg.optics.wavelength_nm * 1e-6;
    let mut t = Table::new(
        &[("launch_sx", "1"), ("launch_sy", "1"), ("pupil_x", "mm"), ("pupil_y", "mm"), ("opd", "waves")],
        Computed,
    );
    for &i in &core {
        let w = wf[i].unwrap();
        let l = bundle.launch[i];
        t.row_f64(&[l[0], l[1], w.pupil[0], w.pupil[1], (w.optical_path - mean) / lambda_mm]);
    }
    r.push(Quantity::new("opd_rms", bundle.opd_rms(&reference) / lambda_mm, "waves", Computed).note("against the reference sphere at focus"));
    run.out.write_csv(&mut r, "trace_opd.csv", "optical path difference on the reference sphere", &t, None)?;

    let mut t = Table::new(&[("z", "mm"), ("spot_rms", "um")], Computed);
    for dz in linspace(-0.1, 0.1, 41) {
        let sp = bundle.spot_diagram(d.focus_z + dz)?;
        t.row_f64(&[d.focus_z + dz, sp.rms_radius * 1e3]);
    }
    run.out.write_csv(&mut r, "trace_focus.csv", "RMS spot radius through focus", &t, line_plot("Through focus", "z", &["spot_rms"]))?;
    run.finish(r)
}

/// Camera-pixel PSF of the nominal design and its enclosed-fraction curves.
#[derive(Debug, Clone)]
pub struct CameraPsf {
    pub image_na: f64,
    pub strehl: f64,
    /// Oversampled focal-plane image.
    pub fine: IntensityImage,
    /// Binned to camera pixels.
    pub camera: IntensityImage,
    pub ideal: EnclosedCurve,
    /// Curves with synthetic surface errors, labelled.
    pub perturbed: Vec<(String, EnclosedCurve)>,
}

/// Image of the on-axis ion at best focus, sampled on camera pixels.
pub fn camera_psf(d: &Design, psf: &PsfConfig, seed: u64) -> Result<CameraPsf> {
    let (pupil, na) = d.pupil([0.0; 3])?;
    let q = image_quality(&pupil, na)?;
    let (best, _) = best_focus_pupil(&pupil)?;
    let image = |p: &crate::wave::PupilField| -> Result<(IntensityImage, IntensityImage)> {
        let fine = focal_field(p, na, psf.pixel_um / psf.oversample as f64, psf.frame_pixels * psf.oversample, [0.0, 0.0])?
            .intensity();
        let camera = fine.bin(psf.oversample);
        Ok((fine, camera))
    };
    let (fine, camera) = image(&best)?;
    let ideal = enclosed_fraction(&camera, &psf.side_lengths)?;
    let mut perturbed = Vec::new();
    if let Some(se) = &psf.surface_error {
        let n_glass = material(&PublishedConstants::load()?.asphere.material)?.index_at(d.config.wavelength_nm)?;
        let mut p = best.clone();
        for (k, rms) in se.rms_nm.iter().enumerate() {
            let map = surface_error_map(*rms, se.correlation_length_mm, pupil.pupil_radius, p.n, p.extent, seed.wrapping_add(k as u64))?;
            map.apply(&mut p, n_glass)?;
        }
        let (p, _) = best_focus_pupil(&p)?;
        let (_, cam) = image(&p)?;
        let label = se.rms_nm.iter().map(|v| format!("{v}nm")).collect::<Vec<_>>().join("_");
        perturbed.push((format!("surface_error_{label}"), enclosed_fraction(&cam, &psf.side_lengths)?));
    }
    Ok(CameraPsf {
        image_na: na,
        strehl: q.strehl,
        fine,
        camera,
        ideal,
        perturbed,
    })
}

#[derive(Debug, Deserialize)]
struct FixtureRow {
    side_px: usize,
    fraction: f64,
}

/// Measured enclosed fractions as (side in pixels, fraction).
pub fn load_fixture(path: &Path) -> Result<Vec<(usize, f64)>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("cannot read `{}`: {e}", path.display())))?;
    let mut out = Vec::new();
    for (k, row) in rd.deserialize::<FixtureRow>().enumerate() {
        let row = row.map_err(|e| Error::Config(format!("{}: row {}: {e}", path.display(), k + 2)))?;
        out.push((row.side_px, row.fraction));
    }
    Ok(out)
}

pub fn psf(run: &Run) -> Result<Report> {
    let cfg = run.cfg;
    let mut r = run.report("psf");
    let d = Design::build(&cfg.optics)?;
    let p = camera_psf(&d, &cfg.psf, cfg.seed)?;
    r.push(Quantity::new("image_na", p.image_na, "1", Computed));
    r.push(Quantity::new("strehl", p.strehl, "1", Computed).note("piston, tilt and defocus removed"));
    r.push(Quantity::new("airy_radius", crate::wave::airy_radius_um(cfg.optics.wavelength_nm, p.image_na), "um", Computed));
    r.push(Quantity::new("camera_pixel", cfg.psf.pixel_um, "um", Published));
    let c = p.camera.centroid_um();
    r.push(Quantity::list("camera_centroid", c.to_vec(), "um", Computed));
    r.push(Quantity::list("enclosed_fraction_ideal", p.ideal.fractions.clone(), "1", Computed));
    if !p.ideal.is_monotone() {
        r.warn("ideal enclosed-fraction curve is not monotone");
    }
    if let Some(se) = &cfg.psf.surface_error {
        r.push(Quantity::list("surface_error_rms", se.rms_nm.clone(), "nm", Assumed).note("synthetic irregularity on the two asphere faces"));
        r.push(Quantity::new("surface_error_correlation_length", se.correlation_length_mm, "mm", Assumed));
    }

    let mut cols = vec![("side", "px"), ("side_um", "um"), ("ideal", "1")];
    let labels: Vec<String> = p.perturbed.iter().map(|(l, _)| l.clone()).collect();
    for l in &labels {
        cols.push((l.as_str(), "1"));
    }
    let mut t = Table::new(&cols, Computed);
    for (k, n) in p.ideal.side_lengths.iter().enumerate() {
        let mut row = vec![*n as f64, *n as f64 * cfg.psf.pixel_um, p.ideal.fractions[k]];
        row.extend(p.perturbed.iter().map(|(_, c)| c.fractions[k]));
        t.row_f64(&row);
    }
    let mut ys: Vec<&str> = vec!["ideal"];
    ys.extend(labels.iter().map(|s| s.as_str()));
    run.out.write_csv(
        &mut r,
        "psf_enclosed.csv",
        "fraction of the image inside an N x N pixel square centred on the centroid",
        &t,
        line_plot("Enclosed fraction", "side", &ys),
    )?;

    let n = p.fine.n;
    let peak = p.fine.peak().1;
    let mut t = Table::new(&[("x", "um"), ("intensity", "1")], Computed);
    for i in 0..n {
        t.row_f64(&[p.fine.position(i, n / 2)[0], p.fine.values[(n / 2) * n + i] / peak]);
    }
    run.out.write_csv(&mut r, "psf_profile.csv", "cut through the PSF centre, normalised to the peak", &t, line_plot("PSF profile", "x", &["intensity"]))?;

    let mut t = Table::new(&[("i", "px"), ("j", "px"), ("x", "um"), ("y", "um"), ("fraction", "1")], Computed);
    let total = p.camera.total();
    for j in 0..p.camera.n {
        for i in 0..p.camera.n {
            let pos = p.camera.position(i, j);
            t.row_f64(&[i as f64, j as f64, pos[0], pos[1], p.camera.values[j * p.camera.n + i] / total]);
        }
    }
    run.out.write_csv(&mut r, "psf_camera.csv", "image binned to camera pixels, fraction of the total per pixel", &t, None)?;
    if cfg.write_pgm {
        run.out.write_pgm(&mut r, "psf_camera.pgm", "camera-pixel image, first row at most negative y", p.camera.n, &p.camera.values)?;
        run.out.write_pgm(&mut r, "psf_fine.pgm", "oversampled image, first row at most negative y", p.fine.n, &p.fine.values)?;
    }
    run.finish(r)
}

/// Offsets where the coupling falls to half its value at zero offset, on
/// the negative and positive side (None when not reached).
pub fn half_width(points: &[SweepPoint]) -> (Option<f64>, Option<f64>) {
    let Some(i0) = points.iter().position(|p| p.offset_um == 0.0) else { return (None, None) };
    let half = 0.5 * points[i0].coupling;
    let cross = |a: &SweepPoint, b: &SweepPoint| a.offset_um + (half - a.coupling) * (b.offset_um - a.offset_um) / (b.coupling - a.coupling);
    let neg = (1..=i0).rev().find(|&k| points[k - 1].coupling <= half).map(|k| cross(&points[k], &points[k - 1]));
    let pos = (i0 + 1..points.len()).find(|&k| points[k].coupling <= half).map(|k| cross(&points[k - 1], &points[k]));
    (neg, pos)
}

pub fn couple(run: &Run) -> Result<Report> {
    let cfg = run.cfg;
    let mut r = run.report("couple");
    let d = Design::build(&cfg.optics)?;
    let c = PublishedConstants::load()?;
    let s = d.analyze()?;
    r.push(Quantity::new("fiber_na_eff", cfg.optics.fiber_na, "1", Published));
    r.push(Quantity::new("mode_waist", s.mode_waist_um, "um", Computed));
    r.push(Quantity::new("image_na", s.image_na, "1", Computed));
    r.push(
        Quantity::new("coupling", s.coupling.efficiency, "1", Computed)
            .pm(s.coupling.discretization_estimate)
            .note("focal-plane overlap at the best fiber focus; uncertainty is the discretization estimate"),
    );
    r.push(Quantity::new("coupling_pupil_route", s.coupling_pupil_route, "1", Computed).note("pupil-plane overlap at the same focus"));
    r.push(Quantity::new("fiber_defocus", s.fiber_defocus_um, "um", Computed).note("best fiber position relative to the geometric focus"));
    r.push(Quantity::new("theoretical_coupling_published", c.scalar("theoretical_coupling")?, "1", Published));
    r.push(Quantity::text("apodization", &format!("{:?}", cfg.optics.apodization), Assumed));
    if let Some(dp) = cfg.couple.dipole {
        let m = polarization_loss(cfg.optics.collection_na, dp)?;
        r.push(Quantity::text("dipole", &format!("{dp:?}"), Assumed));
        r.push(Quantity::new("polarization_multiplier", m, "1", Computed));
        r.push(Quantity::new("coupling_with_polarization", m * s.coupling.efficiency, "1", Computed));
    }

    let axes = [
        (SweepAxis::IonLateral, "ion_lateral", &cfg.couple.ion_lateral_um),
        (SweepAxis::IonAxial, "ion_axial", &cfg.couple.ion_axial_um),
        (SweepAxis::FiberLateral, "fiber_lateral", &cfg.couple.fiber_lateral_um),
        (SweepAxis::FiberAxial, "fiber_axial", &cfg.couple.fiber_axial_um),
    ];
    let mut t = Table::new(&[("axis", ""), ("offset", "um"), ("coupling", "1"), ("discretization_estimate", "1")], Computed);
    for (axis, name, offsets) in axes {
        if offsets.is_empty() {
            continue;
        }
        let pts = misalignment_sweep(&d, axis, offsets)?;
        for p in &pts {
            t.row(vec![name.into(), fmt_f64(p.offset_um), fmt_f64(p.coupling), fmt_f64(p.discretization_estimate)]);
        }
        match half_width(&pts) {
            (Some(a), Some(b)) => r.push(
                Quantity::new(&format!("half_coupling_offset_{name}"), 0.5 * (b - a), "um", Computed)
                    .note("mean distance from zero at which coupling halves"),
            ),
            _ => r.warn(format!("{name} sweep does not reach half coupling on both sides")),
        }
    }
    run.out.write_csv(
        &mut r,
        "couple_sweeps.csv",
        "coupling against one misalignment at a time, fiber held at the aligned best focus",
        &t,
        Some(PlotSpec {
            kind: "line".into(),
            x: "offset".into(),
            y: vec!["coupling".into()],
            group_by: Some("axis".into()),
            title: "Coupling against misalignment".into(),
        }),
    )?;
    run.finish(r)
}

pub fn clip(run: &Run) -> Result<Report> {
    let cfg = run.cfg;
    let mut r = run.report("clip");
    let c = PublishedConstants::load()?;
    let g = &cfg.clip.geometry;
    r.push(Quantity::new("rod_diameter", g.rod_diameter, "mm", Published));
    r.push(Quantity::new("wide_pitch", g.wide_pitch, "mm", Published));
    r.push(Quantity::new("narrow_pitch", g.narrow_pitch, "mm", Published));
    r.push(Quantity::text("orientation", &format!("{:?}", g.orientation), Assumed));
    r.push(Quantity::new("collection_na", cfg.clip.collection_na, "1", Published));
    let e = rod_clipping(g, cfg.clip.collection_na, cfg.clip.samples, cfg.seed)?;
    r.push(Quantity::new("blocked_fraction", e.blocked_fraction, "1", Computed).pm(e.standard_error).note("uncertainty is the Monte Carlo standard error"));
    r.push(Quantity::new("samples", e.samples as f64, "count", Assumed));
    r.push(Quantity::new("rod_transmission_model", 1.0 - e.blocked_fraction, "1", Computed));
    let (v, u) = c.with_uncertainty("rod_blocked_fraction")?;
    r.push(Quantity::new("blocked_fraction_published", v, "1", Published).pm(u));

    let mut t = Table::new(&[("na", "1"), ("blocked_fraction", "1"), ("standard_error", "1")], Computed);
    let n = cfg.clip.samples.min(1_000_000);
    for na in [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9] {
        let e = rod_clipping(g, na, n, cfg.seed)?;
        t.row_f64(&[na, e.blocked_fraction, e.standard_error]);
    }
    run.out.write_csv(&mut r, "clip_na.csv", "rod shadowing against collection NA", &t, line_plot("Rod shadowing", "na", &["blocked_fraction"]))?;
    run.finish(r)
}

/// Measured Ba+ frequencies: axial first, the stiffer radial mode on the
/// u axis.
pub fn measured_frequencies(khz: &[f64]) -> Result<Vec<MeasuredFrequency>> {
    if khz.is_empty() {
        return Err(Error::Config("trap.measured_khz is empty".into()));
    }
    let mut out = vec![MeasuredFrequency { axis: TrapAxis::Axial, khz: khz[0] }];
    let mut radial: Vec<f64> = khz[1..].to_vec();
    radial.sort_by(|a, b| b.total_cmp(a));
    for (k, f) in radial.into_iter().enumerate().take(2) {
        let axis = if k == 0 { TrapAxis::RadialU } else { TrapAxis::RadialV };
        out.push(MeasuredFrequency { axis, khz: f });
    }
    Ok(out)
}

pub fn trap(run: &Run) -> Result<Report> {
    let cfg = run.cfg;
    let tc = &cfg.trap;
    let mut r = run.report("trap");
    let ba = Ion::ba138();
    let yb = Ion::yb171();
    r.push(Quantity::new("rf_angular_frequency", tc.drive.rf_angular_frequency, "rad/s", Assumed));
    r.push(Quantity::new("rf_peak_to_peak", tc.drive.rf_peak_to_peak, "V", Assumed));
    r.push(Quantity::new("needle_dc", tc.drive.needle_dc, "V", Assumed));
    r.push(Quantity::new("r0", tc.geometry.r0(), "mm", Computed));
    r.push(Quantity::new("ion_rod_surface_distance", tc.geometry.ion_rod_surface_distance(), "mm", Computed));

    let mp = mathieu_params(&tc.drive, &tc.geometry, &ba)?;
    r.push(Quantity::list("mathieu_a", mp.a.to_vec(), "1", Computed).note("radial u, radial v, axial"));
    r.push(Quantity::list("mathieu_q", mp.q.to_vec(), "1", Computed));
    match secular_frequencies(&mp) {
        Ok(f) => r.push(Quantity::list("secular_frequencies_config", f.to_vec(), "kHz", Computed).note("Ba+ with the configured drive")),
        Err(e) => r.warn(format!("configured drive: {e}")),
    }

    let measured = measured_frequencies(&tc.measured_khz)?;
    r.push(Quantity::list("measured_frequencies", tc.measured_khz.clone(), "kHz", Published));
    let fit: GeometryFit = fit_geometry_factors(&measured, &tc.drive, &tc.geometry, &ba, FreeFactors::Both)?;
    r.push(Quantity::new("kappa_r_fit", fit.kappa_r, "1", Computed));
    r.push(Quantity::new("kappa_z_fit", fit.kappa_z, "1", Computed));
    r.push(Quantity::list("fit_residuals", fit.residuals_khz.clone(), "kHz", Computed).note("model minus measured, axial then radial"));
    let mut fitted = tc.drive.clone();
    fitted.kappa_r = fit.kappa_r;
    fitted.kappa_z = fit.kappa_z;
    let mp_fit = mathieu_params(&fitted, &tc.geometry, &ba)?;
    r.push(Quantity::list("mathieu_q_fit", mp_fit.q.to_vec(), "1", Computed));
    if let Ok(f) = secular_frequencies(&mathieu_params(&fitted, &tc.geometry, &yb)?) {
        r.push(Quantity::list("yb_secular_frequencies_fit", f.to_vec(), "kHz", Computed));
    }

    let scaled = scale_dc_frequency(measured[0].khz, ba.mass, yb.mass);
    r.push(Quantity::new("yb_axial_predicted", scaled, "kHz", Computed).note("measured Ba+ axial frequency scaled by sqrt(m_Ba / m_Yb)"));
    r.push(Quantity::new("yb_axial_measured", tc.yb_axial_khz, "kHz", Published));
    r.push(Quantity::new("yb_axial_relative_difference", (scaled - tc.yb_axial_khz) / tc.yb_axial_khz, "1", Computed));

    let map = potential_map(&tc.geometry, &fitted, &ba, &tc.map)?;
    r.push(Quantity::new("kappa_r_model", map.kappa_r_model, "1", Computed).note("line-charge quadrupole efficiency"));
    r.push(Quantity::new("rf_boundary_rms", map.rf_boundary_rms, "V", Computed));
    r.push(Quantity::new("static_hessian_trace", map.static_hessian_trace, "V/mm^2", Computed));
    let dh = (tc.map.h_range[1] - tc.map.h_range[0]).abs().min((tc.map.v_range[1] - tc.map.v_range[0]).abs());
    match map.pseudopotential_frequencies(&ba, 0.25 * dh) {
        Ok(f) => r.push(Quantity::list("pseudopotential_frequencies", f.to_vec(), "kHz", Computed).note("quadratic fit of the mapped pseudopotential")),
        Err(e) => r.warn(format!("pseudopotential fit: {e}")),
    }
    let mut t = Table::new(
        &[("h", "mm"), ("v", "mm"), ("static_potential", "V"), ("rf_amplitude", "V"), ("pseudopotential", "eV")],
        Computed,
    );
    for (iv, v) in map.v.iter().enumerate() {
        for (ih, h) in map.h.iter().enumerate() {
            let k = map.index(ih, iv);
            t.row_f64(&[*h, *v, map.static_potential[k], map.rf_amplitude[k], map.pseudopotential_ev[k]]);
        }
    }
    run.out.write_csv(&mut r, "trap_map.csv", "transverse potentials through the trap centre, v along the optical axis", &t, None)?;
    if cfg.write_pgm {
        run.out.write_pgm(&mut r, "trap_pseudopotential.pgm", "pseudopotential, first row at most negative v", map.h.len(), &map.pseudopotential_ev)?;
    }
    run.finish(r)
}

pub fn micromotion(run: &Run) -> Result<Report> {
    let cfg = run.cfg;
    let m = &cfg.micromotion;
    let mut r = run.report("micromotion");
    let c = PublishedConstants::load()?;
    let omega0 = std::f64::consts::PI / (m.carrier_pi_time_us * 1e-6);
    r.push(Quantity::new("carrier_pi_time", m.carrier_pi_time_us, "us", Published));
    r.push(Quantity::new("carrier_rabi", omega0, "rad/s", Computed));
    r.push(Quantity::new("sideband_ratio", m.ratio, "1", Assumed).note("sideband to carrier Rabi ratio consistent with the reported index"));
    let beta = beta_from_ratio(m.ratio)?;
    r.push(Quantity::new("beta", beta, "1", Computed));
    r.push(Quantity::new("beta_published", c.scalar("micromotion_beta")?, "1", Published));
    let roundtrip = linspace(0.0, 1.0, 201)
        .into_iter()
        .map(|b| beta_from_ratio(ratio_from_beta(b)).map(|x| (x - b).abs()))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    r.push(Quantity::new("bessel_roundtrip_max_error", roundtrip, "1", Computed).note("beta in [0, 1]"));

    let omega_sb = bessel_j1(beta).abs() * omega0;
    let t = m.probe_time_us * 1e-6;
    r.push(Quantity::new("sideband_rabi", omega_sb, "rad/s", Computed));
    r.push(Quantity::new("probe_time", m.probe_time_us, "us", Published));
    r.push(Quantity::new("sideband_pulse_area", omega_sb * t, "rad", Computed));
    r.push(Quantity::new("sideband_resonant_excitation", rabi_probability(omega_sb, 0.0, t), "1", Computed));

    let spacing = std::f64::consts::TAU * m.rf_mhz * 1e6;
    let det = linspace(-m.scan_khz, m.scan_khz, m.scan_points);
    let sb = sideband_spectrum(beta, omega0, m.probe_time_us, &det, 1, spacing)?;
    let carrier = sideband_spectrum(beta, omega0, m.probe_time_us, &det, 0, spacing)?;
    for w in sb.warnings.iter().chain(&carrier.warnings) {
        r.warn(w.clone());
    }
    let mut tab = Table::new(&[("detuning", "kHz"), ("sideband_probability", "1"), ("carrier_probability", "1")], Computed);
    for k in 0..det.len() {
        tab.row_f64(&[det[k], sb.probability[k], carrier.probability[k]]);
    }
    run.out.write_csv(
        &mut r,
        "micromotion_spectrum.csv",
        "excitation against detuning from the first micromotion sideband and from the carrier",
        &tab,
        line_plot("Micromotion spectrum", "detuning", &["sideband_probability", "carrier_probability"]),
    )?;

    r.push(Quantity::new("rf_frequency", m.rf_mhz, "MHz", Assumed));
    r.push(Quantity::new("q_radial", m.q_radial, "1", Assumed));
    r.push(Quantity::new("probe_wavelength", m.wavelength_nm, "nm", Published));
    let k = wavevector_rad_per_um(m.wavelength_nm);
    let disp = beta_to_displacement(beta, m.q_radial, k, m.beam_projection)?;
    r.push(Quantity::new("displacement_from_rf_null", disp * 1e3, "nm", Computed).note("from beta with the assumed q and beam projection"));
    run.finish(r)
}

/// Excitation curve recorded after one heating delay.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve {
    pub delay_ms: f64,
    pub t_us: Vec<f64>,
    pub probability: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct DecayRow {
    delay_ms: f64,
    time_us: f64,
    probability: f64,
}

/// Read delay_ms,time_us,probability rows, grouped by delay in order of
/// first appearance.
pub fn load_decay_csv(path: &Path) -> Result<Vec<DecayCurve>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("cannot read `{}`: {e}", path.display())))?;
    let mut curves: Vec<DecayCurve> = Vec::new();
    for (k, row) in rd.deserialize::<DecayRow>().enumerate() {
        let row = row.map_err(|e| Error::Config(format!("{}: row {}: {e}", path.display(), k + 2)))?;
        match curves.iter_mut().find(|c| c.delay_ms == row.delay_ms) {
            Some(c) => {
                c.t_us.push(row.time_us);
                c.probability.push(row.probability);
            }
            None => curves.push(DecayCurve {
                delay_ms: row.delay_ms,
                t_us: vec![row.time_us],
                probability: vec![row.probability],
            }),
        }
    }
    Ok(curves)
}

/// Noisy carrier curves for a linearly heating thermal state.
pub fn synthetic_decays(tc: &ThermometryConfig, eta: f64, seed: u64) -> Result<Vec<DecayCurve>> {
    let s = &tc.synthetic;
    let omega0 = std::f64::consts::TAU * s.rabi_khz * 1e3;
    let t = linspace(0.0, s.t_max_us, s.samples);
    let noise = Normal::new(0.0, s.noise).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    s.delays_ms
        .iter()
        .enumerate()
        .map(|(k, &delay)| {
            let nbar = s.initial_nbar + s.heating_rate * delay * 1e-3;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let probability = carrier_decay(omega0, eta, nbar, &t, DEFAULT_N_MAX)?
                .into_iter()
                .map(|p| (p + noise.sample(&mut rng)).clamp(0.0, 1.0))
                .collect();
            Ok(DecayCurve {
                delay_ms: delay,
                t_us: t.clone(),
                probability,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermometryResult {
    pub eta: f64,
    pub curves: Vec<DecayCurve>,
    pub fits: Vec<crate::thermometry::NbarFit>,
    pub heating: HeatingFit,
    /// Gate infidelity and its uncertainty from the fitted rate.
    pub infidelity: (f64, f64),
}

pub fn analyze_thermometry(tc: &ThermometryConfig, seed: u64) -> Result<ThermometryResult> {
    let eta = lamb_dicke(tc.wavelength_nm, tc.mass_u, tc.secular_khz, tc.projection)?;
    let curves = match &tc.data_file {
        Some(p) => load_decay_csv(p)?,
        None => synthetic_decays(tc, eta, seed)?,
    };
    let fits = curves
        .iter()
        .map(|c| fit_nbar(&c.t_us, &c.probability, eta, None))
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<(f64, f64)> = curves.iter().zip(&fits).map(|(c, f)| (c.delay_ms, f.nbar)).collect();
    let heating = heating_rate(&points)?;
    let infidelity = gate_infidelity_with_uncertainty(heating.rate.max(0.0), heating.rate_stderr, tc.gate_time_us)?;
    Ok(ThermometryResult {
        eta,
        curves,
        fits,
        heating,
        infidelity,
    })
}

pub fn thermometry(run: &Run) -> Result<Report> {
    let cfg = run.cfg;
    let tc = &cfg.thermometry;
    let mut r = run.report("thermometry");
    let c = PublishedConstants::load()?;
    let res = analyze_thermometry(tc, cfg.seed)?;
    r.push(Quantity::new("probe_wavelength", tc.wavelength_nm, "nm", Published));
    r.push(Quantity::new("secular_frequency", tc.secular_khz, "kHz", Published));
    r.push(Quantity::new("lamb_dicke", res.eta, "1", Computed));
    match &tc.data_file {
        Some(p) => r.push(Quantity::text("data", &p.display().to_string(), Published)),
        None => {
            let s = &tc.synthetic;
            r.push(Quantity::text("data", "synthetic", Assumed));
            r.push(Quantity::new("synthetic_heating_rate", s.heating_rate, "quanta/s", Assumed));
            r.push(Quantity::new("synthetic_initial_nbar", s.initial_nbar, "quanta", Assumed));
            r.push(Quantity::new("synthetic_rabi", s.rabi_khz, "kHz", Assumed));
            r.push(Quantity::new("synthetic_noise", s.noise, "1", Assumed));
        }
    }
    let nmax = res.fits.iter().map(|f| f.nbar).fold(0.0, f64::max);
    if let Some(w) = lamb_dicke_warning(res.eta, nmax) {
        r.warn(w);
    }
    for (cv, f) in res.curves.iter().zip(&res.fits) {
        if let Some(w) = &f.warning {
            r.warn(format!("delay {} ms: {w}", cv.delay_ms));
        }
    }
    r.push(Quantity::new("heating_rate", res.heating.rate, "quanta/s", Computed).pm(res.heating.rate_stderr));
    r.push(Quantity::new("nbar_at_zero_delay", res.heating.intercept, "quanta", Computed));
    r.push(Quantity::new("gate_time", tc.gate_time_us, "us", Published));
    r.push(Quantity::new("gate_infidelity", res.infidelity.0, "1", Computed).pm(res.infidelity.1).note("from the fitted heating rate"));
    let (h, hu) = c.with_uncertainty("heating_rate")?;
    let (g, gu) = gate_infidelity_with_uncertainty(h, hu, tc.gate_time_us)?;
    r.push(Quantity::new("heating_rate_published", h, "quanta/s", Published).pm(hu));
    r.push(Quantity::new("gate_infidelity_from_published_rate", g, "1", Computed).pm(gu));
    let (gp, gpu) = c.with_uncertainty("gate_infidelity")?;
    r.push(Quantity::new("gate_infidelity_published", gp, "1", Published).pm(gpu));

    let mut t = Table::new(&[("delay", "ms"), ("nbar", "quanta"), ("rabi", "kHz"), ("residual_rms", "1")], Computed);
    for (cv, f) in res.curves.iter().zip(&res.fits) {
        t.row_f64(&[cv.delay_ms, f.nbar, f.omega0 / std::f64::consts::TAU / 1e3, f.residual_rms]);
    }
    run.out.write_csv(&mut r, "thermometry_nbar.csv", "fitted mean phonon number per heating delay", &t, line_plot("Heating", "delay", &["nbar"]))?;
    let prov = if tc.data_file.is_some() { Published } else { Assumed };
    let mut t = Table::new(&[("delay", "ms"), ("time", "us"), ("probability", "1"), ("model", "1")], prov);
    t.columns[3].provenance = Computed;
    for (cv, f) in res.curves.iter().zip(&res.fits) {
        let model = carrier_decay(f.omega0, res.eta, f.nbar, &cv.t_us, DEFAULT_N_MAX)?;
        for k in 0..cv.t_us.len() {
            t.row_f64(&[cv.delay_ms, cv.t_us[k], cv.probability[k], model[k]]);
        }
    }
    run.out.write_csv(
        &mut r,
        "thermometry_data.csv",
        "carrier excitation data and fitted model",
        &t,
        Some(PlotSpec {
            kind: "line".into(),
            x: "time".into(),
            y: vec!["probability".into(), "model".into()],
            group_by: Some("delay".into()),
            title: "Carrier Rabi decay".into(),
        }),
    )?;
    run.finish(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetResult {
    pub factors: Vec<EfficiencyFactor>,
    pub single: ChainResult,
    pub two_sided: ChainResult,
    pub scenario: Scenario,
    pub outcome: ScenarioOutcome,
}

pub fn analyze_budget(cfg: &RunConfig) -> Result<BudgetResult> {
    let b = &cfg.budget;
    let mut factors = vec![EfficiencyFactor::new(
        "solid angle",
        solid_angle_fraction(b.collection_na)?,
        0.0,
        FactorProvenance::Computed,
    )?];
    factors.extend(b.factors.iter().cloned());
    let single = chain(&factors)?;
    let two_sided = total_two_sided_with_uncertainty(single, single)?;
    let sc: Scenario = match &b.scenario_file {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read scenario `{}`: {e}", p.display())))?;
            parse_toml(&text, &p.display().to_string())?
        }
        None => scenario(&b.scenario)?,
    };
    let outcome = evaluate_scenario(&sc, single.value)?;
    Ok(BudgetResult {
        factors,
        single,
        two_sided,
        scenario: sc,
        outcome,
    })
}

pub fn budget(run: &Run) -> Result<Report> {
    let cfg = run.cfg;
    let mut r = run.report("budget");
    let c = PublishedConstants::load()?;
    let b = analyze_budget(cfg)?;
    for f in &b.factors {
        r.push(Quantity::new(&format!("factor: {}", f.name), f.value, "1", f.provenance.into()).pm(f.value * f.relative_uncertainty));
    }
    r.push(Quantity::new("single_side_efficiency", b.single.value, "1", Computed).pm(b.single.uncertainty));
    r.push(Quantity::new("two_sided_efficiency", b.two_sided.value, "1", Computed).pm(b.two_sided.uncertainty).note("two independent sides, uncertainties in quadrature"));
    let (v, u) = c.with_uncertainty("single_side_efficiency")?;
    r.push(Quantity::new("single_side_efficiency_published", v, "1", Published).pm(u));
    let (v, u) = c.with_uncertainty("two_sided_efficiency")?;
    r.push(Quantity::new("two_sided_efficiency_published", v, "1", Published).pm(u));

    let s = &b.scenario;
    let o = &b.outcome;
    r.push(Quantity::text("scenario", &s.name, Assumed).note(if s.reconstructed {
        "assumption set reconstructed, not stated by the source"
    } else {
        "assumption set as stated"
    }));
    r.push(Quantity::text("topology", &format!("{:?}", s.topology), Assumed));
    r.push(Quantity::new("baseline_success", s.baseline_success, "1", Published));
    r.push(Quantity::new("baseline_rate", s.baseline_rate, "1/s", Published));
    r.push(Quantity::new("baseline_collection", s.baseline_collection, "1", Assumed));
    r.push(Quantity::new("baseline_directions", s.baseline_directions as f64, "count", Assumed));
    for f in &s.common_factors {
        r.push(Quantity::new(&format!("common factor: {}", f.name), f.value, "1", f.provenance.into()).note("held equal for both systems"));
    }
    for n in &s.notes {
        r.warn(format!("scenario note: {n}"));
    }
    r.push(Quantity::new("attempt_rate", o.attempt_rate, "1/s", Computed));
    r.push(Quantity::new("collection_factor", o.collection_factor, "1", Computed));
    r.push(Quantity::new("direction_factor", o.direction_factor, "1", Computed));
    r.push(Quantity::new("new_success", o.new.per_attempt_success, "1", Computed));
    r.push(Quantity::new("new_rate", o.new_rate, "1/s", Computed));
    r.push(Quantity::new("rate_ratio", o.rate_ratio, "1", Computed));
    r.push(Quantity::new("rate_ratio_published", c.scalar("rate_improvement")?, "1", Published));

    let mut t = Table::new(&[("factor", ""), ("value", "1"), ("relative_uncertainty", "1"), ("provenance", ""), ("cumulative", "1")], Computed);
    let mut cum = 1.0;
    for f in &b.factors {
        cum *= f.value;
        let p: Provenance = f.provenance.into();
        t.row(vec![
            f.name.clone(),
            fmt_f64(f.value),
            fmt_f64(f.relative_uncertainty),
            serde_json::to_value(p).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            fmt_f64(cum),
        ]);
    }
    run.out.write_csv(&mut r, "budget_chain.csv", "single-side efficiency chain in path order", &t, None)?;
    run.finish(r)
}

