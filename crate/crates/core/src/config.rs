//! Run configuration loaded from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::budget::{EfficiencyFactor, Provenance};
use crate::data::{parse_toml, DEFAULT_CONFIG_TOML};
use crate::error::{ensure, Error, Result};
use crate::fiber::Dipole;
use crate::system::DesignConfig;
use crate::trap::{DriveParameters, GridSpec, TrapGeometry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Multiplies every acceptance tolerance.
    pub tolerance_scale: f64,
    /// Also write 16-bit PGM images next to the CSV series.
    pub write_pgm: bool,
    pub optics: DesignConfig,
    pub psf: PsfConfig,
    pub couple: CoupleConfig,
    pub clip: ClipConfig,
    pub trap: TrapConfig,
    pub micromotion: MicromotionConfig,
    pub thermometry: ThermometryConfig,
    pub budget: BudgetConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            tolerance_scale: 1.0,
            write_pgm: true,
            optics: DesignConfig::default(),
            psf: PsfConfig::default(),
            couple: CoupleConfig::default(),
            clip: ClipConfig::default(),
            trap: TrapConfig::default(),
            micromotion: MicromotionConfig::default(),
            thermometry: ThermometryConfig::default(),
            budget: BudgetConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceErrorConfig {
    /// RMS irregularity per refracting surface (nm).
    pub rms_nm: Vec<f64>,
    pub correlation_length_mm: f64,
}

impl Default for SurfaceErrorConfig {
    fn default() -> Self {
        Self {
            rms_nm: vec![17.0, 22.0],
            correlation_length_mm: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsfConfig {
    pub pixel_um: f64,
    /// Sub-samples per camera pixel before binning.
    pub oversample: usize,
    /// Camera frame width in pixels (odd).
    pub frame_pixels: usize,
    pub side_lengths: Vec<usize>,
    /// Adds synthetic surface errors to a second, perturbed PSF.
    pub surface_error: Option<SurfaceErrorConfig>,
    /// Measured enclosed fractions, CSV with columns side_px,fraction. The
    /// simulated curve must lie at or above every point.
    pub fixture_file: Option<PathBuf>,
}

impl Default for PsfConfig {
    fn default() -> Self {
        Self {
            pixel_um: 2.2,
            oversample: 11,
            frame_pixels: 31,
            side_lengths: (1..=15).collect(),
            surface_error: Some(SurfaceErrorConfig::default()),
            fixture_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoupleConfig {
    pub ion_lateral_um: Vec<f64>,
    pub ion_axial_um: Vec<f64>,
    pub fiber_lateral_um: Vec<f64>,
    pub fiber_axial_um: Vec<f64>,
    /// Dipole used for the polarization multiplier; omitted means none is
    /// applied.
    pub dipole: Option<Dipole>,
}

fn span(max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| -max + 2.0 * max * k as f64 / (n - 1) as f64).collect()
}

impl Default for CoupleConfig {
    fn default() -> Self {
        Self {
            ion_lateral_um: span(0.5, 17),
            ion_axial_um: span(1.0, 17),
            fiber_lateral_um: span(4.0, 17),
            fiber_axial_um: span(80.0, 17),
            dipole: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClipConfig {
    pub collection_na: f64,
    pub samples: usize,
    pub geometry: TrapGeometry,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self {
            collection_na: 0.8,
            samples: 10_000_000,
            geometry: TrapGeometry::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrapConfig {
    pub geometry: TrapGeometry,
    pub drive: DriveParameters,
    /// Measured Ba+ secular frequencies, lowest (axial) first (kHz).
    pub measured_khz: Vec<f64>,
    /// Measured Yb+ axial frequency (kHz).
    pub yb_axial_khz: f64,
    pub map: GridSpec,
}

impl Default for TrapConfig {
    fn default() -> Self {
        Self {
            geometry: TrapGeometry::default(),
            drive: DriveParameters::default(),
            measured_khz: vec![330.0, 705.0, 888.0],
            yb_axial_khz: 286.0,
            map: GridSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MicromotionConfig {
    pub carrier_pi_time_us: f64,
    pub ratio: f64,
    pub probe_time_us: f64,
    pub wavelength_nm: f64,
    pub beam_projection: f64,
    /// Detuning scan half-width (kHz) and number of points.
    pub scan_khz: f64,
    pub scan_points: usize,
    /// RF drive frequency, for the resolved-sideband check (MHz).
    pub rf_mhz: f64,
    pub q_radial: f64,
}

impl Default for MicromotionConfig {
    fn default() -> Self {
        Self {
            carrier_pi_time_us: 5.5,
            ratio: 0.011,
            probe_time_us: 500.0,
            wavelength_nm: 1762.0,
            beam_projection: 1.0,
            scan_khz: 10.0,
            scan_points: 201,
            rf_mhz: 20.0,
            q_radial: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermometryConfig {
    pub wavelength_nm: f64,
    pub mass_u: f64,
    pub secular_khz: f64,
    pub projection: f64,
    pub gate_time_us: f64,
    /// CSV with columns delay_ms,time_us,probability. When absent a
    /// synthetic data set is generated from `synthetic`.
    pub data_file: Option<PathBuf>,
    pub synthetic: SyntheticThermometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticThermometry {
    pub delays_ms: Vec<f64>,
    /// quanta/s
    pub heating_rate: f64,
    pub initial_nbar: f64,
    /// Carrier Rabi frequency (kHz, cycles).
    pub rabi_khz: f64,
    pub samples: usize,
    pub t_max_us: f64,
    /// Gaussian noise on each excitation probability.
    pub noise: f64,
}

impl Default for SyntheticThermometry {
    fn default() -> Self {
        Self {
            delays_ms: vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0],
            heating_rate: 285.0,
            initial_nbar: 8.0,
            rabi_khz: 100.0,
            samples: 60,
            t_max_us: 50.0,
            noise: 0.01,
        }
    }
}

impl Default for ThermometryConfig {
    fn default() -> Self {
        Self {
            wavelength_nm: 435.0,
            mass_u: crate::constants::MASS_YB171_U,
            secular_khz: 286.0,
            projection: 1.0,
            gate_time_us: 200.0,
            data_file: None,
            synthetic: SyntheticThermometry::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    pub collection_na: f64,
    /// Factors after the solid angle, in path order.
    pub factors: Vec<EfficiencyFactor>,
    /// Shipped scenario name, ignored when `scenario_file` is set.
    pub scenario: String,
    pub scenario_file: Option<PathBuf>,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        let f = |name: &str, v: f64, u: f64| EfficiencyFactor {
            name: name.into(),
            value: v,
            relative_uncertainty: u / v,
            provenance: Provenance::Measured,
        };
        Self {
            collection_na: 0.8,
            factors: vec![
                f("asphere transmission", 0.91, 0.03),
                f("rod transmission", 0.97, 0.01),
                f("fiber coupling", 0.30, 0.03),
            ],
            scenario: "two-node".into(),
            scenario_file: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, source: &str) -> Result<Self> {
        let mut cfg: RunConfig = parse_toml(text, source)?;
        cfg.validate()?;
        cfg.resolve_paths(None);
        Ok(cfg)
    }

    /// Load a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config `{}`: {e}", path.display())))?;
        let mut cfg: RunConfig = parse_toml(&text, &path.display().to_string())?;
        cfg.validate()?;
        cfg.resolve_paths(path.parent());
        Ok(cfg)
    }

    pub fn shipped_default() -> Result<Self> {
        Self::from_toml(DEFAULT_CONFIG_TOML, "default_config.toml")
    }

    fn resolve_paths(&mut self, base: Option<&Path>) {
        let Some(base) = base else { return };
        for p in [&mut self.thermometry.data_file, &mut self.budget.scenario_file, &mut self.psf.fixture_file].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.tolerance_scale > 0.0 && self.tolerance_scale.is_finite(), || {
            "tolerance_scale must be positive".into()
        })?;
        self.optics.validate()?;
        ensure(self.psf.pixel_um > 0.0 && self.psf.oversample >= 1, || "psf pixel and oversample must be positive".into())?;
        ensure(self.psf.frame_pixels % 2 == 1, || "psf.frame_pixels must be odd".into())?;
        ensure(self.psf.side_lengths.iter().all(|&n| n >= 1 && n <= self.psf.frame_pixels), || {
            "psf.side_lengths must lie in [1, frame_pixels]".into()
        })?;
        ensure(self.clip.samples > 0, || "clip.samples must be positive".into())?;
        self.clip.geometry.validate()?;
        self.trap.geometry.validate()?;
        self.trap.drive.validate()?;
        ensure(self.micromotion.scan_points >= 2, || "micromotion.scan_points must be >= 2".into())?;
        ensure(self.thermometry.synthetic.samples >= 10, || "thermometry.synthetic.samples must be >= 10".into())?;
        for f in &self.budget.factors {
            f.validate()?;
        }
        Ok(())
    }
}
