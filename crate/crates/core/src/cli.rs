//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{self, Run};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::report::{OutDir, Provenance, Report, Value};
use crate::reproduce::{format_table, reproduce};

#[derive(Debug, Parser)]
#[command(name = "ionlink", version, about = "Collection optics, trap and link-budget calculations for trapped-ion nodes")]
pub struct Cli {
    /// TOML run configuration; the shipped defaults are used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random stream; overrides the config.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory for JSON reports, CSV series and images.
    #[arg(long, global = true, value_name = "DIR", default_value = "ionlink-out")]
    pub out: PathBuf,
    /// Multiplies every acceptance tolerance; overrides the config.
    #[arg(long = "tolerance-scale", global = true, value_name = "FLOAT")]
    pub tolerance_scale: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Ray trace the collection train: spot diagram, OPD, through-focus.
    Trace,
    /// Point-spread function on camera pixels and enclosed fractions.
    Psf,
    /// Fiber coupling and its sensitivity to misalignment.
    Couple,
    /// Monte Carlo shadowing by the trap rods.
    Clip,
    /// Mathieu parameters, secular frequencies and potential maps.
    Trap,
    /// Micromotion index, sideband spectrum and displacement.
    Micromotion,
    /// Carrier-decay thermometry fits and heating rate.
    Thermometry,
    /// Efficiency chain and entanglement-rate scenario.
    Budget,
    /// Run every acceptance criterion; exits nonzero if any fails.
    ReproducePaper,
}

/// Exit status for configuration and input errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for runtime errors and failed acceptance criteria.
pub const EXIT_FAILURE: i32 = 1;

pub fn load_config(cli: &Cli) -> Result<(RunConfig, String)> {
    let (mut cfg, label) = match &cli.config {
        Some(p) => (RunConfig::load(p)?, p.display().to_string()),
        None => (RunConfig::shipped_default()?, "default".to_string()),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.tolerance_scale {
        cfg.tolerance_scale = t;
    }
    cfg.validate()?;
    Ok((cfg, label))
}

fn format_value(v: &Value) -> String {
    match v {
        Value::Scalar(x) => format!("{x:.6}"),
        Value::List(xs) => format!("[{}]", xs.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ")),
        Value::Text(s) => s.clone(),
    }
}

fn print_report(r: &Report) {
    for q in &r.quantities {
        let pm = q.uncertainty.map(|u| format!(" +- {u:.6}")).unwrap_or_default();
        let prov = match q.provenance {
            Provenance::Published => "published",
            Provenance::Computed => "computed",
            Provenance::Assumed => "assumed",
        };
        println!("{:<40} {}{} {} [{prov}]", q.name, format_value(&q.value), pm, q.unit);
    }
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let (cfg, label) = load_config(cli)?;
    let out = OutDir::create(&cli.out)?;
    let run = Run {
        cfg: &cfg,
        out: &out,
        config_label: &label,
    };
    let report = match cli.command {
        Command::Trace => commands::trace(&run)?,
        Command::Psf => commands::psf(&run)?,
        Command::Couple => commands::couple(&run)?,
        Command::Clip => commands::clip(&run)?,
        Command::Trap => commands::trap(&run)?,
        Command::Micromotion => commands::micromotion(&run)?,
        Command::Thermometry => commands::thermometry(&run)?,
        Command::Budget => commands::budget(&run)?,
        Command::ReproducePaper => {
            let (r, ok) = reproduce(&run)?;
            print!("{}", format_table(&r.checks));
            let passed = r.checks.iter().filter(|c| c.passed).count();
            println!("{passed}/{} criteria passed", r.checks.len());
            return Ok(if ok { 0 } else { EXIT_FAILURE });
        }
    };
    print_report(&report);
    Ok(0)
}

/// Parse `args` (including the program name) and run; returns the exit
/// status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => EXIT_CONFIG,
                _ => EXIT_FAILURE,
            }
        }
    }
}
