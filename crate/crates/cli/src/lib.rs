//! Command-line front end for `qdphase`.
//!
//! Every subcommand reads a single JSON run configuration (all keys optional,
//! unknown keys rejected), writes its outputs into one directory together with
//! a snapshot of the resolved configuration and a `manifest.json` of SHA-256
//! hashes, and exits with 0 (success), 2 (bad input), 3 (fit did not
//! converge) or 4 (internal error).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;

pub use bundle::{Bundle, Manifest};
pub use commands::{Format, Outcome};
pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "qdphase", version, about = "Simulate, extract and fit emitter phase-shift spectra")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON run configuration; defaults are used for every missing key.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "QDPHASE_OUT", default_value = "qdphase-out")]
    pub out: PathBuf,

    /// Overrides the noise seed and the environmental-phase seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fringe traces with the emitter on and off, plus model curves.
    Simulate,
    /// Phasor series from an on/off trace pair.
    Extract { on: PathBuf, off: PathBuf },
    /// FFT estimate of the path-length imbalance from one trace.
    Pathlength { trace: PathBuf },
    /// Joint fit of one or two phasor spectra.
    Fit { phasors: Vec<PathBuf> },
    /// Global fit of a power series of single-line phasor spectra.
    FitSaturation {
        phasors: Vec<PathBuf>,
        /// Power of each phasor file, in order.
        #[arg(long = "power")]
        powers: Vec<f64>,
    },
    /// Chiral thresholds and resonant response curves.
    PredictChiral,
}

/// Run a command against a resolved configuration without touching disk
/// beyond reading inputs.
pub fn execute(command: &Command, cfg: &RunConfig, fmt: Format) -> CliResult<Outcome> {
    match command {
        Command::Simulate => commands::simulate(cfg, fmt),
        Command::Extract { on, off } => commands::extract(cfg, fmt, on, off),
        Command::Pathlength { trace } => commands::pathlength(cfg, trace),
        Command::Fit { phasors } => commands::fit(cfg, fmt, phasors),
        Command::FitSaturation { phasors, powers } => {
            commands::fit_saturation(cfg, fmt, phasors, powers)
        }
        Command::PredictChiral => commands::predict_chiral(cfg, fmt),
    }
}

/// Load the configuration, run, and write the bundle. A fit that does not
/// converge still writes its bundle before the error is returned.
pub fn run(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        commands::apply_seed(&mut cfg, seed);
    }
    let outcome = execute(&cli.command, &cfg, cli.format)?;
    let written = outcome.bundle.write(&cli.out)?;
    log::info!("wrote {} file(s) to {}", written.len(), cli.out.display());
    match outcome.failure {
        Some(e) => Err(e),
        None => Ok(written),
    }
}
