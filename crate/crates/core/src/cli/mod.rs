//! Command-line workflows: simulate synthetic observations, trace the
//! S-curve, and run the full estimation.

pub mod config;
pub mod invert;
pub mod io;
pub mod simulate;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{BoundsSpec, GeometrySpec, ModelSpec, NoiseSpec, ObservationGeometry, RunConfig};
pub use invert::{cmd_invert, cmd_scurve, cmd_selftest, prepare, Prepared};
pub use simulate::{cmd_simulate, simulate, Simulation, TruthManifest};

use crate::error::{Error, Result};

/// How a command finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// No model satisfies every configured bound.
    Infeasible,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::Infeasible => 2,
        }
    }
}

/// Exit code for a command that failed.
pub const FAILURE_EXIT_CODE: u8 = 1;

#[derive(Debug, Parser)]
#[command(name = "mce", version, about = "Maximum compatibility estimation for shape-from-projections")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render synthetic brightness and profile data from a truth shape.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full estimation and write the report.
    Invert {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trace the S-curve only.
    Scurve {
        /// Run configuration (JSON).
        #[arg(long, required_unless_present = "selftest")]
        config: Option<PathBuf>,
        /// Output directory; a self-test without it prints the curve.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Built-in test problem instead of shape data.
        #[arg(long, value_name = "NAME")]
        selftest: Option<String>,
    },
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Simulate { config, out } => {
            cmd_simulate(&RunConfig::load(config)?, &out)?;
            Ok(Outcome::Success)
        }
        Command::Invert { config, out } => cmd_invert(&RunConfig::load(config)?, &out),
        Command::Scurve { config, out, selftest } => {
            let config = config.map(RunConfig::load).transpose()?;
            match (selftest, config, out) {
                (Some(name), config, out) => {
                    cmd_selftest(&name, config.as_ref(), out.as_deref(), &mut std::io::stdout().lock())?;
                }
                (None, Some(config), Some(out)) => cmd_scurve(&config, &out)?,
                (None, _, None) => return Err(Error::Config("scurve needs --out".into())),
                (None, None, _) => return Err(Error::Config("scurve needs --config".into())),
            }
            Ok(Outcome::Success)
        }
    }
}

/// Caps the global thread pool from `MCE_THREADS`, if set.
pub fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("MCE_THREADS") else { return Ok(()) };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("MCE_THREADS must be a positive integer, got `{value}`")))?;
    if n == 0 {
        return Err(Error::Config("MCE_THREADS must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot configure thread pool: {e}")))
}
