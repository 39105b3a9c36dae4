//! Command-line entry point: single runs, experiment sweeps, and alpha
//! inspection.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fedaloha_core::{ConfigError, Error};

use crate::config::{parse_config_file, Parsed};

#[derive(Debug, Parser)]
#[command(
    name = "fedaloha",
    about = "Simulator of federated learning over multichannel slotted ALOHA with energy-harvesting devices",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Configuration file (TOML key-value pairs); defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the replication count
    #[arg(long)]
    replications: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a single experiment and write its trace
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Output directory for results.csv and metadata.toml
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a sweep over an axis (iterations, mean-income, users, threshold)
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Output directory for results.csv and metadata.toml
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print the resolved sleep coefficient alpha without simulating
    Alpha {
        #[command(flatten)]
        common: CommonArgs,
    },
}

/// Exit codes: 0 success, 1 configuration or I/O error, 2 runtime invariant
/// violation.
fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let invariant = e
                .downcast_ref::<Error>()
                .map(|err| matches!(err, Error::Sim(_)))
                .unwrap_or(false);
            if invariant {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { common, out } => {
            let parsed = load(&common)?;
            let cfg = match parsed {
                Parsed::Run(cfg) => cfg,
                Parsed::Sweep(_) => anyhow::bail!(ConfigError::new(
                    "axis",
                    "this file describes a sweep; use the `sweep` subcommand",
                )),
            };
            output::write_run(&cfg, &out)
        }
        Command::Sweep { common, out } => {
            let parsed = load(&common)?;
            let spec = match parsed {
                Parsed::Sweep(spec) => spec,
                Parsed::Run(_) => anyhow::bail!(ConfigError::new(
                    "axis",
                    "this file describes a single run (no sweep axis); use the `run` subcommand",
                )),
            };
            output::write_sweep(&spec, &out)
        }
        Command::Alpha { common } => {
            let parsed = load(&common)?;
            let cfg = match parsed {
                Parsed::Run(cfg) => cfg,
                Parsed::Sweep(spec) => spec.base,
            };
            if !cfg.strategy.uses_sleep() {
                anyhow::bail!(ConfigError::new(
                    "strategy",
                    format!(
                        "strategy '{}' has no sleep mechanism and thus no alpha",
                        cfg.strategy
                    ),
                ));
            }
            let alpha = cfg
                .resolve_alpha()
                .map_err(Error::from)?
                .expect("sleep strategy resolves an alpha");
            println!("{alpha}");
            Ok(())
        }
    }
}

fn load(common: &CommonArgs) -> anyhow::Result<Parsed> {
    let mut parsed = parse_config_file(common.config.as_deref())?;
    let cfg = match &mut parsed {
        Parsed::Run(cfg) => cfg,
        Parsed::Sweep(spec) => &mut spec.base,
    };
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(reps) = common.replications {
        cfg.replications = reps;
    }
    cfg.validate().map_err(Error::from)?;
    Ok(parsed)
}
