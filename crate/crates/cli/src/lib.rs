//! Configuration-driven experiment runner for the `condor` binary.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use condor_core::metrics::SweepAxis;
use condor_core::Error as CoreError;

use config::{ConfigError, ExperimentConfig, FileConfig, Overrides, Profile, OUTPUT_ENV};

#[derive(Debug, Parser)]
#[command(name = "condor", version, about = "Rough-volatility Iron Condor experiments")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Scale defaults.
    #[arg(long, global = true, value_enum)]
    pub profile: Option<Profile>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub n_paths: Option<usize>,
    #[arg(long, global = true)]
    pub n_inner: Option<usize>,
    #[arg(long, global = true)]
    pub repeats: Option<usize>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, env = OUTPUT_ENV)]
    pub output_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate rough Heston paths into a dataset directory.
    Simulate,
    /// Price every strike along the dataset paths.
    Price,
    /// Metrics table for the configured portfolios on the priced dataset.
    Metrics,
    /// Parameter sweep with pooled repeats.
    Sweep {
        #[arg(long, value_parser = parse_axis)]
        axis: SweepAxis,
    },
    /// Late-stopping check on a bounded martingale plus theta ordering.
    TheoremCheck {
        /// Feed a strictly decreasing profit curve to the stopping rule.
        #[arg(long)]
        inject_supermartingale: bool,
    },
    /// Normalized P&L over option-chain CSV snapshots.
    Replay {
        #[arg(long)]
        chains: Option<PathBuf>,
    },
    /// All three sweeps on shared simulations and a combined report.
    Report,
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    s.parse()
}

/// Process exit code for an error: 2 for configuration or input problems,
/// 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<CoreError>() {
        Some(
            CoreError::InvalidParameter { .. }
            | CoreError::InvalidHorizon
            | CoreError::StrikeOrderViolation(..)
            | CoreError::StrikeNotOnGrid(_)
            | CoreError::StrikeStructureViolation(_)
            | CoreError::SchemaViolation { .. }
            | CoreError::EmptyDirectory(_)
            | CoreError::NoMatchingStrikes(_)
            | CoreError::CapacityExceeded { .. }
            | CoreError::Dataset { .. },
        ) => 2,
        _ => 1,
    }
}

/// Runs the parsed command; `Ok(false)` means a check ran and failed.
pub fn run(cli: Cli) -> anyhow::Result<bool> {
    let file = match &cli.config {
        Some(p) => config::read_file_config(p)?,
        None => FileConfig::default(),
    };
    let flags = Overrides {
        profile: cli.profile,
        n_paths: cli.n_paths,
        n_inner: cli.n_inner,
        repeats: cli.repeats,
        seed: cli.seed,
        output_dir: cli.output_dir.clone(),
    };
    let cfg = ExperimentConfig::resolve(file, &flags, None)?;
    let pool = match cli.workers {
        Some(0) => return Err(ConfigError("--workers must be positive".into()).into()),
        Some(w) => Some(rayon::ThreadPoolBuilder::new().num_threads(w).build()?),
        None => None,
    };
    let command = cli.command;
    let dispatch = move || match command {
        Command::Simulate => commands::simulate(&cfg).map(|_| true),
        Command::Price => commands::price(&cfg).map(|_| true),
        Command::Metrics => commands::metrics(&cfg).map(|_| true),
        Command::Sweep { axis } => commands::sweep(&cfg, axis).map(|_| true),
        Command::TheoremCheck { inject_supermartingale } => commands::theorem_check(&cfg, inject_supermartingale),
        Command::Replay { chains } => commands::replay_cmd(&cfg, chains.as_deref()).map(|_| true),
        Command::Report => commands::full_report(&cfg).map(|_| true),
    };
    match pool {
        Some(pool) => pool.install(dispatch),
        None => dispatch(),
    }
}
