//! Experiment runner for `logdet-lab`: parses a JSON config, runs one
//! subcommand and writes CSV/JSON artifacts with a reproducibility manifest.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use commands::Outcome;
pub use config::ExperimentConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) | CliError::Io(_) => EXIT_NUMERICAL,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "logdet-lab", version, about = "Log-determinant and counting fields of Wigner matrices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true, env = "LOGDET_LAB_THREADS")]
    pub threads: Option<usize>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Closed-form identity battery.
    Identities,
    /// Monte Carlo pairings, covariances and normality diagnostics.
    Mc,
    /// Per-mode variance decay and fitted slopes.
    Scan,
    /// Truncated H^{-r} norms across matrix sizes.
    Sobolev,
    /// Limit-field synthesizer against the series covariance.
    Synth,
    /// Kernel tabulation off the diagonal.
    Kernels,
}

impl Command {
    fn needs_config(self) -> bool {
        !matches!(self, Command::Identities | Command::Kernels)
    }
}

/// Runs one subcommand with a parsed config; `out` defaults to the
/// config's `output` and then to `logdet-lab-out`.
pub fn execute(command: Command, config: Option<&ExperimentConfig>, out: Option<&Path>) -> Result<Outcome, CliError> {
    let out = out
        .map(Path::to_path_buf)
        .or_else(|| config.and_then(|c| c.output.clone()))
        .unwrap_or_else(|| PathBuf::from("logdet-lab-out"));
    let need = || config.ok_or_else(|| CliError::Config("this subcommand needs --config".into()));
    match command {
        Command::Identities => commands::cmd_identities(config, &out),
        Command::Kernels => commands::cmd_kernels(config, &out),
        Command::Mc => commands::cmd_mc(need()?, &out),
        Command::Scan => commands::cmd_scan(need()?, &out),
        Command::Sobolev => commands::cmd_sobolev(need()?, &out),
        Command::Synth => commands::cmd_synth(need()?, &out),
    }
}

/// Parses, applies `--seed`, runs under the thread cap and returns the exit code.
pub fn run(cli: Cli) -> i32 {
    let config = match &cli.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(mut c) => {
                if let Some(s) = cli.seed {
                    c.seed = s;
                }
                Some(c)
            }
            Err(e) => {
                eprintln!("error: {e}");
                return e.exit_code();
            }
        },
        None if cli.command.needs_config() => {
            eprintln!("error: this subcommand needs --config");
            return EXIT_CONFIG;
        }
        None => None,
    };
    let result =
        logdet_lab::spectra::with_threads(cli.threads, || execute(cli.command, config.as_ref(), cli.out.as_deref()));
    match result {
        Ok(outcome) => {
            if outcome.code == EXIT_OK {
                println!("{}", outcome.message);
            } else {
                eprintln!("{}", outcome.message);
            }
            outcome.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
