//! `switchback` command-line driver.
//!
//! Exit codes: 0 success, 1 runtime failure (including failed verification),
//! 2 invalid configuration or arguments.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use commands::{cmd_simulate, cmd_sweep, cmd_verify, cmd_verify_with};
pub use config::{Overrides, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<switchback::Error> for CliError {
    fn from(e: switchback::Error) -> Self {
        use switchback::Error as E;
        match e {
            E::Domain(_) | E::Construction(_) | E::Config(_) | E::Usage(_) => CliError::Validation(e.to_string()),
            E::NonDifferentiable { .. } | E::InternalConsistency(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o error: {e}"))
    }
}

#[derive(Debug, Parser)]
#[command(name = "switchback", version, about = "Switchback pricing experiments with forward-looking buyers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run replications of one experiment; write traces and an estimator summary.
    Simulate(Common),
    /// Sweep estimators over grids of ending probabilities and discount steps.
    Sweep(Common),
    /// Run the acceptance suite and the identification and ladder-shift checks.
    Verify(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    replications: Option<usize>,
    /// Run every experiment for exactly T periods.
    #[arg(long, value_name = "T")]
    fixed_horizon: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut config = RunConfig::load(&self.config)?;
        config.apply(&Overrides {
            seed: self.seed,
            out: self.out.clone(),
            replications: self.replications,
            fixed_horizon: self.fixed_horizon,
        });
        Ok(config)
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Simulate(c) => c.load().and_then(|cfg| cmd_simulate(&cfg).map(|_| 0)),
        Command::Sweep(c) => c.load().and_then(|cfg| cmd_sweep(&cfg).map(|_| 0)),
        Command::Verify(c) => c.load().and_then(|cfg| cmd_verify(&cfg).map(|r| if r.passed { 0 } else { 1 })),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
