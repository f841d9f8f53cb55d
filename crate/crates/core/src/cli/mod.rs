//! The `chung-lab` command line: campaign configuration, deterministic
//! execution in checkpointed work units, and CSV results.

pub mod checkpoint;
mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::Outcome;
pub use config::CampaignConfig;

/// Exit status for a completed run whose checks all passed.
pub const EXIT_OK: i32 = 0;
/// A checked tolerance or property was violated.
pub const EXIT_VIOLATION: i32 = 1;
/// Bad configuration or arguments.
pub const EXIT_USAGE: i32 = 2;
/// Results are incomplete because a budget ran out.
pub const EXIT_PARTIAL: i32 = 3;
/// Stopped early on request; rerun with `--resume` to finish.
pub const EXIT_INTERRUPTED: i32 = 75;

#[derive(Debug, Parser)]
#[command(name = "chung-lab", version, about = "Stochastic heat equation Monte Carlo campaigns")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check heat-kernel mass, semigroup and representation agreement.
    KernelCheck(CommonArgs),
    /// Estimate small-ball / tail probabilities over a lambda grid.
    Smallball(CommonArgs),
    /// Refit the tail exponent from an existing smallball CSV.
    Tailfit(CommonArgs),
    /// Run the truncation / freezing coupling across scales.
    Couple(CommonArgs),
    /// Distribution of the normalized window sup across scales.
    ChungScan(CommonArgs),
    /// Brownian small-ball series values and Monte Carlo cross-check.
    BmOracle(CommonArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::KernelCheck(_) => "kernel-check",
            Command::Smallball(_) => "smallball",
            Command::Tailfit(_) => "tailfit",
            Command::Couple(_) => "couple",
            Command::ChungScan(_) => "chung-scan",
            Command::BmOracle(_) => "bm-oracle",
        }
    }

    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::KernelCheck(a)
            | Command::Smallball(a)
            | Command::Tailfit(a)
            | Command::Couple(a)
            | Command::ChungScan(a)
            | Command::BmOracle(a) => a,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Campaign configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Continue from the checkpoint of an earlier run of the same campaign.
    #[arg(long)]
    pub resume: bool,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Stop after computing this many work units.
    #[arg(long, hide = true)]
    pub max_units: Option<usize>,
}

/// Parse arguments and run; returns the process exit status.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::execute(&cli.command) {
        Ok(outcome) => {
            eprintln!("{}", outcome.message);
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                crate::Error::Config(_)
                | crate::Error::Domain(_)
                | crate::Error::Precondition(_)
                | crate::Error::Format(_) => EXIT_USAGE,
                crate::Error::Resource { .. } => EXIT_PARTIAL,
                _ => EXIT_VIOLATION,
            }
        }
    }
}
