//! Command-line front end: observability sweeps, scenario runs and filter
//! comparisons.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use bmsobs_core::filters::FilterKind;
use bmsobs_core::model::Variant;
use clap::{Args, Parser, Subcommand};

pub use error::CliError;

pub const SEED_ENV: &str = "BMSOBS_DEFAULT_SEED";
pub const FALLBACK_SEED: u64 = 7;

#[derive(Debug, Parser)]
#[command(name = "bmsobs", version, about = "Battery model observability and SOC estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rank and conditioning of the observability codistribution over an SOC grid.
    Observability(ObservabilityArgs),
    /// Run one scenario and write its trace and summary.
    Scenario(ScenarioArgs),
    /// Run several scenarios on the same truth and rank them by SOC error.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct ObservabilityArgs {
    #[arg(long)]
    pub variant: Option<Variant>,
    /// SOC grid as start:stop:step [default: 0.1:1.0:0.01]
    #[arg(long)]
    pub grid: Option<String>,
    /// Highest Lie-derivative order [default: 12]
    #[arg(long)]
    pub max_order: Option<usize>,
    /// Force equal RC time constants.
    #[arg(long)]
    pub tau_equal: bool,
    /// Exit with status 2 if any grid point is rank-deficient.
    #[arg(long)]
    pub expect_observable: bool,
    /// Sweep CSV path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cell parameters and sweep settings from a TOML file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Built-in scenario name.
    pub name: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub filter: Option<FilterKind>,
    /// Trace CSV path; stdout when absent (the summary then goes to stderr).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Built-in scenario names or TOML config paths.
    #[arg(required = true, num_args = 2..)]
    pub scenarios: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the ranking report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Seed used when neither a flag nor a config file sets one.
pub fn default_seed() -> Result<u64, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(FALLBACK_SEED),
        Err(e) => Err(CliError::Usage(format!("{SEED_ENV}: {e}"))),
    }
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 64 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Observability(a) => commands::observability(&a),
        Command::Scenario(a) => commands::scenario(&a),
        Command::Compare(a) => commands::compare(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("bmsobs: {e}");
            e.exit_code()
        }
    }
}
