//! Batch driver: single solves with diagnostics, smoothing convergence
//! studies, the target battery and the one-dimensional oracle table.

pub mod battery;
pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("cannot {action} {}: {source}", path.display())]
    Io {
        action: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Numeric(#[from] brenier::Error),
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl ToString) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => EXIT_CONFIG,
            CliError::Numeric(brenier::Error::NotConverged { .. }) => EXIT_NOT_CONVERGED,
            _ => EXIT_ERROR,
        }
    }
}

/// How a run ended once its reports were written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    NotConverged,
    CheckFailed,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => EXIT_OK,
            Status::NotConverged => EXIT_NOT_CONVERGED,
            Status::CheckFailed => EXIT_CHECK_FAILED,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "brenier",
    version,
    about = "Monge-Brenier potentials against the standard Gaussian"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one target and run every diagnostic on the result.
    Solve(RunArgs),
    /// Convergence study over a smoothing or truncation ladder.
    Study(RunArgs),
    /// Run the target battery (the built-in one unless the config lists entries).
    Battery(BatteryArgs),
    /// Dump the 1D monotone rearrangement table, optionally against a solve.
    Oracle(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the seed from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML experiment description.
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct BatteryArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors go to stderr, summaries to stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(outcome) => {
            println!("{}", outcome.headline);
            for path in &outcome.files {
                println!("wrote {}", path.display());
            }
            outcome.status.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<commands::Outcome, CliError> {
    let common = match command {
        Command::Solve(a) | Command::Study(a) | Command::Oracle(a) => &a.common,
        Command::Battery(a) => &a.common,
    };
    let body = || match command {
        Command::Solve(a) => commands::solve(&a.config, &a.common),
        Command::Study(a) => commands::study(&a.config, &a.common),
        Command::Oracle(a) => commands::oracle(&a.config, &a.common),
        Command::Battery(a) => commands::battery(a.config.as_deref(), &a.common),
    };
    match common.threads {
        None => body(),
        Some(0) => Err(CliError::config("--threads", "must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::config("--threads", e))?
            .install(body),
    }
}
