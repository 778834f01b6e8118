//! Command-line front end for `stable_posi`: run stable selectors on CSV data,
//! build corrected intervals, sweep simulation studies, and print budgets.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or parse error,
//! 3 dimension mismatch, 4 rank deficiency, 5 sigma estimation with `n <= d`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use stable_posi::PosiError;

pub mod commands;
pub mod io;
pub mod manifest;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Posi(#[from] PosiError),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Parse(_) => 2,
            CliError::Io(_) => 1,
            CliError::Posi(e) => match e {
                PosiError::DimensionMismatch { .. } => 3,
                PosiError::RankDeficient { .. } => 4,
                PosiError::InsufficientSamples { .. } => 5,
                PosiError::InvalidParameter(_)
                | PosiError::DegenerateLevel(_)
                | PosiError::BadWeights(_)
                | PosiError::UnregisteredOrlicz(_)
                | PosiError::EmptyInput(_) => 2,
                PosiError::MixedSlack { .. }
                | PosiError::NonConvergence { .. }
                | PosiError::AllCandidatesCollinear { .. } => 1,
            },
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "stable-posi", version, about = "Stability-corrected post-selection intervals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Run a stable selector on CSV data.
    Select(SelectArgs),
    /// Corrected intervals for a stored selection.
    Ci(CiArgs),
    /// Simulation sweep over an eta grid.
    Experiment(ExperimentArgs),
    /// Composed budgets for k rounds.
    Budget(BudgetArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lasso,
    Screen,
    Fs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SelectArgs {
    /// Design matrix CSV, one row per observation.
    #[arg(long)]
    pub x: PathBuf,
    /// Response CSV, one column.
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Per-round eta.
    #[arg(long)]
    pub eta: f64,
    /// Failure probability of the noise calibration.
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Number of features (screen, fs).
    #[arg(long)]
    pub k: Option<usize>,
    /// l1 radius (lasso).
    #[arg(long, conflicts_with = "lambda")]
    pub c1: Option<f64>,
    /// Penalty translated to a radius on the given data (lasso).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Frank–Wolfe iterations (lasso); defaults to the rate-balancing rule.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Noise sigma, or the Orlicz norm G with --orlicz.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Registered Orlicz function for heavier-tailed noise.
    #[arg(long)]
    pub orlicz: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; the manifest goes to `<out>.manifest.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CiArgs {
    /// CSV written by `select`.
    #[arg(long)]
    pub selection: PathBuf,
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// `known:<sigma>` or `estimate`.
    #[arg(long, default_value = "known:1")]
    pub sigma: String,
    /// Fixed `delta,tau,nu` fractions of alpha instead of the residual rule.
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ExperimentArgs {
    /// JSON experiment config.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, env = "STABLE_POSI_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BudgetArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long = "eta-step")]
    pub eta_step: f64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Universal eta for all models of size <= s out of d, with slack tau.
    #[arg(long, num_args = 3, value_names = ["D", "S", "TAU"])]
    pub sparse: Option<Vec<String>>,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write to this output path instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `argv` (including the program name) and runs the command; text
/// output goes to `stdout`.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(&argv).map_err(|e| CliError::Usage(e.to_string()))?;
    let rest: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    commands::dispatch(cli.command, &rest, stdout)
}

/// Entry point for the binary: prints errors to stderr and returns the exit code.
pub fn main_with(argv: Vec<OsString>) -> i32 {
    if let Err(e) = Cli::try_parse_from(&argv) {
        let _ = e.print();
        // Help and version requests are not errors.
        return if e.use_stderr() { 2 } else { 0 };
    }
    let mut out = std::io::stdout().lock();
    match run(argv, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
