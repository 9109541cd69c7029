//! `ccrm` command-line front end.
//!
//! Every command produces a [`Table`] with a fixed column set, rendered as
//! CSV or JSON. Simulation commands are deterministic for a given flag set,
//! including `--seed`, regardless of `--workers`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod table;

pub use table::{Cell, Format, Table};

/// Seed used by simulation commands unless `--seed` is given.
pub const DEFAULT_SEED: u64 = 20260101;

#[derive(Debug, Parser)]
#[command(
    name = "ccrm",
    version,
    about = "Retry reliability under context contamination"
)]
pub struct Cli {
    #[command(flatten)]
    pub output: OutputArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output format.
    #[arg(long, value_enum, default_value = "csv", global = true)]
    pub format: Format,

    /// Write the table to this file instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Significant digits for floating-point columns.
    #[arg(long, default_value_t = 6, global = true)]
    pub precision: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Success probabilities at K attempts, or attempt thresholds for a failure tolerance.
    #[command(group(ArgGroup::new("target").required(true).args(["k", "delta"])))]
    Analyze(AnalyzeArgs),
    /// Split a tool-call budget between pipeline depth and retries.
    Optimize(OptimizeArgs),
    /// Two-point lower bound on the attempts any retry policy needs.
    Lowerbound(LowerboundArgs),
    /// Run a Monte Carlo validation experiment and emit its table.
    Simulate(SimulateArgs),
    /// Fit model rates to pass@k observations.
    Fit(FitArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub eps0: f64,
    #[arg(long)]
    pub eps1: f64,
    /// Pipeline depth (tool calls per attempt).
    #[arg(long = "T")]
    pub depth: u32,
    /// Attempt budget.
    #[arg(long = "K")]
    pub k: Option<u64>,
    /// Failure tolerance; reports the attempts needed for success >= 1 - delta.
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub eps0: f64,
    #[arg(long)]
    pub eps1: f64,
    /// Total tool-call budget.
    #[arg(long = "B")]
    pub budget: f64,
}

#[derive(Debug, Args)]
pub struct LowerboundArgs {
    #[arg(long)]
    pub eps0: f64,
    #[arg(long)]
    pub eps1: f64,
    #[arg(long = "T")]
    pub depth: u32,
    #[arg(long)]
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    /// Formula against simulation across cascade ratios and attempt counts.
    CascadeValidation,
    /// Analytic and empirical attempt thresholds across ratios and depths.
    OverheadPhase,
    /// Formula and simulated success across depths for a fixed budget.
    DepthOptimum,
    /// Fits to the shipped (or given) pass@k observations.
    RealDataFit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GranularityArg {
    Attempt,
    Step,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Contaminated,
    Clean,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub experiment: Experiment,
    #[arg(long, default_value_t = 0.12)]
    pub eps0: f64,
    /// Contaminated step error for depth-optimum.
    #[arg(long, default_value_t = 0.48)]
    pub eps1: f64,
    #[arg(long = "T", default_value_t = 10)]
    pub depth: u32,
    /// Largest attempt count for cascade-validation.
    #[arg(long = "K", default_value_t = 10)]
    pub k: u64,
    /// Cascade ratios eps1/eps0 (default: 1,2,3,4 for cascade-validation;
    /// 1,1.5,...,8 for overhead-phase).
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    /// Depths for overhead-phase (default 5,10,20) or depth-optimum (default 1..=floor(B)).
    #[arg(long, value_delimiter = ',')]
    pub depths: Option<Vec<u32>>,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long = "B", default_value_t = 100.0)]
    pub budget: f64,
    /// Monte Carlo trials per cell.
    #[arg(long = "n", default_value_t = ccrm_core::simulator::DEFAULT_TRIALS)]
    pub trials: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Attempt cap for the empirical threshold scan.
    #[arg(long, default_value_t = ccrm_core::simulator::DEFAULT_SCAN_CAP)]
    pub cap: u64,
    #[arg(long, value_enum, default_value = "attempt")]
    pub granularity: GranularityArg,
    #[arg(long, value_enum, default_value = "contaminated")]
    pub policy: PolicyArg,
    /// Worker threads (default: all cores). Does not affect results.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Observation file for real-data-fit (default: shipped SWE-bench fixture).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Pipeline depth override for real-data-fit.
    #[arg(long = "depth")]
    pub fit_depth: Option<u32>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Observation file (.json array or CSV).
    pub path: PathBuf,
    /// Pipeline depth applied to every observation.
    #[arg(long)]
    pub depth: Option<u32>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] ccrm_core::Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 0 success, 1 usage/validation, 2 computation domain, 3 I/O.
    pub fn exit_code(&self) -> u8 {
        use ccrm_core::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Output { .. } => 3,
            CliError::Core(e) => match e {
                E::Validation { .. } | E::Parse { .. } => 1,
                E::Io { .. } => 3,
                E::Domain(_)
                | E::Unbounded(_)
                | E::Undefined(_)
                | E::Degenerate(_)
                | E::Inversion(_)
                | E::Mode(_) => 2,
            },
        }
    }
}

/// Runs a parsed command and returns its table.
pub fn execute(command: &Command) -> Result<Table, CliError> {
    match command {
        Command::Analyze(a) => commands::analyze(a),
        Command::Optimize(a) => commands::optimize(a),
        Command::Lowerbound(a) => commands::lowerbound(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(&a.path, a.depth),
    }
}

fn write_output(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Output {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|source| CliError::Output {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

/// Parses `args`, runs the command, writes its output, and maps failures to
/// exit codes with a one-line diagnostic on standard error.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let first = e.to_string();
            let line = first.lines().next().unwrap_or("invalid arguments");
            eprintln!("{line}");
            return ExitCode::from(1);
        }
    };
    let result = execute(&cli.command).and_then(|table| {
        let text = table.render(cli.output.format, cli.output.precision);
        write_output(&text, cli.output.out.as_deref())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
