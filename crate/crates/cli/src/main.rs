use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod io;

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Schema(String),
    Solver(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Schema(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io(m) => write!(f, "io error: {m}"),
            CliError::Schema(m) => write!(f, "invalid input: {m}"),
            CliError::Solver(m) => write!(f, "solver failure: {m}"),
        }
    }
}

impl From<mrrce::Error> for CliError {
    fn from(e: mrrce::Error) -> Self {
        if e.is_solver_failure() {
            CliError::Solver(e.to_string())
        } else {
            CliError::Schema(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mrrce", version, about = "Multivariate random-effect regression with covariance estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed in the configuration file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for replication-level parallelism.
    #[arg(long, env = "MRRCE_JOBS", default_value_t = 1)]
    pub jobs: usize,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw one synthetic dataset.
    Simulate(Common),
    /// Fit an estimator to CSV data.
    Fit(Common),
    /// Predict responses for new predictor rows with a fitted model.
    Predict(Common),
    /// Replicated simulation study over a grid of coefficient correlations.
    BenchSim(Common),
    /// Rolling-origin forecasting study on a daily series.
    BenchTs(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => commands::simulate(c),
        Command::Fit(c) => commands::fit(c),
        Command::Predict(c) => commands::predict(c),
        Command::BenchSim(c) => commands::bench_sim(c),
        Command::BenchTs(c) => commands::bench_ts(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
