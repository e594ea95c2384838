//! `robustcov` command-line tool.

mod diagnose;
mod estimate;
mod lowerbound;
mod simulate;
mod svg;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "robustcov", version, about = "Robust covariance estimation for heavy-tailed, corrupted data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a covariance matrix from a CSV sample.
    Estimate(estimate::Args),
    /// Run a Monte Carlo sweep described by a TOML config.
    Simulate(simulate::Args),
    /// Tabulate the one-dimensional lower bound ε(X, η).
    Lowerbound(lowerbound::Args),
    /// Sparse-supremum statistic and peaky/spread decomposition of a sample.
    Diagnose(diagnose::Args),
}

/// Failure with a stable exit code: 2 for bad input, 3 for degenerate data.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl Failure {
    pub fn input(msg: impl Into<String>) -> Self {
        Failure { code: 2, msg: msg.into() }
    }
}

impl From<robustcov::Error> for Failure {
    fn from(e: robustcov::Error) -> Self {
        Failure { code: if e.is_input_error() { 2 } else { 3 }, msg: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::input(e.to_string())
    }
}

pub type CmdResult = Result<(), Failure>;

fn configure_threads() -> CmdResult {
    let Ok(raw) = std::env::var("ROBUSTCOV_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::input(format!("ROBUSTCOV_THREADS must be a positive integer, got {raw:?}")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::input(format!("cannot configure thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    // Sweeps repeat the same regime warnings for every trial.
    let level = if matches!(cli.command, Command::Simulate(_)) { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Estimate(a) => estimate::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Lowerbound(a) => lowerbound::run(a),
        Command::Diagnose(a) => diagnose::run(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
