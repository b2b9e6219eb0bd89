//! `hltomo`: simulate homodyne-like traces, reconstruct states, report runs.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "hltomo", version, about = "Homodyne-like detection simulation and state tomography")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-key overrides, `--key value` (e.g. `--prep coherent:1.03 --seed 7`).
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo trace of a prepared state.
    Simulate(RunArgs),
    /// Density-matrix reconstruction from a trace.
    Reconstruct(RunArgs),
    /// Quadrature mean and variance from a trace.
    Moments(RunArgs),
    /// Comparison table of reconstruction results.
    Report {
        /// Write `<prefix>.csv` and `<prefix>.txt`.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(required = true)]
        results: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(config::load(a.config.as_deref(), &a.overrides)?),
        Command::Reconstruct(a) => commands::reconstruct_cmd(config::load(a.config.as_deref(), &a.overrides)?),
        Command::Moments(a) => commands::moments_cmd(config::load(a.config.as_deref(), &a.overrides)?),
        Command::Report { output, results } => commands::report(&results, output.as_deref()),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
