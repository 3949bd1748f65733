//! Command-line surface for the count-model toolkit.
//!
//! Exit codes: 0 success, 2 validation error (bad flags, malformed files,
//! shape mismatches), 3 numerical failure (divergent simulation, failed
//! fit).

mod build;
mod commands;
mod errors;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use errors::CliError;

#[derive(Parser)]
#[command(
    name = "spingarch",
    version,
    about = "Simulation, moment analysis, Bayesian fitting and predictive checks for spatially correlated self-exciting count models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a count panel from a config file.
    Simulate {
        /// Run configuration (sections `[graph]`, `[model]`, `[sim]`).
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fit a model variant to a count panel by HMC.
    Fit(commands::fit::FitArgs),
    /// Posterior predictive checks from a saved chains CSV.
    Ppc(commands::ppc::PpcArgs),
    /// Summary statistics of a count panel.
    Stats {
        #[arg(long)]
        counts: PathBuf,
        #[arg(long)]
        edges: PathBuf,
    },
    /// Closed-form stationary moments for given parameters.
    Moments(commands::moments::MomentsArgs),
    /// Simulate once, fit several variants, tabulate intervals and p-values.
    Study {
        /// Run configuration (sections `[graph]`, `[generator]`, `[study]`, `[fit]`, `[priors]`).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Regenerate a run's outputs from its manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out_dir } => commands::simulate::run(&config, &out_dir),
        Command::Fit(args) => commands::fit::run(&args),
        Command::Ppc(args) => commands::ppc::run(&args),
        Command::Stats { counts, edges } => commands::stats::run(&counts, &edges),
        Command::Moments(args) => commands::moments::run(&args),
        Command::Study { config, out_dir } => commands::study::run(&config, &out_dir),
        Command::Replay { manifest, out_dir } => commands::replay::run(&manifest, &out_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}
