//! `dsbridge`: config-driven runner for exact discrete Schrödinger bridges,
//! graph matching and the tabular learner.
//!
//! Exit codes: 0 success, 2 invalid input or config, 3 numerical
//! non-convergence or training divergence, 4 size cap exceeded.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(
    name = "dsbridge",
    version,
    about = "Exact discrete Schrödinger bridges on finite state spaces"
)]
struct Cli {
    /// Override the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the symmetric cosine noise schedule and its summary.
    Schedule {
        #[arg(long)]
        config: PathBuf,
    },
    /// Exact IMF between two marginals, checked against Sinkhorn.
    Imf {
        #[arg(long)]
        config: PathBuf,
    },
    /// Match two graphs under the graph reference process.
    Match {
        g1: PathBuf,
        g2: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Also solve by enumeration (n ≤ 8) and report the gap.
        #[arg(long)]
        exhaustive: bool,
    },
    /// Exact IMF over an enumerated space of small graphs.
    GraphImf {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sample reference bridges and compare marginals with the exact law.
    Sample {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the tabular predictor, or run approximate IMF with it.
    TrainTabular {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare analytic and finite-difference gradients of the tabular loss.
    GradCheck {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Schedule { config } => commands::schedule::run(&config, seed),
        Command::Imf { config } => commands::imf::run(&config, seed),
        Command::Match {
            g1,
            g2,
            vocab,
            config,
            exhaustive,
        } => commands::matching::run(&g1, &g2, &vocab, &config, exhaustive, seed),
        Command::GraphImf { config } => commands::graph_imf::run(&config, seed),
        Command::Sample { config } => commands::sample::run(&config, seed),
        Command::TrainTabular { config } => commands::tabular::run(&config, seed),
        Command::GradCheck { config } => commands::tabular::grad_check(&config, seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
