//! `encbench`: download checkpoints, benchmark kernels and models, verify
//! against golden activations.
//!
//! Exit codes: 0 success, 1 other failure, 2 usage, 3 network or cache,
//! 4 load or shape, 5 verification.

mod args;
mod commands;
mod config;
mod error;

use clap::Parser;
use tracing_subscriber::EnvFilter;

use crate::args::{Cli, Command};
use crate::config::{CliConfig, FileConfig};
use crate::error::CliError;

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::read(path)?,
        None => FileConfig::default(),
    };
    let config = CliConfig::resolve(&cli.shared, file)?;
    match cli.command {
        Command::Download { repo, revision } => commands::download(&config, &repo, &revision),
        Command::BenchOps { ops } => commands::bench_ops(&config, &ops),
        Command::BenchModel { repo, revision } => commands::bench_model(&config, &repo, &revision),
        Command::Verify {
            repo,
            revision,
            golden,
            tolerance,
        } => commands::verify(&config, &repo, &revision, golden, tolerance),
    }
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
