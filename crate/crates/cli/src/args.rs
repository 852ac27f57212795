use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use encbench_core::BackendId;

#[derive(Debug, Parser)]
#[command(name = "encbench", version, about = "Transformer-encoder inference benchmarks on CPU backends")]
pub struct Cli {
    /// Key-value (TOML) file with defaults for the shared flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(flatten)]
    pub shared: SharedArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch config, weights and tokenizer files into the cache.
    Download {
        repo: String,
        #[arg(long, default_value = "main")]
        revision: String,
    },
    /// Time single kernels on each backend.
    BenchOps {
        /// Restrict to these ops (repeatable). Defaults to the whole registry.
        #[arg(long = "op", value_name = "NAME")]
        ops: Vec<String>,
    },
    /// Time full forward passes over input lengths and batch sizes.
    BenchModel {
        repo: String,
        #[arg(long, default_value = "main")]
        revision: String,
    },
    /// Compare a model's activations with a golden file.
    Verify {
        repo: String,
        #[arg(long, default_value = "main")]
        revision: String,
        /// Golden file; defaults to `fixtures/golden/<repo>.safetensors`.
        #[arg(long, value_name = "FILE")]
        golden: Option<PathBuf>,
        #[arg(long, default_value_t = encbench_core::golden::DEFAULT_TOLERANCE)]
        tolerance: f32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    Reference,
    Optimized,
    Both,
}

impl BackendChoice {
    pub fn ids(self) -> Vec<BackendId> {
        match self {
            BackendChoice::Reference => vec![BackendId::Reference],
            BackendChoice::Optimized => vec![BackendId::Optimized],
            BackendChoice::Both => BackendId::ALL.to_vec(),
        }
    }
}

/// Flags shared by every subcommand. Unset values fall back to the config
/// file, then to the protocol defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct SharedArgs {
    #[arg(long, global = true, env = "ENCBENCH_CACHE", value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Report directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Never touch the network; cache misses are errors.
    #[arg(long, global = true, env = "ENCBENCH_OFFLINE")]
    pub offline: bool,
    #[arg(long, global = true, env = "ENCBENCH_ENDPOINT", value_name = "URL")]
    pub endpoint: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendChoice>,
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
    #[arg(long, global = true)]
    pub warmup: Option<usize>,
    /// Comma-separated character lengths.
    #[arg(long, global = true, value_name = "LIST")]
    pub lengths: Option<String>,
    /// Comma-separated batch sizes.
    #[arg(long, global = true, value_name = "LIST")]
    pub batches: Option<String>,
    /// Text file with one sentence per line, replacing the bundled corpus.
    #[arg(long, global = true, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
}
