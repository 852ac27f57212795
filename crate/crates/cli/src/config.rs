use std::path::{Path, PathBuf};

use encbench_core::bench::{parse_list, ModelBenchSpec, DEFAULT_OP_ITERATIONS, DEFAULT_WARMUP};
use encbench_core::checkpoint::{default_cache_dir, HubClient};
use encbench_core::BackendId;
use serde::Deserialize;

use crate::args::{BackendChoice, SharedArgs};
use crate::error::CliError;

/// Contents of the `--config` file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub cache_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub offline: Option<bool>,
    pub endpoint: Option<String>,
    pub seed: Option<u64>,
    pub backend: Option<BackendChoice>,
    pub iterations: Option<usize>,
    pub warmup: Option<usize>,
    pub lengths: Option<Vec<usize>>,
    pub batches: Option<Vec<usize>>,
    pub corpus: Option<PathBuf>,
}

impl FileConfig {
    pub fn read(path: &Path) -> Result<FileConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }
}

/// Flags merged over the config file over the defaults.
#[derive(Debug, Clone)]
pub struct CliConfig {
    pub cache_dir: PathBuf,
    pub out: PathBuf,
    pub offline: bool,
    pub endpoint: Option<String>,
    pub seed: u64,
    pub backends: Vec<BackendId>,
    pub iterations: Option<usize>,
    pub warmup: usize,
    pub lengths: Vec<usize>,
    pub batches: Vec<usize>,
    pub corpus: Option<PathBuf>,
}

impl CliConfig {
    pub fn resolve(flags: &SharedArgs, file: FileConfig) -> Result<CliConfig, CliError> {
        let list = |flag: &Option<String>, file: Option<Vec<usize>>, default: &[usize], what: &str| {
            match flag {
                Some(text) => parse_list(text).map_err(|e| CliError::usage(format!("--{what}: {e}"))),
                None => {
                    let v = file.unwrap_or_else(|| default.to_vec());
                    if v.is_empty() || v.contains(&0) {
                        return Err(CliError::usage(format!("{what} must be positive")));
                    }
                    Ok(v)
                }
            }
        };
        let iterations = flags.iterations.or(file.iterations);
        if iterations == Some(0) {
            return Err(CliError::usage("--iterations must be at least 1"));
        }
        Ok(CliConfig {
            cache_dir: flags.cache_dir.clone().or(file.cache_dir).unwrap_or_else(default_cache_dir),
            out: flags.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("reports")),
            offline: flags.offline || file.offline.unwrap_or(false),
            endpoint: flags.endpoint.clone().or(file.endpoint),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            backends: flags.backend.or(file.backend).unwrap_or(BackendChoice::Both).ids(),
            iterations,
            warmup: flags.warmup.or(file.warmup).unwrap_or(DEFAULT_WARMUP),
            lengths: list(&flags.lengths, file.lengths, &ModelBenchSpec::DEFAULT_CHAR_LENGTHS, "lengths")?,
            batches: list(&flags.batches, file.batches, &ModelBenchSpec::DEFAULT_BATCH_SIZES, "batches")?,
            corpus: flags.corpus.clone().or(file.corpus),
        })
    }

    pub fn op_iterations(&self) -> usize {
        self.iterations.unwrap_or(DEFAULT_OP_ITERATIONS)
    }

    pub fn model_iterations(&self) -> usize {
        self.iterations.unwrap_or(ModelBenchSpec::DEFAULT_ITERATIONS)
    }

    pub fn hub(&self) -> HubClient {
        let client = HubClient::new(&self.cache_dir).offline(self.offline);
        match &self.endpoint {
            Some(e) => client.endpoint(e.clone()),
            None => client,
        }
    }
}
