//! Checkpoint loading straight from hub files: the safetensors container, the
//! model config, weight-name mapping and a caching downloader.
//!
//! Weights are renamed in memory; nothing is converted or written to disk
//! besides the downloaded files themselves.

mod config;
mod hub;
mod names;
mod repo;
mod safetensors;

pub use config::{detect_family, load_config};
pub use hub::{
    default_cache_dir, env_flag, repo_cache_dir, HubClient, HubLocation, DEFAULT_ENDPOINT, DEFAULT_REVISION,
    ENV_CACHE, ENV_ENDPOINT, ENV_OFFLINE,
};
pub use names::{map_weights, MappedWeights, NameRule, WeightNameMap, TASK_HEAD_PREFIXES};
pub use repo::{fetch_repo, load_from_dir, load_from_hub, LoadedModel, CONFIG_FILE, WEIGHTS_FILE};
pub use safetensors::{parse_safetensors, widen, write_safetensors, CheckpointIndex, RawTensor, TensorRecord};

use std::path::{Path, PathBuf};

use crate::models::ModelError;
use crate::tensor::{DType, TensorError};
use crate::tokenizer::TokenizerError;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("truncated safetensors file: {0}")]
    Truncated(String),
    #[error("malformed safetensors header: {0}")]
    MalformedHeader(String),
    #[error("tensor `{name}` ends at byte {end} beyond the {data_len}-byte data region")]
    OutOfBounds { name: String, end: usize, data_len: usize },
    #[error("tensors `{first}` and `{second}` have overlapping byte ranges")]
    Overlap { first: String, second: String },
    #[error("tensor `{name}` has unknown dtype `{tag}`")]
    UnknownDType { name: String, tag: String },
    #[error("cannot widen {0} to F32")]
    UnsupportedDType(DType),
    #[error("no tensor named `{0}` in checkpoint")]
    MissingTensor(String),
    #[error("tensor `{name}`: {source}")]
    Tensor { name: String, source: TensorError },
    #[error("config is missing key `{0}`")]
    MissingKey(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint is missing {} required weight(s): {}", .0.len(), describe_missing(.0))]
    MissingSlots(Vec<(String, Vec<String>)>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("tokenizer: {0}")]
    Tokenizer(#[from] TokenizerError),
    #[error("invalid hub location: {0}")]
    InvalidLocation(String),
    #[error("HTTP {status} for {url}")]
    Http { status: u16, url: String },
    #[error("offline mode and {location} is not cached at {}", .path.display())]
    Offline { location: String, path: PathBuf },
    #[error("download of {url} failed: {reason}")]
    Network { url: String, reason: String },
    #[error("download of {url} is corrupt: {reason}")]
    Integrity { url: String, reason: String },
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

fn describe_missing(missing: &[(String, Vec<String>)]) -> String {
    missing
        .iter()
        .map(|(slot, tried)| format!("{slot} (tried {})", tried.join(", ")))
        .collect::<Vec<_>>()
        .join("; ")
}

impl CheckpointError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> CheckpointError {
        CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Network, offline and cache failures, as opposed to bad file contents.
    pub fn is_fetch_error(&self) -> bool {
        matches!(
            self,
            CheckpointError::InvalidLocation(_)
                | CheckpointError::Http { .. }
                | CheckpointError::Offline { .. }
                | CheckpointError::Network { .. }
                | CheckpointError::Integrity { .. }
        )
    }
}
