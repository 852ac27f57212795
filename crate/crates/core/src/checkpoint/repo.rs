//! A whole checkpoint repo: config, weights and tokenizer.

use std::path::{Path, PathBuf};

use super::{
    detect_family, load_config, map_weights, CheckpointError, CheckpointIndex, HubClient, HubLocation, WeightNameMap,
};
use crate::models::{EncoderConfig, EncoderWeights};
use crate::tokenizer::Tokenizer;

pub const CONFIG_FILE: &str = "config.json";
pub const WEIGHTS_FILE: &str = "model.safetensors";

#[derive(Debug, Clone)]
pub struct LoadedModel {
    /// Snapshot directory the files were read from.
    pub dir: PathBuf,
    pub config: EncoderConfig,
    pub weights: EncoderWeights,
    pub tokenizer: Tokenizer,
    pub ignored: Vec<String>,
    pub unexpected: Vec<String>,
}

fn read(path: &Path) -> Result<Vec<u8>, CheckpointError> {
    std::fs::read(path).map_err(|e| CheckpointError::io(path, e))
}

/// Load from a local snapshot directory with hub file names.
pub fn load_from_dir(dir: &Path) -> Result<LoadedModel, CheckpointError> {
    let config_bytes = read(&dir.join(CONFIG_FILE))?;
    let family = detect_family(&config_bytes)?;
    let config = load_config(&config_bytes, family)?;
    let index = CheckpointIndex::read(&dir.join(WEIGHTS_FILE))?;
    let mapped = map_weights(&index, &WeightNameMap::new(family, config.num_hidden_layers), &config)?;
    for name in &mapped.unexpected {
        tracing::warn!(tensor = %name, "unexpected tensor in checkpoint");
    }
    let tokenizer = Tokenizer::from_dir(family, dir)?.with_max_length(config.max_sequence_length());
    check_tokenizer(&tokenizer, &config)?;
    Ok(LoadedModel {
        dir: dir.to_path_buf(),
        config,
        weights: mapped.weights,
        tokenizer,
        ignored: mapped.ignored,
        unexpected: mapped.unexpected,
    })
}

/// Fetch (or reuse from cache) every file the repo needs, then load it.
pub fn load_from_hub(client: &HubClient, repo_id: &str, revision: &str) -> Result<LoadedModel, CheckpointError> {
    let dir = fetch_repo(client, repo_id, revision)?;
    load_from_dir(&dir)
}

/// Download config, weights and tokenizer files; returns the snapshot dir.
pub fn fetch_repo(client: &HubClient, repo_id: &str, revision: &str) -> Result<PathBuf, CheckpointError> {
    let config_path = client.fetch(&HubLocation::new(repo_id, revision, CONFIG_FILE)?)?;
    let family = detect_family(&read(&config_path)?)?;
    client.fetch(&HubLocation::new(repo_id, revision, WEIGHTS_FILE)?)?;
    for file in Tokenizer::required_files(family) {
        client.fetch(&HubLocation::new(repo_id, revision, file)?)?;
    }
    for file in Tokenizer::optional_files(family) {
        client.fetch_optional(&HubLocation::new(repo_id, revision, file)?)?;
    }
    Ok(config_path.parent().map(Path::to_path_buf).unwrap_or_default())
}

fn check_tokenizer(tokenizer: &Tokenizer, config: &EncoderConfig) -> Result<(), CheckpointError> {
    let specials = tokenizer.specials();
    if specials.pad != config.pad_token_id {
        return Err(CheckpointError::Config(format!(
            "tokenizer pad id {} differs from config pad_token_id {}",
            specials.pad, config.pad_token_id
        )));
    }
    if tokenizer.vocab_size() > config.vocab_size {
        return Err(CheckpointError::Config(format!(
            "tokenizer has {} tokens but the embedding table has {} rows",
            tokenizer.vocab_size(),
            config.vocab_size
        )));
    }
    Ok(())
}
