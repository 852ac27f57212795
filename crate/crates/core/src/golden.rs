//! Reference activation files and comparison against them.
//!
//! A golden file is a safetensors container holding the token inputs
//! (`input_ids`, `attention_mask`, `token_type_ids`), the activations of a
//! reference implementation (`hidden_states.N`, `last_hidden_state`,
//! optionally `pooler_output`) and the source sentences as JSON under the
//! `sentences` metadata key.

use std::path::Path;

use crate::backend::Backend;
use crate::checkpoint::{CheckpointError, CheckpointIndex, LoadedModel};
use crate::models::{Encoder, EncoderInput, ModelError};

pub const DEFAULT_TOLERANCE: f32 = 5e-3;

#[derive(Debug, thiserror::Error)]
pub enum GoldenError {
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("golden file: {0}")]
    Format(String),
}

#[derive(Debug, Clone)]
pub struct GoldenSet {
    pub sentences: Vec<String>,
    index: CheckpointIndex,
}

/// Largest absolute difference for one compared tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorDiff {
    pub name: String,
    pub max_abs: f32,
    /// Set for exact (id) comparisons that differ.
    pub mismatch: bool,
}

impl TensorDiff {
    pub fn passes(&self, tolerance: f32) -> bool {
        !self.mismatch && self.max_abs <= tolerance
    }
}

pub fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    if a.len() != b.len() {
        return f32::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (x - y).abs();
            if d.is_nan() {
                f32::INFINITY
            } else {
                d
            }
        })
        .fold(0.0, f32::max)
}

impl GoldenSet {
    pub fn read(path: &Path) -> Result<GoldenSet, GoldenError> {
        let index = CheckpointIndex::read(path)?;
        let sentences = index
            .metadata()
            .get("sentences")
            .ok_or_else(|| GoldenError::Format("no `sentences` metadata".into()))?;
        let sentences = serde_json::from_str(sentences).map_err(|e| GoldenError::Format(format!("sentences: {e}")))?;
        Ok(GoldenSet { sentences, index })
    }

    pub fn input(&self) -> Result<EncoderInput, GoldenError> {
        Ok(EncoderInput::new(
            self.index.tensor("input_ids")?,
            self.index.tensor("attention_mask")?,
            self.index.tensor("token_type_ids")?,
        )?)
    }

    fn f32s(&self, name: &str) -> Result<Option<Vec<f32>>, GoldenError> {
        if self.index.record(name).is_none() {
            return Ok(None);
        }
        Ok(Some(self.index.tensor(name)?.to_vec_f32().map_err(ModelError::from)?))
    }

    /// Tokenize the sentences, run the encoder and compare every stored
    /// tensor. The pooler is compared only when the model has pooler weights,
    /// since a reference without them initializes one at random.
    pub fn compare(&self, model: &LoadedModel, backend: &dyn Backend) -> Result<Vec<TensorDiff>, GoldenError> {
        let mut diffs = Vec::new();
        let input = self.input()?;
        let encoding = model
            .tokenizer
            .encode_batch(&self.sentences)
            .map_err(|e| GoldenError::Checkpoint(e.into()))?;
        let want_ids = input.input_ids.as_i64().map_err(ModelError::from)?;
        diffs.push(TensorDiff {
            name: "input_ids".into(),
            max_abs: 0.0,
            mismatch: encoding.ids != want_ids,
        });

        let encoder = Encoder::new(model.config.clone(), model.weights.clone())?;
        let out = encoder.forward_with_hidden_states(&input, backend)?;
        let hidden = out.hidden_states.unwrap_or_default();
        for (n, h) in hidden.iter().enumerate() {
            let name = format!("hidden_states.{n}");
            if let Some(want) = self.f32s(&name)? {
                let got = h.to_vec_f32().map_err(ModelError::from)?;
                diffs.push(TensorDiff {
                    max_abs: max_abs_diff(&got, &want),
                    name,
                    mismatch: false,
                });
            }
        }
        let want = self
            .f32s("last_hidden_state")?
            .ok_or_else(|| GoldenError::Format("no `last_hidden_state` tensor".into()))?;
        let got = out.last_hidden_state.to_vec_f32().map_err(ModelError::from)?;
        diffs.push(TensorDiff {
            name: "last_hidden_state".into(),
            max_abs: max_abs_diff(&got, &want),
            mismatch: false,
        });
        if let (Some(p), Some(want)) = (&out.pooler_output, self.f32s("pooler_output")?) {
            diffs.push(TensorDiff {
                name: "pooler_output".into(),
                max_abs: max_abs_diff(&p.to_vec_f32().map_err(ModelError::from)?, &want),
                mismatch: false,
            });
        }
        Ok(diffs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diff_handles_nan_and_length() {
        assert_eq!(max_abs_diff(&[1.0, 2.0], &[1.5, 2.0]), 0.5);
        assert_eq!(max_abs_diff(&[f32::NAN], &[0.0]), f32::INFINITY);
        assert_eq!(max_abs_diff(&[1.0], &[1.0, 2.0]), f32::INFINITY);
    }

    #[test]
    fn fixture_goldens_pass() {
        let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
        let model = crate::checkpoint::load_from_dir(&fixtures.join("hub/encbench-fixtures--tiny-bert/main")).unwrap();
        let golden = GoldenSet::read(&fixtures.join("golden/encbench-fixtures--tiny-bert.safetensors")).unwrap();
        let diffs = golden.compare(&model, crate::BackendId::Optimized.backend()).unwrap();
        let names: Vec<&str> = diffs.iter().map(|d| d.name.as_str()).collect();
        assert_eq!(names, ["input_ids", "hidden_states.0", "hidden_states.1", "last_hidden_state", "pooler_output"]);
        assert!(diffs.iter().all(|d| d.passes(DEFAULT_TOLERANCE)), "{diffs:?}");
    }
}
