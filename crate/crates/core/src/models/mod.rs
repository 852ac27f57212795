//! BERT, RoBERTa and XLM-RoBERTa encoder forward passes (inference only).
//!
//! All three families share one graph: embeddings, `L` blocks of
//! self-attention plus feed-forward (post-norm), and an optional tanh
//! pooler over the first token. The families differ only in how position
//! ids are assigned and in their hyperparameters.

mod config;
mod encoder;
mod weights;

pub use config::{EncoderConfig, ModelFamily, MAX_SEQUENCE_LENGTH};
pub use encoder::{
    additive_attention_mask, build_position_ids, embed, feed_forward, forward, multi_head_attention, Encoder,
};
pub use weights::{EncoderWeights, LayerNormWeights, LayerWeights, LinearWeights};

use crate::tensor::{DType, Tensor, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("weight `{slot}` has shape {actual:?}, expected {expected:?}")]
    WeightShape {
        slot: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("sequence length {len} exceeds the model limit of {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// A tokenized batch ready for [`forward`].
#[derive(Debug, Clone)]
pub struct EncoderInput {
    pub input_ids: Tensor,
    pub attention_mask: Tensor,
    pub token_type_ids: Tensor,
}

impl EncoderInput {
    /// Validates shapes, dtypes, binary mask values and that no row is fully
    /// masked.
    pub fn new(input_ids: Tensor, attention_mask: Tensor, token_type_ids: Tensor) -> Result<EncoderInput, ModelError> {
        for (name, t) in [("input_ids", &input_ids), ("attention_mask", &attention_mask), ("token_type_ids", &token_type_ids)] {
            if t.dtype() != DType::I64 {
                return Err(ModelError::Input(format!("{name} must be I64, got {}", t.dtype())));
            }
            if t.rank() != 2 {
                return Err(ModelError::Input(format!("{name} must be [batch, seq], got {:?}", t.shape())));
            }
            if t.shape() != input_ids.shape() {
                return Err(ModelError::Input(format!(
                    "{name} shape {:?} differs from input_ids {:?}",
                    t.shape(),
                    input_ids.shape()
                )));
            }
        }
        let s = input_ids.shape()[1];
        let mask = attention_mask.as_i64()?;
        if let Some(bad) = mask.iter().find(|&&v| v != 0 && v != 1) {
            return Err(ModelError::Input(format!("attention_mask value {bad} is not 0 or 1")));
        }
        if let Some(row) = mask.chunks(s).position(|r| r.iter().all(|&v| v == 0)) {
            return Err(ModelError::Input(format!("row {row} has no unmasked position")));
        }
        Ok(EncoderInput {
            input_ids,
            attention_mask,
            token_type_ids,
        })
    }

    /// All-ones mask and zero token types.
    pub fn from_ids(batch: usize, seq: usize, ids: Vec<i64>) -> Result<EncoderInput, ModelError> {
        let input_ids = Tensor::from_i64([batch, seq], ids)?;
        EncoderInput::new(
            input_ids,
            Tensor::from_i64([batch, seq], vec![1; batch * seq])?,
            Tensor::from_i64([batch, seq], vec![0; batch * seq])?,
        )
    }

    pub fn batch_size(&self) -> usize {
        self.input_ids.shape()[0]
    }

    pub fn seq_len(&self) -> usize {
        self.input_ids.shape()[1]
    }
}

#[derive(Debug, Clone)]
pub struct EncoderOutput {
    /// `[B, S, H]`.
    pub last_hidden_state: Tensor,
    /// `[B, H]`; absent when the checkpoint has no pooler.
    pub pooler_output: Option<Tensor>,
    /// Embedding output followed by each layer's output, when requested.
    pub hidden_states: Option<Vec<Tensor>>,
}
