use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Encoder architecture family.
///
/// `XlmRoberta` runs the same graph as `Roberta`; only the tokenizer and
/// vocabulary differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFamily {
    Bert,
    Roberta,
    XlmRoberta,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 3] = [ModelFamily::Bert, ModelFamily::Roberta, ModelFamily::XlmRoberta];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Bert => "bert",
            ModelFamily::Roberta => "roberta",
            ModelFamily::XlmRoberta => "xlm-roberta",
        }
    }

    /// Map a `model_type` value from a hub config file.
    pub fn from_model_type(model_type: &str) -> Option<ModelFamily> {
        match model_type {
            "bert" => Some(ModelFamily::Bert),
            "roberta" => Some(ModelFamily::Roberta),
            "xlm-roberta" | "xlm_roberta" => Some(ModelFamily::XlmRoberta),
            _ => None,
        }
    }

    /// Roberta-style position ids (offset by the pad id, pads skipped).
    pub fn uses_padded_positions(self) -> bool {
        !matches!(self, ModelFamily::Bert)
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelFamily::from_model_type(s).ok_or_else(|| format!("unknown model family `{s}`"))
    }
}

/// Hard cap on sequence length regardless of the position table size.
pub const MAX_SEQUENCE_LENGTH: usize = 512;

/// Encoder hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub family: ModelFamily,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    pub vocab_size: usize,
    pub max_position_embeddings: usize,
    pub type_vocab_size: usize,
    pub layer_norm_eps: f32,
    pub pad_token_id: i64,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("hidden_size", self.hidden_size),
            ("num_attention_heads", self.num_attention_heads),
            ("intermediate_size", self.intermediate_size),
            ("vocab_size", self.vocab_size),
            ("max_position_embeddings", self.max_position_embeddings),
            ("type_vocab_size", self.type_vocab_size),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(ModelError::Config(format!("{field} must be positive")));
            }
        }
        if self.hidden_size % self.num_attention_heads != 0 {
            return Err(ModelError::Config(format!(
                "hidden_size {} is not divisible by num_attention_heads {}",
                self.hidden_size, self.num_attention_heads
            )));
        }
        if !(self.layer_norm_eps > 0.0) {
            return Err(ModelError::Config(format!("layer_norm_eps must be positive, got {}", self.layer_norm_eps)));
        }
        if self.pad_token_id < 0 || self.pad_token_id as usize >= self.vocab_size {
            return Err(ModelError::Config(format!(
                "pad_token_id {} outside vocabulary of {}",
                self.pad_token_id, self.vocab_size
            )));
        }
        if self.max_sequence_length() == 0 {
            return Err(ModelError::Config(format!(
                "max_position_embeddings {} leaves no room for tokens after the pad offset",
                self.max_position_embeddings
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_attention_heads
    }

    /// Longest input the position table (and the 512 cap) allows.
    pub fn max_sequence_length(&self) -> usize {
        let by_positions = if self.family.uses_padded_positions() {
            // Largest position id used is S + pad_token_id.
            (self.max_position_embeddings as i64 - self.pad_token_id - 1).max(0) as usize
        } else {
            self.max_position_embeddings
        };
        by_positions.min(MAX_SEQUENCE_LENGTH)
    }

    pub fn bert_base_uncased() -> EncoderConfig {
        EncoderConfig {
            family: ModelFamily::Bert,
            hidden_size: 768,
            num_hidden_layers: 12,
            num_attention_heads: 12,
            intermediate_size: 3072,
            vocab_size: 30522,
            max_position_embeddings: 512,
            type_vocab_size: 2,
            layer_norm_eps: 1e-12,
            pad_token_id: 0,
        }
    }

    pub fn bert_large_uncased() -> EncoderConfig {
        EncoderConfig {
            hidden_size: 1024,
            num_hidden_layers: 24,
            num_attention_heads: 16,
            intermediate_size: 4096,
            ..Self::bert_base_uncased()
        }
    }

    pub fn roberta_base() -> EncoderConfig {
        EncoderConfig {
            family: ModelFamily::Roberta,
            vocab_size: 50265,
            max_position_embeddings: 514,
            type_vocab_size: 1,
            layer_norm_eps: 1e-5,
            pad_token_id: 1,
            ..Self::bert_base_uncased()
        }
    }

    pub fn xlm_roberta_base() -> EncoderConfig {
        EncoderConfig {
            family: ModelFamily::XlmRoberta,
            vocab_size: 250002,
            ..Self::roberta_base()
        }
    }

    /// Published configuration of one of the canonical hub repos.
    pub fn canonical(repo_id: &str) -> Option<EncoderConfig> {
        match repo_id.rsplit('/').next()? {
            "bert-base-uncased" => Some(Self::bert_base_uncased()),
            "bert-large-uncased" => Some(Self::bert_large_uncased()),
            "roberta-base" => Some(Self::roberta_base()),
            "xlm-roberta-base" => Some(Self::xlm_roberta_base()),
            _ => None,
        }
    }
}
