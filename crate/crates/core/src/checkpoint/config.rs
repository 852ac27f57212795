use serde_json::Value;

use crate::models::{EncoderConfig, ModelFamily};

use super::CheckpointError;

/// Family declared by a hub `config.json` through its `model_type`.
pub fn detect_family(bytes: &[u8]) -> Result<ModelFamily, CheckpointError> {
    let v = parse(bytes)?;
    let model_type = v
        .get("model_type")
        .and_then(Value::as_str)
        .ok_or_else(|| CheckpointError::MissingKey("model_type".into()))?;
    ModelFamily::from_model_type(model_type)
        .ok_or_else(|| CheckpointError::Config(format!("unsupported model_type `{model_type}`")))
}

fn parse(bytes: &[u8]) -> Result<Value, CheckpointError> {
    let v: Value = serde_json::from_slice(bytes).map_err(|e| CheckpointError::Config(format!("config is not JSON: {e}")))?;
    if !v.is_object() {
        return Err(CheckpointError::Config("config is not a JSON object".into()));
    }
    Ok(v)
}

/// Read encoder hyperparameters from a hub `config.json`.
pub fn load_config(bytes: &[u8], family: ModelFamily) -> Result<EncoderConfig, CheckpointError> {
    let v = parse(bytes)?;
    let uint = |key: &str| -> Result<usize, CheckpointError> {
        let field = v.get(key).ok_or_else(|| CheckpointError::MissingKey(key.into()))?;
        field
            .as_u64()
            .map(|n| n as usize)
            .ok_or_else(|| CheckpointError::Config(format!("`{key}` must be a non-negative integer, got {field}")))
    };
    let layer_norm_eps = v
        .get("layer_norm_eps")
        .ok_or_else(|| CheckpointError::MissingKey("layer_norm_eps".into()))?
        .as_f64()
        .ok_or_else(|| CheckpointError::Config("`layer_norm_eps` must be a number".into()))? as f32;
    let pad_token_id = v
        .get("pad_token_id")
        .ok_or_else(|| CheckpointError::MissingKey("pad_token_id".into()))?
        .as_i64()
        .ok_or_else(|| CheckpointError::Config("`pad_token_id` must be an integer".into()))?;
    if let Some(act) = v.get("hidden_act").and_then(Value::as_str) {
        if act != "gelu" {
            tracing::warn!(hidden_act = act, "config declares a non-erf activation; exact gelu is used");
        }
    }
    let config = EncoderConfig {
        family,
        hidden_size: uint("hidden_size")?,
        num_hidden_layers: uint("num_hidden_layers")?,
        num_attention_heads: uint("num_attention_heads")?,
        intermediate_size: uint("intermediate_size")?,
        vocab_size: uint("vocab_size")?,
        max_position_embeddings: uint("max_position_embeddings")?,
        type_vocab_size: uint("type_vocab_size")?,
        layer_norm_eps,
        pad_token_id,
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Fields as published in the bert-base-uncased repository.
    const BERT_BASE: &str = r#"{
      "architectures": ["BertForMaskedLM"],
      "attention_probs_dropout_prob": 0.1,
      "gradient_checkpointing": false,
      "hidden_act": "gelu",
      "hidden_dropout_prob": 0.1,
      "hidden_size": 768,
      "initializer_range": 0.02,
      "intermediate_size": 3072,
      "layer_norm_eps": 1e-12,
      "max_position_embeddings": 512,
      "model_type": "bert",
      "num_attention_heads": 12,
      "num_hidden_layers": 12,
      "pad_token_id": 0,
      "position_embedding_type": "absolute",
      "transformers_version": "4.6.0.dev0",
      "type_vocab_size": 2,
      "use_cache": true,
      "vocab_size": 30522
    }"#;

    #[test]
    fn bert_base_values() {
        let family = detect_family(BERT_BASE.as_bytes()).unwrap();
        let c = load_config(BERT_BASE.as_bytes(), family).unwrap();
        assert_eq!(c, EncoderConfig::bert_base_uncased());
        assert_eq!((c.hidden_size, c.num_hidden_layers, c.num_attention_heads), (768, 12, 12));
        assert_eq!((c.intermediate_size, c.vocab_size), (3072, 30522));
    }

    #[test]
    fn divisibility_and_missing_keys() {
        let bad = BERT_BASE.replace("\"hidden_size\": 768", "\"hidden_size\": 10").replace("\"num_attention_heads\": 12", "\"num_attention_heads\": 3");
        assert!(matches!(load_config(bad.as_bytes(), ModelFamily::Bert), Err(CheckpointError::Model(_))));
        let missing = BERT_BASE.replace("\"vocab_size\": 30522", "\"other\": 1");
        assert!(matches!(load_config(missing.as_bytes(), ModelFamily::Bert), Err(CheckpointError::MissingKey(k)) if k == "vocab_size"));
    }
}
