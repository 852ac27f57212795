use crate::backend::{Backend, MASKED_LOGIT};
use crate::tensor::Tensor;

use super::{EncoderConfig, EncoderInput, EncoderOutput, EncoderWeights, LayerWeights, ModelError, ModelFamily};

/// Position ids per family.
///
/// Bert counts `0..S` on every row. Roberta and XLM-R number unmasked tokens
/// from `pad_token_id + 1` and give masked positions `pad_token_id`.
pub fn build_position_ids(input: &EncoderInput, config: &EncoderConfig) -> Result<Tensor, ModelError> {
    let (b, s) = (input.batch_size(), input.seq_len());
    let ids = match config.family {
        ModelFamily::Bert => (0..b).flat_map(|_| 0..s as i64).collect(),
        ModelFamily::Roberta | ModelFamily::XlmRoberta => {
            let pad = config.pad_token_id;
            let mut out = Vec::with_capacity(b * s);
            for row in input.attention_mask.as_i64()?.chunks(s) {
                let mut count = 0;
                for &m in row {
                    count += m;
                    out.push(if m == 1 { pad + count } else { pad });
                }
            }
            out
        }
    };
    Ok(Tensor::from_i64([b, s], ids)?)
}

/// `0` where the mask is 1 and a large negative logit where it is 0, shaped
/// `[B, 1, 1, S]` to broadcast over heads and queries.
pub fn additive_attention_mask(attention_mask: &Tensor) -> Result<Tensor, ModelError> {
    let shape = attention_mask.shape();
    if shape.len() != 2 {
        return Err(ModelError::Input(format!("attention_mask must be [batch, seq], got {shape:?}")));
    }
    let data = attention_mask
        .as_i64()?
        .iter()
        .map(|&m| match m {
            1 => Ok(0.0),
            0 => Ok(MASKED_LOGIT),
            other => Err(ModelError::Input(format!("attention_mask value {other} is not 0 or 1"))),
        })
        .collect::<Result<Vec<f32>, _>>()?;
    Ok(Tensor::from_f32([shape[0], 1, 1, shape[1]], data)?)
}

/// Word + position + token-type embeddings, then layer norm.
pub fn embed(
    input: &EncoderInput,
    weights: &EncoderWeights,
    config: &EncoderConfig,
    backend: &dyn Backend,
) -> Result<Tensor, ModelError> {
    let positions = build_position_ids(input, config)?;
    let words = backend.embedding(&weights.word_embeddings, &input.input_ids)?;
    let pos = backend.embedding(&weights.position_embeddings, &positions)?;
    let types = backend.embedding(&weights.token_type_embeddings, &input.token_type_ids)?;
    let sum = backend.add(&backend.add(&words, &pos)?, &types)?;
    let norm = &weights.embedding_norm;
    Ok(backend.layer_norm(&sum, &norm.gamma, &norm.beta, config.layer_norm_eps)?)
}

/// Self-attention sublayer including output projection, residual and norm.
/// `mask` comes from [`additive_attention_mask`].
pub fn multi_head_attention(
    hidden: &Tensor,
    layer: &LayerWeights,
    mask: &Tensor,
    config: &EncoderConfig,
    backend: &dyn Backend,
) -> Result<Tensor, ModelError> {
    let (b, s, h) = dims(hidden)?;
    let (a, d) = (config.num_attention_heads, config.head_dim());
    let heads = |lin: &super::LinearWeights, perm: &[usize]| -> Result<Tensor, ModelError> {
        let x = backend.linear(hidden, &lin.weight, Some(&lin.bias))?;
        Ok(backend.transpose(&x.reshape([b, s, a, d])?, perm)?)
    };
    let q = heads(&layer.query, &[0, 2, 1, 3])?; // [B,A,S,d]
    let kt = heads(&layer.key, &[0, 2, 3, 1])?; // [B,A,d,S]
    let v = heads(&layer.value, &[0, 2, 1, 3])?;

    let scores = backend.scale(&backend.batched_matmul(&q, &kt)?, 1.0 / (d as f32).sqrt())?;
    let probs = backend.softmax(&backend.add(&scores, mask)?, 3)?;
    let context = backend.batched_matmul(&probs, &v)?; // [B,A,S,d]
    let merged = backend.transpose(&context, &[0, 2, 1, 3])?.reshape([b, s, h])?;

    let out = &layer.attention_output;
    let projected = backend.linear(&merged, &out.weight, Some(&out.bias))?;
    let norm = &layer.attention_norm;
    Ok(backend.layer_norm(&backend.add(&projected, hidden)?, &norm.gamma, &norm.beta, config.layer_norm_eps)?)
}

/// Position-wise MLP sublayer: `H -> I -> H` with GELU, residual and norm.
pub fn feed_forward(
    hidden: &Tensor,
    layer: &LayerWeights,
    config: &EncoderConfig,
    backend: &dyn Backend,
) -> Result<Tensor, ModelError> {
    let up = &layer.intermediate;
    let inner = backend.gelu(&backend.linear(hidden, &up.weight, Some(&up.bias))?)?;
    let down = &layer.output;
    let out = backend.linear(&inner, &down.weight, Some(&down.bias))?;
    let norm = &layer.output_norm;
    Ok(backend.layer_norm(&backend.add(&out, hidden)?, &norm.gamma, &norm.beta, config.layer_norm_eps)?)
}

fn dims(hidden: &Tensor) -> Result<(usize, usize, usize), ModelError> {
    match *hidden.shape() {
        [b, s, h] => Ok((b, s, h)),
        ref other => Err(ModelError::Input(format!("hidden state must be [B, S, H], got {other:?}"))),
    }
}

fn check_input(input: &EncoderInput, config: &EncoderConfig) -> Result<(), ModelError> {
    let max = config.max_sequence_length();
    if input.seq_len() > max {
        return Err(ModelError::SequenceTooLong {
            len: input.seq_len(),
            max,
        });
    }
    let types = config.type_vocab_size as i64;
    if let Some(bad) = input.token_type_ids.as_i64()?.iter().find(|&&t| t < 0 || t >= types) {
        return Err(ModelError::Input(format!("token type id {bad} outside [0, {types})")));
    }
    Ok(())
}

fn run(
    input: &EncoderInput,
    weights: &EncoderWeights,
    config: &EncoderConfig,
    backend: &dyn Backend,
    keep_hidden: bool,
) -> Result<EncoderOutput, ModelError> {
    check_input(input, config)?;
    let mask = additive_attention_mask(&input.attention_mask)?;
    let mut hidden = embed(input, weights, config, backend)?;
    let mut all = keep_hidden.then(|| vec![hidden.clone()]);
    for layer in &weights.layers {
        hidden = multi_head_attention(&hidden, layer, &mask, config, backend)?;
        hidden = feed_forward(&hidden, layer, config, backend)?;
        if let Some(all) = all.as_mut() {
            all.push(hidden.clone());
        }
    }
    let pooler_output = match &weights.pooler {
        Some(p) => {
            let (b, _, h) = dims(&hidden)?;
            let first = hidden.slice(&[0..b, 0..1, 0..h])?.reshape([b, h])?;
            Some(backend.tanh(&backend.linear(&first, &p.weight, Some(&p.bias))?)?)
        }
        None => None,
    };
    Ok(EncoderOutput {
        last_hidden_state: hidden,
        pooler_output,
        hidden_states: all,
    })
}

/// Full encoder forward pass. Weights are checked against the config before
/// any compute.
pub fn forward(
    input: &EncoderInput,
    weights: &EncoderWeights,
    config: &EncoderConfig,
    backend: &dyn Backend,
) -> Result<EncoderOutput, ModelError> {
    config.validate()?;
    weights.validate(config)?;
    run(input, weights, config, backend, false)
}

/// A validated config and weight set.
#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    weights: EncoderWeights,
}

impl Encoder {
    pub fn new(config: EncoderConfig, weights: EncoderWeights) -> Result<Encoder, ModelError> {
        config.validate()?;
        weights.validate(&config)?;
        Ok(Encoder { config, weights })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn weights(&self) -> &EncoderWeights {
        &self.weights
    }

    pub fn forward(&self, input: &EncoderInput, backend: &dyn Backend) -> Result<EncoderOutput, ModelError> {
        run(input, &self.weights, &self.config, backend, false)
    }

    /// Like [`Encoder::forward`], also returning every intermediate hidden
    /// state.
    pub fn forward_with_hidden_states(
        &self,
        input: &EncoderInput,
        backend: &dyn Backend,
    ) -> Result<EncoderOutput, ModelError> {
        run(input, &self.weights, &self.config, backend, true)
    }
}
