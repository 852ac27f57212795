use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{DType, Tensor};

use super::{EncoderConfig, ModelError};

/// `y = x·wᵀ + b` parameters, weight stored `[out, in]`.
#[derive(Debug, Clone)]
pub struct LinearWeights {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct LayerNormWeights {
    pub gamma: Tensor,
    pub beta: Tensor,
}

/// One transformer block.
#[derive(Debug, Clone)]
pub struct LayerWeights {
    pub query: LinearWeights,
    pub key: LinearWeights,
    pub value: LinearWeights,
    pub attention_output: LinearWeights,
    pub attention_norm: LayerNormWeights,
    pub intermediate: LinearWeights,
    pub output: LinearWeights,
    pub output_norm: LayerNormWeights,
}

#[derive(Debug, Clone)]
pub struct EncoderWeights {
    pub word_embeddings: Tensor,
    pub position_embeddings: Tensor,
    pub token_type_embeddings: Tensor,
    pub embedding_norm: LayerNormWeights,
    pub layers: Vec<LayerWeights>,
    pub pooler: Option<LinearWeights>,
}

fn expect(slot: &str, t: &Tensor, shape: &[usize]) -> Result<(), ModelError> {
    if t.dtype() != DType::F32 || t.shape() != shape {
        return Err(ModelError::WeightShape {
            slot: slot.to_string(),
            expected: shape.to_vec(),
            actual: t.shape().to_vec(),
        });
    }
    Ok(())
}

impl LinearWeights {
    fn check(&self, slot: &str, out: usize, inp: usize) -> Result<(), ModelError> {
        expect(&format!("{slot}.weight"), &self.weight, &[out, inp])?;
        expect(&format!("{slot}.bias"), &self.bias, &[out])
    }
}

impl LayerNormWeights {
    fn check(&self, slot: &str, h: usize) -> Result<(), ModelError> {
        expect(&format!("{slot}.gamma"), &self.gamma, &[h])?;
        expect(&format!("{slot}.beta"), &self.beta, &[h])
    }
}

impl EncoderWeights {
    /// Check every extent against `config`.
    pub fn validate(&self, config: &EncoderConfig) -> Result<(), ModelError> {
        let (h, i) = (config.hidden_size, config.intermediate_size);
        expect("word_embeddings", &self.word_embeddings, &[config.vocab_size, h])?;
        expect("position_embeddings", &self.position_embeddings, &[config.max_position_embeddings, h])?;
        expect("token_type_embeddings", &self.token_type_embeddings, &[config.type_vocab_size, h])?;
        self.embedding_norm.check("embedding_norm", h)?;
        if self.layers.len() != config.num_hidden_layers {
            return Err(ModelError::Config(format!(
                "config declares {} layers but weights hold {}",
                config.num_hidden_layers,
                self.layers.len()
            )));
        }
        for (n, layer) in self.layers.iter().enumerate() {
            let s = |name: &str| format!("layer.{n}.{name}");
            layer.query.check(&s("query"), h, h)?;
            layer.key.check(&s("key"), h, h)?;
            layer.value.check(&s("value"), h, h)?;
            layer.attention_output.check(&s("attention_output"), h, h)?;
            layer.attention_norm.check(&s("attention_norm"), h)?;
            layer.intermediate.check(&s("intermediate"), i, h)?;
            layer.output.check(&s("output"), h, i)?;
            layer.output_norm.check(&s("output_norm"), h)?;
        }
        if let Some(p) = &self.pooler {
            p.check("pooler", h, h)?;
        }
        Ok(())
    }

    /// Seeded random parameters: N(0, 0.02) matrices and embeddings, zero
    /// biases, unit layer-norm scales.
    pub fn random(config: &EncoderConfig, seed: u64, with_pooler: bool) -> Result<EncoderWeights, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f32, 0.02).expect("valid std");
        let mut mat = |rows: usize, cols: usize| {
            Tensor::from_f32([rows, cols], (0..rows * cols).map(|_| normal.sample(&mut rng)).collect())
        };
        let (h, i) = (config.hidden_size, config.intermediate_size);
        let zeros = |n: usize| Tensor::zeros([n]);
        let norm = || -> Result<LayerNormWeights, ModelError> {
            Ok(LayerNormWeights {
                gamma: Tensor::full([h], 1.0)?,
                beta: zeros(h)?,
            })
        };
        let word_embeddings = mat(config.vocab_size, h)?;
        let position_embeddings = mat(config.max_position_embeddings, h)?;
        let token_type_embeddings = mat(config.type_vocab_size, h)?;
        let mut layers = Vec::with_capacity(config.num_hidden_layers);
        for _ in 0..config.num_hidden_layers {
            let mut lin = |out: usize, inp: usize| -> Result<LinearWeights, ModelError> {
                Ok(LinearWeights {
                    weight: mat(out, inp)?,
                    bias: zeros(out)?,
                })
            };
            layers.push(LayerWeights {
                query: lin(h, h)?,
                key: lin(h, h)?,
                value: lin(h, h)?,
                attention_output: lin(h, h)?,
                attention_norm: norm()?,
                intermediate: lin(i, h)?,
                output: lin(h, i)?,
                output_norm: norm()?,
            });
        }
        let pooler = if with_pooler {
            Some(LinearWeights {
                weight: mat(h, h)?,
                bias: zeros(h)?,
            })
        } else {
            None
        };
        Ok(EncoderWeights {
            word_embeddings,
            position_embeddings,
            token_type_embeddings,
            embedding_norm: norm()?,
            layers,
            pooler,
        })
    }
}
