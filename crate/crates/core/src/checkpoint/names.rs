//! Published tensor names to [`EncoderWeights`] slots.

use std::collections::{BTreeMap, BTreeSet};

use crate::models::{
    EncoderConfig, EncoderWeights, LayerNormWeights, LayerWeights, LinearWeights, ModelFamily,
};
use crate::tensor::Tensor;

use super::{CheckpointError, CheckpointIndex};

/// One internal slot and the published names that may fill it, in order of
/// preference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameRule {
    pub slot: String,
    pub candidates: Vec<String>,
    pub required: bool,
}

/// Name of every published tensor prefix that belongs to a task head rather
/// than the encoder. These are expected leftovers.
pub const TASK_HEAD_PREFIXES: [&str; 5] = ["cls.", "lm_head.", "classifier.", "qa_outputs.", "pre_classifier."];

#[derive(Debug, Clone)]
pub struct WeightNameMap {
    pub family: ModelFamily,
    pub rules: Vec<NameRule>,
}

impl WeightNameMap {
    /// Rules for `layers` encoder blocks. Names are accepted with the family
    /// prefix (`bert.` / `roberta.`) or bare, and layer norms with either
    /// `weight`/`bias` or the older `gamma`/`beta`.
    pub fn new(family: ModelFamily, layers: usize) -> WeightNameMap {
        let prefix = match family {
            ModelFamily::Bert => "bert.",
            ModelFamily::Roberta | ModelFamily::XlmRoberta => "roberta.",
        };
        let mut rules = Vec::new();
        let mut add = |slot: String, published: &[String], required: bool| {
            let candidates = [prefix, ""]
                .iter()
                .flat_map(|p| published.iter().map(move |n| format!("{p}{n}")))
                .collect();
            rules.push(NameRule { slot, candidates, required });
        };
        let one = |s: &str| vec![s.to_string()];
        let linear = |add: &mut dyn FnMut(String, &[String], bool), slot: &str, published: &str, required: bool| {
            add(format!("{slot}.weight"), &one(&format!("{published}.weight")), required);
            add(format!("{slot}.bias"), &one(&format!("{published}.bias")), required);
        };
        let norm = |add: &mut dyn FnMut(String, &[String], bool), slot: &str, published: &str| {
            add(format!("{slot}.gamma"), &[format!("{published}.weight"), format!("{published}.gamma")], true);
            add(format!("{slot}.beta"), &[format!("{published}.bias"), format!("{published}.beta")], true);
        };

        add("word_embeddings".into(), &one("embeddings.word_embeddings.weight"), true);
        add("position_embeddings".into(), &one("embeddings.position_embeddings.weight"), true);
        add("token_type_embeddings".into(), &one("embeddings.token_type_embeddings.weight"), true);
        norm(&mut add, "embedding_norm", "embeddings.LayerNorm");
        for n in 0..layers {
            let p = format!("encoder.layer.{n}");
            let s = format!("layer.{n}");
            linear(&mut add, &format!("{s}.query"), &format!("{p}.attention.self.query"), true);
            linear(&mut add, &format!("{s}.key"), &format!("{p}.attention.self.key"), true);
            linear(&mut add, &format!("{s}.value"), &format!("{p}.attention.self.value"), true);
            linear(&mut add, &format!("{s}.attention_output"), &format!("{p}.attention.output.dense"), true);
            norm(&mut add, &format!("{s}.attention_norm"), &format!("{p}.attention.output.LayerNorm"));
            linear(&mut add, &format!("{s}.intermediate"), &format!("{p}.intermediate.dense"), true);
            linear(&mut add, &format!("{s}.output"), &format!("{p}.output.dense"), true);
            norm(&mut add, &format!("{s}.output_norm"), &format!("{p}.output.LayerNorm"));
        }
        linear(&mut add, "pooler", "pooler.dense", false);
        WeightNameMap { family, rules }
    }
}

/// Encoder weights plus the names that were not used.
#[derive(Debug, Clone)]
pub struct MappedWeights {
    pub weights: EncoderWeights,
    /// Leftovers under a known task-head prefix or buffer name.
    pub ignored: Vec<String>,
    /// Leftovers that match nothing known; logged as warnings.
    pub unexpected: Vec<String>,
}

fn is_expected_leftover(name: &str) -> bool {
    TASK_HEAD_PREFIXES.iter().any(|p| name.starts_with(p)) || name.ends_with("position_ids")
}

/// Fill every slot from `index`, widening to F32 and checking shapes.
pub fn map_weights(
    index: &CheckpointIndex,
    map: &WeightNameMap,
    config: &EncoderConfig,
) -> Result<MappedWeights, CheckpointError> {
    let mut found = BTreeMap::new();
    let mut used = BTreeSet::new();
    let mut missing = Vec::new();
    for rule in &map.rules {
        match rule.candidates.iter().find(|c| index.record(c).is_some()) {
            Some(name) => {
                found.insert(rule.slot.clone(), index.tensor(name)?);
                used.insert(name.clone());
            }
            None if rule.required => missing.push((rule.slot.clone(), rule.candidates.clone())),
            None => {}
        }
    }
    // The pooler is optional as a pair; one half without the other is missing.
    let pooler_parts = ["pooler.weight", "pooler.bias"].map(|s| found.contains_key(s));
    if pooler_parts[0] != pooler_parts[1] {
        for rule in map.rules.iter().filter(|r| r.slot.starts_with("pooler.") && !found.contains_key(&r.slot)) {
            missing.push((rule.slot.clone(), rule.candidates.clone()));
        }
    }
    if !missing.is_empty() {
        return Err(CheckpointError::MissingSlots(missing));
    }

    let mut slots = Slots(found);
    let mut layers = Vec::with_capacity(config.num_hidden_layers);
    for n in 0..config.num_hidden_layers {
        let s = format!("layer.{n}");
        layers.push(LayerWeights {
            query: slots.linear(&format!("{s}.query")),
            key: slots.linear(&format!("{s}.key")),
            value: slots.linear(&format!("{s}.value")),
            attention_output: slots.linear(&format!("{s}.attention_output")),
            attention_norm: slots.norm(&format!("{s}.attention_norm")),
            intermediate: slots.linear(&format!("{s}.intermediate")),
            output: slots.linear(&format!("{s}.output")),
            output_norm: slots.norm(&format!("{s}.output_norm")),
        });
    }
    let pooler = pooler_parts[0].then(|| slots.linear("pooler"));
    let weights = EncoderWeights {
        word_embeddings: slots.take("word_embeddings"),
        position_embeddings: slots.take("position_embeddings"),
        token_type_embeddings: slots.take("token_type_embeddings"),
        embedding_norm: slots.norm("embedding_norm"),
        layers,
        pooler,
    };
    weights.validate(config)?;

    let (ignored, unexpected): (Vec<String>, Vec<String>) = index
        .names()
        .filter(|n| !used.contains(*n))
        .map(str::to_string)
        .partition(|n| is_expected_leftover(n));
    for name in &unexpected {
        tracing::warn!(tensor = %name, "checkpoint tensor not used by the encoder");
    }
    Ok(MappedWeights {
        weights,
        ignored,
        unexpected,
    })
}

struct Slots(BTreeMap<String, Tensor>);

impl Slots {
    fn take(&mut self, slot: &str) -> Tensor {
        self.0.remove(slot).unwrap_or_else(|| panic!("slot `{slot}` was checked present"))
    }

    fn linear(&mut self, slot: &str) -> LinearWeights {
        LinearWeights {
            weight: self.take(&format!("{slot}.weight")),
            bias: self.take(&format!("{slot}.bias")),
        }
    }

    fn norm(&mut self, slot: &str) -> LayerNormWeights {
        LayerNormWeights {
            gamma: self.take(&format!("{slot}.gamma")),
            beta: self.take(&format!("{slot}.beta")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkpoint::{parse_safetensors, write_safetensors, RawTensor};

    fn tiny() -> EncoderConfig {
        EncoderConfig {
            family: ModelFamily::Roberta,
            hidden_size: 4,
            num_hidden_layers: 1,
            num_attention_heads: 2,
            intermediate_size: 8,
            vocab_size: 10,
            max_position_embeddings: 12,
            type_vocab_size: 1,
            layer_norm_eps: 1e-5,
            pad_token_id: 1,
        }
    }

    fn published(config: &EncoderConfig, prefix: &str, with_pooler: bool) -> Vec<RawTensor> {
        let w = EncoderWeights::random(config, 0, with_pooler).unwrap();
        let mut out = Vec::new();
        let mut put = |name: &str, t: &Tensor| out.push(RawTensor::f32(&format!("{prefix}{name}"), t.shape(), t.as_f32().unwrap()));
        put("embeddings.word_embeddings.weight", &w.word_embeddings);
        put("embeddings.position_embeddings.weight", &w.position_embeddings);
        put("embeddings.token_type_embeddings.weight", &w.token_type_embeddings);
        put("embeddings.LayerNorm.gamma", &w.embedding_norm.gamma);
        put("embeddings.LayerNorm.beta", &w.embedding_norm.beta);
        let l = &w.layers[0];
        let p = "encoder.layer.0";
        for (name, lin) in [
            ("attention.self.query", &l.query),
            ("attention.self.key", &l.key),
            ("attention.self.value", &l.value),
            ("attention.output.dense", &l.attention_output),
            ("intermediate.dense", &l.intermediate),
            ("output.dense", &l.output),
        ] {
            put(&format!("{p}.{name}.weight"), &lin.weight);
            put(&format!("{p}.{name}.bias"), &lin.bias);
        }
        for (name, n) in [("attention.output.LayerNorm", &l.attention_norm), ("output.LayerNorm", &l.output_norm)] {
            put(&format!("{p}.{name}.weight"), &n.gamma);
            put(&format!("{p}.{name}.bias"), &n.beta);
        }
        if let Some(pool) = &w.pooler {
            put("pooler.dense.weight", &pool.weight);
            put("pooler.dense.bias", &pool.bias);
        }
        out
    }

    #[test]
    fn every_slot_has_rule_and_candidates_are_unique() {
        let map = WeightNameMap::new(ModelFamily::Bert, 12);
        let slots: BTreeSet<_> = map.rules.iter().map(|r| &r.slot).collect();
        assert_eq!(slots.len(), map.rules.len());
        assert_eq!(map.rules.len(), 3 + 2 + 12 * 16 + 2);
        let q = map.rules.iter().find(|r| r.slot == "layer.0.query.weight").unwrap();
        assert_eq!(q.candidates[0], "bert.encoder.layer.0.attention.self.query.weight");
        let all: Vec<_> = map.rules.iter().flat_map(|r| &r.candidates).collect();
        assert_eq!(all.iter().collect::<BTreeSet<_>>().len(), all.len());
    }

    #[test]
    fn maps_prefixed_names_without_pooler_and_old_norm_names() {
        let c = tiny();
        let mut raw = published(&c, "roberta.", false);
        raw.push(RawTensor::f32("lm_head.bias", &[10], &[0.0; 10]));
        raw.push(RawTensor::i64("roberta.embeddings.position_ids", &[1, 12], &[0; 12]));
        raw.push(RawTensor::f32("mystery", &[1], &[0.0]));
        let idx = parse_safetensors(write_safetensors(&raw, &Default::default())).unwrap();
        let m = map_weights(&idx, &WeightNameMap::new(c.family, 1), &c).unwrap();
        assert!(m.weights.pooler.is_none());
        assert_eq!(m.ignored, ["lm_head.bias", "roberta.embeddings.position_ids"]);
        assert_eq!(m.unexpected, ["mystery"]);
    }

    #[test]
    fn bare_names_with_pooler() {
        let c = EncoderConfig {
            family: ModelFamily::Bert,
            type_vocab_size: 2,
            pad_token_id: 0,
            ..tiny()
        };
        let raw = published(&c, "", true);
        let idx = parse_safetensors(write_safetensors(&raw, &Default::default())).unwrap();
        let m = map_weights(&idx, &WeightNameMap::new(c.family, 1), &c).unwrap();
        assert!(m.weights.pooler.is_some());
        assert!(m.ignored.is_empty() && m.unexpected.is_empty());
    }

    #[test]
    fn empty_index_lists_all_required_slots() {
        let c = tiny();
        let idx = parse_safetensors(write_safetensors(&[], &Default::default())).unwrap();
        match map_weights(&idx, &WeightNameMap::new(c.family, 1), &c) {
            Err(CheckpointError::MissingSlots(missing)) => {
                assert_eq!(missing.len(), 3 + 2 + 16);
                assert!(missing.iter().all(|(slot, _)| !slot.starts_with("pooler")));
                assert_eq!(missing[0].1, ["roberta.embeddings.word_embeddings.weight", "embeddings.word_embeddings.weight"]);
            }
            other => panic!("expected missing slots, got {other:?}"),
        }
    }

    #[test]
    fn shape_mismatch_names_slot() {
        let c = tiny();
        let mut raw = published(&c, "roberta.", false);
        raw.retain(|t| t.name != "roberta.encoder.layer.0.attention.self.key.bias");
        raw.push(RawTensor::f32("roberta.encoder.layer.0.attention.self.key.bias", &[3], &[0.0; 3]));
        let idx = parse_safetensors(write_safetensors(&raw, &Default::default())).unwrap();
        let err = map_weights(&idx, &WeightNameMap::new(c.family, 1), &c).unwrap_err();
        assert!(err.to_string().contains("layer.0.key.bias"), "{err}");
    }
}
