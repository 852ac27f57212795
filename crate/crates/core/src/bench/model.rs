//! End-to-end encoder inference benchmarks.

use serde::{Deserialize, Serialize};

use super::{generate_inputs, time_once, BenchError, Corpus, RunRecord, Subject, DEFAULT_WARMUP};
use crate::backend::BackendId;
use crate::models::{Encoder, EncoderInput};
use crate::tokenizer::Tokenizer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBenchSpec {
    /// Repo id, used as the subject name.
    pub model: String,
    pub char_lengths: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub iterations: usize,
    pub warmup: usize,
    pub backends: Vec<BackendId>,
    /// `None` for the bundled corpus.
    pub corpus: Option<String>,
    pub seed: u64,
}

impl ModelBenchSpec {
    pub const DEFAULT_CHAR_LENGTHS: [usize; 4] = [50, 100, 200, 500];
    pub const DEFAULT_BATCH_SIZES: [usize; 3] = [1, 16, 32];
    pub const DEFAULT_ITERATIONS: usize = 10;

    pub fn new(model: &str) -> ModelBenchSpec {
        ModelBenchSpec {
            model: model.to_string(),
            char_lengths: Self::DEFAULT_CHAR_LENGTHS.to_vec(),
            batch_sizes: Self::DEFAULT_BATCH_SIZES.to_vec(),
            iterations: Self::DEFAULT_ITERATIONS,
            warmup: DEFAULT_WARMUP,
            backends: BackendId::ALL.to_vec(),
            corpus: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::InvalidSpec(m.to_string()));
        if self.char_lengths.is_empty() || self.char_lengths.contains(&0) {
            return bad("character lengths must be a nonempty list of positive values");
        }
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
            return bad("batch sizes must be a nonempty list of positive values");
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if self.backends.is_empty() {
            return bad("no backends selected");
        }
        Ok(())
    }

    pub fn expected_records(&self) -> usize {
        self.char_lengths.len() * self.batch_sizes.len() * self.backends.len() * self.iterations
    }
}

/// The texts and token ids one configuration ran on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputBatch {
    pub char_len: usize,
    pub batch: usize,
    pub seq: usize,
    pub texts: Vec<String>,
    pub ids: Vec<Vec<i64>>,
}

#[derive(Debug, Clone)]
pub struct ModelBenchRun {
    pub records: Vec<RunRecord>,
    pub inputs: Vec<InputBatch>,
}

/// For every length, batch size and backend: tokenize (timed separately),
/// warm up, then time `iterations` forward passes on the same encoding.
pub fn run_model_bench(
    spec: &ModelBenchSpec,
    encoder: &Encoder,
    tokenizer: &Tokenizer,
    corpus: &Corpus,
) -> Result<ModelBenchRun, BenchError> {
    spec.validate()?;
    let mut records = Vec::with_capacity(spec.expected_records());
    let mut inputs = Vec::new();
    for &char_len in &spec.char_lengths {
        for &batch in &spec.batch_sizes {
            let subject = Subject::Model {
                model: spec.model.clone(),
                char_len,
                batch,
            };
            let texts = generate_inputs(corpus, char_len, batch, spec.seed)?;
            let mut recorded = false;
            for &id in &spec.backends {
                let backend = id.backend();
                let descriptor = backend.descriptor();
                let (tokenize_ms, encoding) =
                    time_once(backend, || tokenizer.encode_batch(&texts)).map_err(|source| BenchError::Tokenizer {
                        subject: subject.to_string(),
                        source,
                    })?;
                let model_err = |source| BenchError::Model {
                    subject: subject.to_string(),
                    source,
                };
                let input: EncoderInput = encoding.to_input().map_err(model_err)?;
                if !recorded {
                    inputs.push(InputBatch {
                        char_len,
                        batch,
                        seq: encoding.seq,
                        texts: texts.clone(),
                        ids: (0..batch).map(|b| encoding.row(b).to_vec()).collect(),
                    });
                    recorded = true;
                }
                for _ in 0..spec.warmup {
                    time_once(backend, || encoder.forward(&input, backend)).map_err(model_err)?;
                }
                for iteration in 1..=spec.iterations {
                    let (ms, _) = time_once(backend, || encoder.forward(&input, backend)).map_err(model_err)?;
                    records.push(RunRecord {
                        subject: subject.clone(),
                        backend: id,
                        backend_descriptor: descriptor.clone(),
                        iteration,
                        ms,
                        tokenize_ms: Some(tokenize_ms),
                    });
                }
            }
        }
    }
    Ok(ModelBenchRun { records, inputs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{EncoderConfig, EncoderWeights, ModelFamily};
    use crate::tokenizer::{TokenizerModel, WordPieceVocab};

    fn tiny() -> (Encoder, Tokenizer) {
        let config = EncoderConfig {
            family: ModelFamily::Bert,
            hidden_size: 16,
            num_hidden_layers: 1,
            num_attention_heads: 2,
            intermediate_size: 32,
            vocab_size: 64,
            max_position_embeddings: 512,
            type_vocab_size: 2,
            layer_norm_eps: 1e-12,
            pad_token_id: 0,
        };
        let weights = EncoderWeights::random(&config, 1, true).unwrap();
        let mut tokens: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"].map(String::from).to_vec();
        tokens.extend(('a'..='z').map(String::from));
        tokens.extend(('a'..='z').map(|c| format!("##{c}")));
        let vocab = WordPieceVocab::new(tokens, "[UNK]", true).unwrap();
        let tokenizer = Tokenizer::new(ModelFamily::Bert, TokenizerModel::WordPiece(vocab)).unwrap();
        (Encoder::new(config, weights).unwrap(), tokenizer)
    }

    #[test]
    fn protocol_arithmetic() {
        let (encoder, tokenizer) = tiny();
        let mut spec = ModelBenchSpec::new("tiny");
        assert_eq!(spec.expected_records(), 240);
        spec.char_lengths = vec![50, 100];
        spec.batch_sizes = vec![1, 4];
        spec.iterations = 3;
        spec.warmup = 0;
        let run = run_model_bench(&spec, &encoder, &tokenizer, &Corpus::bundled()).unwrap();
        assert_eq!(run.records.len(), spec.expected_records());
        assert_eq!(run.records.len(), 2 * 2 * 2 * 3);
        assert_eq!(run.inputs.len(), 4);
        for batch in &run.inputs {
            assert_eq!(batch.texts.len(), batch.batch);
            assert!(batch.texts.iter().all(|t| t.chars().count() == batch.char_len));
            assert!(batch.ids.iter().all(|row| row.len() == batch.seq));
        }
        // One tokenization per (length, batch, backend), shared by its iterations.
        for group in run.records.chunks(3) {
            assert!(group.iter().all(|r| r.tokenize_ms == group[0].tokenize_ms));
            assert_eq!(group.iter().map(|r| r.iteration).collect::<Vec<_>>(), [1, 2, 3]);
        }
    }

    #[test]
    fn inputs_reproducible() {
        let (encoder, tokenizer) = tiny();
        let mut spec = ModelBenchSpec::new("tiny");
        spec.char_lengths = vec![60];
        spec.batch_sizes = vec![2];
        spec.iterations = 1;
        spec.warmup = 0;
        spec.backends = vec![BackendId::Optimized];
        let a = run_model_bench(&spec, &encoder, &tokenizer, &Corpus::bundled()).unwrap();
        let b = run_model_bench(&spec, &encoder, &tokenizer, &Corpus::bundled()).unwrap();
        assert_eq!(a.inputs, b.inputs);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = ModelBenchSpec::new("m");
        spec.batch_sizes = vec![];
        assert!(spec.validate().is_err());
        let mut spec = ModelBenchSpec::new("m");
        spec.char_lengths = vec![0];
        assert!(spec.validate().is_err());
    }
}
