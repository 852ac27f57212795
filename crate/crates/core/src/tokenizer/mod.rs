//! Text to [`EncoderInput`] for each model family.
//!
//! Vocabularies are immutable once loaded, so a [`Tokenizer`] can be shared
//! across threads.

mod basic;
mod bpe;
mod unigram;
mod wordpiece;

pub use basic::basic_tokenize;
pub use bpe::{byte_table, BpeVocab};
pub use unigram::{Normalizer, PreTokenizer, Prepend, UnigramVocab, UNK_PENALTY, WORD_MARKER};
pub use wordpiece::{WordPieceVocab, CONTINUATION_PREFIX, MAX_WORD_CHARS};

use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::models::{EncoderInput, ModelError, ModelFamily, MAX_SEQUENCE_LENGTH};
use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum TokenizerError {
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad tokenizer file: {0}")]
    Format(String),
    #[error("vocabulary has no `{0}` token")]
    MissingToken(String),
    #[error("piece `{0}` is not in the vocabulary")]
    UnknownPiece(String),
    #[error("cannot encode an empty batch")]
    EmptyBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialTokens {
    /// `[CLS]` or `<s>`.
    pub cls: i64,
    /// `[SEP]` or `</s>`.
    pub sep: i64,
    pub pad: i64,
    pub unk: i64,
    pub mask: i64,
}

impl SpecialTokens {
    pub fn names(family: ModelFamily) -> [&'static str; 5] {
        match family {
            ModelFamily::Bert => ["[CLS]", "[SEP]", "[PAD]", "[UNK]", "[MASK]"],
            ModelFamily::Roberta | ModelFamily::XlmRoberta => ["<s>", "</s>", "<pad>", "<unk>", "<mask>"],
        }
    }

    fn resolve(family: ModelFamily, lookup: impl Fn(&str) -> Option<i64>) -> Result<SpecialTokens, TokenizerError> {
        let [cls, sep, pad, unk, mask] =
            SpecialTokens::names(family).map(|n| lookup(n).ok_or_else(|| TokenizerError::MissingToken(n.to_string())));
        Ok(SpecialTokens {
            cls: cls?,
            sep: sep?,
            pad: pad?,
            unk: unk?,
            mask: mask?,
        })
    }
}

#[derive(Debug, Clone)]
pub enum TokenizerModel {
    WordPiece(WordPieceVocab),
    Bpe(BpeVocab),
    Unigram(UnigramVocab),
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    family: ModelFamily,
    model: TokenizerModel,
    specials: SpecialTokens,
    max_length: usize,
}

/// Padded batch of token ids, ready for the encoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoding {
    pub ids: Vec<i64>,
    pub attention_mask: Vec<i64>,
    pub token_type_ids: Vec<i64>,
    pub batch: usize,
    pub seq: usize,
}

impl Encoding {
    pub fn row(&self, b: usize) -> &[i64] {
        &self.ids[b * self.seq..(b + 1) * self.seq]
    }

    /// Real (unpadded) length of row `b`.
    pub fn row_len(&self, b: usize) -> usize {
        self.attention_mask[b * self.seq..(b + 1) * self.seq].iter().filter(|&&m| m == 1).count()
    }

    pub fn to_input(&self) -> Result<EncoderInput, ModelError> {
        let shape = [self.batch, self.seq];
        EncoderInput::new(
            Tensor::from_i64(shape, self.ids.clone())?,
            Tensor::from_i64(shape, self.attention_mask.clone())?,
            Tensor::from_i64(shape, self.token_type_ids.clone())?,
        )
    }
}

fn read(path: &Path) -> Result<String, TokenizerError> {
    std::fs::read_to_string(path).map_err(|source| TokenizerError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl Tokenizer {
    pub fn new(family: ModelFamily, model: TokenizerModel) -> Result<Tokenizer, TokenizerError> {
        let specials = match &model {
            TokenizerModel::WordPiece(v) => SpecialTokens::resolve(family, |t| v.id(t))?,
            TokenizerModel::Bpe(v) => SpecialTokens::resolve(family, |t| v.id(t))?,
            TokenizerModel::Unigram(v) => SpecialTokens::resolve(family, |t| v.id(t))?,
        };
        Ok(Tokenizer {
            family,
            model,
            specials,
            max_length: MAX_SEQUENCE_LENGTH,
        })
    }

    /// Files a hub repo must provide for this family's tokenizer.
    pub fn required_files(family: ModelFamily) -> &'static [&'static str] {
        match family {
            ModelFamily::Bert => &["vocab.txt"],
            ModelFamily::Roberta => &["vocab.json", "merges.txt"],
            ModelFamily::XlmRoberta => &["tokenizer.json"],
        }
    }

    /// Files read when present.
    pub fn optional_files(family: ModelFamily) -> &'static [&'static str] {
        match family {
            ModelFamily::Bert => &["tokenizer_config.json"],
            _ => &[],
        }
    }

    /// Load from a directory laid out like a hub repo snapshot.
    pub fn from_dir(family: ModelFamily, dir: &Path) -> Result<Tokenizer, TokenizerError> {
        let model = match family {
            ModelFamily::Bert => {
                let config = dir.join("tokenizer_config.json");
                let lowercase = if config.exists() { do_lower_case(&read(&config)?)? } else { true };
                TokenizerModel::WordPiece(WordPieceVocab::from_vocab_txt(
                    &read(&dir.join("vocab.txt"))?,
                    "[UNK]",
                    lowercase,
                )?)
            }
            ModelFamily::Roberta => TokenizerModel::Bpe(BpeVocab::from_files(
                &read(&dir.join("vocab.json"))?,
                &read(&dir.join("merges.txt"))?,
            )?),
            ModelFamily::XlmRoberta => {
                TokenizerModel::Unigram(UnigramVocab::from_tokenizer_json(&read(&dir.join("tokenizer.json"))?)?)
            }
        };
        Tokenizer::new(family, model)
    }

    pub fn family(&self) -> ModelFamily {
        self.family
    }

    pub fn model(&self) -> &TokenizerModel {
        &self.model
    }

    pub fn specials(&self) -> SpecialTokens {
        self.specials
    }

    pub fn max_length(&self) -> usize {
        self.max_length
    }

    /// Lower the truncation limit (specials included). Values above 512 are
    /// clamped.
    pub fn with_max_length(mut self, max_length: usize) -> Tokenizer {
        self.max_length = max_length.clamp(2, MAX_SEQUENCE_LENGTH);
        self
    }

    pub fn vocab_size(&self) -> usize {
        match &self.model {
            TokenizerModel::WordPiece(v) => v.len(),
            TokenizerModel::Bpe(v) => (v.max_id() + 1) as usize,
            TokenizerModel::Unigram(v) => v.len(),
        }
    }

    /// Ids of `text` without specials or truncation.
    pub fn encode_ids(&self, text: &str) -> Result<Vec<i64>, TokenizerError> {
        match &self.model {
            TokenizerModel::WordPiece(v) => Ok(v.encode_words(&basic_tokenize(text, v.lowercase))),
            TokenizerModel::Bpe(v) => v.encode(text),
            TokenizerModel::Unigram(v) => Ok(v.encode(text)),
        }
    }

    /// One row: specials around the text, truncated to the length limit.
    pub fn encode(&self, text: &str) -> Result<Vec<i64>, TokenizerError> {
        let mut body = self.encode_ids(text)?;
        body.truncate(self.max_length - 2);
        let mut ids = Vec::with_capacity(body.len() + 2);
        ids.push(self.specials.cls);
        ids.extend(body);
        ids.push(self.specials.sep);
        Ok(ids)
    }

    /// Encode and right-pad to the longest row.
    pub fn encode_batch<S: AsRef<str>>(&self, texts: &[S]) -> Result<Encoding, TokenizerError> {
        if texts.is_empty() {
            return Err(TokenizerError::EmptyBatch);
        }
        let rows = texts.iter().map(|t| self.encode(t.as_ref())).collect::<Result<Vec<_>, _>>()?;
        let seq = rows.iter().map(Vec::len).max().unwrap_or(0);
        let batch = rows.len();
        let mut ids = Vec::with_capacity(batch * seq);
        let mut attention_mask = Vec::with_capacity(batch * seq);
        for row in rows {
            let pad = seq - row.len();
            attention_mask.extend(std::iter::repeat(1).take(row.len()).chain(std::iter::repeat(0).take(pad)));
            ids.extend(row);
            ids.extend(std::iter::repeat(self.specials.pad).take(pad));
        }
        Ok(Encoding {
            ids,
            attention_mask,
            token_type_ids: vec![0; batch * seq],
            batch,
            seq,
        })
    }
}

fn do_lower_case(config: &str) -> Result<bool, TokenizerError> {
    let v: Value =
        serde_json::from_str(config).map_err(|e| TokenizerError::Format(format!("tokenizer_config.json: {e}")))?;
    Ok(v.get("do_lower_case").and_then(Value::as_bool).unwrap_or(true))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_bert() -> Tokenizer {
        let tokens = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "hello", "world", "un", "##aff", "##able"];
        let v = WordPieceVocab::new(tokens.iter().map(|s| s.to_string()).collect(), "[UNK]", true).unwrap();
        Tokenizer::new(ModelFamily::Bert, TokenizerModel::WordPiece(v)).unwrap()
    }

    #[test]
    fn specials_resolved() {
        let t = tiny_bert();
        assert_eq!(
            t.specials(),
            SpecialTokens {
                cls: 2,
                sep: 3,
                pad: 0,
                unk: 1,
                mask: 4
            }
        );
    }

    #[test]
    fn single_row_has_specials() {
        let t = tiny_bert();
        let e = t.encode_batch(&["Hello unaffable"]).unwrap();
        assert_eq!((e.batch, e.seq), (1, 6));
        assert_eq!(e.ids, [2, 5, 7, 8, 9, 3]);
        assert_eq!(e.attention_mask, [1; 6]);
    }

    #[test]
    fn shorter_rows_right_padded() {
        let t = tiny_bert();
        let e = t.encode_batch(&["hello world hello", "world"]).unwrap();
        assert_eq!(e.seq, 5);
        assert_eq!(e.row(0), [2, 5, 6, 5, 3]);
        assert_eq!(e.row(1), [2, 6, 3, 0, 0]);
        assert_eq!(&e.attention_mask[5..], [1, 1, 1, 0, 0]);
        assert_eq!(e.row_len(1), 3);
        // Padding never changes the real tokens.
        let alone = t.encode_batch(&["world"]).unwrap();
        assert_eq!(alone.row(0), &e.row(1)[..3]);
        let input = e.to_input().unwrap();
        assert_eq!((input.batch_size(), input.seq_len()), (2, 5));
    }

    #[test]
    fn truncates_to_limit() {
        let t = tiny_bert();
        let long = vec!["hello"; 600].join(" ");
        let row = t.encode(&long).unwrap();
        assert_eq!(row.len(), 512);
        assert_eq!((row[0], row[511]), (2, 3));
        assert_eq!(t.clone().with_max_length(8).encode(&long).unwrap().len(), 8);
    }

    #[test]
    fn empty_batch_rejected() {
        assert!(matches!(tiny_bert().encode_batch::<&str>(&[]), Err(TokenizerError::EmptyBatch)));
    }

    #[test]
    fn missing_special_rejected() {
        let v = WordPieceVocab::new(vec!["[UNK]".into(), "[CLS]".into()], "[UNK]", true).unwrap();
        assert!(matches!(
            Tokenizer::new(ModelFamily::Bert, TokenizerModel::WordPiece(v)),
            Err(TokenizerError::MissingToken(t)) if t == "[SEP]"
        ));
    }

    #[test]
    fn canonical_bert_vocab() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/hub/bert-base-uncased/main");
        let t = Tokenizer::from_dir(ModelFamily::Bert, &dir).unwrap();
        assert_eq!(t.vocab_size(), 30522);
        assert_eq!(t.encode("hello world").unwrap(), [101, 7592, 2088, 102]);
    }
}
