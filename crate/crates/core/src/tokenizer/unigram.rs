//! Unigram language-model segmentation (sentencepiece style).

use std::collections::HashMap;

use serde_json::Value;
use unicode_normalization::UnicodeNormalization;

use super::TokenizerError;

pub const WORD_MARKER: char = '▁';
/// Unknown characters score this much below the least likely piece.
pub const UNK_PENALTY: f64 = 10.0;

/// Text normalization declared by a `tokenizer.json`.
#[derive(Debug, Clone, PartialEq)]
pub enum Normalizer {
    /// Sentencepiece's compiled charmap, approximated by NFKC.
    Nfkc,
    /// Literal or regex replacement.
    Replace { pattern: ReplacePattern, content: String },
}

#[derive(Debug, Clone)]
pub enum ReplacePattern {
    Literal(String),
    Regex(fancy_regex::Regex),
}

impl PartialEq for ReplacePattern {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ReplacePattern::Literal(a), ReplacePattern::Literal(b)) => a == b,
            (ReplacePattern::Regex(a), ReplacePattern::Regex(b)) => a.as_str() == b.as_str(),
            _ => false,
        }
    }
}

/// Word splitting declared by a `tokenizer.json`.
#[derive(Debug, Clone, PartialEq)]
pub enum PreTokenizer {
    WhitespaceSplit,
    /// Spaces become `▁`, optionally prefixed, optionally split before each
    /// `▁`.
    Metaspace { replacement: char, prepend: Prepend, split: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prepend {
    Always,
    First,
    Never,
}

#[derive(Debug, Clone)]
pub struct UnigramVocab {
    pieces: Vec<(String, f64)>,
    index: HashMap<String, usize>,
    max_piece_chars: usize,
    unk_id: usize,
    unk_score: f64,
    normalizers: Vec<Normalizer>,
    pre_tokenizers: Vec<PreTokenizer>,
}

impl UnigramVocab {
    /// Pieces in id order with their log probabilities. The default pipeline
    /// splits on whitespace and prefixes every word with `▁`.
    pub fn new(pieces: Vec<(String, f64)>, unk_id: usize) -> Result<UnigramVocab, TokenizerError> {
        if unk_id >= pieces.len() {
            return Err(TokenizerError::Format(format!("unk id {unk_id} outside {} pieces", pieces.len())));
        }
        if let Some((p, s)) = pieces.iter().find(|(_, s)| !s.is_finite() || *s > 0.0) {
            return Err(TokenizerError::Format(format!("piece `{p}` has invalid log probability {s}")));
        }
        let mut index = HashMap::with_capacity(pieces.len());
        for (i, (p, _)) in pieces.iter().enumerate() {
            index.entry(p.clone()).or_insert(i);
        }
        let min = pieces.iter().map(|(_, s)| *s).fold(f64::INFINITY, f64::min);
        let max_piece_chars = pieces.iter().map(|(p, _)| p.chars().count()).max().unwrap_or(1);
        Ok(UnigramVocab {
            pieces,
            index,
            max_piece_chars,
            unk_id,
            unk_score: min - UNK_PENALTY,
            normalizers: Vec::new(),
            pre_tokenizers: vec![
                PreTokenizer::WhitespaceSplit,
                PreTokenizer::Metaspace {
                    replacement: WORD_MARKER,
                    prepend: Prepend::Always,
                    split: true,
                },
            ],
        })
    }

    /// Load the `model`, `normalizer` and `pre_tokenizer` sections of a
    /// `tokenizer.json` whose model type is Unigram.
    pub fn from_tokenizer_json(text: &str) -> Result<UnigramVocab, TokenizerError> {
        let fmt = |m: String| TokenizerError::Format(format!("tokenizer.json: {m}"));
        let root: Value = serde_json::from_str(text).map_err(|e| fmt(e.to_string()))?;
        let model = root.get("model").ok_or_else(|| fmt("no model section".into()))?;
        if model.get("type").and_then(Value::as_str) != Some("Unigram") {
            return Err(fmt("model type is not Unigram".into()));
        }
        let pieces = model
            .get("vocab")
            .and_then(Value::as_array)
            .ok_or_else(|| fmt("model.vocab is not a list".into()))?
            .iter()
            .map(|entry| match entry.as_array().map(Vec::as_slice) {
                Some([Value::String(p), s]) => s
                    .as_f64()
                    .map(|s| (p.clone(), s))
                    .ok_or_else(|| fmt(format!("score of `{p}` is not a number"))),
                _ => Err(fmt(format!("vocab entry {entry} is not [piece, score]"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let unk_id = model
            .get("unk_id")
            .and_then(Value::as_u64)
            .ok_or_else(|| fmt("model.unk_id missing".into()))? as usize;
        if model.get("byte_fallback").and_then(Value::as_bool) == Some(true) {
            return Err(fmt("byte_fallback is not supported".into()));
        }
        let mut vocab = UnigramVocab::new(pieces, unk_id)?;
        vocab.normalizers = match root.get("normalizer") {
            None | Some(Value::Null) => Vec::new(),
            Some(n) => parse_normalizer(n)?,
        };
        vocab.pre_tokenizers = match root.get("pre_tokenizer") {
            None | Some(Value::Null) => Vec::new(),
            Some(p) => parse_pre_tokenizer(p)?,
        };
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn id(&self, piece: &str) -> Option<i64> {
        self.index.get(piece).map(|&i| i as i64)
    }

    pub fn piece(&self, id: i64) -> Option<&str> {
        self.pieces.get(usize::try_from(id).ok()?).map(|(p, _)| p.as_str())
    }

    pub fn unk_id(&self) -> i64 {
        self.unk_id as i64
    }

    pub fn unk_score(&self) -> f64 {
        self.unk_score
    }

    fn normalize(&self, text: &str) -> String {
        let mut s = text.to_string();
        for n in &self.normalizers {
            s = match n {
                Normalizer::Nfkc => s.nfkc().collect(),
                Normalizer::Replace {
                    pattern: ReplacePattern::Literal(p),
                    content,
                } => s.replace(p.as_str(), content),
                Normalizer::Replace {
                    pattern: ReplacePattern::Regex(re),
                    content,
                } => re.replace_all(&s, content.as_str()).into_owned(),
            };
        }
        s
    }

    fn pre_tokenize(&self, text: String) -> Vec<String> {
        let mut words = vec![text];
        for p in &self.pre_tokenizers {
            let mut next = Vec::new();
            for (n, w) in words.into_iter().enumerate() {
                match *p {
                    PreTokenizer::WhitespaceSplit => {
                        next.extend(w.split(char::is_whitespace).filter(|s| !s.is_empty()).map(str::to_string))
                    }
                    PreTokenizer::Metaspace {
                        replacement,
                        prepend,
                        split,
                    } => {
                        let mut s = w.replace(' ', &replacement.to_string());
                        let add = match prepend {
                            Prepend::Always => true,
                            Prepend::First => n == 0,
                            Prepend::Never => false,
                        };
                        if add && !s.starts_with(replacement) {
                            s.insert(0, replacement);
                        }
                        if split {
                            // Each marker starts a new word.
                            let mut cur = String::new();
                            for c in s.chars() {
                                if c == replacement && !cur.is_empty() {
                                    next.push(std::mem::take(&mut cur));
                                }
                                cur.push(c);
                            }
                            if !cur.is_empty() {
                                next.push(cur);
                            }
                        } else {
                            next.push(s);
                        }
                    }
                }
            }
            words = next;
        }
        words
    }

    /// Best segmentation of one word as piece ids.
    ///
    /// Runs right to left so every candidate is `piece + best(suffix)`. Ties
    /// on total log probability go to fewer pieces, then to the
    /// lexicographically smaller first piece. Runs of unknown characters
    /// collapse into a single unk.
    pub fn segment(&self, word: &str) -> Vec<i64> {
        let bounds: Vec<usize> = word.char_indices().map(|(i, _)| i).chain([word.len()]).collect();
        let n = bounds.len() - 1;
        // best[i] = (score, pieces, end of first piece, first piece id)
        let mut best: Vec<(f64, usize, usize, usize)> = vec![(f64::NEG_INFINITY, 0, 0, 0); n + 1];
        best[n] = (0.0, 0, n, usize::MAX);
        for i in (0..n).rev() {
            let mut cur: Option<(f64, usize, usize, usize)> = None;
            let better = |cand: (f64, usize, usize, usize), cur: &Option<(f64, usize, usize, usize)>, this: &Self| match cur {
                None => true,
                Some(c) => {
                    cand.0 > c.0
                        || (cand.0 == c.0 && cand.1 < c.1)
                        || (cand.0 == c.0 && cand.1 == c.1 && this.first_piece(cand, word, &bounds, i) < this.first_piece(*c, word, &bounds, i))
                }
            };
            let mut has_single = false;
            for j in i + 1..=n.min(i + self.max_piece_chars) {
                let Some(&id) = self.index.get(&word[bounds[i]..bounds[j]]) else { continue };
                has_single |= j == i + 1;
                let cand = (self.pieces[id].1 + best[j].0, 1 + best[j].1, j, id);
                if better(cand, &cur, self) {
                    cur = Some(cand);
                }
            }
            // A character with no single-character piece may also be unknown.
            if !has_single {
                let unk = (self.unk_score + best[i + 1].0, 1 + best[i + 1].1, i + 1, self.unk_id);
                if better(unk, &cur, self) {
                    cur = Some(unk);
                }
            }
            best[i] = cur.expect("unk candidate always present");
        }
        let mut ids = Vec::new();
        let mut i = 0;
        let mut last_unk = false;
        while i < n {
            let (_, _, end, id) = best[i];
            let is_unk = id == self.unk_id;
            if !(is_unk && last_unk) {
                ids.push(id as i64);
            }
            last_unk = is_unk;
            i = end;
        }
        ids
    }

    fn first_piece<'a>(&self, cand: (f64, usize, usize, usize), word: &'a str, bounds: &[usize], start: usize) -> &'a str {
        &word[bounds[start]..bounds[cand.2]]
    }

    /// Ids of `text` with no specials added.
    pub fn encode(&self, text: &str) -> Vec<i64> {
        let mut ids = Vec::new();
        for word in self.pre_tokenize(self.normalize(text)) {
            ids.extend(self.segment(&word));
        }
        ids
    }
}

fn parse_normalizer(v: &Value) -> Result<Vec<Normalizer>, TokenizerError> {
    let fmt = |m: String| TokenizerError::Format(format!("tokenizer.json normalizer: {m}"));
    match v.get("type").and_then(Value::as_str) {
        Some("Sequence") => {
            let list = v.get("normalizers").and_then(Value::as_array).ok_or_else(|| fmt("Sequence without list".into()))?;
            let mut out = Vec::new();
            for n in list {
                out.extend(parse_normalizer(n)?);
            }
            Ok(out)
        }
        Some("Precompiled") | Some("NFKC") => Ok(vec![Normalizer::Nfkc]),
        Some("Replace") => {
            let content = v.get("content").and_then(Value::as_str).unwrap_or_default().to_string();
            let pattern = match v.get("pattern") {
                Some(p) if p.get("String").is_some() => {
                    ReplacePattern::Literal(p["String"].as_str().unwrap_or_default().to_string())
                }
                Some(p) if p.get("Regex").is_some() => ReplacePattern::Regex(
                    fancy_regex::Regex::new(p["Regex"].as_str().unwrap_or_default()).map_err(|e| fmt(e.to_string()))?,
                ),
                _ => return Err(fmt("Replace without pattern".into())),
            };
            Ok(vec![Normalizer::Replace { pattern, content }])
        }
        other => Err(fmt(format!("unsupported type {other:?}"))),
    }
}

fn parse_pre_tokenizer(v: &Value) -> Result<Vec<PreTokenizer>, TokenizerError> {
    let fmt = |m: String| TokenizerError::Format(format!("tokenizer.json pre_tokenizer: {m}"));
    match v.get("type").and_then(Value::as_str) {
        Some("Sequence") => {
            let list = v.get("pretokenizers").and_then(Value::as_array).ok_or_else(|| fmt("Sequence without list".into()))?;
            let mut out = Vec::new();
            for p in list {
                out.extend(parse_pre_tokenizer(p)?);
            }
            Ok(out)
        }
        Some("WhitespaceSplit") => Ok(vec![PreTokenizer::WhitespaceSplit]),
        Some("Metaspace") => {
            let replacement = v
                .get("replacement")
                .and_then(Value::as_str)
                .and_then(|s| s.chars().next())
                .unwrap_or(WORD_MARKER);
            let prepend = match v.get("prepend_scheme").and_then(Value::as_str) {
                Some("always") => Prepend::Always,
                Some("first") => Prepend::First,
                Some("never") => Prepend::Never,
                Some(other) => return Err(fmt(format!("unknown prepend_scheme `{other}`"))),
                // Older files carry a boolean instead.
                None => match v.get("add_prefix_space").and_then(Value::as_bool) {
                    Some(false) => Prepend::Never,
                    _ => Prepend::Always,
                },
            };
            let split = v.get("split").and_then(Value::as_bool).unwrap_or(true);
            Ok(vec![PreTokenizer::Metaspace {
                replacement,
                prepend,
                split,
            }])
        }
        other => Err(fmt(format!("unsupported type {other:?}"))),
    }
}
