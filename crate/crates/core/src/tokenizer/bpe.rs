//! Byte-level BPE as used by GPT-2 and RoBERTa.

use std::collections::HashMap;
use std::sync::OnceLock;

use fancy_regex::Regex;

use super::TokenizerError;

const PRETOKEN_PATTERN: &str = r"'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+";

fn pretoken_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(PRETOKEN_PATTERN).expect("valid pretoken pattern"))
}

/// The fixed byte to printable-codepoint table: printable Latin-1 bytes map
/// to themselves, the rest to 256 and up in byte order.
pub fn byte_table() -> &'static [char; 256] {
    static TABLE: OnceLock<[char; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = ['\0'; 256];
        let mut next = 256u32;
        for b in 0..=255u8 {
            let printable = matches!(b, b'!'..=b'~' | 0xA1..=0xAC | 0xAE..=0xFF);
            table[b as usize] = if printable {
                b as char
            } else {
                let c = char::from_u32(next).expect("valid codepoint");
                next += 1;
                c
            };
        }
        table
    })
}

fn byte_decoder() -> &'static HashMap<char, u8> {
    static DECODER: OnceLock<HashMap<char, u8>> = OnceLock::new();
    DECODER.get_or_init(|| byte_table().iter().enumerate().map(|(b, &c)| (c, b as u8)).collect())
}

#[derive(Debug, Clone)]
pub struct BpeVocab {
    tokens: HashMap<String, i64>,
    by_id: HashMap<i64, String>,
    ranks: HashMap<(String, String), usize>,
}

impl BpeVocab {
    pub fn new(tokens: HashMap<String, i64>, merges: Vec<(String, String)>) -> BpeVocab {
        let by_id = tokens.iter().map(|(t, &i)| (i, t.clone())).collect();
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, pair) in merges.into_iter().enumerate() {
            ranks.entry(pair).or_insert(rank);
        }
        BpeVocab { tokens, by_id, ranks }
    }

    /// `vocab.json` (token to id) and `merges.txt` (one pair per line, with
    /// an optional `#version` header).
    pub fn from_files(vocab_json: &str, merges_txt: &str) -> Result<BpeVocab, TokenizerError> {
        let tokens: HashMap<String, i64> =
            serde_json::from_str(vocab_json).map_err(|e| TokenizerError::Format(format!("vocab.json: {e}")))?;
        let mut merges = Vec::new();
        for (n, line) in merges_txt.lines().enumerate() {
            if line.starts_with("#version") || line.trim().is_empty() {
                continue;
            }
            let (a, b) = line
                .split_once(' ')
                .ok_or_else(|| TokenizerError::Format(format!("merges.txt line {}: `{line}` is not a pair", n + 1)))?;
            merges.push((a.to_string(), b.to_string()));
        }
        Ok(BpeVocab::new(tokens, merges))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<i64> {
        self.tokens.get(token).copied()
    }

    pub fn max_id(&self) -> i64 {
        self.tokens.values().copied().max().unwrap_or(-1)
    }

    /// Merge the symbols of one byte-mapped pretoken, lowest rank first.
    pub fn merge(&self, word: &str) -> Vec<String> {
        let mut parts: Vec<String> = word.chars().map(String::from).collect();
        while parts.len() > 1 {
            let best = parts
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.ranks.get(&(w[0].clone(), w[1].clone())).map(|&r| (r, i)))
                .min();
            let Some((rank, _)) = best else { break };
            // Apply every occurrence of this pair, left to right.
            let mut merged = Vec::with_capacity(parts.len());
            let mut i = 0;
            while i < parts.len() {
                if i + 1 < parts.len() && self.ranks.get(&(parts[i].clone(), parts[i + 1].clone())) == Some(&rank) {
                    merged.push(format!("{}{}", parts[i], parts[i + 1]));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut parts[i]));
                    i += 1;
                }
            }
            parts = merged;
        }
        parts
    }

    /// Ids of `text` with no specials added.
    pub fn encode(&self, text: &str) -> Result<Vec<i64>, TokenizerError> {
        let table = byte_table();
        let mut ids = Vec::new();
        for m in pretoken_regex().find_iter(text) {
            let m = m.map_err(|e| TokenizerError::Format(format!("pretokenizer: {e}")))?;
            let mapped: String = m.as_str().bytes().map(|b| table[b as usize]).collect();
            for piece in self.merge(&mapped) {
                ids.push(self.id(&piece).ok_or(TokenizerError::UnknownPiece(piece))?);
            }
        }
        Ok(ids)
    }

    /// Inverse of [`BpeVocab::encode`]; unknown ids are skipped.
    pub fn decode(&self, ids: &[i64]) -> String {
        let decoder = byte_decoder();
        let bytes: Vec<u8> = ids
            .iter()
            .filter_map(|id| self.by_id.get(id))
            .flat_map(|t| t.chars())
            .filter_map(|c| decoder.get(&c).copied())
            .collect();
        String::from_utf8_lossy(&bytes).into_owned()
    }
}
