use std::collections::HashMap;

use super::TokenizerError;

pub const CONTINUATION_PREFIX: &str = "##";
pub const MAX_WORD_CHARS: usize = 100;

/// Greedy longest-match-first subword vocabulary.
#[derive(Debug, Clone)]
pub struct WordPieceVocab {
    tokens: HashMap<String, i64>,
    by_id: Vec<String>,
    unk_id: i64,
    pub lowercase: bool,
}

impl WordPieceVocab {
    /// One token per line; the line number is the id.
    pub fn from_vocab_txt(text: &str, unk: &str, lowercase: bool) -> Result<WordPieceVocab, TokenizerError> {
        let by_id: Vec<String> = text.lines().map(|l| l.trim_end().to_string()).collect();
        WordPieceVocab::new(by_id, unk, lowercase)
    }

    pub fn new(by_id: Vec<String>, unk: &str, lowercase: bool) -> Result<WordPieceVocab, TokenizerError> {
        let mut tokens = HashMap::with_capacity(by_id.len());
        for (id, t) in by_id.iter().enumerate() {
            // Keep the first occurrence of a duplicate line.
            tokens.entry(t.clone()).or_insert(id as i64);
        }
        let unk_id = *tokens
            .get(unk)
            .ok_or_else(|| TokenizerError::MissingToken(unk.to_string()))?;
        Ok(WordPieceVocab {
            tokens,
            by_id,
            unk_id,
            lowercase,
        })
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<i64> {
        self.tokens.get(token).copied()
    }

    pub fn token(&self, id: i64) -> Option<&str> {
        self.by_id.get(usize::try_from(id).ok()?).map(String::as_str)
    }

    pub fn unk_id(&self) -> i64 {
        self.unk_id
    }

    /// Pieces of one word; the whole word becomes unk if any position has no
    /// match or the word is longer than [`MAX_WORD_CHARS`].
    pub fn encode_word(&self, word: &str, out: &mut Vec<i64>) {
        let chars: Vec<(usize, char)> = word.char_indices().collect();
        if chars.len() > MAX_WORD_CHARS {
            out.push(self.unk_id);
            return;
        }
        let mark = out.len();
        let mut start = 0;
        let mut piece = String::new();
        while start < chars.len() {
            let begin = chars[start].0;
            let mut end = chars.len();
            let mut found = None;
            while end > start {
                let stop = chars.get(end).map_or(word.len(), |c| c.0);
                piece.clear();
                if start > 0 {
                    piece.push_str(CONTINUATION_PREFIX);
                }
                piece.push_str(&word[begin..stop]);
                if let Some(&id) = self.tokens.get(&piece) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => out.push(id),
                None => {
                    out.truncate(mark);
                    out.push(self.unk_id);
                    return;
                }
            }
            start = end;
        }
    }

    pub fn encode_words<S: AsRef<str>>(&self, words: &[S]) -> Vec<i64> {
        let mut out = Vec::new();
        for w in words {
            self.encode_word(w.as_ref(), &mut out);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(tokens: &[&str]) -> WordPieceVocab {
        WordPieceVocab::new(tokens.iter().map(|s| s.to_string()).collect(), "[UNK]", true).unwrap()
    }

    #[test]
    fn examples() {
        let v = vocab(&["[UNK]", "un", "##aff", "##able", "hello", "u", "##n"]);
        assert_eq!(v.encode_words(&["hello"]), [4]);
        assert_eq!(v.encode_words(&["unaffable"]), [1, 2, 3]);
        assert_eq!(v.encode_words(&["unaffablex"]), [0]);
        assert_eq!(v.encode_words(&["xyz", "hello"]), [0, 4]);
        assert_eq!(v.encode_words(&["a".repeat(101)]), [0]);
    }

    #[test]
    fn pieces_are_longest_prefixes() {
        let v = vocab(&["[UNK]", "a", "ab", "abc", "##b", "##bc", "##c", "##cd", "##d"]);
        let ids = v.encode_words(&["abcd", "abd", "acd"]);
        let pieces: Vec<&str> = ids.iter().map(|&i| v.token(i).unwrap()).collect();
        assert_eq!(pieces, ["abc", "##d", "ab", "##d", "a", "##cd"]);
    }

    #[test]
    fn missing_unk_rejected() {
        assert!(matches!(
            WordPieceVocab::new(vec!["a".into()], "[UNK]", true),
            Err(TokenizerError::MissingToken(_))
        ));
    }
}
