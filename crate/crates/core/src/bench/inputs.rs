use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::BenchError;

/// Plain-text sentences shipped with the crate, one per line.
pub const BUNDLED_CORPUS: &str = include_str!("../../data/corpus.txt");

#[derive(Debug, Clone)]
pub struct Corpus {
    lines: Vec<String>,
}

impl Corpus {
    pub fn from_text(text: &str) -> Result<Corpus, BenchError> {
        let lines: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
        if lines.is_empty() {
            return Err(BenchError::EmptyCorpus);
        }
        Ok(Corpus { lines })
    }

    pub fn bundled() -> Corpus {
        Corpus::from_text(BUNDLED_CORPUS).expect("bundled corpus is not empty")
    }

    pub fn from_file(path: &Path) -> Result<Corpus, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Corpus::from_text(&text)
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }
}

/// `batch` strings of exactly `char_len` characters, built by joining
/// randomly drawn corpus lines with spaces and cutting.
///
/// Each `(char_len, batch)` pair draws from its own stream of the seeded
/// generator, so a configuration's inputs do not depend on which other
/// configurations ran.
pub fn generate_inputs(corpus: &Corpus, char_len: usize, batch: usize, seed: u64) -> Result<Vec<String>, BenchError> {
    if char_len == 0 || batch == 0 {
        return Err(BenchError::InvalidSpec("char_len and batch must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((char_len as u64) << 32) | batch as u64);
    let lines = corpus.lines();
    let mut out = Vec::with_capacity(batch);
    for _ in 0..batch {
        let mut text = String::new();
        let mut chars = 0;
        while chars < char_len {
            if !text.is_empty() {
                text.push(' ');
                chars += 1;
            }
            let line = &lines[rng.gen_range(0..lines.len())];
            text.push_str(line);
            chars += line.chars().count();
        }
        out.push(text.chars().take(char_len).collect());
    }
    Ok(out)
}
