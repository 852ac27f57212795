#![allow(dead_code)]

use std::path::PathBuf;

use serde_json::Value;

pub const FIXTURE_REPOS: [(&str, &str); 3] = [
    ("bert", "encbench-fixtures/tiny-bert"),
    ("roberta", "encbench-fixtures/tiny-roberta"),
    ("xlm-roberta", "encbench-fixtures/tiny-xlm-roberta"),
];

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn hub_dir() -> PathBuf {
    fixtures().join("hub")
}

pub fn snapshot(repo: &str) -> PathBuf {
    hub_dir().join(repo.replace('/', "--")).join("main")
}

/// `(text, ids)` pairs from an oracle id file.
pub fn oracle_ids(name: &str) -> Vec<(String, Vec<i64>)> {
    let path = fixtures().join("tokenizer").join(format!("{name}_ids.jsonl"));
    std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(|line| {
            let v: Value = serde_json::from_str(line).unwrap();
            let ids = v["ids"].as_array().unwrap().iter().map(|i| i.as_i64().unwrap()).collect();
            (v["text"].as_str().unwrap().to_string(), ids)
        })
        .collect()
}

pub fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}
