use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use encbench_core::checkpoint::{write_safetensors, CheckpointIndex};

const BERT: &str = "encbench-fixtures/tiny-bert";

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let dest = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &dest);
        } else {
            std::fs::copy(entry.path(), dest).unwrap();
        }
    }
}

/// A scratch dir whose `cache` holds every fixture repo.
fn workdir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixtures().join("hub"), &dir.path().join("cache"));
    dir
}

fn encbench(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_encbench"))
        .current_dir(dir)
        .env_remove("ENCBENCH_CACHE")
        .env_remove("ENCBENCH_ENDPOINT")
        .env_remove("ENCBENCH_OFFLINE")
        .args(["--cache-dir", "cache", "--offline"])
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn download_from_cache_makes_no_requests() {
    let dir = workdir();
    let o = encbench(dir.path(), &["download", BERT]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("model.safetensors"));
    assert!(stderr(&o).contains("0 network request"));
}

#[test]
fn missing_repo_is_a_fetch_error() {
    let dir = workdir();
    let o = encbench(dir.path(), &["download", "nobody/nothing"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("nobody/nothing"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = workdir();
    assert_eq!(encbench(dir.path(), &["--frobnicate", "download", BERT]).status.code(), Some(2));
    assert_eq!(encbench(dir.path(), &["bench-ops", "--op", "nosuch"]).status.code(), Some(2));
    assert_eq!(encbench(dir.path(), &["--lengths", "0", "bench-model", BERT]).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.toml"), "colour = 3\n").unwrap();
    assert_eq!(encbench(dir.path(), &["--config", "bad.toml", "download", BERT]).status.code(), Some(2));
}

#[test]
fn bench_ops_writes_reports() {
    let dir = workdir();
    let o = encbench(dir.path(), &["--out", "r", "--iterations", "1", "--warmup", "0", "bench-ops", "--op", "softmax"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["ops_detailed.txt", "ops_detailed.csv", "ops_average.txt", "ops_average.csv", "manifest.json"] {
        assert!(dir.path().join("r").join(f).is_file(), "{f}");
    }
    let detailed = std::fs::read_to_string(dir.path().join("r/ops_detailed.csv")).unwrap();
    // Header plus one row per backend.
    assert_eq!(detailed.lines().count(), 3);
    let average = std::fs::read_to_string(dir.path().join("r/ops_average.txt")).unwrap();
    assert!(average.contains("# softmax: [128x1024]"));
    assert!(average.contains("optim/refer speedup"));
}

#[test]
fn bench_model_single_backend_has_no_speedup() {
    let dir = workdir();
    let args = ["--out", "r", "--lengths", "50", "--batches", "1", "--iterations", "3", "--backend", "optimized"];
    let o = encbench(dir.path(), &[&args[..], &["bench-model", BERT]].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let detailed = std::fs::read_to_string(dir.path().join("r/model_detailed.csv")).unwrap();
    assert_eq!(detailed.lines().count(), 4);
    let average = std::fs::read_to_string(dir.path().join("r/model_average.txt")).unwrap();
    assert!(!average.contains("speedup"));
    assert!(average.contains("optim_mean"));
}

#[test]
fn bench_model_length_50_gives_60_rows() {
    let dir = workdir();
    let o = encbench(dir.path(), &["--out", "r", "--lengths", "50", "--warmup", "0", "bench-model", BERT]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = dir.path().join("r");
    let detailed = std::fs::read_to_string(r.join("model_detailed.csv")).unwrap();
    // 3 batch sizes x 2 backends x 10 iterations.
    assert_eq!(detailed.lines().count() - 1, 60);
    let inputs = std::fs::read_to_string(r.join("inputs.jsonl")).unwrap();
    assert_eq!(inputs.lines().count(), 3);
    for f in ["model_by_length.txt", "model_by_batch.txt", "model_overall.txt", "manifest.json"] {
        assert!(r.join(f).is_file(), "{f}");
    }
}

#[test]
fn bench_model_load_failure_writes_nothing() {
    let dir = workdir();
    let o = encbench(dir.path(), &["--out", "r", "--lengths", "50", "bench-model", "nobody/nothing"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!dir.path().join("r").exists());
}

#[test]
fn verify_intact_fixture_passes() {
    let dir = workdir();
    let golden = fixtures().join("golden/encbench-fixtures--tiny-bert.safetensors");
    let o = encbench(dir.path(), &["verify", BERT, "--golden", golden.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("reference | last_hidden_state"));
    assert!(out.contains("optimized | last_hidden_state"));
    assert!(!out.contains("FAIL"));
}

#[test]
fn verify_perturbed_weight_fails_with_tensor_name() {
    let dir = workdir();
    let path = dir.path().join("cache/encbench-fixtures--tiny-bert/main/model.safetensors");
    let index = CheckpointIndex::read(&path).unwrap();
    let mut raw = index.to_raw();
    let t = raw
        .iter_mut()
        .find(|t| t.name == "bert.encoder.layer.0.attention.output.LayerNorm.bias")
        .unwrap();
    for chunk in t.data.chunks_exact_mut(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap()) + 0.5;
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    std::fs::write(&path, write_safetensors(&raw, &BTreeMap::new())).unwrap();

    let golden = fixtures().join("golden/encbench-fixtures--tiny-bert.safetensors");
    let o = encbench(dir.path(), &["verify", BERT, "--golden", golden.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stderr(&o).contains("last_hidden_state"), "{}", stderr(&o));
    // Embeddings come before the perturbed layer.
    assert!(stdout(&o).contains("reference | hidden_states.0 |"));
    assert!(!stderr(&o).contains("hidden_states.0"));
}

#[test]
fn verify_missing_golden_is_a_load_error() {
    let dir = workdir();
    let o = encbench(dir.path(), &["verify", BERT, "--golden", "absent.safetensors"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = workdir();
    std::fs::write(
        dir.path().join("run.toml"),
        "out = \"from-config\"\niterations = 1\nwarmup = 0\nbackend = \"reference\"\n",
    )
    .unwrap();
    let o = encbench(dir.path(), &["--config", "run.toml", "bench-ops", "--op", "add"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let detailed = std::fs::read_to_string(dir.path().join("from-config/ops_detailed.csv")).unwrap();
    assert_eq!(detailed.lines().count(), 2);
    assert!(detailed.contains("reference"));
}
