mod common;

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use encbench_core::checkpoint::{fetch_repo, load_from_dir, load_from_hub, CheckpointError, HubClient, HubLocation};
use sha2::{Digest, Sha256};

/// Minimal hub stand-in serving `fixtures/hub` with the resolve URL layout.
struct FakeHub {
    url: String,
    hits: Arc<Mutex<HashMap<String, usize>>>,
}

impl FakeHub {
    fn start() -> FakeHub {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(Mutex::new(HashMap::new()));
        let counter = Arc::clone(&hits);
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let counter = Arc::clone(&counter);
                thread::spawn(move || serve(stream, &counter));
            }
        });
        FakeHub { url, hits }
    }

    fn hits(&self, path: &str) -> usize {
        self.hits.lock().unwrap().get(path).copied().unwrap_or(0)
    }
}

fn respond(mut stream: TcpStream, status: &str, headers: &[(String, String)], body: &[u8]) {
    let mut head = format!("HTTP/1.1 {status}\r\nContent-Length: {}\r\nConnection: close\r\n", body.len());
    for (k, v) in headers {
        head.push_str(&format!("{k}: {v}\r\n"));
    }
    head.push_str("\r\n");
    let _ = stream.write_all(head.as_bytes());
    let _ = stream.write_all(body);
}

fn serve(stream: TcpStream, hits: &Mutex<HashMap<String, usize>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h).unwrap() == 0 || h == "\r\n" {
            break;
        }
    }
    let path = line.split_whitespace().nth(1).unwrap_or("/").to_string();
    *hits.lock().unwrap().entry(path.clone()).or_default() += 1;

    // /redirect/<rest> points at /<rest>.
    if let Some(rest) = path.strip_prefix("/redirect") {
        return respond(stream, "302 Found", &[("Location".into(), rest.into())], b"");
    }
    let Some((repo, tail)) = path.trim_start_matches('/').split_once("/resolve/") else {
        return respond(stream, "400 Bad Request", &[], b"");
    };
    // Revision "corrupt" serves main's files under a wrong checksum.
    let (tail, corrupt) = match tail.strip_prefix("corrupt/") {
        Some(rest) => (format!("main/{rest}"), true),
        None => (tail.to_string(), false),
    };
    let file = common::hub_dir().join(repo.replace('/', "--")).join(&tail);
    match std::fs::read(&file) {
        Ok(body) => {
            // Slow enough that concurrent callers overlap.
            thread::sleep(Duration::from_millis(50));
            let mut digest = hex::encode(Sha256::digest(&body));
            if corrupt {
                digest = "0".repeat(64);
            }
            respond(stream, "200 OK", &[("ETag".into(), format!("\"{digest}\""))], &body);
        }
        Err(_) => respond(stream, "404 Not Found", &[], b"not found"),
    }
}

const BERT: &str = "encbench-fixtures/tiny-bert";

#[test]
fn download_then_cache_hit() {
    let hub = FakeHub::start();
    let cache = tempfile::tempdir().unwrap();
    let client = HubClient::new(cache.path()).endpoint(&hub.url);
    let model = load_from_hub(&client, BERT, "main").unwrap();
    // config, weights, vocab and tokenizer config.
    assert_eq!(client.network_requests(), 4);
    let local = load_from_dir(&common::snapshot(BERT)).unwrap();
    assert_eq!(model.config, local.config);
    assert_eq!(
        model.weights.word_embeddings.as_f32().unwrap(),
        local.weights.word_embeddings.as_f32().unwrap()
    );

    load_from_hub(&client, BERT, "main").unwrap();
    assert_eq!(client.network_requests(), 4);
    let offline = HubClient::new(cache.path()).offline(true);
    load_from_hub(&offline, BERT, "main").unwrap();
    assert_eq!(offline.network_requests(), 0);
    assert!(cache.path().join("encbench-fixtures--tiny-bert/main/model.safetensors").is_file());
}

#[test]
fn optional_file_may_be_missing() {
    let hub = FakeHub::start();
    let cache = tempfile::tempdir().unwrap();
    let client = HubClient::new(cache.path()).endpoint(&hub.url);
    // The roberta fixture has no tokenizer_config.json and does not need one.
    let dir = fetch_repo(&client, "encbench-fixtures/tiny-roberta", "main").unwrap();
    assert!(dir.join("merges.txt").is_file());
}

#[test]
fn missing_repo_reports_status() {
    let hub = FakeHub::start();
    let cache = tempfile::tempdir().unwrap();
    let client = HubClient::new(cache.path()).endpoint(&hub.url);
    let err = load_from_hub(&client, "nobody/nothing", "main").unwrap_err();
    match err {
        CheckpointError::Http { status, url } => {
            assert_eq!(status, 404);
            assert!(url.ends_with("/nobody/nothing/resolve/main/config.json"), "{url}");
        }
        other => panic!("unexpected error {other}"),
    }
    assert!(!cache.path().join("nobody--nothing/main/config.json").exists());
}

#[test]
fn redirects_are_followed() {
    let hub = FakeHub::start();
    let cache = tempfile::tempdir().unwrap();
    let client = HubClient::new(cache.path()).endpoint(format!("{}/redirect", hub.url));
    let path = client.fetch(&HubLocation::new(BERT, "main", "config.json").unwrap()).unwrap();
    assert_eq!(std::fs::read(path).unwrap(), std::fs::read(common::snapshot(BERT).join("config.json")).unwrap());
}

#[test]
fn checksum_mismatch_leaves_no_file() {
    let hub = FakeHub::start();
    let cache = tempfile::tempdir().unwrap();
    let client = HubClient::new(cache.path()).endpoint(&hub.url);
    let err = client.fetch(&HubLocation::new(BERT, "corrupt", "config.json").unwrap()).unwrap_err();
    assert!(matches!(err, CheckpointError::Integrity { .. }), "{err}");
    let entries = walk(cache.path());
    assert!(entries.is_empty(), "{entries:?}");
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).into_iter().flatten().flatten() {
        if e.path().is_dir() {
            out.extend(walk(&e.path()));
        } else {
            out.push(e.path());
        }
    }
    out
}

#[test]
fn concurrent_fetches_download_once() {
    let hub = FakeHub::start();
    let cache = tempfile::tempdir().unwrap();
    let client = Arc::new(HubClient::new(cache.path()).endpoint(&hub.url));
    let loc = HubLocation::new(BERT, "main", "model.safetensors").unwrap();
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let client = Arc::clone(&client);
            let loc = loc.clone();
            thread::spawn(move || std::fs::read(client.fetch(&loc).unwrap()).unwrap())
        })
        .collect();
    let want = std::fs::read(common::snapshot(BERT).join("model.safetensors")).unwrap();
    for h in handles {
        assert_eq!(h.join().unwrap(), want);
    }
    assert_eq!(hub.hits(&format!("/{BERT}/resolve/main/model.safetensors")), 1);
    assert_eq!(client.network_requests(), 1);
}
