//! Hub downloads into a local cache.
//!
//! Files live at `{cache}/{repo_id with / replaced by --}/{revision}/{filename}`.
//! A file is only ever visible there complete: downloads stream into a
//! temporary sibling and are renamed into place after the length and checksum
//! checks pass.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use sha2::{Digest, Sha256};

use super::CheckpointError;

/// Overrides the cache directory.
pub const ENV_CACHE: &str = "ENCBENCH_CACHE";
/// Truthy value (`1`, `true`, `yes`, `on`) forbids network access.
pub const ENV_OFFLINE: &str = "ENCBENCH_OFFLINE";
/// Overrides the hub base URL.
pub const ENV_ENDPOINT: &str = "ENCBENCH_ENDPOINT";

pub const DEFAULT_ENDPOINT: &str = "https://huggingface.co";
pub const DEFAULT_REVISION: &str = "main";

/// A file in a hub repository at a revision.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HubLocation {
    pub repo_id: String,
    pub revision: String,
    pub filename: String,
}

fn safe_relative(what: &str, value: &str) -> Result<(), CheckpointError> {
    let bad = value.is_empty()
        || value.contains('\\')
        || value.starts_with('/')
        || Path::new(value).components().any(|c| !matches!(c, Component::Normal(_)))
        || value.split('/').any(|s| s.is_empty() || s == "." || s == "..");
    if bad {
        return Err(CheckpointError::InvalidLocation(format!("{what} `{value}` is empty or not a plain relative path")));
    }
    Ok(())
}

impl HubLocation {
    pub fn new(repo_id: &str, revision: &str, filename: &str) -> Result<HubLocation, CheckpointError> {
        safe_relative("repo id", repo_id)?;
        safe_relative("revision", revision)?;
        safe_relative("filename", filename)?;
        if repo_id.contains("--") {
            return Err(CheckpointError::InvalidLocation(format!("repo id `{repo_id}` may not contain `--`")));
        }
        Ok(HubLocation {
            repo_id: repo_id.to_string(),
            revision: revision.to_string(),
            filename: filename.to_string(),
        })
    }

    pub fn url(&self, endpoint: &str) -> String {
        format!("{}/{}/resolve/{}/{}", endpoint.trim_end_matches('/'), self.repo_id, self.revision, self.filename)
    }

    pub fn cache_path(&self, cache_dir: &Path) -> PathBuf {
        repo_cache_dir(cache_dir, &self.repo_id, &self.revision).join(&self.filename)
    }
}

/// Directory holding one repo revision inside the cache.
pub fn repo_cache_dir(cache_dir: &Path, repo_id: &str, revision: &str) -> PathBuf {
    cache_dir.join(repo_id.replace('/', "--")).join(revision)
}

pub fn env_flag(name: &str) -> bool {
    std::env::var(name)
        .map(|v| matches!(v.trim().to_ascii_lowercase().as_str(), "1" | "true" | "yes" | "on"))
        .unwrap_or(false)
}

/// `$ENCBENCH_CACHE`, else `$HOME/.cache/encbench`, else `./.encbench-cache`.
pub fn default_cache_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(ENV_CACHE).filter(|v| !v.is_empty()) {
        return PathBuf::from(dir);
    }
    match std::env::var_os("HOME") {
        Some(home) => PathBuf::from(home).join(".cache").join("encbench"),
        None => PathBuf::from(".encbench-cache"),
    }
}

/// Cache-backed hub client. Safe to share between threads.
#[derive(Debug)]
pub struct HubClient {
    endpoint: String,
    cache_dir: PathBuf,
    offline: bool,
    requests: AtomicUsize,
    locks: Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>,
    http: OnceLock<reqwest::blocking::Client>,
}

impl HubClient {
    pub fn new(cache_dir: impl Into<PathBuf>) -> HubClient {
        HubClient {
            endpoint: DEFAULT_ENDPOINT.to_string(),
            cache_dir: cache_dir.into(),
            offline: false,
            requests: AtomicUsize::new(0),
            locks: Mutex::new(HashMap::new()),
            http: OnceLock::new(),
        }
    }

    /// Cache, offline flag and endpoint from the environment.
    pub fn from_env() -> HubClient {
        let mut c = HubClient::new(default_cache_dir()).offline(env_flag(ENV_OFFLINE));
        if let Ok(e) = std::env::var(ENV_ENDPOINT) {
            if !e.is_empty() {
                c = c.endpoint(e);
            }
        }
        c
    }

    pub fn endpoint(mut self, endpoint: impl Into<String>) -> HubClient {
        self.endpoint = endpoint.into();
        self
    }

    pub fn offline(mut self, offline: bool) -> HubClient {
        self.offline = offline;
        self
    }

    pub fn cache_dir(&self) -> &Path {
        &self.cache_dir
    }

    pub fn is_offline(&self) -> bool {
        self.offline
    }

    /// Number of HTTP requests issued so far.
    pub fn network_requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    /// Local path of `location`, downloading it on a cache miss.
    pub fn fetch(&self, location: &HubLocation) -> Result<PathBuf, CheckpointError> {
        let path = location.cache_path(&self.cache_dir);
        if path.is_file() {
            return Ok(path);
        }
        if self.offline {
            return Err(CheckpointError::Offline {
                location: format!("{}@{}/{}", location.repo_id, location.revision, location.filename),
                path,
            });
        }
        let key_lock = {
            let mut locks = self.locks.lock().expect("lock table poisoned");
            Arc::clone(locks.entry(path.clone()).or_default())
        };
        let _guard = key_lock.lock().expect("download lock poisoned");
        // Another caller may have finished while we waited.
        if path.is_file() {
            return Ok(path);
        }
        self.download(&location.url(&self.endpoint), &path)?;
        Ok(path)
    }

    /// Like [`HubClient::fetch`] but a 404 yields `None`.
    pub fn fetch_optional(&self, location: &HubLocation) -> Result<Option<PathBuf>, CheckpointError> {
        match self.fetch(location) {
            Ok(p) => Ok(Some(p)),
            Err(CheckpointError::Http { status: 404, .. }) => Ok(None),
            Err(CheckpointError::Offline { .. }) if self.offline => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn client(&self) -> Result<&reqwest::blocking::Client, CheckpointError> {
        if let Some(c) = self.http.get() {
            return Ok(c);
        }
        let c = reqwest::blocking::Client::builder()
            .user_agent(concat!("encbench/", env!("CARGO_PKG_VERSION")))
            .connect_timeout(Duration::from_secs(30))
            .timeout(None)
            .build()
            .map_err(|e| CheckpointError::Network {
                url: self.endpoint.clone(),
                reason: e.to_string(),
            })?;
        Ok(self.http.get_or_init(|| c))
    }

    fn download(&self, url: &str, dest: &Path) -> Result<(), CheckpointError> {
        let net = |e: &dyn std::fmt::Display| CheckpointError::Network {
            url: url.to_string(),
            reason: e.to_string(),
        };
        self.requests.fetch_add(1, Ordering::SeqCst);
        tracing::info!(%url, "downloading");
        let mut resp = self.client()?.get(url).send().map_err(|e| net(&e))?;
        let status = resp.status().as_u16();
        if status >= 400 {
            return Err(CheckpointError::Http {
                status,
                url: resp.url().to_string(),
            });
        }
        let expected_len = resp.content_length();
        let expected_sha = content_sha256(resp.headers());

        let parent = dest.parent().expect("cache path has a parent");
        fs::create_dir_all(parent).map_err(|e| CheckpointError::io(parent, e))?;
        let tmp = temp_sibling(dest);
        let result = (|| {
            let mut file = fs::File::create(&tmp).map_err(|e| CheckpointError::io(&tmp, e))?;
            let mut hasher = Sha256::new();
            let mut buf = vec![0u8; 1 << 16];
            let mut total = 0u64;
            loop {
                let n = resp.read(&mut buf).map_err(|e| net(&e))?;
                if n == 0 {
                    break;
                }
                hasher.update(&buf[..n]);
                file.write_all(&buf[..n]).map_err(|e| CheckpointError::io(&tmp, e))?;
                total += n as u64;
            }
            file.sync_all().map_err(|e| CheckpointError::io(&tmp, e))?;
            if let Some(len) = expected_len {
                if len != total {
                    return Err(CheckpointError::Integrity {
                        url: url.to_string(),
                        reason: format!("received {total} bytes, Content-Length was {len}"),
                    });
                }
            }
            if let Some(want) = expected_sha {
                let got = hex::encode(hasher.finalize());
                if got != want {
                    return Err(CheckpointError::Integrity {
                        url: url.to_string(),
                        reason: format!("sha256 {got} does not match ETag {want}"),
                    });
                }
            }
            fs::rename(&tmp, dest).map_err(|e| CheckpointError::io(dest, e))
        })();
        if result.is_err() {
            let _ = fs::remove_file(&tmp);
        }
        result
    }
}

fn temp_sibling(dest: &Path) -> PathBuf {
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    let name = dest.file_name().and_then(|n| n.to_str()).unwrap_or("download");
    let n = COUNTER.fetch_add(1, Ordering::SeqCst);
    dest.with_file_name(format!(".{name}.{}.{n}.part", std::process::id()))
}

/// A sha256 digest advertised by the server, if any. The hub sends it as the
/// (linked) ETag of large files; short ETags are opaque and ignored.
fn content_sha256(headers: &reqwest::header::HeaderMap) -> Option<String> {
    ["x-linked-etag", "etag"].iter().find_map(|name| {
        let raw = headers.get(*name)?.to_str().ok()?;
        let tag = raw.trim().trim_start_matches("W/").trim_matches('"').to_ascii_lowercase();
        (tag.len() == 64 && tag.bytes().all(|b| b.is_ascii_hexdigit())).then_some(tag)
    })
}
