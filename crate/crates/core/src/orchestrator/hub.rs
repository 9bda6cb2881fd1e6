//! Model hub client with a content-addressed local cache.
//!
//! A hub serves a JSON manifest at `<base>/ONNX_HUB_MANIFEST.json` and the
//! model files it lists. Manifest entries may use either the flat layout
//!
//! ```json
//! {"model_name": "resnet50", "opset": 12, "download_url": "vision/resnet50-12.onnx",
//!  "checksum": "<sha256>", "file_bytes": 102442450}
//! ```
//!
//! or the layout of the public ONNX model hub (`model`, `model_path`,
//! `opset_version`, `metadata.model_sha`, `metadata.model_bytes`). Relative
//! download URLs resolve against the hub base.
//!
//! Cached files live at `<cache_root>/<model_name>/<opset>/<digest>.model`
//! next to a `<digest>.json` sidecar holding the manifest entry.

use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use super::artifact::{digest_file, sha256_hex, ModelArtifact};
use super::OrchestratorError;
use crate::types::is_hex_digest;

pub const MANIFEST_FILE: &str = "ONNX_HUB_MANIFEST.json";
pub const CACHE_DIR_ENV: &str = "DIFFTOX_CACHE_DIR";
pub const DEFAULT_HUB_BASE: &str = "https://github.com/onnx/models/raw/main";
pub const DEFAULT_FETCH_WORKERS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HubManifestEntry {
    pub model_name: String,
    pub opset: u32,
    pub download_url: String,
    pub checksum: String,
    pub file_bytes: u64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawEntry {
    Flat(HubManifestEntry),
    OnnxHub {
        model: String,
        model_path: String,
        opset_version: u32,
        metadata: OnnxHubMetadata,
    },
}

#[derive(Deserialize)]
struct OnnxHubMetadata {
    model_sha: String,
    #[serde(default)]
    model_bytes: u64,
}

impl From<RawEntry> for HubManifestEntry {
    fn from(raw: RawEntry) -> Self {
        match raw {
            RawEntry::Flat(e) => e,
            RawEntry::OnnxHub {
                model,
                model_path,
                opset_version,
                metadata,
            } => HubManifestEntry {
                model_name: model,
                opset: opset_version,
                download_url: model_path,
                checksum: metadata.model_sha,
                file_bytes: metadata.model_bytes,
            },
        }
    }
}

pub fn parse_manifest(bytes: &[u8]) -> Result<Vec<HubManifestEntry>, OrchestratorError> {
    let raw: Vec<RawEntry> = serde_json::from_slice(bytes)
        .map_err(|e| OrchestratorError::HubUnavailable(format!("malformed manifest: {e}")))?;
    let entries: Vec<HubManifestEntry> = raw.into_iter().map(Into::into).collect();
    if let Some(bad) = entries.iter().find(|e| !is_hex_digest(&e.checksum)) {
        return Err(OrchestratorError::HubUnavailable(format!(
            "manifest entry '{}' has malformed checksum '{}'",
            bad.model_name, bad.checksum
        )));
    }
    Ok(entries)
}

/// Byte fetcher behind the hub client.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str) -> Result<Vec<u8>, String>;
}

/// `http(s)://` via ureq; `file://` URLs and bare paths from disk.
#[derive(Debug, Default, Clone)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<Vec<u8>, String> {
        if url.starts_with("http://") || url.starts_with("https://") {
            let response = ureq::get(url).call().map_err(|e| format!("GET {url}: {e}"))?;
            let mut bytes = Vec::new();
            response
                .into_body()
                .into_reader()
                .read_to_end(&mut bytes)
                .map_err(|e| format!("GET {url}: {e}"))?;
            Ok(bytes)
        } else {
            let path = url.strip_prefix("file://").unwrap_or(url);
            fs::read(path).map_err(|e| format!("read {path}: {e}"))
        }
    }
}

/// `$DIFFTOX_CACHE_DIR`, else the user cache directory.
pub fn default_cache_root() -> PathBuf {
    if let Some(dir) = std::env::var_os(CACHE_DIR_ENV).filter(|d| !d.is_empty()) {
        return PathBuf::from(dir);
    }
    if let Some(dir) = std::env::var_os("XDG_CACHE_HOME").filter(|d| !d.is_empty()) {
        return PathBuf::from(dir).join("difftox");
    }
    match std::env::var_os("HOME") {
        Some(home) => PathBuf::from(home).join(".cache").join("difftox"),
        None => PathBuf::from(".difftox-cache"),
    }
}

fn key_locks() -> &'static Mutex<HashMap<PathBuf, Arc<Mutex<()>>>> {
    static LOCKS: OnceLock<Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>> = OnceLock::new();
    LOCKS.get_or_init(Default::default)
}

fn lock_for(key: &Path) -> Arc<Mutex<()>> {
    let mut map = key_locks().lock().unwrap_or_else(|p| p.into_inner());
    map.entry(key.to_path_buf()).or_default().clone()
}

/// A model request: name plus optional opset (highest when absent).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HubRequest {
    pub name: String,
    pub opset: Option<u32>,
}

pub struct HubClient<T: Transport = HttpTransport> {
    base: String,
    cache_root: PathBuf,
    transport: T,
}

impl HubClient<HttpTransport> {
    pub fn new(base: impl Into<String>, cache_root: impl Into<PathBuf>) -> Self {
        Self::with_transport(base, cache_root, HttpTransport)
    }
}

impl<T: Transport> HubClient<T> {
    pub fn with_transport(base: impl Into<String>, cache_root: impl Into<PathBuf>, transport: T) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            cache_root: cache_root.into(),
            transport,
        }
    }

    pub fn cache_root(&self) -> &Path {
        &self.cache_root
    }

    fn resolve_url(&self, url: &str) -> String {
        if url.contains("://") || Path::new(url).is_absolute() {
            url.to_string()
        } else {
            format!("{}/{}", self.base, url.trim_start_matches('/'))
        }
    }

    pub fn manifest(&self) -> Result<Vec<HubManifestEntry>, OrchestratorError> {
        let url = self.resolve_url(MANIFEST_FILE);
        let bytes = self
            .transport
            .get(&url)
            .map_err(OrchestratorError::HubUnavailable)?;
        parse_manifest(&bytes)
    }

    pub fn resolve(&self, name: &str, opset: Option<u32>) -> Result<HubManifestEntry, OrchestratorError> {
        let manifest = self.manifest()?;
        resolve_entry(&manifest, name, opset)
    }

    /// Cache location for a manifest entry.
    pub fn cache_path(&self, entry: &HubManifestEntry) -> PathBuf {
        self.cache_root
            .join(sanitize(&entry.model_name))
            .join(entry.opset.to_string())
            .join(format!("{}.model", entry.checksum.to_ascii_lowercase()))
    }

    /// Fetch (name, opset), verifying the digest; repeated calls are served
    /// from the cache.
    pub fn fetch(&self, name: &str, opset: Option<u32>) -> Result<ModelArtifact, OrchestratorError> {
        let entry = self.resolve(name, opset)?;
        self.fetch_entry(&entry)
    }

    pub fn fetch_entry(&self, entry: &HubManifestEntry) -> Result<ModelArtifact, OrchestratorError> {
        let target = self.cache_path(entry);
        let lock = lock_for(&target);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        let expected = entry.checksum.to_ascii_lowercase();

        if target.is_file() {
            match digest_file(&target) {
                Ok((len, digest)) if digest == expected => {
                    log::debug!("cache hit for {} (opset {})", entry.model_name, entry.opset);
                    return Ok(ModelArtifact {
                        path: target,
                        byte_len: len,
                        digest,
                    });
                }
                _ => {
                    log::warn!("discarding corrupt cache entry {}", target.display());
                    let _ = fs::remove_file(&target);
                }
            }
        }

        let url = self.resolve_url(&entry.download_url);
        log::info!("downloading {} from {url}", entry.model_name);
        let bytes = self
            .transport
            .get(&url)
            .map_err(OrchestratorError::HubUnavailable)?;
        let actual = sha256_hex(&bytes);
        if actual != expected {
            let _ = fs::remove_file(&target);
            return Err(OrchestratorError::ChecksumMismatch {
                model: entry.model_name.clone(),
                expected,
                actual,
            });
        }
        if entry.file_bytes != 0 && entry.file_bytes != bytes.len() as u64 {
            log::warn!(
                "{}: manifest lists {} bytes, downloaded {} (digest verified)",
                entry.model_name,
                entry.file_bytes,
                bytes.len()
            );
        }

        let dir = target.parent().expect("cache path has a parent");
        fs::create_dir_all(dir).map_err(|e| OrchestratorError::Io(dir.to_path_buf(), e))?;
        let tmp = dir.join(format!(".{expected}.partial"));
        fs::write(&tmp, &bytes).map_err(|e| OrchestratorError::Io(tmp.clone(), e))?;
        fs::rename(&tmp, &target).map_err(|e| OrchestratorError::Io(target.clone(), e))?;
        let sidecar = target.with_extension("json");
        let meta = serde_json::to_vec_pretty(entry).expect("manifest entry serializes");
        fs::write(&sidecar, meta).map_err(|e| OrchestratorError::Io(sidecar, e))?;

        Ok(ModelArtifact {
            path: target,
            byte_len: bytes.len() as u64,
            digest: actual,
        })
    }

    /// Fetch several models with at most `workers` in flight. Results come
    /// back in request order.
    pub fn fetch_many(
        &self,
        requests: &[HubRequest],
        workers: usize,
    ) -> Vec<Result<ModelArtifact, OrchestratorError>> {
        let manifest = match self.manifest() {
            Ok(m) => m,
            Err(e) => return requests.iter().map(|_| Err(e.clone())).collect(),
        };
        let slots: Vec<Mutex<Option<Result<ModelArtifact, OrchestratorError>>>> =
            requests.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..workers.clamp(1, requests.len().max(1)) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(req) = requests.get(i) else { break };
                    let result = resolve_entry(&manifest, &req.name, req.opset)
                        .and_then(|entry| self.fetch_entry(&entry));
                    *slots[i].lock().unwrap() = Some(result);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().unwrap().expect("every slot filled"))
            .collect()
    }
}

pub fn resolve_entry(
    manifest: &[HubManifestEntry],
    name: &str,
    opset: Option<u32>,
) -> Result<HubManifestEntry, OrchestratorError> {
    let candidates: Vec<&HubManifestEntry> = manifest
        .iter()
        .filter(|e| e.model_name.eq_ignore_ascii_case(name))
        .filter(|e| opset.is_none_or(|o| e.opset == o))
        .collect();
    let target_opset = match (opset, candidates.iter().map(|e| e.opset).max()) {
        (_, None) => {
            return Err(OrchestratorError::ModelNotInHub {
                name: name.to_string(),
                opset,
            })
        }
        (Some(o), _) => o,
        (None, Some(max)) => max,
    };
    let mut matching = candidates.into_iter().filter(|e| e.opset == target_opset);
    let first = matching.next().expect("max opset has an entry");
    if matching.next().is_some() {
        return Err(OrchestratorError::AmbiguousHubEntry {
            name: name.to_string(),
            opset: target_opset,
        });
    }
    Ok(first.clone())
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

/// Fetch through the default transport and cache root.
pub fn fetch_hub_model(
    name: &str,
    opset: Option<u32>,
    hub_base: &str,
) -> Result<ModelArtifact, OrchestratorError> {
    HubClient::new(hub_base, default_cache_root()).fetch(name, opset)
}
