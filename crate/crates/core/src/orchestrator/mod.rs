//! Model and dataset acquisition: local files, hub downloads with a
//! verified cache, run configuration and datasets.

mod artifact;
mod config;
mod dataset;
mod hub;

use std::path::PathBuf;

use thiserror::Error;

pub use artifact::{load_local_model, sha256_hex, ModelArtifact};
pub use config::{
    check_pass_names, load_run_config, parse_run_config, BackendConfig, LocalizationConfig,
    RunConfig, DEFAULT_OPTIMIZER_TIMEOUT_SECS, DEFAULT_SWEEP_SAMPLE,
};
pub use dataset::{
    load_dataset, Dataset, DatasetKind, DatasetSpec, IngestionWarning, InputSchema, RawContent,
    RawInput,
};
pub use hub::{
    default_cache_root, fetch_hub_model, parse_manifest, resolve_entry, HttpTransport, HubClient,
    HubManifestEntry, HubRequest, Transport, CACHE_DIR_ENV, DEFAULT_FETCH_WORKERS,
    DEFAULT_HUB_BASE, MANIFEST_FILE,
};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("not found: {0}")]
    NotFound(PathBuf),
    #[error("invalid model artifact {0}: {1}")]
    InvalidArtifact(PathBuf, String),
    #[error("model hub unavailable: {0}")]
    HubUnavailable(String),
    #[error("model '{name}' (opset {opset:?}) not in hub manifest")]
    ModelNotInHub { name: String, opset: Option<u32> },
    #[error("model '{name}' has several manifest entries for opset {opset}")]
    AmbiguousHubEntry { name: String, opset: u32 },
    #[error("checksum mismatch for '{model}': manifest {expected}, downloaded {actual}")]
    ChecksumMismatch {
        model: String,
        expected: String,
        actual: String,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dataset at {0} is empty")]
    EmptyDataset(PathBuf),
    #[error("I/O error on {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
}

impl Clone for OrchestratorError {
    fn clone(&self) -> Self {
        match self {
            OrchestratorError::Io(p, e) => {
                OrchestratorError::Io(p.clone(), std::io::Error::new(e.kind(), e.to_string()))
            }
            OrchestratorError::NotFound(p) => OrchestratorError::NotFound(p.clone()),
            OrchestratorError::InvalidArtifact(p, m) => {
                OrchestratorError::InvalidArtifact(p.clone(), m.clone())
            }
            OrchestratorError::HubUnavailable(m) => OrchestratorError::HubUnavailable(m.clone()),
            OrchestratorError::ModelNotInHub { name, opset } => OrchestratorError::ModelNotInHub {
                name: name.clone(),
                opset: *opset,
            },
            OrchestratorError::AmbiguousHubEntry { name, opset } => {
                OrchestratorError::AmbiguousHubEntry {
                    name: name.clone(),
                    opset: *opset,
                }
            }
            OrchestratorError::ChecksumMismatch {
                model,
                expected,
                actual,
            } => OrchestratorError::ChecksumMismatch {
                model: model.clone(),
                expected: expected.clone(),
                actual: actual.clone(),
            },
            OrchestratorError::Config(m) => OrchestratorError::Config(m.clone()),
            OrchestratorError::EmptyDataset(p) => OrchestratorError::EmptyDataset(p.clone()),
        }
    }
}
