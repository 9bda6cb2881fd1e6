//! Run configuration files (TOML, or JSON when the extension is `.json`).
//!
//! Keys mirror [`RunConfig`] fields one to one and unknown keys are
//! rejected. Relative paths resolve against the directory holding the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::DatasetSpec;
use super::OrchestratorError;
use crate::mock::FaultScenario;
use crate::optimizer::PassRegistry;
use crate::types::{
    default_iou_thresholds, default_top_k, validate_iou_thresholds, validate_top_k,
    ComparatorConfig, ModelDescriptor, ModelSource,
};

pub const DEFAULT_OPTIMIZER_TIMEOUT_SECS: u64 = 600;
pub const DEFAULT_SWEEP_SAMPLE: usize = 50;

/// Which backend realizes the optimizer or runner role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    /// Adapter program speaking the command-line protocol.
    External {
        program: String,
        #[serde(default)]
        args: Vec<String>,
        #[serde(default)]
        timeout_secs: Option<u64>,
    },
    /// The bundled Python adapters around onnxoptimizer / onnxruntime.
    Reference {
        #[serde(default)]
        python: Option<String>,
        #[serde(default)]
        timeout_secs: Option<u64>,
    },
    /// In-process synthetic backend with injected faults.
    Mock {
        #[serde(default)]
        scenario: FaultScenario,
    },
}

impl BackendConfig {
    pub fn id(&self) -> &'static str {
        match self {
            BackendConfig::External { .. } => "external",
            BackendConfig::Reference { .. } => "reference",
            BackendConfig::Mock { .. } => "mock",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationConfig {
    /// Extra non-diverged inputs re-run per pass; `None` re-runs everything.
    #[serde(default = "default_sweep_sample")]
    pub sample_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_sweep_sample() -> Option<usize> {
    Some(DEFAULT_SWEEP_SAMPLE)
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self {
            sample_size: default_sweep_sample(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub models: Vec<ModelDescriptor>,
    pub dataset: DatasetSpec,
    /// Number of chunks the dataset is split into.
    #[serde(default = "default_chunks")]
    pub chunks: usize,
    #[serde(default = "default_top_k")]
    pub top_k_values: Vec<usize>,
    #[serde(default = "default_iou_thresholds")]
    pub iou_thresholds: Vec<f64>,
    pub optimizer_backend: BackendConfig,
    pub runner_backend: BackendConfig,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub pass_subset: Option<Vec<String>>,
    #[serde(default)]
    pub hub_base: Option<String>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub localization: LocalizationConfig,
}

fn default_chunks() -> usize {
    1
}

/// Raw shape used only to catch non-positive chunk counts with a clear message.
#[derive(Deserialize)]
struct ChunkProbe {
    #[serde(default)]
    chunks: Option<i64>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let err = |m: String| OrchestratorError::Config(m);
        if self.models.is_empty() {
            return Err(err("no models configured".into()));
        }
        if self.chunks == 0 {
            return Err(err("chunks must be >= 1".into()));
        }
        validate_top_k(&self.top_k_values).map_err(|e| err(e.to_string()))?;
        validate_iou_thresholds(&self.iou_thresholds).map_err(|e| err(e.to_string()))?;
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.models {
            m.validate().map_err(|e| err(e.to_string()))?;
            if !seen.insert(m.id.as_str()) {
                return Err(err(format!("duplicate model id '{}'", m.id)));
            }
        }
        if self.workers == Some(0) {
            return Err(err("workers must be >= 1".into()));
        }
        self.dataset.validate()?;
        Ok(())
    }

    /// Comparator settings for one model: its own block, or the run-level
    /// K values and thresholds.
    pub fn comparator_for(&self, model: &ModelDescriptor) -> ComparatorConfig {
        model.comparator_config.clone().unwrap_or_else(|| ComparatorConfig {
            top_k_values: self.top_k_values.clone(),
            iou_thresholds: self.iou_thresholds.clone(),
            ..ComparatorConfig::default()
        })
    }

    pub fn model(&self, id: &str) -> Option<&ModelDescriptor> {
        self.models.iter().find(|m| m.id == id)
    }

    /// Every pass named in `pass_subset` must exist in the registry.
    pub fn check_pass_subset(&self, registry: &PassRegistry) -> Result<(), OrchestratorError> {
        let Some(subset) = &self.pass_subset else {
            return Ok(());
        };
        check_pass_names(subset, registry)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        for m in &mut self.models {
            if let ModelSource::Path(p) = &m.source {
                m.source = ModelSource::Path(join(p));
            }
        }
        self.dataset.location = join(&self.dataset.location);
        self.output_dir = join(&self.output_dir);
    }
}

pub fn check_pass_names(names: &[String], registry: &PassRegistry) -> Result<(), OrchestratorError> {
    let unknown: Vec<&str> = names
        .iter()
        .map(String::as_str)
        .filter(|n| registry.get(n).is_none())
        .collect();
    if unknown.is_empty() {
        return Ok(());
    }
    Err(OrchestratorError::Config(format!(
        "unknown pass name(s) {}; valid names: {}",
        unknown.join(", "),
        registry.names().collect::<Vec<_>>().join(", ")
    )))
}

pub fn parse_run_config(text: &str, json: bool) -> Result<RunConfig, OrchestratorError> {
    let probe: Result<ChunkProbe, String> = if json {
        serde_json::from_str::<serde_json::Value>(text)
            .map_err(|e| e.to_string())
            .map(|v| ChunkProbe {
                chunks: v.get("chunks").and_then(serde_json::Value::as_i64),
            })
    } else {
        toml::from_str::<toml::Value>(text)
            .map_err(|e| e.to_string())
            .map(|v| ChunkProbe {
                chunks: v.get("chunks").and_then(toml::Value::as_integer),
            })
    };
    if let Ok(ChunkProbe { chunks: Some(n) }) = probe {
        if n <= 0 {
            return Err(OrchestratorError::Config(format!("chunks must be >= 1, got {n}")));
        }
    }
    let config: RunConfig = if json {
        serde_json::from_str(text).map_err(|e| OrchestratorError::Config(e.to_string()))?
    } else {
        toml::from_str(text).map_err(|e| OrchestratorError::Config(e.to_string()))?
    };
    config.validate()?;
    Ok(config)
}

/// Read, default-fill and validate a run configuration.
pub fn load_run_config(path: impl AsRef<Path>) -> Result<RunConfig, OrchestratorError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| OrchestratorError::Io(path.to_path_buf(), e))?;
    let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let mut config = parse_run_config(&text, json)?;
    let base = path.parent().unwrap_or(Path::new("."));
    config.resolve_paths(base);
    Ok(config)
}
