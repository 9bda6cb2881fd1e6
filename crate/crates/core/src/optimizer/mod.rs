//! The system under test: a graph optimizer reachable through
//! [`OptimizerBackend`], plus the pass registry used for attribution.

mod external;
mod ir;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::{load_local_model, ModelArtifact};
use crate::types::{OptStatus, OptimizationResult, PassCategory, PassSpec};

pub use external::{
    ExternalOptimizer, ReferenceOptimizer, INCLUDE_NEW_PASSES_ENV, REFERENCE_PASSES,
};
pub use ir::{json_ir_version, protobuf_ir_version, read_ir_version};

/// Passes documented as not fully format-compliant.
pub const KNOWN_UNSTABLE_PASSES: &[&str] = &["split_init", "split_predict"];

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("optimizer backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("unknown pass '{name}'; valid names: {valid}")]
    UnknownPass { name: String, valid: String },
    #[error("invalid model artifact {0}: {1}")]
    InvalidArtifact(PathBuf, String),
    #[error("optimizer modified its input model {0}")]
    InputModified(PathBuf),
    #[error("invalid pass registry: {0}")]
    Registry(String),
    #[error("I/O error on {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
}

/// One line of a backend's pass listing, before categorization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassListing {
    pub name: String,
    /// Backend's own default-bundle flag; `None` when it offers no metadata.
    pub default: Option<bool>,
    pub unstable: bool,
    pub category: Option<PassCategory>,
}

impl PassListing {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            default: None,
            unstable: false,
            category: None,
        }
    }

    /// Parse `name[\tflag,flag...]` where flags are `default`, `unstable`
    /// or `category=<fuse|eliminate|rewrite|other>`.
    pub fn parse_line(line: &str) -> Option<Self> {
        let mut parts = line.trim_end().splitn(2, '\t');
        let name = parts.next()?.trim();
        if name.is_empty() || name.starts_with('#') {
            return None;
        }
        let mut listing = PassListing::named(name);
        for flag in parts.next().unwrap_or("").split(',').map(str::trim) {
            match flag {
                "" => {}
                "default" => listing.default = Some(true),
                "nodefault" => listing.default = Some(false),
                "unstable" => listing.unstable = true,
                f => match f.strip_prefix("category=") {
                    Some("fuse") => listing.category = Some(PassCategory::Fuse),
                    Some("eliminate") => listing.category = Some(PassCategory::Eliminate),
                    Some("rewrite") => listing.category = Some(PassCategory::Rewrite),
                    Some("other") => listing.category = Some(PassCategory::Other),
                    _ => log::debug!("ignoring unknown pass flag '{f}' on {name}"),
                },
            }
        }
        Some(listing)
    }
}

/// Category implied by a pass name prefix.
pub fn categorize_name(name: &str) -> PassCategory {
    const REWRITE_PREFIXES: &[&str] = &[
        "rewrite_", "replace_", "adjust_", "rename_", "set_", "lift_", "extract_",
    ];
    if name.starts_with("fuse_") {
        PassCategory::Fuse
    } else if name.starts_with("eliminate_") {
        PassCategory::Eliminate
    } else if REWRITE_PREFIXES.iter().any(|p| name.starts_with(p)) {
        PassCategory::Rewrite
    } else {
        PassCategory::Other
    }
}

/// Ordered, name-unique pass catalogue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassRegistry {
    passes: Vec<PassSpec>,
}

impl PassRegistry {
    pub fn new(passes: Vec<PassSpec>) -> Result<Self, OptimizerError> {
        let mut seen = HashSet::new();
        for p in &passes {
            if !seen.insert(p.name.as_str()) {
                return Err(OptimizerError::Registry(format!("duplicate pass '{}'", p.name)));
            }
        }
        Ok(Self { passes })
    }

    /// Categorize a raw listing. Backend default-bundle flags are honoured
    /// only for fuse/eliminate passes; when no flags are offered the bundle
    /// is every fuse/eliminate pass.
    pub fn from_listings(listings: Vec<PassListing>) -> Result<Self, OptimizerError> {
        let has_bundle_metadata = listings.iter().any(|l| l.default.is_some());
        let passes = listings
            .into_iter()
            .map(|l| {
                let category = l.category.unwrap_or_else(|| categorize_name(&l.name));
                let in_bundle = if has_bundle_metadata {
                    let flagged = l.default == Some(true);
                    if flagged && !category.bundles_by_default() {
                        log::info!(
                            "backend lists {} pass '{}' in its default bundle; ignoring",
                            category,
                            l.name
                        );
                    }
                    flagged && category.bundles_by_default()
                } else {
                    category.bundles_by_default()
                };
                let unstable = l.unstable || KNOWN_UNSTABLE_PASSES.contains(&l.name.as_str());
                PassSpec::new(l.name, category, in_bundle, unstable)
                    .map_err(|e| OptimizerError::Registry(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(passes)
    }

    pub fn len(&self) -> usize {
        self.passes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passes.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&PassSpec> {
        self.passes.iter().find(|p| p.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.passes.iter().position(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PassSpec> {
        self.passes.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.passes.iter().map(|p| p.name.as_str())
    }

    pub fn default_bundle(&self) -> Vec<String> {
        self.passes
            .iter()
            .filter(|p| p.in_default_bundle)
            .map(|p| p.name.clone())
            .collect()
    }

    /// Restrict to `names`, keeping registry order.
    pub fn subset(&self, names: &[String]) -> Result<PassRegistry, OptimizerError> {
        for n in names {
            self.require(n)?;
        }
        Ok(PassRegistry {
            passes: self
                .passes
                .iter()
                .filter(|p| names.contains(&p.name))
                .cloned()
                .collect(),
        })
    }

    fn require(&self, name: &str) -> Result<&PassSpec, OptimizerError> {
        self.get(name).ok_or_else(|| OptimizerError::UnknownPass {
            name: name.to_string(),
            valid: self.names().collect::<Vec<_>>().join(", "),
        })
    }
}

/// The pinned reference catalogue with prefix categories and no backend
/// bundle metadata.
pub fn reference_registry() -> PassRegistry {
    PassRegistry::from_listings(REFERENCE_PASSES.iter().map(|n| PassListing::named(*n)).collect())
        .expect("reference catalogue is well-formed")
}

/// What the optimizer is asked to do.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizeMode {
    DefaultBundle,
    PassList(Vec<String>),
}

impl OptimizeMode {
    pub fn single(pass: &str) -> Self {
        OptimizeMode::PassList(vec![pass.to_string()])
    }

    /// Directory label used under `<model>/opt/`.
    pub fn label(&self) -> String {
        match self {
            OptimizeMode::DefaultBundle => "bundle".to_string(),
            OptimizeMode::PassList(p) if p.len() == 1 => p[0].clone(),
            OptimizeMode::PassList(p) => {
                let digest = crate::orchestrator::sha256_hex(p.join(",").as_bytes());
                format!("list-{}", &digest[..12])
            }
        }
    }
}

/// Request handed to a backend once pass names are checked.
#[derive(Debug, Clone, Copy)]
pub enum PassRequest<'a> {
    Default,
    Passes(&'a [String]),
}

/// Raw outcome of one backend invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendRun {
    pub success: bool,
    pub diagnostics: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reasons", rename_all = "snake_case")]
pub enum ValidationResult {
    Valid,
    Malformed(Vec<String>),
}

impl ValidationResult {
    pub fn is_valid(&self) -> bool {
        matches!(self, ValidationResult::Valid)
    }
}

pub trait OptimizerBackend: Send + Sync {
    fn id(&self) -> &str;

    fn list_passes(&self) -> Result<Vec<PassListing>, OptimizerError>;

    /// Read `input`, write the optimized model to `output`. A crash of the
    /// optimizer is `Ok(BackendRun { success: false, .. })`; `Err` means the
    /// backend itself could not be reached.
    fn run_optimizer(
        &self,
        input: &Path,
        output: &Path,
        request: PassRequest<'_>,
    ) -> Result<BackendRun, OptimizerError>;

    /// Structural check that never executes the model.
    fn check(&self, model: &Path) -> Result<ValidationResult, OptimizerError>;

    fn ir_version(&self, model: &Path) -> Option<i64> {
        read_ir_version(model)
    }
}

/// Query and categorize the backend's passes.
pub fn list_passes(backend: &dyn OptimizerBackend) -> Result<PassRegistry, OptimizerError> {
    PassRegistry::from_listings(backend.list_passes()?)
}

/// Optimize `model` into `output`.
///
/// The input artifact is re-hashed afterwards; a backend that touched it is
/// reported as [`OptimizerError::InputModified`].
pub fn optimize(
    backend: &dyn OptimizerBackend,
    registry: &PassRegistry,
    model: &ModelArtifact,
    mode: &OptimizeMode,
    output: &Path,
) -> Result<OptimizationResult, OptimizerError> {
    let applied_passes = match mode {
        OptimizeMode::DefaultBundle => registry.default_bundle(),
        OptimizeMode::PassList(names) => {
            for n in names {
                registry.require(n)?;
            }
            names.clone()
        }
    };
    if output == model.path {
        return Err(OptimizerError::Io(
            output.to_path_buf(),
            std::io::Error::other("output path equals the input model"),
        ));
    }
    if let Some(parent) = output.parent() {
        std::fs::create_dir_all(parent).map_err(|e| OptimizerError::Io(parent.to_path_buf(), e))?;
    }
    match std::fs::remove_file(output) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(OptimizerError::Io(output.to_path_buf(), e)),
    }

    let request = match mode {
        OptimizeMode::DefaultBundle => PassRequest::Default,
        OptimizeMode::PassList(names) => PassRequest::Passes(names),
    };
    let run = backend.run_optimizer(&model.path, output, request)?;
    if !model.is_intact() {
        return Err(OptimizerError::InputModified(model.path.clone()));
    }

    let ir_version_before = backend.ir_version(&model.path);
    let mut diagnostics = run.diagnostics;
    if !run.success {
        if diagnostics.is_empty() {
            diagnostics = "optimizer failed without output".to_string();
        }
        return Ok(OptimizationResult {
            status: OptStatus::Crashed,
            optimized_model: None,
            diagnostics,
            applied_passes,
            ir_version_before,
            ir_version_after: None,
        });
    }
    let artifact = match load_local_model(output) {
        Ok(a) => a,
        Err(e) => {
            if !diagnostics.is_empty() && !diagnostics.ends_with('\n') {
                diagnostics.push('\n');
            }
            diagnostics.push_str(&format!("optimizer reported success but {e}"));
            return Ok(OptimizationResult {
                status: OptStatus::Crashed,
                optimized_model: None,
                diagnostics,
                applied_passes,
                ir_version_before,
                ir_version_after: None,
            });
        }
    };
    let ir_version_after = backend.ir_version(&artifact.path);
    for (side, v) in [("input", ir_version_before), ("output", ir_version_after)] {
        if v.is_none() {
            if !diagnostics.is_empty() && !diagnostics.ends_with('\n') {
                diagnostics.push('\n');
            }
            diagnostics.push_str(&format!("note: ir_version unreadable in {side} model\n"));
        }
    }
    Ok(OptimizationResult {
        status: OptStatus::Ok,
        optimized_model: Some(artifact),
        diagnostics,
        applied_passes,
        ir_version_before,
        ir_version_after,
    })
}

pub fn validate_model(
    backend: &dyn OptimizerBackend,
    artifact: &ModelArtifact,
) -> Result<ValidationResult, OptimizerError> {
    if !artifact.path.is_file() {
        return Err(OptimizerError::InvalidArtifact(
            artifact.path.clone(),
            "file missing".into(),
        ));
    }
    backend.check(&artifact.path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionChangeWarning {
    pub before: i64,
    pub after: i64,
}

impl std::fmt::Display for VersionChangeWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ir_version changed {} -> {}", self.before, self.after)
    }
}

/// Warn when optimization changed the container format version. Unknown
/// versions on either side never warn.
pub fn detect_ir_version_change(result: &OptimizationResult) -> Option<VersionChangeWarning> {
    if result.status != OptStatus::Ok {
        return None;
    }
    match (result.ir_version_before, result.ir_version_after) {
        (Some(before), Some(after)) if before != after => Some(VersionChangeWarning { before, after }),
        _ => None,
    }
}

/// Worker count used when none is configured.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
