//! Dataset ingestion. Inputs are always ordered lexicographically by id.
//!
//! * `image_dir`: every image file directly under `location`; the id is the
//!   file name. Files that fail to decode are skipped with a warning.
//! * `text_file_pairs`: files named `<id>.<field>.txt` under `location`,
//!   grouped by id; every field listed in `input_schema.fields` must exist.
//! * `packaged_dataset_ref`: a JSON-lines export of a packaged dataset, one
//!   object per line with an `id` key plus the schema fields.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::OrchestratorError;

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "bmp", "gif", "tif", "tiff", "webp", "ppm"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    ImageDir,
    TextFilePairs,
    PackagedDatasetRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSchema {
    /// Text fields per input, e.g. `["question", "context"]` or `["text"]`.
    #[serde(default = "default_fields")]
    pub fields: Vec<String>,
}

fn default_fields() -> Vec<String> {
    vec!["text".to_string()]
}

impl Default for InputSchema {
    fn default() -> Self {
        Self {
            fields: default_fields(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub location: PathBuf,
    #[serde(default)]
    pub limit: Option<usize>,
    #[serde(default)]
    pub input_schema: InputSchema,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        if self.limit == Some(0) {
            return Err(OrchestratorError::Config("dataset limit must be positive".into()));
        }
        if self.kind != DatasetKind::ImageDir && self.input_schema.fields.is_empty() {
            return Err(OrchestratorError::Config(
                "text datasets need at least one input field".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawContent {
    Image { path: PathBuf },
    Text { fields: BTreeMap<String, String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawInput {
    pub id: String,
    pub content: RawContent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestionWarning {
    pub entry: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<RawInput>,
    pub warnings: Vec<IngestionWarning>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Inputs whose ids are in `ids`, preserving dataset order.
    pub fn subset(&self, ids: &std::collections::BTreeSet<String>) -> Dataset {
        Dataset {
            inputs: self
                .inputs
                .iter()
                .filter(|i| ids.contains(&i.id))
                .cloned()
                .collect(),
            warnings: Vec::new(),
        }
    }

    /// In-memory text dataset, mostly for tests and synthetic runs.
    pub fn from_texts<I, S>(items: I) -> Dataset
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let mut inputs: Vec<RawInput> = items
            .into_iter()
            .map(|(id, text)| RawInput {
                id: id.into(),
                content: RawContent::Text {
                    fields: BTreeMap::from([("text".to_string(), text.into())]),
                },
            })
            .collect();
        inputs.sort_by(|a, b| a.id.cmp(&b.id));
        Dataset {
            inputs,
            warnings: Vec::new(),
        }
    }
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>, OrchestratorError> {
    let entries = fs::read_dir(dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => OrchestratorError::NotFound(dir.to_path_buf()),
        _ => OrchestratorError::Io(dir.to_path_buf(), e),
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    Ok(paths)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn load_image_dir(spec: &DatasetSpec) -> Result<Dataset, OrchestratorError> {
    let mut inputs = Vec::new();
    let mut warnings = Vec::new();
    let mut candidates: Vec<(String, PathBuf)> = read_dir_sorted(&spec.location)?
        .into_iter()
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .map(|p| (file_name(&p), p))
        .collect();
    candidates.sort();
    for (id, path) in candidates {
        if spec.limit.is_some_and(|l| inputs.len() >= l) {
            break;
        }
        match image::open(&path) {
            Ok(_) => inputs.push(RawInput {
                id,
                content: RawContent::Image { path },
            }),
            Err(e) => {
                log::warn!("skipping unreadable image {}: {e}", path.display());
                warnings.push(IngestionWarning {
                    entry: id,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok(Dataset { inputs, warnings })
}

fn load_text_pairs(spec: &DatasetSpec) -> Result<Dataset, OrchestratorError> {
    let mut grouped: BTreeMap<String, BTreeMap<String, PathBuf>> = BTreeMap::new();
    for path in read_dir_sorted(&spec.location)? {
        let name = file_name(&path);
        let Some(stem) = name.strip_suffix(".txt") else { continue };
        let Some((id, field)) = stem.rsplit_once('.') else { continue };
        grouped
            .entry(id.to_string())
            .or_default()
            .insert(field.to_string(), path);
    }
    let mut inputs = Vec::new();
    let mut warnings = Vec::new();
    'entries: for (id, files) in grouped {
        if spec.limit.is_some_and(|l| inputs.len() >= l) {
            break;
        }
        let mut fields = BTreeMap::new();
        for field in &spec.input_schema.fields {
            let text = files
                .get(field)
                .ok_or_else(|| format!("missing field '{field}'"))
                .and_then(|p| fs::read_to_string(p).map_err(|e| e.to_string()));
            match text {
                Ok(t) => {
                    fields.insert(field.clone(), t);
                }
                Err(reason) => {
                    warnings.push(IngestionWarning { entry: id, reason });
                    continue 'entries;
                }
            }
        }
        inputs.push(RawInput {
            id,
            content: RawContent::Text { fields },
        });
    }
    Ok(Dataset { inputs, warnings })
}

fn load_packaged(spec: &DatasetSpec) -> Result<Dataset, OrchestratorError> {
    let text = fs::read_to_string(&spec.location).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => OrchestratorError::NotFound(spec.location.clone()),
        _ => OrchestratorError::Io(spec.location.clone(), e),
    })?;
    let mut rows: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut warnings = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry = format!("line {}", line_no + 1);
        let value: serde_json::Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                warnings.push(IngestionWarning {
                    entry,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let id = match value.get("id") {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => {
                warnings.push(IngestionWarning {
                    entry,
                    reason: "missing id".into(),
                });
                continue;
            }
        };
        let mut fields = BTreeMap::new();
        let mut missing = None;
        for field in &spec.input_schema.fields {
            match value.get(field).and_then(|v| v.as_str()) {
                Some(s) => {
                    fields.insert(field.clone(), s.to_string());
                }
                None => {
                    missing = Some(field.clone());
                    break;
                }
            }
        }
        match missing {
            Some(field) => warnings.push(IngestionWarning {
                entry: id,
                reason: format!("missing field '{field}'"),
            }),
            None => {
                if rows.insert(id.clone(), fields).is_some() {
                    warnings.push(IngestionWarning {
                        entry: id,
                        reason: "duplicate id; later row kept".into(),
                    });
                }
            }
        }
    }
    let mut inputs: Vec<RawInput> = rows
        .into_iter()
        .map(|(id, fields)| RawInput {
            id,
            content: RawContent::Text { fields },
        })
        .collect();
    if let Some(l) = spec.limit {
        inputs.truncate(l);
    }
    Ok(Dataset { inputs, warnings })
}

/// Load a dataset in stable id order, capped at `spec.limit` inputs.
pub fn load_dataset(spec: &DatasetSpec) -> Result<Dataset, OrchestratorError> {
    spec.validate()?;
    let dataset = match spec.kind {
        DatasetKind::ImageDir => load_image_dir(spec)?,
        DatasetKind::TextFilePairs => load_text_pairs(spec)?,
        DatasetKind::PackagedDatasetRef => load_packaged(spec)?,
    };
    if dataset.is_empty() {
        return Err(OrchestratorError::EmptyDataset(spec.location.clone()));
    }
    Ok(dataset)
}
