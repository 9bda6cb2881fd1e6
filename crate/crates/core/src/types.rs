//! Shared domain vocabulary.
//!
//! Everything in here is plain data. Constructors and `validate` methods
//! enforce the invariants; no type carries behavior beyond that.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::ModelArtifact;

/// Lowest opset accepted for hub-sourced models.
pub const MIN_HUB_OPSET: u32 = 7;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid {what}: {reason}")]
pub struct InvariantError {
    pub what: &'static str,
    pub reason: String,
}

impl InvariantError {
    pub(crate) fn new(what: &'static str, reason: impl Into<String>) -> Self {
        Self {
            what,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Detection,
    TextGeneration,
    QuestionAnswering,
    Sentiment,
}

impl Task {
    pub const ALL: [Task; 5] = [
        Task::Classification,
        Task::Detection,
        Task::TextGeneration,
        Task::QuestionAnswering,
        Task::Sentiment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Classification => "classification",
            Task::Detection => "detection",
            Task::TextGeneration => "text_generation",
            Task::QuestionAnswering => "question_answering",
            Task::Sentiment => "sentiment",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.as_str() == s)
    }

    pub fn is_text(self) -> bool {
        matches!(
            self,
            Task::TextGeneration | Task::QuestionAnswering | Task::Sentiment
        )
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    /// A model file on local disk.
    Path(PathBuf),
    /// A model served by a hub; `opset: None` picks the highest available.
    Hub { name: String, opset: Option<u32> },
}

/// One model under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDescriptor {
    pub id: String,
    pub task: Task,
    pub opset: u32,
    pub source: ModelSource,
    #[serde(default)]
    pub checksum: Option<String>,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub comparator_config: Option<ComparatorConfig>,
}

impl ModelDescriptor {
    pub fn validate(&self) -> Result<(), InvariantError> {
        if self.id.is_empty() {
            return Err(InvariantError::new("model descriptor", "empty id"));
        }
        if self.opset == 0 {
            return Err(InvariantError::new("model descriptor", "opset must be positive"));
        }
        if let ModelSource::Hub { opset, .. } = &self.source {
            let effective = opset.unwrap_or(self.opset);
            if effective < MIN_HUB_OPSET || self.opset < MIN_HUB_OPSET {
                return Err(InvariantError::new(
                    "model descriptor",
                    format!(
                        "hub models require opset >= {MIN_HUB_OPSET}, got {effective} for '{}'",
                        self.id
                    ),
                ));
            }
        }
        if let Some(sum) = &self.checksum {
            if !is_hex_digest(sum) {
                return Err(InvariantError::new(
                    "model descriptor",
                    format!("checksum '{sum}' is not a 64-character hex digest"),
                ));
            }
        }
        self.preprocess.validate()?;
        if let Some(c) = &self.comparator_config {
            c.validate()?;
        }
        Ok(())
    }
}

pub(crate) fn is_hex_digest(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassCategory {
    Fuse,
    Eliminate,
    Rewrite,
    Other,
}

impl PassCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            PassCategory::Fuse => "fuse",
            PassCategory::Eliminate => "eliminate",
            PassCategory::Rewrite => "rewrite",
            PassCategory::Other => "other",
        }
    }

    /// Categories eligible for the optimizer's default bundle.
    pub fn bundles_by_default(self) -> bool {
        matches!(self, PassCategory::Fuse | PassCategory::Eliminate)
    }
}

impl std::fmt::Display for PassCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A named optimization pass: the unit of fault attribution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassSpec {
    pub name: String,
    pub category: PassCategory,
    pub in_default_bundle: bool,
    pub known_unstable: bool,
}

impl PassSpec {
    pub fn new(
        name: impl Into<String>,
        category: PassCategory,
        in_default_bundle: bool,
        known_unstable: bool,
    ) -> Result<Self, InvariantError> {
        let name = name.into();
        if name.is_empty() {
            return Err(InvariantError::new("pass", "empty name"));
        }
        if in_default_bundle && !category.bundles_by_default() {
            return Err(InvariantError::new(
                "pass",
                format!("'{name}' is {category} but marked as a default-bundle member"),
            ));
        }
        Ok(Self {
            name,
            category,
            in_default_bundle,
            known_unstable,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparatorConfig {
    #[serde(default = "default_top_k")]
    pub top_k_values: Vec<usize>,
    #[serde(default = "default_iou_thresholds")]
    pub iou_thresholds: Vec<f64>,
    #[serde(default = "default_bleu_max_n")]
    pub bleu_max_n: usize,
    #[serde(default)]
    pub tensor_abs_tol: f64,
    #[serde(default)]
    pub tensor_rel_tol: f64,
}

pub fn default_top_k() -> Vec<usize> {
    vec![1, 5, 10]
}

pub fn default_iou_thresholds() -> Vec<f64> {
    vec![0.5, 0.75, 0.9]
}

fn default_bleu_max_n() -> usize {
    4
}

impl Default for ComparatorConfig {
    fn default() -> Self {
        Self {
            top_k_values: default_top_k(),
            iou_thresholds: default_iou_thresholds(),
            bleu_max_n: default_bleu_max_n(),
            tensor_abs_tol: 0.0,
            tensor_rel_tol: 0.0,
        }
    }
}

impl ComparatorConfig {
    pub fn validate(&self) -> Result<(), InvariantError> {
        validate_top_k(&self.top_k_values)?;
        validate_iou_thresholds(&self.iou_thresholds)?;
        if self.bleu_max_n == 0 {
            return Err(InvariantError::new("comparator config", "bleu_max_n must be positive"));
        }
        for (name, tol) in [
            ("tensor_abs_tol", self.tensor_abs_tol),
            ("tensor_rel_tol", self.tensor_rel_tol),
        ] {
            if !tol.is_finite() || tol < 0.0 {
                return Err(InvariantError::new(
                    "comparator config",
                    format!("{name} must be finite and >= 0, got {tol}"),
                ));
            }
        }
        Ok(())
    }

    pub fn max_k(&self) -> usize {
        self.top_k_values.iter().copied().max().unwrap_or(1)
    }
}

pub(crate) fn validate_top_k(values: &[usize]) -> Result<(), InvariantError> {
    if values.is_empty() {
        return Err(InvariantError::new("top_k_values", "must not be empty"));
    }
    if values.contains(&0) {
        return Err(InvariantError::new("top_k_values", "K must be positive"));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(InvariantError::new(
            "top_k_values",
            format!("must be strictly increasing, got {values:?}"),
        ));
    }
    Ok(())
}

pub(crate) fn validate_iou_thresholds(values: &[f64]) -> Result<(), InvariantError> {
    if values.is_empty() {
        return Err(InvariantError::new("iou_thresholds", "must not be empty"));
    }
    if let Some(t) = values.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(InvariantError::new(
            "iou_thresholds",
            format!("thresholds must lie in (0, 1], got {t}"),
        ));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(InvariantError::new(
            "iou_thresholds",
            format!("must be strictly increasing, got {values:?}"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelOrder {
    #[default]
    Rgb,
    Bgr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorLayout {
    #[default]
    Nchw,
    Nhwc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResizePolicy {
    /// Resize straight to the target size, ignoring aspect ratio.
    #[default]
    Stretch,
    /// Scale the shorter side to the target, then center crop.
    ShorterSideCrop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationPolicy {
    /// Keep the first `max_seq_len` tokens.
    #[default]
    Head,
    /// Keep the last `max_seq_len` tokens.
    Tail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagePreprocess {
    pub height: u32,
    pub width: u32,
    #[serde(default)]
    pub channel_order: ChannelOrder,
    #[serde(default = "default_mean")]
    pub mean: Vec<f32>,
    #[serde(default = "default_std")]
    pub std: Vec<f32>,
    #[serde(default)]
    pub layout: TensorLayout,
    #[serde(default)]
    pub resize: ResizePolicy,
    /// Multiplier applied to 8-bit pixel values before mean/std.
    #[serde(default = "default_pixel_scale")]
    pub pixel_scale: f32,
}

fn default_mean() -> Vec<f32> {
    vec![0.485, 0.456, 0.406]
}

fn default_std() -> Vec<f32> {
    vec![0.229, 0.224, 0.225]
}

fn default_pixel_scale() -> f32 {
    1.0 / 255.0
}

impl Default for ImagePreprocess {
    fn default() -> Self {
        Self {
            height: 224,
            width: 224,
            channel_order: ChannelOrder::Rgb,
            mean: default_mean(),
            std: default_std(),
            layout: TensorLayout::Nchw,
            resize: ResizePolicy::Stretch,
            pixel_scale: default_pixel_scale(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextPreprocess {
    #[serde(default = "default_tokenizer")]
    pub tokenizer: String,
    #[serde(default = "default_max_seq_len")]
    pub max_seq_len: usize,
    #[serde(default)]
    pub truncation: TruncationPolicy,
}

fn default_tokenizer() -> String {
    "whitespace".to_string()
}

fn default_max_seq_len() -> usize {
    256
}

impl Default for TextPreprocess {
    fn default() -> Self {
        Self {
            tokenizer: default_tokenizer(),
            max_seq_len: default_max_seq_len(),
            truncation: TruncationPolicy::Head,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    #[serde(default)]
    pub image: Option<ImagePreprocess>,
    #[serde(default)]
    pub text: Option<TextPreprocess>,
    /// The model emits raw logits; the runner applies softmax.
    #[serde(default)]
    pub output_is_logits: bool,
    /// Upper bound on generated tokens for text generation.
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: usize,
}

pub fn default_max_new_tokens() -> usize {
    64
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            image: None,
            text: None,
            output_is_logits: false,
            max_new_tokens: default_max_new_tokens(),
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), InvariantError> {
        if let Some(img) = &self.image {
            if img.height == 0 || img.width == 0 {
                return Err(InvariantError::new("image preprocess", "zero target size"));
            }
            if img.mean.len() != 3 || img.std.len() != 3 {
                return Err(InvariantError::new(
                    "image preprocess",
                    format!(
                        "mean/std need one entry per channel (3), got {} and {}",
                        img.mean.len(),
                        img.std.len()
                    ),
                ));
            }
            if img.std.iter().any(|s| s.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || !s.is_finite()) {
                return Err(InvariantError::new("image preprocess", "std must be positive"));
            }
        }
        if let Some(text) = &self.text {
            if text.max_seq_len == 0 {
                return Err(InvariantError::new(
                    "text preprocess",
                    "max_seq_len must be positive",
                ));
            }
        }
        Ok(())
    }
}

/// Primary outcome of one (model, pass-set) evaluation.
///
/// `Warning` is only ever reported through [`Outcome::effective_class`]; the
/// primary class of an [`Outcome`] is one of the other five.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OutcomeClass {
    Clean,
    OptCrash,
    Malformed,
    RunCrash,
    Divergent,
    Warning,
}

impl OutcomeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeClass::Clean => "CLEAN",
            OutcomeClass::OptCrash => "OPT_CRASH",
            OutcomeClass::Malformed => "MALFORMED",
            OutcomeClass::RunCrash => "RUN_CRASH",
            OutcomeClass::Divergent => "DIVERGENT",
            OutcomeClass::Warning => "WARNING",
        }
    }

    /// Classes that stop the pipeline before warnings can be collected.
    pub fn preempts_warnings(self) -> bool {
        matches!(
            self,
            OutcomeClass::OptCrash | OutcomeClass::Malformed | OutcomeClass::RunCrash
        )
    }
}

impl std::fmt::Display for OutcomeClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WarningFlag {
    UnusedInitializer,
    IrVersionChange,
}

/// Primary class plus the warning flags that rode along with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub class: OutcomeClass,
    #[serde(default)]
    pub flags: BTreeSet<WarningFlag>,
}

impl Outcome {
    pub fn new(class: OutcomeClass, flags: BTreeSet<WarningFlag>) -> Result<Self, InvariantError> {
        if class == OutcomeClass::Warning {
            return Err(InvariantError::new(
                "outcome",
                "WARNING is a flag set, not a primary class",
            ));
        }
        if class.preempts_warnings() && !flags.is_empty() {
            return Err(InvariantError::new(
                "outcome",
                format!("{class} cannot carry warning flags"),
            ));
        }
        Ok(Self { class, flags })
    }

    pub fn plain(class: OutcomeClass) -> Self {
        debug_assert!(class != OutcomeClass::Warning);
        Self {
            class,
            flags: BTreeSet::new(),
        }
    }

    pub fn clean() -> Self {
        Self::plain(OutcomeClass::Clean)
    }

    /// `WARNING` when the run was otherwise clean but raised flags.
    pub fn effective_class(&self) -> OutcomeClass {
        if self.class == OutcomeClass::Clean && !self.flags.is_empty() {
            OutcomeClass::Warning
        } else {
            self.class
        }
    }

    pub fn is_clean(&self) -> bool {
        self.effective_class() == OutcomeClass::Clean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptStatus {
    Ok,
    Crashed,
}

/// Result of one optimizer invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub status: OptStatus,
    pub optimized_model: Option<ModelArtifact>,
    pub diagnostics: String,
    pub applied_passes: Vec<String>,
    pub ir_version_before: Option<i64>,
    pub ir_version_after: Option<i64>,
}

impl OptimizationResult {
    pub fn validate(&self) -> Result<(), InvariantError> {
        match self.status {
            OptStatus::Ok if self.optimized_model.is_none() => Err(InvariantError::new(
                "optimization result",
                "status ok without an optimized model",
            )),
            OptStatus::Crashed if self.diagnostics.is_empty() => Err(InvariantError::new(
                "optimization result",
                "crash without diagnostics",
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedLabel {
    pub label: u32,
    pub score: f64,
}

/// Axis-aligned box in pixel corner coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn is_well_formed(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite())
            && self.x1 <= self.x2
            && self.y1 <= self.y2
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: u32,
    pub score: f64,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, InvariantError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(InvariantError::new(
                "tensor",
                format!("shape {shape:?} needs {expected} elements, got {}", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }
}

/// Task-shaped output of one inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Ranked { labels: Vec<RankedLabel> },
    Detections { detections: Vec<Detection> },
    Text { text: String },
    Tensor { tensor: Tensor },
    Binary { label: u8 },
    /// Inference failed for this input only.
    Error { message: String },
}

impl Payload {
    /// Ranked payload from one score per label index; descending score,
    /// ties by ascending label.
    pub fn ranked_from_scores(scores: &[f64]) -> Payload {
        let mut labels: Vec<RankedLabel> = scores
            .iter()
            .enumerate()
            .map(|(i, &score)| RankedLabel {
                label: i as u32,
                score,
            })
            .collect();
        sort_ranked(&mut labels);
        Payload::Ranked { labels }
    }

    pub fn is_error(&self) -> bool {
        matches!(self, Payload::Error { .. })
    }

    pub fn validate(&self) -> Result<(), InvariantError> {
        match self {
            Payload::Ranked { labels } => {
                let ordered = labels.windows(2).all(|w| rank_cmp(&w[0], &w[1]).is_le());
                if !ordered {
                    return Err(InvariantError::new(
                        "ranked labels",
                        "not sorted by descending score with ascending-label ties",
                    ));
                }
                Ok(())
            }
            Payload::Detections { detections } => {
                match detections.iter().find(|d| !d.bbox.is_well_formed()) {
                    Some(d) => Err(InvariantError::new(
                        "detection",
                        format!("malformed box {:?}", d.bbox),
                    )),
                    None => Ok(()),
                }
            }
            Payload::Binary { label } if *label > 1 => Err(InvariantError::new(
                "binary payload",
                format!("label must be 0 or 1, got {label}"),
            )),
            _ => Ok(()),
        }
    }
}

fn rank_cmp(a: &RankedLabel, b: &RankedLabel) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.label.cmp(&b.label))
}

pub(crate) fn sort_ranked(labels: &mut [RankedLabel]) {
    labels.sort_by(rank_cmp);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRecord {
    pub input_id: String,
    pub payload: Payload,
    #[serde(default)]
    pub runtime_warnings: Vec<String>,
    /// Seconds spent on this input.
    #[serde(default)]
    pub wall_time: f64,
}

impl InferenceRecord {
    pub fn new(input_id: impl Into<String>, payload: Payload) -> Self {
        Self {
            input_id: input_id.into(),
            payload,
            runtime_warnings: Vec::new(),
            wall_time: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub input_id: String,
    pub metrics: BTreeMap<String, f64>,
    pub diverged: bool,
}

/// Material backing a non-clean outcome.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Evidence {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diverged_inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub validation_reasons: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Evidence {
    pub fn is_empty(&self) -> bool {
        self.diverged_inputs.is_empty()
            && self.diagnostics.is_none()
            && self.validation_reasons.is_empty()
            && self.warnings.is_empty()
    }

    /// One-line digest for tables.
    pub fn summary(&self) -> String {
        if let Some(reason) = self.validation_reasons.first() {
            return reason.clone();
        }
        if let Some(diag) = &self.diagnostics {
            return first_meaningful_line(diag);
        }
        if !self.diverged_inputs.is_empty() {
            return format!("{} diverged input(s)", self.diverged_inputs.len());
        }
        if let Some(w) = self.warnings.first() {
            return first_meaningful_line(w);
        }
        String::new()
    }
}

fn first_meaningful_line(text: &str) -> String {
    text.lines()
        .map(str::trim)
        .rfind(|l| !l.is_empty())
        .unwrap_or_default()
        .to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trigger {
    pub outcome: Outcome,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassOutcome {
    pub category: PassCategory,
    pub known_unstable: bool,
    pub outcome: Outcome,
    pub evidence: Evidence,
}

/// Sweep interrupted by an unavailable backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepIncomplete {
    pub failed_pass_index: usize,
    pub failed_pass: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultReport {
    pub model_id: String,
    pub trigger: Trigger,
    pub per_pass: BTreeMap<String, PassOutcome>,
    pub attributed_passes: Vec<String>,
    pub excluded_passes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incomplete: Option<SweepIncomplete>,
}

impl FaultReport {
    pub fn validate(&self) -> Result<(), InvariantError> {
        let mut expected: Vec<&String> = self
            .per_pass
            .iter()
            .filter(|(_, p)| !p.known_unstable && !p.outcome.is_clean())
            .map(|(name, _)| name)
            .collect();
        let mut actual: Vec<&String> = self.attributed_passes.iter().collect();
        expected.sort();
        actual.sort();
        if expected != actual {
            return Err(InvariantError::new(
                "fault report",
                format!("attributed passes {actual:?} do not match non-clean passes {expected:?}"),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranked_ties_break_by_label() {
        let Payload::Ranked { labels } = Payload::ranked_from_scores(&[0.2, 0.5, 0.5, 0.1]) else {
            unreachable!()
        };
        let order: Vec<u32> = labels.iter().map(|l| l.label).collect();
        assert_eq!(order, vec![1, 2, 0, 3]);
    }

    #[test]
    fn default_bundle_requires_fuse_or_eliminate() {
        assert!(PassSpec::new("fuse_bn_into_conv", PassCategory::Fuse, true, false).is_ok());
        assert!(PassSpec::new("rewrite_input_dtype", PassCategory::Rewrite, true, false).is_err());
    }

    #[test]
    fn hub_models_need_opset_seven() {
        let mut d = ModelDescriptor {
            id: "m".into(),
            task: Task::Classification,
            opset: 6,
            source: ModelSource::Hub {
                name: "resnet50".into(),
                opset: None,
            },
            checksum: None,
            preprocess: PreprocessConfig::default(),
            comparator_config: None,
        };
        assert!(d.validate().is_err());
        d.opset = 7;
        assert!(d.validate().is_ok());
        d.source = ModelSource::Path("m.onnx".into());
        d.opset = 6;
        assert!(d.validate().is_ok());
    }

    #[test]
    fn crash_classes_reject_flags() {
        let flags: BTreeSet<_> = [WarningFlag::UnusedInitializer].into();
        assert!(Outcome::new(OutcomeClass::RunCrash, flags.clone()).is_err());
        assert!(Outcome::new(OutcomeClass::Warning, BTreeSet::new()).is_err());
        let o = Outcome::new(OutcomeClass::Clean, flags).unwrap();
        assert_eq!(o.effective_class(), OutcomeClass::Warning);
        assert!(!o.is_clean());
    }

    #[test]
    fn comparator_config_rejects_unsorted_values() {
        let mut c = ComparatorConfig::default();
        assert!(c.validate().is_ok());
        c.top_k_values = vec![5, 1];
        assert!(c.validate().is_err());
        c.top_k_values = vec![1];
        c.iou_thresholds = vec![0.0, 0.5];
        assert!(c.validate().is_err());
        c.iou_thresholds = vec![0.5];
        c.tensor_abs_tol = f64::NAN;
        assert!(c.validate().is_err());
    }

    #[test]
    fn optimization_result_invariants() {
        let r = OptimizationResult {
            status: OptStatus::Crashed,
            optimized_model: None,
            diagnostics: String::new(),
            applied_passes: vec![],
            ir_version_before: None,
            ir_version_after: None,
        };
        assert!(r.validate().is_err());
    }

    #[test]
    fn detection_payload_rejects_inverted_boxes() {
        let p = Payload::Detections {
            detections: vec![Detection {
                label: 0,
                score: 0.9,
                bbox: BBox::new(5.0, 0.0, 1.0, 2.0),
            }],
        };
        assert!(p.validate().is_err());
    }
}
