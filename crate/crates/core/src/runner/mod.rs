//! Chunked inference over a dataset, with task-specific output shaping and
//! runtime-warning capture.

mod external;
mod preprocess;

use std::collections::BTreeSet;
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::{Dataset, ModelArtifact, RawInput};
use crate::types::{Detection, BBox, InferenceRecord, Payload, PreprocessConfig, Task, Tensor};

pub use external::{ExternalRunner, ReferenceRunner};
pub use preprocess::{
    image_to_tensor, preprocess_image, preprocess_text, tokenize_text, write_npy, ImageTensor,
    TextInput,
};

#[derive(Debug, Error)]
pub enum RunnerError {
    /// The model failed to load or the inference process died. Evidence of
    /// an optimizer fault, not a framework bug.
    #[error("run crash: {0}")]
    RunCrash(String),
    #[error("runner backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("invalid chunk plan: {0}")]
    InvalidChunks(String),
    #[error("runner protocol violation: {0}")]
    Protocol(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkRange {
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

impl ChunkRange {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Split `[0, len)` into `n` consecutive chunks of `len / n` inputs, the
/// last one also taking the remainder. `len == 0` plans no chunks.
pub fn plan_chunks(len: usize, n: usize) -> Result<Vec<ChunkRange>, RunnerError> {
    if n == 0 {
        return Err(RunnerError::InvalidChunks("N must be >= 1".into()));
    }
    if len == 0 {
        return Ok(Vec::new());
    }
    let base = len / n;
    Ok((0..n)
        .map(|index| {
            let start = index * base;
            let end = if index + 1 == n { len } else { start + base };
            ChunkRange { index, start, end }
        })
        .collect())
}

/// Records for one batch plus warnings emitted while loading the model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchOutput {
    pub records: Vec<InferenceRecord>,
    pub session_warnings: Vec<String>,
}

pub trait RunnerBackend: Send + Sync {
    fn id(&self) -> &str;

    /// Run `model` on `inputs`, returning one record per input with the
    /// raw (pre-postprocessing) payload.
    fn run_batch(
        &self,
        model: &ModelArtifact,
        inputs: &[RawInput],
        task: Task,
        pre: &PreprocessConfig,
    ) -> Result<BatchOutput, RunnerError>;
}

/// Run one chunk and shape every payload for `task`.
pub fn run_inference(
    backend: &dyn RunnerBackend,
    model: &ModelArtifact,
    dataset: &Dataset,
    chunk: ChunkRange,
    pre: &PreprocessConfig,
    task: Task,
) -> Result<BatchOutput, RunnerError> {
    let inputs = dataset
        .inputs
        .get(chunk.start..chunk.end)
        .ok_or_else(|| RunnerError::InvalidChunks(format!("{chunk:?} exceeds dataset of {}", dataset.len())))?;
    if inputs.is_empty() {
        return Ok(BatchOutput::default());
    }
    let mut out = backend.run_batch(model, inputs, task, pre)?;
    let expected: BTreeSet<&str> = inputs.iter().map(|i| i.id.as_str()).collect();
    let got: BTreeSet<&str> = out.records.iter().map(|r| r.input_id.as_str()).collect();
    if expected != got || out.records.len() != inputs.len() {
        return Err(RunnerError::Protocol(format!(
            "backend returned {} records for {} inputs",
            out.records.len(),
            inputs.len()
        )));
    }
    for r in &mut out.records {
        let payload = std::mem::replace(&mut r.payload, Payload::Text { text: String::new() });
        r.payload = postprocess(task, payload, pre);
    }
    Ok(out)
}

/// All records of one model over the dataset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutput {
    /// Dataset order.
    pub records: Vec<InferenceRecord>,
    /// Deduplicated across chunks, sorted.
    pub session_warnings: Vec<String>,
}

/// Run every chunk (in parallel on the current rayon pool) and merge.
pub fn run_dataset(
    backend: &dyn RunnerBackend,
    model: &ModelArtifact,
    dataset: &Dataset,
    chunks: usize,
    pre: &PreprocessConfig,
    task: Task,
) -> Result<RunOutput, RunnerError> {
    let plan = plan_chunks(dataset.len(), chunks)?;
    let outputs: Vec<BatchOutput> = plan
        .par_iter()
        .map(|c| run_inference(backend, model, dataset, *c, pre, task))
        .collect::<Result<_, _>>()?;
    let mut records = Vec::with_capacity(dataset.len());
    let mut warnings = BTreeSet::new();
    for o in outputs {
        records.extend(o.records);
        warnings.extend(o.session_warnings);
    }
    let order: std::collections::HashMap<&str, usize> = dataset
        .inputs
        .iter()
        .enumerate()
        .map(|(i, x)| (x.id.as_str(), i))
        .collect();
    records.sort_by_key(|r| order.get(r.input_id.as_str()).copied().unwrap_or(usize::MAX));
    Ok(RunOutput {
        records,
        session_warnings: warnings.into_iter().collect(),
    })
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn argmax_low_tie(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

fn error(message: impl Into<String>) -> Payload {
    Payload::Error {
        message: message.into(),
    }
}

/// Rows of `[x1, y1, x2, y2, score, label]`.
fn decode_detections(t: &Tensor) -> Payload {
    if t.data.is_empty() {
        return Payload::Detections { detections: vec![] };
    }
    if t.shape.last() != Some(&6) {
        return error(format!("detection tensor must have rows of 6, got shape {:?}", t.shape));
    }
    let detections: Vec<Detection> = t
        .data
        .chunks_exact(6)
        .map(|r| Detection {
            label: r[5].max(0.0) as u32,
            score: r[4],
            bbox: BBox::new(r[0], r[1], r[2], r[3]),
        })
        .collect();
    check_detections(detections)
}

fn check_detections(detections: Vec<Detection>) -> Payload {
    if let Some(d) = detections.iter().find(|d| !d.bbox.is_well_formed()) {
        return error(format!("malformed box {:?}", d.bbox));
    }
    Payload::Detections { detections }
}

/// Shape a raw backend payload into the task's payload kind.
pub fn postprocess(task: Task, payload: Payload, pre: &PreprocessConfig) -> Payload {
    match (task, payload) {
        (_, p @ Payload::Error { .. }) => p,
        (Task::Classification, Payload::Tensor { tensor }) => {
            if tensor.data.is_empty() {
                return error("empty score tensor");
            }
            let scores = if pre.output_is_logits {
                softmax(&tensor.data)
            } else {
                tensor.data
            };
            Payload::ranked_from_scores(&scores)
        }
        (Task::Classification | Task::Detection, Payload::Ranked { mut labels }) => {
            crate::types::sort_ranked(&mut labels);
            Payload::Ranked { labels }
        }
        (Task::Detection, Payload::Tensor { tensor }) => decode_detections(&tensor),
        (Task::Detection, Payload::Detections { detections }) => check_detections(detections),
        (Task::Sentiment, Payload::Tensor { tensor }) => match tensor.data.len() {
            0 => error("empty sentiment tensor"),
            // single logit or probability of the positive class
            1 => {
                let threshold = if pre.output_is_logits { 0.0 } else { 0.5 };
                Payload::Binary {
                    label: u8::from(tensor.data[0] > threshold),
                }
            }
            _ => Payload::Binary {
                label: u8::from(argmax_low_tie(&tensor.data) != 0),
            },
        },
        (Task::Sentiment, p @ Payload::Binary { .. }) => match p.validate() {
            Ok(()) => p,
            Err(e) => error(e.to_string()),
        },
        (Task::TextGeneration, p @ Payload::Text { .. }) => p,
        (Task::QuestionAnswering, p @ Payload::Tensor { .. }) => p,
        (task, other) => error(format!(
            "{task} model produced an unexpected {} payload",
            payload_kind(&other)
        )),
    }
}

fn payload_kind(p: &Payload) -> &'static str {
    match p {
        Payload::Ranked { .. } => "ranked",
        Payload::Detections { .. } => "detections",
        Payload::Text { .. } => "text",
        Payload::Tensor { .. } => "tensor",
        Payload::Binary { .. } => "binary",
        Payload::Error { .. } => "error",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WarningKind {
    UnusedInitializer,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedWarning {
    /// `None` for session-level warnings not tied to one input.
    pub input_id: Option<String>,
    pub kind: WarningKind,
    /// Initializer name for `UNUSED_INITIALIZER`.
    pub subject: Option<String>,
    pub raw: String,
}

static UNUSED_INITIALIZER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"Removing initializer ['`‘](.+?)['’]\. It is not used by any node")
        .expect("static regex")
});

/// Classify one warning line.
pub fn classify_warning(raw: &str) -> (WarningKind, Option<String>) {
    match UNUSED_INITIALIZER.captures(raw) {
        Some(c) => (WarningKind::UnusedInitializer, Some(c[1].to_string())),
        None => (WarningKind::Other, None),
    }
}

pub fn parse_warning(input_id: Option<&str>, raw: &str) -> ParsedWarning {
    let (kind, subject) = classify_warning(raw);
    ParsedWarning {
        input_id: input_id.map(String::from),
        kind,
        subject,
        raw: raw.to_string(),
    }
}

pub fn parse_runtime_warnings(records: &[InferenceRecord]) -> Vec<ParsedWarning> {
    records
        .iter()
        .flat_map(|r| {
            r.runtime_warnings
                .iter()
                .map(|w| parse_warning(Some(&r.input_id), w))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds(v: &[ChunkRange]) -> Vec<(usize, usize)> {
        v.iter().map(|c| (c.start, c.end)).collect()
    }

    #[test]
    fn chunk_plans() {
        assert_eq!(bounds(&plan_chunks(10, 3).unwrap()), [(0, 3), (3, 6), (6, 10)]);
        assert_eq!(bounds(&plan_chunks(7, 1).unwrap()), [(0, 7)]);
        assert_eq!(
            bounds(&plan_chunks(5, 5).unwrap()),
            [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]
        );
        assert!(plan_chunks(0, 4).unwrap().is_empty());
        assert!(plan_chunks(3, 0).is_err());
        // more chunks than inputs: leading chunks are empty
        assert_eq!(bounds(&plan_chunks(2, 3).unwrap()), [(0, 0), (0, 0), (0, 2)]);
    }

    #[test]
    fn unused_initializer_warning() {
        let raw = "2024-01-01 [W:onnxruntime:, graph.cc:3490 CleanUnusedInitializersAndNodeArgs] Removing initializer '420'. It is not used by any node and should be removed from the model.";
        let w = parse_warning(Some("x"), raw);
        assert_eq!(w.kind, WarningKind::UnusedInitializer);
        assert_eq!(w.subject.as_deref(), Some("420"));
        assert_eq!(w.raw, raw);
        assert_eq!(classify_warning("something else").0, WarningKind::Other);
        assert!(parse_runtime_warnings(&[]).is_empty());
    }

    #[test]
    fn classification_softmax_and_order() {
        let pre = PreprocessConfig {
            output_is_logits: true,
            ..PreprocessConfig::default()
        };
        let t = Tensor::new(vec![1, 3], vec![0.0, 2.0, 2.0]).unwrap();
        let Payload::Ranked { labels } = postprocess(Task::Classification, Payload::Tensor { tensor: t }, &pre)
        else {
            panic!()
        };
        assert_eq!(labels.iter().map(|l| l.label).collect::<Vec<_>>(), [1, 2, 0]);
        let total: f64 = labels.iter().map(|l| l.score).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detection_rows_decode_and_validate() {
        let pre = PreprocessConfig::default();
        let ok = Tensor::new(vec![1, 6], vec![0.0, 0.0, 2.0, 2.0, 0.9, 3.0]).unwrap();
        let Payload::Detections { detections } =
            postprocess(Task::Detection, Payload::Tensor { tensor: ok }, &pre)
        else {
            panic!()
        };
        assert_eq!(detections[0].label, 3);
        let bad = Tensor::new(vec![1, 6], vec![3.0, 0.0, 2.0, 2.0, 0.9, 3.0]).unwrap();
        assert!(postprocess(Task::Detection, Payload::Tensor { tensor: bad }, &pre).is_error());
    }

    #[test]
    fn sentiment_from_tensor() {
        let pre = PreprocessConfig::default();
        let two = Tensor::new(vec![2], vec![0.2, 0.8]).unwrap();
        assert_eq!(
            postprocess(Task::Sentiment, Payload::Tensor { tensor: two }, &pre),
            Payload::Binary { label: 1 }
        );
    }
}
