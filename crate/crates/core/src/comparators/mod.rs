//! Metric functions and the per-task divergence predicates that compare an
//! original model's records against an optimized model's records.
//!
//! Everything here is a pure function of its arguments. Per-input metrics
//! land in [`ComparisonRecord`]s; dataset-level numbers land in
//! [`AggregateMetrics`]. Aggregation always walks inputs in id order, so the
//! results do not depend on how records were chunked or ordered.

mod bleu;
mod detection;
mod elementwise;
mod kendall;
pub(crate) mod numeric_keys;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bleu::{bleu, brevity_penalty, tokenize};
pub use detection::{
    average_precision, detection_metrics, f1_score, iou, match_detections,
    ranked_detection_labels, DetectionMatch, DetectionMetrics, Scene, ThresholdMetrics,
};
pub use elementwise::{binary_diff_rate, tensor_compare, TensorComparison};
pub use kendall::kendall_tau_topk;

use crate::types::{BBox, ComparatorConfig, ComparisonRecord, InferenceRecord, Payload, Task};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ComparatorError {
    #[error("K must be positive, got {0}")]
    InvalidK(usize),
    #[error("malformed box {0:?}")]
    InvalidBox(BBox),
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("length mismatch: reference has {reference}, test has {test}")]
    LengthMismatch { reference: usize, test: usize },
    #[error("input id sets differ: {0}")]
    IdMismatch(String),
    #[error("invalid comparator configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparatorId {
    /// Kendall tau over top-K labels for each configured K.
    ClassificationKendall,
    /// Box matching and detection metrics plus Kendall over detection labels.
    DetectionSuite,
    /// Sentence BLEU, diverged when below 1.
    Bleu,
    /// Binary label differences, diverged when any differ.
    BinaryDiff,
    /// Element-wise tensor comparison under tolerance.
    Tensor,
}

pub fn select_comparator(task: Task) -> ComparatorId {
    match task {
        Task::Classification => ComparatorId::ClassificationKendall,
        Task::Detection => ComparatorId::DetectionSuite,
        Task::TextGeneration => ComparatorId::Bleu,
        Task::Sentiment => ComparatorId::BinaryDiff,
        Task::QuestionAnswering => ComparatorId::Tensor,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KDivergence {
    pub k: usize,
    pub tau: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationDivergence {
    pub per_k: Vec<KDivergence>,
    pub top1_changed: bool,
    pub diverged: bool,
}

/// Per-K Kendall tau between two ranked-label payload lists.
pub fn classification_divergence(
    reference: &[u32],
    test: &[u32],
    top_k_values: &[usize],
) -> Result<ClassificationDivergence, ComparatorError> {
    let per_k = top_k_values
        .iter()
        .map(|&k| {
            let tau = kendall_tau_topk(reference, test, k)?;
            Ok(KDivergence {
                k,
                tau,
                diverged: tau < 1.0,
            })
        })
        .collect::<Result<Vec<_>, ComparatorError>>()?;
    let diverged = per_k.iter().any(|k| k.diverged);
    Ok(ClassificationDivergence {
        per_k,
        top1_changed: reference.first() != test.first(),
        diverged,
    })
}

/// Dataset-level numbers for one comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum AggregateMetrics {
    Classification {
        inputs: usize,
        diverged_inputs: usize,
        #[serde(with = "numeric_keys")]
        divergence_rate_at_k: BTreeMap<usize, f64>,
        top1_change_rate: f64,
    },
    Detection {
        inputs: usize,
        diverged_inputs: usize,
        #[serde(with = "numeric_keys")]
        divergence_rate_at_k: BTreeMap<usize, f64>,
        metrics: DetectionMetrics,
    },
    TextGeneration {
        inputs: usize,
        diverged_inputs: usize,
        mean_bleu: Option<f64>,
    },
    Sentiment {
        inputs: usize,
        diverged_inputs: usize,
        diff_rate: f64,
    },
    QuestionAnswering {
        inputs: usize,
        diverged_inputs: usize,
        max_abs_diff: f64,
    },
}

impl AggregateMetrics {
    pub fn diverged_inputs(&self) -> usize {
        match self {
            AggregateMetrics::Classification {
                diverged_inputs, ..
            }
            | AggregateMetrics::Detection {
                diverged_inputs, ..
            }
            | AggregateMetrics::TextGeneration {
                diverged_inputs, ..
            }
            | AggregateMetrics::Sentiment {
                diverged_inputs, ..
            }
            | AggregateMetrics::QuestionAnswering {
                diverged_inputs, ..
            } => *diverged_inputs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub records: Vec<ComparisonRecord>,
    pub aggregate: AggregateMetrics,
}

impl Comparison {
    pub fn diverged_ids(&self) -> Vec<String> {
        self.records
            .iter()
            .filter(|r| r.diverged)
            .map(|r| r.input_id.clone())
            .collect()
    }

    pub fn any_diverged(&self) -> bool {
        self.records.iter().any(|r| r.diverged)
    }
}

/// Compare original (`reference`) and optimized (`test`) records of one
/// task. Both sides must cover the same input ids.
pub fn compare_records(
    task: Task,
    reference: &[InferenceRecord],
    test: &[InferenceRecord],
    config: &ComparatorConfig,
) -> Result<Comparison, ComparatorError> {
    config
        .validate()
        .map_err(|e| ComparatorError::Config(e.to_string()))?;
    let pairs = align(reference, test)?;

    let mut records = Vec::with_capacity(pairs.len());
    for (r, t) in &pairs {
        records.push(compare_one(task, r, t, config));
    }
    let aggregate = aggregate(task, &pairs, &records, config)?;
    Ok(Comparison { records, aggregate })
}

type Pair<'a> = (&'a InferenceRecord, &'a InferenceRecord);

/// Pairs records by id, sorted by id.
fn align<'a>(
    reference: &'a [InferenceRecord],
    test: &'a [InferenceRecord],
) -> Result<Vec<Pair<'a>>, ComparatorError> {
    let test_by_id: HashMap<&str, &InferenceRecord> =
        test.iter().map(|r| (r.input_id.as_str(), r)).collect();
    if test_by_id.len() != test.len() {
        return Err(ComparatorError::IdMismatch(
            "duplicate input ids in test records".into(),
        ));
    }
    let mut pairs = Vec::with_capacity(reference.len());
    for r in reference {
        match test_by_id.get(r.input_id.as_str()) {
            Some(t) => pairs.push((r, *t)),
            None => {
                return Err(ComparatorError::IdMismatch(format!(
                    "'{}' missing from test records",
                    r.input_id
                )))
            }
        }
    }
    if pairs.len() != test.len() {
        return Err(ComparatorError::IdMismatch(format!(
            "{} reference vs {} test records",
            reference.len(),
            test.len()
        )));
    }
    pairs.sort_by(|a, b| a.0.input_id.cmp(&b.0.input_id));
    if pairs.windows(2).any(|w| w[0].0.input_id == w[1].0.input_id) {
        return Err(ComparatorError::IdMismatch(
            "duplicate input ids in reference records".into(),
        ));
    }
    Ok(pairs)
}

fn ranked_labels(p: &Payload) -> Option<Vec<u32>> {
    match p {
        Payload::Ranked { labels } => Some(labels.iter().map(|l| l.label).collect()),
        _ => None,
    }
}

fn metric_key(name: &str, k: impl std::fmt::Display) -> String {
    format!("{name}@{k}")
}

/// Record for an input where either side failed or the payload kinds differ.
fn failed_record(id: &str, reference: &Payload, test: &Payload, reason: &str) -> ComparisonRecord {
    let same_failure = matches!((reference, test),
        (Payload::Error { message: a }, Payload::Error { message: b }) if a == b);
    let mut metrics = BTreeMap::new();
    metrics.insert(reason.to_string(), 1.0);
    ComparisonRecord {
        input_id: id.to_string(),
        metrics,
        diverged: !same_failure,
    }
}

fn compare_one(
    task: Task,
    r: &InferenceRecord,
    t: &InferenceRecord,
    config: &ComparatorConfig,
) -> ComparisonRecord {
    let id = r.input_id.as_str();
    if r.payload.is_error() || t.payload.is_error() {
        return failed_record(id, &r.payload, &t.payload, "inference_error");
    }
    let mut metrics = BTreeMap::new();
    let diverged = match (task, &r.payload, &t.payload) {
        (Task::Classification, a, b) => {
            let (Some(ra), Some(rb)) = (ranked_labels(a), ranked_labels(b)) else {
                return failed_record(id, a, b, "payload_mismatch");
            };
            match classification_divergence(&ra, &rb, &config.top_k_values) {
                Ok(c) => {
                    for k in &c.per_k {
                        metrics.insert(metric_key("tau", k.k), k.tau);
                    }
                    metrics.insert("top1_changed".into(), f64::from(u8::from(c.top1_changed)));
                    c.diverged
                }
                Err(_) => return failed_record(id, a, b, "comparator_error"),
            }
        }
        (
            Task::Detection,
            Payload::Detections { detections: rd },
            Payload::Detections { detections: td },
        ) => {
            let mut diverged = false;
            let (la, lb) = (ranked_detection_labels(rd), ranked_detection_labels(td));
            if !(la.is_empty() && lb.is_empty()) {
                match classification_divergence(&la, &lb, &config.top_k_values) {
                    Ok(c) => {
                        for k in &c.per_k {
                            metrics.insert(metric_key("tau", k.k), k.tau);
                        }
                        diverged |= c.diverged;
                    }
                    Err(_) => diverged = true,
                }
            }
            for &threshold in &config.iou_thresholds {
                match match_detections(rd, td, threshold) {
                    Ok(m) => {
                        let matched = m.pairs.len() as f64;
                        let precision = if td.is_empty() { 1.0 } else { matched / td.len() as f64 };
                        let recall = if rd.is_empty() { 1.0 } else { matched / rd.len() as f64 };
                        let f1 = if rd.is_empty() && td.is_empty() {
                            1.0
                        } else {
                            f1_score(precision, recall)
                        };
                        metrics.insert(metric_key("precision", threshold), precision);
                        metrics.insert(metric_key("recall", threshold), recall);
                        metrics.insert(metric_key("f1", threshold), f1);
                        diverged |= !m.is_perfect();
                    }
                    Err(_) => {
                        metrics.insert("invalid_box".into(), 1.0);
                        diverged = true;
                    }
                }
            }
            diverged
        }
        (Task::TextGeneration, Payload::Text { text: a }, Payload::Text { text: b }) => {
            match bleu(a, b, config.bleu_max_n) {
                Ok(score) => {
                    metrics.insert("bleu".into(), score);
                    score < 1.0
                }
                // Empty reference: only an empty candidate agrees with it.
                Err(_) => !tokenize(b).is_empty(),
            }
        }
        (Task::Sentiment, Payload::Binary { label: a }, Payload::Binary { label: b }) => {
            let differs = a != b;
            metrics.insert("label_differs".into(), f64::from(u8::from(differs)));
            differs
        }
        (Task::QuestionAnswering, Payload::Tensor { tensor: a }, Payload::Tensor { tensor: b }) => {
            let c = tensor_compare(a, b, config.tensor_abs_tol, config.tensor_rel_tol);
            metrics.insert("max_abs_diff".into(), c.max_abs_diff);
            if c.shape_mismatch {
                metrics.insert("shape_mismatch".into(), 1.0);
            }
            c.diverged
        }
        (_, a, b) => return failed_record(id, a, b, "payload_mismatch"),
    };
    ComparisonRecord {
        input_id: id.to_string(),
        metrics,
        diverged,
    }
}

fn rate(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 / total as f64
    }
}

fn k_rates(records: &[ComparisonRecord], top_k: &[usize]) -> BTreeMap<usize, f64> {
    top_k
        .iter()
        .map(|&k| {
            let key = metric_key("tau", k);
            let count = records
                .iter()
                .filter(|r| match r.metrics.get(&key) {
                    Some(tau) => *tau < 1.0,
                    // Errors count as divergent at every K.
                    None => r.diverged && !r.metrics.keys().any(|m| m.starts_with("tau@")),
                })
                .count();
            (k, rate(count, records.len()))
        })
        .collect()
}

fn aggregate(
    task: Task,
    pairs: &[Pair<'_>],
    records: &[ComparisonRecord],
    config: &ComparatorConfig,
) -> Result<AggregateMetrics, ComparatorError> {
    let inputs = records.len();
    let diverged_inputs = records.iter().filter(|r| r.diverged).count();
    Ok(match task {
        Task::Classification => AggregateMetrics::Classification {
            inputs,
            diverged_inputs,
            divergence_rate_at_k: k_rates(records, &config.top_k_values),
            top1_change_rate: rate(
                records
                    .iter()
                    .filter(|r| r.metrics.get("top1_changed").copied().unwrap_or(1.0) > 0.0)
                    .count(),
                inputs,
            ),
        },
        Task::Detection => {
            let scenes: Vec<Scene<'_>> = pairs
                .iter()
                .filter_map(|(r, t)| match (&r.payload, &t.payload) {
                    (
                        Payload::Detections { detections: rd },
                        Payload::Detections { detections: td },
                    ) if rd.iter().chain(td).all(|d| d.bbox.is_well_formed()) => Some(Scene {
                        id: r.input_id.as_str(),
                        reference: rd.as_slice(),
                        test: td.as_slice(),
                    }),
                    _ => None,
                })
                .collect();
            AggregateMetrics::Detection {
                inputs,
                diverged_inputs,
                divergence_rate_at_k: k_rates(records, &config.top_k_values),
                metrics: detection_metrics(&scenes, &config.iou_thresholds)?,
            }
        }
        Task::TextGeneration => {
            let scores: Vec<f64> = records
                .iter()
                .filter_map(|r| r.metrics.get("bleu").copied())
                .collect();
            AggregateMetrics::TextGeneration {
                inputs,
                diverged_inputs,
                mean_bleu: (!scores.is_empty())
                    .then(|| scores.iter().sum::<f64>() / scores.len() as f64),
            }
        }
        Task::Sentiment => {
            let (a, b): (Vec<u8>, Vec<u8>) = pairs
                .iter()
                .map(|(r, t)| match (&r.payload, &t.payload) {
                    (Payload::Binary { label: a }, Payload::Binary { label: b }) => (*a, *b),
                    // Unusable pairs count as one difference.
                    _ => (0, 1),
                })
                .unzip();
            AggregateMetrics::Sentiment {
                inputs,
                diverged_inputs,
                diff_rate: binary_diff_rate(&a, &b)?,
            }
        }
        Task::QuestionAnswering => AggregateMetrics::QuestionAnswering {
            inputs,
            diverged_inputs,
            max_abs_diff: records
                .iter()
                .filter_map(|r| r.metrics.get("max_abs_diff").copied())
                .fold(0.0, f64::max),
        },
    })
}
