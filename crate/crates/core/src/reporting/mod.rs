//! Versioned JSON run and fault reports, plus corpus summaries.
//!
//! Layout: `<output_dir>/<model_id>/<run_id>/{run,fault}_report.json` where
//! `run_id` is a UTC timestamp and a short digest. Files are created with
//! `create_new`, so earlier reports are never overwritten.

mod summary;

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparators::AggregateMetrics;
use crate::localizer::Evaluation;
use crate::optimizer::{OptimizeMode, ValidationResult};
use crate::orchestrator::IngestionWarning;
use crate::types::{
    ComparisonRecord, Evidence, FaultReport, InferenceRecord, ModelDescriptor, OptStatus, Outcome,
    OutcomeClass, PassCategory, Payload,
};

pub use summary::{load_reports, summarize, LoadedReports};

pub const SCHEMA_VERSION: &str = "1.0";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const RUN_REPORT_FILE: &str = "run_report.json";
pub const FAULT_REPORT_FILE: &str = "fault_report.json";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("I/O error on {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("report inputs inconsistent: {0}")]
    Inconsistent(String),
    #[error("unsupported report schema version '{0}'")]
    UnsupportedSchema(String),
    #[error("malformed report: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationSummary {
    pub mode: OptimizeMode,
    pub status: OptStatus,
    pub applied_passes: Vec<String>,
    pub diagnostics: String,
    pub ir_version_before: Option<i64>,
    pub ir_version_after: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendIds {
    pub optimizer: String,
    pub runner: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: String,
    pub tool_version: String,
    pub run_id: String,
    pub model: ModelDescriptor,
    pub backends: BackendIds,
    pub outcome: Outcome,
    pub effective_outcome: OutcomeClass,
    pub evidence: Evidence,
    pub optimization: OptimizationSummary,
    pub validation: Option<ValidationResult>,
    pub original_records: Vec<InferenceRecord>,
    pub optimized_records: Vec<InferenceRecord>,
    pub comparisons: Vec<ComparisonRecord>,
    pub aggregate: Option<AggregateMetrics>,
    /// Warnings new relative to the original model.
    pub warnings: Vec<String>,
    pub original_session_warnings: Vec<String>,
    pub optimized_session_warnings: Vec<String>,
    pub ingestion_warnings: Vec<IngestionWarning>,
}

/// Ranked payloads keep only the labels any configured K looks at.
fn truncate_ranked(mut r: InferenceRecord, max_k: usize) -> InferenceRecord {
    if let Payload::Ranked { labels } = &mut r.payload {
        labels.truncate(max_k);
    }
    r
}

impl RunReport {
    /// Assemble the report of one evaluation against the original run.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        run_id: &str,
        model: &ModelDescriptor,
        backends: BackendIds,
        max_k: usize,
        original_records: &[InferenceRecord],
        original_session_warnings: &[String],
        ingestion_warnings: &[IngestionWarning],
        eval: &Evaluation,
    ) -> Result<Self, ReportError> {
        let optimized = eval.run.as_ref();
        if let Some(run) = optimized {
            let mut a: Vec<&str> = original_records.iter().map(|r| r.input_id.as_str()).collect();
            let mut b: Vec<&str> = run.records.iter().map(|r| r.input_id.as_str()).collect();
            a.sort_unstable();
            b.sort_unstable();
            if a != b {
                return Err(ReportError::Inconsistent(
                    "original and optimized runs cover different input ids".into(),
                ));
            }
        }
        let o = &eval.optimization;
        Ok(RunReport {
            schema_version: SCHEMA_VERSION.into(),
            tool_version: TOOL_VERSION.into(),
            run_id: run_id.into(),
            model: model.clone(),
            backends,
            outcome: eval.outcome.clone(),
            effective_outcome: eval.outcome.effective_class(),
            evidence: eval.evidence.clone(),
            optimization: OptimizationSummary {
                mode: eval.mode.clone(),
                status: o.status,
                applied_passes: o.applied_passes.clone(),
                diagnostics: o.diagnostics.clone(),
                ir_version_before: o.ir_version_before,
                ir_version_after: o.ir_version_after,
            },
            validation: eval.validation.clone(),
            original_records: original_records
                .iter()
                .cloned()
                .map(|r| truncate_ranked(r, max_k))
                .collect(),
            optimized_records: optimized
                .map(|r| {
                    r.records
                        .iter()
                        .cloned()
                        .map(|r| truncate_ranked(r, max_k))
                        .collect()
                })
                .unwrap_or_default(),
            comparisons: eval
                .comparison
                .as_ref()
                .map(|c| c.records.clone())
                .unwrap_or_default(),
            aggregate: eval.comparison.as_ref().map(|c| c.aggregate.clone()),
            warnings: eval.new_warnings.clone(),
            original_session_warnings: original_session_warnings.to_vec(),
            optimized_session_warnings: optimized.map(|r| r.session_warnings.clone()).unwrap_or_default(),
            ingestion_warnings: ingestion_warnings.to_vec(),
        })
    }
}

/// One row of the per-pass table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassRow {
    pub pass: String,
    pub category: PassCategory,
    pub outcome: OutcomeClass,
    pub known_unstable: bool,
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultReportDoc {
    pub schema_version: String,
    pub tool_version: String,
    pub run_id: String,
    pub fault: FaultReport,
    /// Rows in registry order.
    pub table: Vec<PassRow>,
    pub note: Option<String>,
}

impl FaultReportDoc {
    /// `order` lists pass names in registry order; passes missing from it
    /// follow alphabetically.
    pub fn new(run_id: &str, fault: FaultReport, order: &[String]) -> Result<Self, ReportError> {
        fault
            .validate()
            .map_err(|e| ReportError::Inconsistent(e.to_string()))?;
        let rank: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut table: Vec<PassRow> = fault
            .per_pass
            .iter()
            .map(|(name, p)| PassRow {
                pass: name.clone(),
                category: p.category,
                outcome: p.outcome.effective_class(),
                known_unstable: p.known_unstable,
                evidence: p.evidence.summary(),
            })
            .collect();
        table.sort_by_key(|r| (rank.get(r.pass.as_str()).copied().unwrap_or(usize::MAX), r.pass.clone()));
        let note = if let Some(inc) = &fault.incomplete {
            Some(format!(
                "sweep incomplete: pass #{} ({}) failed: {}",
                inc.failed_pass_index, inc.failed_pass, inc.reason
            ))
        } else if fault.attributed_passes.is_empty() {
            Some("no pass reproduced the fault in isolation".to_string())
        } else {
            None
        };
        Ok(FaultReportDoc {
            schema_version: SCHEMA_VERSION.into(),
            tool_version: TOOL_VERSION.into(),
            run_id: run_id.into(),
            fault,
            table,
            note,
        })
    }
}

static RUN_COUNTER: AtomicU64 = AtomicU64::new(0);

/// UTC timestamp plus an 8-hex digest unique within and across processes.
pub fn new_run_id(model_id: &str) -> String {
    let now = chrono::Utc::now();
    let stamp = now.format("%Y%m%dT%H%M%S%.3fZ").to_string();
    let n = RUN_COUNTER.fetch_add(1, Ordering::Relaxed);
    let salt = format!(
        "{model_id}|{}|{}|{n}",
        now.timestamp_nanos_opt().unwrap_or_default(),
        std::process::id()
    );
    let digest = crate::orchestrator::sha256_hex(salt.as_bytes());
    format!("{stamp}-{}", &digest[..8])
}

pub fn report_dir(output_dir: &Path, model_id: &str, run_id: &str) -> PathBuf {
    output_dir.join(model_id).join(run_id)
}

fn write_new(path: &Path, value: &impl Serialize) -> Result<(), ReportError> {
    let io = |e| ReportError::Io(path.to_path_buf(), e);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| ReportError::Io(dir.to_path_buf(), e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| ReportError::Parse(e.to_string()))?;
    text.push('\n');
    let mut file = OpenOptions::new().write(true).create_new(true).open(path).map_err(io)?;
    file.write_all(text.as_bytes()).map_err(io)?;
    file.sync_all().map_err(io)
}

pub fn emit_run_report(output_dir: &Path, report: &RunReport) -> Result<PathBuf, ReportError> {
    let path = report_dir(output_dir, &report.model.id, &report.run_id).join(RUN_REPORT_FILE);
    write_new(&path, report)?;
    Ok(path)
}

pub fn emit_fault_report(output_dir: &Path, doc: &FaultReportDoc) -> Result<PathBuf, ReportError> {
    let path = report_dir(output_dir, &doc.fault.model_id, &doc.run_id).join(FAULT_REPORT_FILE);
    write_new(&path, doc)?;
    Ok(path)
}

fn check_schema(value: &serde_json::Value) -> Result<(), ReportError> {
    let version = value
        .get("schema_version")
        .and_then(|v| v.as_str())
        .ok_or_else(|| ReportError::Parse("missing schema_version".into()))?;
    let major = SCHEMA_VERSION.split('.').next();
    if version.split('.').next() != major {
        return Err(ReportError::UnsupportedSchema(version.to_string()));
    }
    Ok(())
}

fn parse<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ReportError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ReportError::Parse(e.to_string()))?;
    check_schema(&value)?;
    serde_json::from_value(value).map_err(|e| ReportError::Parse(e.to_string()))
}

pub fn parse_run_report(text: &str) -> Result<RunReport, ReportError> {
    parse(text)
}

pub fn parse_fault_report(text: &str) -> Result<FaultReportDoc, ReportError> {
    parse(text)
}

pub fn read_run_report(path: &Path) -> Result<RunReport, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|e| ReportError::Io(path.to_path_buf(), e))?;
    parse_run_report(&text)
}

pub fn read_fault_report(path: &Path) -> Result<FaultReportDoc, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|e| ReportError::Io(path.to_path_buf(), e))?;
    parse_fault_report(&text)
}

pub fn run_report_json(report: &RunReport) -> String {
    serde_json::to_string_pretty(report).expect("run report serializes")
}

pub fn fault_report_json(doc: &FaultReportDoc) -> String {
    serde_json::to_string_pretty(doc).expect("fault report serializes")
}
