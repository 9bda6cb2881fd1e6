use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use std::path::Path;

use super::{read_fault_report, read_run_report, FaultReportDoc, ReportError, RunReport, FAULT_REPORT_FILE, RUN_REPORT_FILE};
use crate::types::{OutcomeClass, Task};

#[derive(Debug, Clone, Default)]
pub struct LoadedReports {
    pub runs: Vec<RunReport>,
    pub faults: Vec<FaultReportDoc>,
}

fn walk(dir: &Path, out: &mut LoadedReports) -> Result<(), ReportError> {
    let entries = std::fs::read_dir(dir).map_err(|e| ReportError::Io(dir.to_path_buf(), e))?;
    let mut paths: Vec<_> = entries.filter_map(Result::ok).map(|e| e.path()).collect();
    paths.sort();
    for p in paths {
        if p.is_dir() {
            walk(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == RUN_REPORT_FILE) {
            out.runs.push(read_run_report(&p)?);
        } else if p.file_name().is_some_and(|n| n == FAULT_REPORT_FILE) {
            out.faults.push(read_fault_report(&p)?);
        }
    }
    Ok(())
}

/// Every run and fault report below `dir`.
pub fn load_reports(dir: &Path) -> Result<LoadedReports, ReportError> {
    let mut out = LoadedReports::default();
    walk(dir, &mut out)?;
    Ok(out)
}

fn ratio(n: usize, d: usize) -> String {
    let pct = if d == 0 { 0.0 } else { 100.0 * n as f64 / d as f64 };
    format!("{n}/{d} ({pct:.1}%)")
}

/// Corpus-level text summary. Only the latest run per model counts, and
/// only fault reports belonging to those runs.
pub fn summarize(runs: &[RunReport], faults: &[FaultReportDoc]) -> String {
    let mut latest: BTreeMap<&str, &RunReport> = BTreeMap::new();
    for r in runs {
        let slot = latest.entry(r.model.id.as_str()).or_insert(r);
        if r.run_id > slot.run_id {
            *slot = r;
        }
    }
    let mut out = String::new();
    let total = latest.len();
    let _ = writeln!(out, "models: {total}");
    let count = |pred: &dyn Fn(OutcomeClass) -> bool| latest.values().filter(|r| pred(r.effective_outcome)).count();
    let rows = [
        ("crashed (optimizer)", count(&|c| c == OutcomeClass::OptCrash)),
        ("crashed (run)", count(&|c| c == OutcomeClass::RunCrash)),
        ("malformed", count(&|c| c == OutcomeClass::Malformed)),
        ("divergent", count(&|c| c == OutcomeClass::Divergent)),
        ("warning only", count(&|c| c == OutcomeClass::Warning)),
        ("clean", count(&|c| c == OutcomeClass::Clean)),
    ];
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
    for (label, n) in rows {
        let _ = writeln!(out, "  {label:<width$}  {}", ratio(n, total));
    }

    for task in Task::ALL {
        let in_task: Vec<&&RunReport> = latest.values().filter(|r| r.model.task == task).collect();
        if in_task.is_empty() {
            continue;
        }
        let divergent = in_task
            .iter()
            .filter(|r| r.effective_outcome == OutcomeClass::Divergent)
            .count();
        let crashed = in_task
            .iter()
            .filter(|r| matches!(r.effective_outcome, OutcomeClass::OptCrash | OutcomeClass::RunCrash))
            .count();
        let _ = writeln!(out, "\n[{task}]");
        let _ = writeln!(out, "  divergent  {}", ratio(divergent, in_task.len()));
        let _ = writeln!(out, "  crashed    {}", ratio(crashed, in_task.len()));
    }

    let live: BTreeSet<(&str, &str)> = latest.values().map(|r| (r.model.id.as_str(), r.run_id.as_str())).collect();
    let mut passes: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in latest.values() {
        for p in &r.optimization.applied_passes {
            passes.entry(p.clone()).or_default();
        }
    }
    for f in faults.iter().filter(|f| live.contains(&(f.fault.model_id.as_str(), f.run_id.as_str()))) {
        for name in f.fault.per_pass.keys() {
            passes.entry(name.clone()).or_default();
        }
        for p in &f.fault.attributed_passes {
            passes.entry(p.clone()).or_default().0 += 1;
        }
        for p in &f.fault.excluded_passes {
            passes.entry(p.clone()).or_default().1 += 1;
        }
    }
    let width = passes.keys().map(String::len).max().unwrap_or(4).max(4);
    let _ = writeln!(out, "\nper-pass faults");
    let _ = writeln!(out, "  {:<width$}  {:>10}  {:>8}", "pass", "attributed", "excluded");
    for (name, (a, e)) in &passes {
        let _ = writeln!(out, "  {name:<width$}  {a:>10}  {e:>8}");
    }
    out
}
