//! Outcome classification and single-pass sweeps for fault attribution.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::comparators::{compare_records, Comparison, ComparatorError};
use crate::optimizer::{
    detect_ir_version_change, optimize, validate_model, OptimizeMode, OptimizerBackend,
    OptimizerError, PassRegistry, ValidationResult,
};
use crate::orchestrator::{Dataset, ModelArtifact, OrchestratorError};
use crate::runner::{parse_warning, run_dataset, RunOutput, RunnerBackend, RunnerError, WarningKind};
use crate::types::{
    ComparatorConfig, Evidence, FaultReport, ModelDescriptor, OptStatus, OptimizationResult,
    Outcome, OutcomeClass, PassOutcome, SweepIncomplete, Trigger, WarningFlag,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error("comparison failed: {0}")]
    Comparator(#[from] ComparatorError),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error("original model failed to run: {0}")]
    BaselineFailed(String),
    #[error("inconsistent pipeline stages: {0}")]
    InconsistentStages(String),
    #[error(transparent)]
    Report(#[from] crate::reporting::ReportError),
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

/// How the optimized model's inference stage ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Crashed(String),
}

/// The part of a comparison the classifier needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComparisonSummary {
    pub inputs: usize,
    pub diverged_inputs: usize,
}

impl From<&Comparison> for ComparisonSummary {
    fn from(c: &Comparison) -> Self {
        Self {
            inputs: c.records.len(),
            diverged_inputs: c.records.iter().filter(|r| r.diverged).count(),
        }
    }
}

fn inconsistent(msg: &str) -> Result<Outcome, PipelineError> {
    Err(PipelineError::InconsistentStages(msg.to_string()))
}

/// Map the stages of one evaluation to a primary class plus warning flags.
/// Stages after a failing one must be absent; crash classes drop flags.
pub fn classify_outcome(
    opt: &OptimizationResult,
    validation: Option<&ValidationResult>,
    run: Option<&RunStatus>,
    comparison: Option<&ComparisonSummary>,
    warnings: &BTreeSet<WarningFlag>,
) -> Result<Outcome, PipelineError> {
    if opt.status == OptStatus::Crashed {
        if validation.is_some() || run.is_some() || comparison.is_some() {
            return inconsistent("stages present after an optimizer crash");
        }
        return Ok(Outcome::plain(OutcomeClass::OptCrash));
    }
    let Some(validation) = validation else {
        if run.is_some() || comparison.is_some() {
            return inconsistent("run or comparison present without validation");
        }
        return inconsistent("validation missing after successful optimization");
    };
    if !validation.is_valid() {
        if run.is_some() || comparison.is_some() {
            return inconsistent("stages present after failed validation");
        }
        return Ok(Outcome::plain(OutcomeClass::Malformed));
    }
    match (run, comparison) {
        (None, Some(_)) => inconsistent("comparison present but run absent"),
        (None, None) => inconsistent("run missing after successful validation"),
        (Some(RunStatus::Crashed(_)), Some(_)) => inconsistent("comparison present after a run crash"),
        (Some(RunStatus::Crashed(_)), None) => Ok(Outcome::plain(OutcomeClass::RunCrash)),
        (Some(RunStatus::Completed), None) => inconsistent("comparison missing after a completed run"),
        (Some(RunStatus::Completed), Some(c)) => {
            let class = if c.diverged_inputs > 0 {
                OutcomeClass::Divergent
            } else {
                OutcomeClass::Clean
            };
            Ok(Outcome {
                class,
                flags: warnings.clone(),
            })
        }
    }
}

/// Shared inputs for evaluating optimized variants of one model.
pub struct EvalContext<'a> {
    pub model: &'a ModelDescriptor,
    pub artifact: &'a ModelArtifact,
    pub optimizer: &'a dyn OptimizerBackend,
    pub runner: &'a dyn RunnerBackend,
    pub registry: &'a PassRegistry,
    pub comparator: &'a ComparatorConfig,
    pub chunks: usize,
    /// Optimized models go to `<opt_root>/<pass-or-bundle>/model.onnx`.
    pub opt_root: PathBuf,
}

/// Original-model run every variant is compared against.
#[derive(Debug, Clone)]
pub struct Baseline {
    pub dataset: Dataset,
    pub run: RunOutput,
}

impl Baseline {
    fn unused_initializers(&self) -> BTreeSet<String> {
        all_warnings(&self.run)
            .filter_map(|w| {
                let p = parse_warning(None, w);
                (p.kind == WarningKind::UnusedInitializer).then_some(p.subject).flatten()
            })
            .collect()
    }

    /// Baseline restricted to `ids`.
    fn subset(&self, ids: &BTreeSet<String>) -> Baseline {
        Baseline {
            dataset: self.dataset.subset(ids),
            run: RunOutput {
                records: self
                    .run
                    .records
                    .iter()
                    .filter(|r| ids.contains(&r.input_id))
                    .cloned()
                    .collect(),
                session_warnings: self.run.session_warnings.clone(),
            },
        }
    }
}

fn all_warnings(run: &RunOutput) -> impl Iterator<Item = &String> {
    run.session_warnings
        .iter()
        .chain(run.records.iter().flat_map(|r| r.runtime_warnings.iter()))
}

pub fn run_baseline(ctx: &EvalContext<'_>, dataset: Dataset) -> Result<Baseline, PipelineError> {
    match run_dataset(ctx.runner, ctx.artifact, &dataset, ctx.chunks, &ctx.model.preprocess, ctx.model.task) {
        Ok(run) => Ok(Baseline { dataset, run }),
        Err(RunnerError::RunCrash(d)) => Err(PipelineError::BaselineFailed(d)),
        Err(e) => Err(e.into()),
    }
}

/// Everything observed while evaluating one optimization mode.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub mode: OptimizeMode,
    pub outcome: Outcome,
    pub evidence: Evidence,
    pub optimization: OptimizationResult,
    pub validation: Option<ValidationResult>,
    pub run: Option<RunOutput>,
    pub comparison: Option<Comparison>,
    /// Warnings new relative to the baseline, verbatim.
    pub new_warnings: Vec<String>,
}

/// Optimize, validate, run and compare one variant against the baseline.
pub fn evaluate(
    ctx: &EvalContext<'_>,
    baseline: &Baseline,
    mode: &OptimizeMode,
) -> Result<Evaluation, PipelineError> {
    let out = ctx.opt_root.join(mode.label()).join("model.onnx");
    let opt = optimize(ctx.optimizer, ctx.registry, ctx.artifact, mode, &out)?;
    let mut evidence = Evidence::default();
    let mut eval = Evaluation {
        mode: mode.clone(),
        outcome: Outcome::clean(),
        evidence: Evidence::default(),
        optimization: opt,
        validation: None,
        run: None,
        comparison: None,
        new_warnings: Vec::new(),
    };
    let no_flags = BTreeSet::new();
    let Some(optimized) = eval.optimization.optimized_model.clone() else {
        evidence.diagnostics = Some(eval.optimization.diagnostics.clone());
        eval.outcome = classify_outcome(&eval.optimization, None, None, None, &no_flags)?;
        eval.evidence = evidence;
        return Ok(eval);
    };

    let validation = validate_model(ctx.optimizer, &optimized)?;
    if let ValidationResult::Malformed(reasons) = &validation {
        evidence.validation_reasons = reasons.clone();
        eval.outcome = classify_outcome(&eval.optimization, Some(&validation), None, None, &no_flags)?;
        eval.validation = Some(validation);
        eval.evidence = evidence;
        return Ok(eval);
    }
    eval.validation = Some(validation);

    let run = match run_dataset(
        ctx.runner,
        &optimized,
        &baseline.dataset,
        ctx.chunks,
        &ctx.model.preprocess,
        ctx.model.task,
    ) {
        Ok(run) => run,
        Err(RunnerError::RunCrash(diag)) => {
            let status = RunStatus::Crashed(diag.clone());
            eval.outcome =
                classify_outcome(&eval.optimization, eval.validation.as_ref(), Some(&status), None, &no_flags)?;
            evidence.diagnostics = Some(diag);
            eval.evidence = evidence;
            return Ok(eval);
        }
        Err(e) => return Err(e.into()),
    };

    let comparison = compare_records(ctx.model.task, &baseline.run.records, &run.records, ctx.comparator)?;

    let mut flags = BTreeSet::new();
    let known = baseline.unused_initializers();
    let mut seen = BTreeSet::new();
    for w in all_warnings(&run) {
        let parsed = parse_warning(None, w);
        if parsed.kind == WarningKind::UnusedInitializer
            && parsed.subject.as_ref().is_some_and(|s| !known.contains(s))
            && seen.insert(w.clone())
        {
            flags.insert(WarningFlag::UnusedInitializer);
            eval.new_warnings.push(w.clone());
        }
    }
    if let Some(change) = detect_ir_version_change(&eval.optimization) {
        flags.insert(WarningFlag::IrVersionChange);
        eval.new_warnings.push(change.to_string());
    }

    let summary = ComparisonSummary::from(&comparison);
    eval.outcome = classify_outcome(
        &eval.optimization,
        eval.validation.as_ref(),
        Some(&RunStatus::Completed),
        Some(&summary),
        &flags,
    )?;
    if !eval.outcome.is_clean() {
        evidence.diverged_inputs = comparison.diverged_ids();
        evidence.warnings = eval.new_warnings.clone();
    }
    eval.evidence = evidence;
    eval.run = Some(run);
    eval.comparison = Some(comparison);
    Ok(eval)
}

/// Sweep parameters.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub workers: usize,
    /// Extra non-diverged inputs per pass; `None` uses the whole dataset.
    pub sample_size: Option<usize>,
    pub seed: u64,
}

/// Input ids the sweep re-runs: the diverged ones plus a seeded sample.
pub fn sweep_inputs(dataset: &Dataset, diverged: &[String], sample: Option<usize>, seed: u64) -> BTreeSet<String> {
    let mut ids: BTreeSet<String> = diverged.iter().cloned().collect();
    match sample {
        None => ids.extend(dataset.inputs.iter().map(|i| i.id.clone())),
        Some(n) => {
            let mut rest: Vec<&String> = dataset
                .inputs
                .iter()
                .map(|i| &i.id)
                .filter(|id| !ids.contains(*id))
                .collect();
            rest.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            ids.extend(rest.into_iter().take(n).cloned());
        }
    }
    ids
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))
}

/// Apply every registry pass alone to the original model and attribute the
/// non-clean ones. Never stops early; a backend failure marks the report
/// incomplete at the lowest failing pass index.
pub fn localize(
    ctx: &EvalContext<'_>,
    baseline: &Baseline,
    trigger: Trigger,
    sweep: &SweepConfig,
) -> Result<FaultReport, PipelineError> {
    let ids = sweep_inputs(&baseline.dataset, &trigger.evidence.diverged_inputs, sweep.sample_size, sweep.seed);
    let sub = baseline.subset(&ids);
    if sub.dataset.is_empty() {
        return Err(PipelineError::InconsistentStages("sweep dataset is empty".into()));
    }
    let passes: Vec<(usize, &crate::types::PassSpec)> = ctx.registry.iter().enumerate().collect();
    let results: Vec<(usize, String, Result<Evaluation, PipelineError>)> = pool(sweep.workers)?.install(|| {
        passes
            .par_iter()
            .map(|(i, spec)| (*i, spec.name.clone(), evaluate(ctx, &sub, &OptimizeMode::single(&spec.name))))
            .collect()
    });

    let mut per_pass = BTreeMap::new();
    let mut incomplete: Option<SweepIncomplete> = None;
    for (index, name, result) in results {
        let spec = ctx.registry.get(&name).expect("pass from registry");
        match result {
            Ok(eval) => {
                per_pass.insert(
                    name,
                    PassOutcome {
                        category: spec.category,
                        known_unstable: spec.known_unstable,
                        outcome: eval.outcome,
                        evidence: eval.evidence,
                    },
                );
            }
            Err(e) => {
                log::error!("sweep of pass '{name}' failed: {e}");
                if incomplete.as_ref().is_none_or(|i| index < i.failed_pass_index) {
                    incomplete = Some(SweepIncomplete {
                        failed_pass_index: index,
                        failed_pass: name,
                        reason: e.to_string(),
                    });
                }
            }
        }
    }
    let (mut attributed_passes, mut excluded_passes) = (Vec::new(), Vec::new());
    for spec in ctx.registry.iter() {
        match per_pass.get(&spec.name) {
            Some(p) if !p.outcome.is_clean() => {
                if spec.known_unstable {
                    excluded_passes.push(spec.name.clone());
                } else {
                    attributed_passes.push(spec.name.clone());
                }
            }
            _ => {}
        }
    }
    Ok(FaultReport {
        model_id: ctx.model.id.clone(),
        trigger,
        per_pass,
        attributed_passes,
        excluded_passes,
        incomplete,
    })
}

/// `<output_dir>/<model_id>/opt`
pub fn opt_root(output_dir: &Path, model_id: &str) -> PathBuf {
    output_dir.join(model_id).join("opt")
}
