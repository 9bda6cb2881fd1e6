//! End-to-end driver: acquire a model, run the original, evaluate an
//! optimization mode, write the run report and, on a non-clean outcome,
//! sweep the passes and write the fault report.

use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::localizer::{
    evaluate, localize, opt_root, run_baseline, EvalContext, PipelineError, SweepConfig,
};
use crate::mock::{MockOptimizer, MockRunner};
use crate::optimizer::{
    default_workers, list_passes, ExternalOptimizer, OptimizeMode, OptimizerBackend, PassRegistry,
    ReferenceOptimizer,
};
use crate::orchestrator::{
    default_cache_root, load_dataset, load_local_model, BackendConfig, Dataset, HubClient, ModelArtifact,
    OrchestratorError, RunConfig, DEFAULT_HUB_BASE, DEFAULT_OPTIMIZER_TIMEOUT_SECS,
};
use crate::reporting::{
    emit_fault_report, emit_run_report, new_run_id, BackendIds, FaultReportDoc, RunReport,
};
use crate::runner::{ExternalRunner, ReferenceRunner, RunnerBackend};
use crate::types::{ModelDescriptor, ModelSource, OutcomeClass, Trigger};

pub struct Backends {
    pub optimizer: Box<dyn OptimizerBackend>,
    pub runner: Box<dyn RunnerBackend>,
}

fn timeout(secs: Option<u64>) -> Duration {
    Duration::from_secs(secs.unwrap_or(DEFAULT_OPTIMIZER_TIMEOUT_SECS))
}

pub fn build_backends(config: &RunConfig, cache_root: &Path) -> Result<Backends, PipelineError> {
    let optimizer: Box<dyn OptimizerBackend> = match &config.optimizer_backend {
        BackendConfig::External { program, args, timeout_secs } => {
            Box::new(ExternalOptimizer::new(program.clone(), args.clone(), timeout(*timeout_secs)))
        }
        BackendConfig::Reference { python, timeout_secs } => Box::new(ReferenceOptimizer::new(
            python.as_deref(),
            cache_root,
            timeout(*timeout_secs),
        )?),
        BackendConfig::Mock { scenario } => {
            scenario
                .validate()
                .map_err(|e| OrchestratorError::Config(format!("mock scenario: {e}")))?;
            Box::new(MockOptimizer::new(scenario.clone()))
        }
    };
    let runner: Box<dyn RunnerBackend> = match &config.runner_backend {
        BackendConfig::External { program, args, timeout_secs } => {
            Box::new(ExternalRunner::new(program.clone(), args.clone(), timeout(*timeout_secs)))
        }
        BackendConfig::Reference { python, timeout_secs } => Box::new(ReferenceRunner::new(
            python.as_deref(),
            cache_root,
            timeout(*timeout_secs),
        )?),
        BackendConfig::Mock { .. } => Box::new(MockRunner),
    };
    Ok(Backends { optimizer, runner })
}

/// Query the optimizer's passes and check the configured subset.
pub fn resolve_registry(config: &RunConfig, optimizer: &dyn OptimizerBackend) -> Result<PassRegistry, PipelineError> {
    let registry = list_passes(optimizer)?;
    config.check_pass_subset(&registry)?;
    Ok(registry)
}

/// Local file or verified hub download, checked against the descriptor's checksum.
pub fn acquire_model(
    model: &ModelDescriptor,
    hub_base: Option<&str>,
    cache_root: &Path,
) -> Result<ModelArtifact, OrchestratorError> {
    let artifact = match &model.source {
        ModelSource::Path(p) => load_local_model(p)?,
        ModelSource::Hub { name, opset } => {
            HubClient::new(hub_base.unwrap_or(DEFAULT_HUB_BASE), cache_root).fetch(name, opset.or(Some(model.opset)))?
        }
    };
    if let Some(expected) = &model.checksum {
        if !expected.eq_ignore_ascii_case(&artifact.digest) {
            return Err(OrchestratorError::ChecksumMismatch {
                model: model.id.clone(),
                expected: expected.clone(),
                actual: artifact.digest.clone(),
            });
        }
    }
    Ok(artifact)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalizePolicy {
    /// Sweep only after a non-clean outcome.
    OnFault,
    Never,
    Always,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: OptimizeMode,
    pub chunks: usize,
    pub workers: usize,
    pub localize: LocalizePolicy,
    pub cache_root: PathBuf,
}

impl RunOptions {
    pub fn from_config(config: &RunConfig) -> Self {
        Self {
            mode: OptimizeMode::DefaultBundle,
            chunks: config.chunks,
            workers: config.workers.unwrap_or_else(default_workers),
            localize: LocalizePolicy::OnFault,
            cache_root: default_cache_root(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelResult {
    pub run_report_path: PathBuf,
    pub run_report: RunReport,
    pub fault_report: Option<(PathBuf, FaultReportDoc)>,
}

impl ModelResult {
    pub fn is_clean(&self) -> bool {
        self.run_report.effective_outcome == OutcomeClass::Clean
            && self
                .fault_report
                .as_ref()
                .is_none_or(|(_, d)| d.fault.attributed_passes.is_empty())
    }
}

/// Evaluate one model end to end and write its reports.
pub fn run_model(
    config: &RunConfig,
    backends: &Backends,
    registry: &PassRegistry,
    model: &ModelDescriptor,
    dataset: &Dataset,
    options: &RunOptions,
) -> Result<ModelResult, PipelineError> {
    let artifact = acquire_model(model, config.hub_base.as_deref(), &options.cache_root)?;
    let comparator = config.comparator_for(model);
    let sweep_registry = match &config.pass_subset {
        Some(names) => registry.subset(names)?,
        None => registry.clone(),
    };
    let ctx = EvalContext {
        model,
        artifact: &artifact,
        optimizer: backends.optimizer.as_ref(),
        runner: backends.runner.as_ref(),
        registry,
        comparator: &comparator,
        chunks: options.chunks,
        opt_root: opt_root(&config.output_dir, &model.id),
    };
    let baseline = run_baseline(&ctx, dataset.clone())?;
    let eval = evaluate(&ctx, &baseline, &options.mode)?;
    let run_id = new_run_id(&model.id);
    let backend_ids = BackendIds {
        optimizer: backends.optimizer.id().to_string(),
        runner: backends.runner.id().to_string(),
    };
    let run_report = RunReport::build(
        &run_id,
        model,
        backend_ids,
        comparator.max_k(),
        &baseline.run.records,
        &baseline.run.session_warnings,
        &dataset.warnings,
        &eval,
    )
    .map_err(PipelineError::from)?;
    let run_report_path = emit_run_report(&config.output_dir, &run_report)?;
    log::info!("{}: {} ({})", model.id, eval.outcome.effective_class(), run_report_path.display());

    let sweep = match options.localize {
        LocalizePolicy::Never => false,
        LocalizePolicy::Always => true,
        LocalizePolicy::OnFault => !eval.outcome.is_clean(),
    };
    let fault_report = if sweep {
        let sweep_ctx = EvalContext {
            registry: &sweep_registry,
            ..ctx
        };
        let trigger = Trigger {
            outcome: eval.outcome.clone(),
            evidence: eval.evidence.clone(),
        };
        let settings = SweepConfig {
            workers: options.workers,
            sample_size: config.localization.sample_size,
            seed: config.localization.seed,
        };
        let fault = localize(&sweep_ctx, &baseline, trigger, &settings)?;
        let order: Vec<String> = sweep_registry.names().map(String::from).collect();
        let doc = FaultReportDoc::new(&run_id, fault, &order)?;
        let path = emit_fault_report(&config.output_dir, &doc)?;
        log::info!(
            "{}: attributed [{}] ({})",
            model.id,
            doc.fault.attributed_passes.join(", "),
            path.display()
        );
        Some((path, doc))
    } else {
        None
    };
    Ok(ModelResult {
        run_report_path,
        run_report,
        fault_report,
    })
}

/// Load the dataset, resolve the registry and run every configured model.
pub fn run_config(config: &RunConfig, options: &RunOptions) -> Result<Vec<ModelResult>, PipelineError> {
    let backends = build_backends(config, &options.cache_root)?;
    let registry = resolve_registry(config, backends.optimizer.as_ref())?;
    let dataset = load_dataset(&config.dataset)?;
    config
        .models
        .iter()
        .map(|m| run_model(config, &backends, &registry, m, &dataset, options))
        .collect()
}
