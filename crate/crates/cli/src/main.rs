use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use difftox_core::localizer::PipelineError;
use difftox_core::optimizer::{list_passes, OptimizeMode, ReferenceOptimizer};
use difftox_core::orchestrator::{
    default_cache_root, load_dataset, load_run_config, HubClient, RunConfig,
    DEFAULT_HUB_BASE, DEFAULT_OPTIMIZER_TIMEOUT_SECS,
};
use difftox_core::pipeline::{
    build_backends, resolve_registry, run_model, LocalizePolicy, ModelResult, RunOptions,
};
use difftox_core::reporting::{load_reports, summarize};

const EXIT_CLEAN: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_FAULTS: u8 = 2;

/// Differential testing and per-pass fault localization for model optimizers.
#[derive(Parser)]
#[command(name = "difftox", version)]
struct Cli {
    /// Parallel optimizer/runner invocations (default: number of cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download a hub model into the local cache.
    Fetch {
        model: String,
        #[arg(long)]
        opset: Option<u32>,
        /// Hub base URL (directory holding the manifest).
        #[arg(long)]
        hub: Option<String>,
    },
    /// Print the optimizer's passes, one per line.
    ListPasses {
        /// Use the optimizer backend of this run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate every configured model and localize faults.
    Run(RunArgs),
    /// Sweep all passes for one model regardless of its bundle outcome.
    Localize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: String,
    },
    /// Summarize reports found under a directory.
    Report {
        #[arg(long)]
        summary: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Number of dataset chunks (overrides the config).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    chunks: Option<u64>,
    /// Comma-separated pass list instead of the default bundle.
    #[arg(long, value_delimiter = ',', conflicts_with = "default")]
    passes: Option<Vec<String>>,
    /// Apply the optimizer's default bundle (the default).
    #[arg(long)]
    default: bool,
    /// Skip the per-pass sweep after a non-clean outcome.
    #[arg(long)]
    no_localize: bool,
}

fn options(cli_workers: Option<u64>, config: &RunConfig) -> RunOptions {
    let mut o = RunOptions::from_config(config);
    if let Some(w) = cli_workers {
        o.workers = w as usize;
    }
    o
}

fn report_results(results: &[ModelResult]) -> u8 {
    for r in results {
        let attributed = r
            .fault_report
            .as_ref()
            .map(|(_, d)| d.fault.attributed_passes.join(","))
            .unwrap_or_default();
        println!(
            "{}\t{}\t{}\t{}",
            r.run_report.model.id,
            r.run_report.effective_outcome,
            if attributed.is_empty() { "-" } else { &attributed },
            r.run_report_path.display()
        );
        if let Some((path, _)) = &r.fault_report {
            println!("{}\tfault report\t{}", r.run_report.model.id, path.display());
        }
    }
    if results.iter().all(ModelResult::is_clean) {
        EXIT_CLEAN
    } else {
        EXIT_FAULTS
    }
}

fn run(cli: Cli) -> Result<u8, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Fetch { model, opset, hub } => {
            let client = HubClient::new(hub.as_deref().unwrap_or(DEFAULT_HUB_BASE), default_cache_root());
            let artifact = client.fetch(&model, opset)?;
            println!("{}\t{}", artifact.path.display(), artifact.digest);
            Ok(EXIT_CLEAN)
        }
        Command::ListPasses { config } => {
            let registry = match config {
                Some(path) => {
                    let config = load_run_config(&path)?;
                    let backends = build_backends(&config, &default_cache_root())?;
                    list_passes(backends.optimizer.as_ref())?
                }
                None => {
                    let backend = ReferenceOptimizer::new(
                        None,
                        &default_cache_root(),
                        Duration::from_secs(DEFAULT_OPTIMIZER_TIMEOUT_SECS),
                    )?;
                    list_passes(&backend)?
                }
            };
            let mut out = std::io::stdout().lock();
            for p in registry.iter() {
                let mut flags = Vec::new();
                if p.in_default_bundle {
                    flags.push("default");
                }
                if p.known_unstable {
                    flags.push("unstable");
                }
                // A closed pipe (e.g. `| head`) ends the listing quietly.
                if writeln!(out, "{}\t{}\t{}", p.name, p.category, flags.join(",")).is_err() {
                    break;
                }
            }
            Ok(EXIT_CLEAN)
        }
        Command::Run(args) => {
            let mut config = load_run_config(&args.config)?;
            if let Some(n) = args.chunks {
                config.chunks = n as usize;
            }
            let mut opts = options(cli.workers, &config);
            if let Some(passes) = args.passes {
                opts.mode = OptimizeMode::PassList(passes);
            }
            if args.no_localize {
                opts.localize = LocalizePolicy::Never;
            }
            let backends = build_backends(&config, &opts.cache_root)?;
            let registry = resolve_registry(&config, backends.optimizer.as_ref())?;
            let dataset = load_dataset(&config.dataset)?;
            let results = config
                .models
                .iter()
                .map(|m| run_model(&config, &backends, &registry, m, &dataset, &opts))
                .collect::<Result<Vec<_>, PipelineError>>()?;
            Ok(report_results(&results))
        }
        Command::Localize { config, model } => {
            let config = load_run_config(&config)?;
            let descriptor = config
                .model(&model)
                .ok_or_else(|| format!("model '{model}' not in configuration"))?
                .clone();
            let mut opts = options(cli.workers, &config);
            opts.localize = LocalizePolicy::Always;
            let backends = build_backends(&config, &opts.cache_root)?;
            let registry = resolve_registry(&config, backends.optimizer.as_ref())?;
            let dataset = load_dataset(&config.dataset)?;
            let result = run_model(&config, &backends, &registry, &descriptor, &dataset, &opts)?;
            Ok(report_results(&[result]))
        }
        Command::Report { summary } => {
            let loaded = load_reports(&summary)?;
            if loaded.runs.is_empty() {
                return Err(format!("no run reports under {}", summary.display()).into());
            }
            let _ = std::io::stdout().lock().write_all(summarize(&loaded.runs, &loaded.faults).as_bytes());
            Ok(EXIT_CLEAN)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_CLEAN };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
