use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;

use super::preprocess::{preprocess_image, preprocess_text, write_npy};
use super::{BatchOutput, RunnerBackend, RunnerError};
use crate::orchestrator::{ModelArtifact, RawContent, RawInput};
use crate::process;
use crate::types::{InferenceRecord, Payload, PreprocessConfig, Task};

/// Leading `YYYY-MM-DD HH:MM:SS.fff ` stamps that would defeat deduplication.
static LOG_TIMESTAMP: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\d{4}-\d{2}-\d{2}[ T]\d{2}:\d{2}:\d{2}(\.\d+)?\s*").expect("static regex")
});

/// Terminal color sequences some runtimes emit even when not on a tty.
static ANSI_ESCAPE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\x1b\[[0-9;]*[A-Za-z]").expect("static regex"));

fn normalize_log_line(line: &str) -> String {
    let plain = ANSI_ESCAPE.replace_all(line, "");
    LOG_TIMESTAMP.replace(plain.trim(), "").into_owned()
}

/// Adapter program speaking the runner protocol:
/// `--model <p> --inputs <batch-file> --task <t> --out <records-file>`.
#[derive(Debug, Clone)]
pub struct ExternalRunner {
    id: String,
    program: String,
    args: Vec<String>,
    timeout: Duration,
}

impl ExternalRunner {
    pub fn new(program: impl Into<String>, args: Vec<String>, timeout: Duration) -> Self {
        let program = program.into();
        Self {
            id: format!("external:{program}"),
            program,
            args,
            timeout,
        }
    }

    /// Write one prepared input under `dir`, returning its location.
    fn prepare(
        &self,
        input: &RawInput,
        index: usize,
        dir: &Path,
        pre: &PreprocessConfig,
    ) -> Result<String, String> {
        match &input.content {
            RawContent::Image { path } => {
                let cfg = pre.image.clone().unwrap_or_default();
                let tensor = preprocess_image(path, &cfg)?;
                let dest = dir.join(format!("{index}.npy"));
                let file = fs::File::create(&dest).map_err(|e| e.to_string())?;
                let mut w = BufWriter::new(file);
                write_npy(&mut w, &tensor).map_err(|e| e.to_string())?;
                w.flush().map_err(|e| e.to_string())?;
                Ok(dest.to_string_lossy().into_owned())
            }
            RawContent::Text { fields } => {
                let cfg = pre.text.clone().unwrap_or_default();
                let text = preprocess_text(fields, &cfg, pre.max_new_tokens);
                let dest = dir.join(format!("{index}.json"));
                let json = serde_json::to_vec(&text).map_err(|e| e.to_string())?;
                fs::write(&dest, json).map_err(|e| e.to_string())?;
                Ok(dest.to_string_lossy().into_owned())
            }
        }
    }
}

impl RunnerBackend for ExternalRunner {
    fn id(&self) -> &str {
        &self.id
    }

    fn run_batch(
        &self,
        model: &ModelArtifact,
        inputs: &[RawInput],
        task: Task,
        pre: &PreprocessConfig,
    ) -> Result<BatchOutput, RunnerError> {
        let work = tempfile::Builder::new().prefix("difftox-run").tempdir()?;
        let mut batch = String::new();
        let mut failed = Vec::new();
        for (i, input) in inputs.iter().enumerate() {
            if input.id.contains(['\t', '\n']) {
                failed.push(InferenceRecord::new(
                    &input.id,
                    Payload::Error {
                        message: "input id contains a tab or newline".into(),
                    },
                ));
                continue;
            }
            match self.prepare(input, i, work.path(), pre) {
                Ok(loc) => batch.push_str(&format!("{}\t{loc}\n", input.id)),
                Err(message) => failed.push(InferenceRecord::new(&input.id, Payload::Error { message })),
            }
        }
        let mut records = failed;
        let mut session_warnings = Vec::new();
        if !batch.is_empty() {
            let batch_path = work.path().join("batch.tsv");
            let out_path = work.path().join("records.json");
            fs::write(&batch_path, batch)?;
            let mut args = self.args.clone();
            for (flag, value) in [
                ("--model", model.path.to_string_lossy().into_owned()),
                ("--inputs", batch_path.to_string_lossy().into_owned()),
                ("--task", task.as_str().to_string()),
                ("--out", out_path.to_string_lossy().into_owned()),
            ] {
                args.push(flag.to_string());
                args.push(value);
            }
            let out = process::run(&self.program, &args, self.timeout)
                .map_err(|e| RunnerError::BackendUnavailable(format!("{}: {e}", self.program)))?;
            if !out.success() {
                return Err(RunnerError::RunCrash(out.crash_diagnostics()));
            }
            let bytes = fs::read(&out_path)
                .map_err(|e| RunnerError::Protocol(format!("records file missing: {e}")))?;
            let produced: Vec<InferenceRecord> = serde_json::from_slice(&bytes)
                .map_err(|e| RunnerError::Protocol(format!("records file unparsable: {e}")))?;
            records.extend(produced);
            session_warnings = out
                .stderr_text()
                .lines()
                .map(normalize_log_line)
                .filter(|l| !l.is_empty())
                .collect();
        }
        Ok(BatchOutput {
            records,
            session_warnings,
        })
    }
}

/// The bundled onnxruntime adapter under a Python interpreter.
#[derive(Debug, Clone)]
pub struct ReferenceRunner(ExternalRunner);

impl ReferenceRunner {
    pub fn new(python: Option<&str>, cache_root: &Path, timeout: Duration) -> Result<Self, RunnerError> {
        let script =
            process::materialize_adapter(cache_root, "onnx_runner_adapter.py", process::RUNNER_ADAPTER)?;
        let mut inner = ExternalRunner::new(
            python.unwrap_or("python3"),
            vec![script.to_string_lossy().into_owned()],
            timeout,
        );
        inner.id = "reference:onnxruntime".to_string();
        Ok(Self(inner))
    }
}

impl RunnerBackend for ReferenceRunner {
    fn id(&self) -> &str {
        self.0.id()
    }

    fn run_batch(
        &self,
        model: &ModelArtifact,
        inputs: &[RawInput],
        task: Task,
        pre: &PreprocessConfig,
    ) -> Result<BatchOutput, RunnerError> {
        self.0.run_batch(model, inputs, task, pre)
    }
}
