use std::path::Path;
use std::time::Duration;

use super::{BackendRun, OptimizerBackend, OptimizerError, PassListing, PassRequest, ValidationResult};
use crate::process;

/// Pass catalogue pinned for the reference optimizer, in registry order.
pub const REFERENCE_PASSES: &[&str] = &[
    "adjust_add",
    "rename_input_output",
    "set_unique_name_for_nodes",
    "nop",
    "eliminate_nop_cast",
    "eliminate_nop_dropout",
    "eliminate_nop_flatten",
    "extract_constant_to_initializer",
    "eliminate_consecutive_idempotent_ops",
    "eliminate_if_with_const_cond",
    "eliminate_nop_monotone_argmax",
    "eliminate_nop_pad",
    "eliminate_nop_concat",
    "eliminate_nop_split",
    "eliminate_nop_expand",
    "eliminate_shape_gather",
    "eliminate_slice_after_shape",
    "eliminate_nop_transpose",
    "fuse_add_bias_into_conv",
    "fuse_bn_into_conv",
    "fuse_consecutive_concats",
    "fuse_consecutive_log_softmax",
    "fuse_consecutive_reduce_unsqueeze",
    "fuse_consecutive_squeezes",
    "fuse_consecutive_transposes",
    "fuse_matmul_add_bias_into_gemm",
    "fuse_pad_into_conv",
    "fuse_pad_into_pool",
    "fuse_transpose_into_gemm",
    "replace_einsum_with_matmul",
    "lift_lexical_references",
    "split_init",
    "split_predict",
    "fuse_concat_into_reshape",
    "eliminate_nop_reshape",
    "eliminate_nop_with_unit",
    "eliminate_common_subexpression",
    "fuse_qkv",
    "fuse_consecutive_unsqueezes",
    "eliminate_deadend",
    "eliminate_identity",
    "eliminate_shape_op",
    "fuse_consecutive_slices",
    "eliminate_unused_initializer",
    "eliminate_duplicate_initializer",
    "adjust_slice_and_matmul",
    "rewrite_input_dtype",
];

/// Set to `1` to also list reference-optimizer passes outside the pinned catalogue.
pub const INCLUDE_NEW_PASSES_ENV: &str = "DIFFTOX_INCLUDE_NEW_PASSES";

/// Exit code an adapter uses for `--check` on a malformed model.
const CHECK_MALFORMED_EXIT: i32 = 3;

/// Any adapter program speaking the optimizer protocol:
/// `--input <p> --output <p> (--passes a,b | --default)`, `--list-passes`
/// and `--check <p>`.
#[derive(Debug, Clone)]
pub struct ExternalOptimizer {
    id: String,
    program: String,
    args: Vec<String>,
    timeout: Duration,
}

impl ExternalOptimizer {
    pub fn new(program: impl Into<String>, args: Vec<String>, timeout: Duration) -> Self {
        let program = program.into();
        Self {
            id: format!("external:{program}"),
            program,
            args,
            timeout,
        }
    }

    fn invoke(&self, extra: &[String]) -> Result<process::ProcOutput, OptimizerError> {
        let mut args = self.args.clone();
        args.extend_from_slice(extra);
        process::run(&self.program, &args, self.timeout)
            .map_err(|e| OptimizerError::BackendUnavailable(format!("{}: {e}", self.program)))
    }
}

fn path_arg(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

impl OptimizerBackend for ExternalOptimizer {
    fn id(&self) -> &str {
        &self.id
    }

    fn list_passes(&self) -> Result<Vec<PassListing>, OptimizerError> {
        let out = self.invoke(&["--list-passes".to_string()])?;
        if !out.success() {
            return Err(OptimizerError::BackendUnavailable(format!(
                "--list-passes failed: {}",
                out.crash_diagnostics()
            )));
        }
        Ok(out.stdout_text().lines().filter_map(PassListing::parse_line).collect())
    }

    fn run_optimizer(
        &self,
        input: &Path,
        output: &Path,
        request: PassRequest<'_>,
    ) -> Result<BackendRun, OptimizerError> {
        let mut args = vec![
            "--input".to_string(),
            path_arg(input),
            "--output".to_string(),
            path_arg(output),
        ];
        match request {
            PassRequest::Default => args.push("--default".into()),
            PassRequest::Passes(p) => {
                args.push("--passes".into());
                args.push(p.join(","));
            }
        }
        let out = self.invoke(&args)?;
        if out.success() {
            Ok(BackendRun {
                success: true,
                diagnostics: out.stderr_text(),
            })
        } else {
            Ok(BackendRun {
                success: false,
                diagnostics: out.crash_diagnostics(),
            })
        }
    }

    fn check(&self, model: &Path) -> Result<ValidationResult, OptimizerError> {
        let out = self.invoke(&["--check".to_string(), path_arg(model)])?;
        if out.success() {
            return Ok(ValidationResult::Valid);
        }
        if out.timed_out {
            return Err(OptimizerError::BackendUnavailable("--check timed out".into()));
        }
        let mut reasons: Vec<String> = out
            .stdout_text()
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        if reasons.is_empty() || out.code != Some(CHECK_MALFORMED_EXIT) {
            reasons.push(out.crash_diagnostics());
        }
        Ok(ValidationResult::Malformed(reasons))
    }
}

/// The bundled onnxoptimizer adapter run under a Python interpreter.
#[derive(Debug, Clone)]
pub struct ReferenceOptimizer {
    inner: ExternalOptimizer,
    include_new: bool,
}

impl ReferenceOptimizer {
    pub fn new(python: Option<&str>, cache_root: &Path, timeout: Duration) -> Result<Self, OptimizerError> {
        let script = process::materialize_adapter(
            cache_root,
            "onnx_optimizer_adapter.py",
            process::OPTIMIZER_ADAPTER,
        )
        .map_err(|e| OptimizerError::Io(cache_root.to_path_buf(), e))?;
        let python = python.unwrap_or("python3");
        let mut inner = ExternalOptimizer::new(python, vec![path_arg(&script)], timeout);
        inner.id = "reference:onnxoptimizer".to_string();
        Ok(Self {
            inner,
            include_new: std::env::var(INCLUDE_NEW_PASSES_ENV).is_ok_and(|v| v == "1"),
        })
    }
}

impl OptimizerBackend for ReferenceOptimizer {
    fn id(&self) -> &str {
        self.inner.id()
    }

    /// Installed passes restricted to the pinned catalogue, in catalogue
    /// order, followed by any newer passes when explicitly requested.
    fn list_passes(&self) -> Result<Vec<PassListing>, OptimizerError> {
        let installed = self.inner.list_passes()?;
        let mut listed: Vec<PassListing> = REFERENCE_PASSES
            .iter()
            .filter_map(|name| installed.iter().find(|l| l.name == *name).cloned())
            .collect();
        if listed.len() < REFERENCE_PASSES.len() {
            log::warn!(
                "installed optimizer provides {} of {} catalogued passes",
                listed.len(),
                REFERENCE_PASSES.len()
            );
        }
        let newer = installed
            .into_iter()
            .filter(|l| !REFERENCE_PASSES.contains(&l.name.as_str()));
        if self.include_new {
            listed.extend(newer);
        } else {
            for l in newer {
                log::info!("skipping uncatalogued pass '{}'", l.name);
            }
        }
        Ok(listed)
    }

    fn run_optimizer(
        &self,
        input: &Path,
        output: &Path,
        request: PassRequest<'_>,
    ) -> Result<BackendRun, OptimizerError> {
        self.inner.run_optimizer(input, output, request)
    }

    fn check(&self, model: &Path) -> Result<ValidationResult, OptimizerError> {
        self.inner.check(model)
    }
}
