//! Child-process plumbing shared by the external optimizer and runner adapters.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::Duration;

use wait_timeout::ChildExt;

#[derive(Debug, Clone)]
pub(crate) struct ProcOutput {
    /// `None` when killed by a signal or by the timeout.
    pub code: Option<i32>,
    pub timed_out: bool,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
}

impl ProcOutput {
    pub fn success(&self) -> bool {
        !self.timed_out && self.code == Some(0)
    }

    pub fn stdout_text(&self) -> String {
        String::from_utf8_lossy(&self.stdout).into_owned()
    }

    pub fn stderr_text(&self) -> String {
        String::from_utf8_lossy(&self.stderr).into_owned()
    }

    /// Error stream verbatim, with a trailer naming how the process ended.
    pub fn crash_diagnostics(&self) -> String {
        let mut text = self.stderr_text();
        if self.timed_out {
            if !text.is_empty() && !text.ends_with('\n') {
                text.push('\n');
            }
            text.push_str("timeout");
            return text;
        }
        if text.trim().is_empty() {
            let out = self.stdout_text();
            text = out;
        }
        if !text.is_empty() && !text.ends_with('\n') {
            text.push('\n');
        }
        match self.code {
            Some(c) => text.push_str(&format!("exit status {c}")),
            None => text.push_str("terminated by signal"),
        }
        text
    }
}

fn drain<R: Read + Send + 'static>(mut r: R) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = r.read_to_end(&mut buf);
        buf
    })
}

/// Run `program args...` to completion or until `timeout` elapses.
/// Spawn failures are returned as `Err`; everything else is a `ProcOutput`.
pub(crate) fn run(
    program: &str,
    args: &[String],
    timeout: Duration,
) -> std::io::Result<ProcOutput> {
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()?;
    let out = drain(child.stdout.take().expect("piped stdout"));
    let err = drain(child.stderr.take().expect("piped stderr"));
    let (code, timed_out) = match child.wait_timeout(timeout)? {
        Some(status) => (status.code(), false),
        None => {
            let _ = child.kill();
            let _ = child.wait();
            (None, true)
        }
    };
    Ok(ProcOutput {
        code,
        timed_out,
        stdout: out.join().unwrap_or_default(),
        stderr: err.join().unwrap_or_default(),
    })
}

pub(crate) const OPTIMIZER_ADAPTER: &str = include_str!("../adapters/onnx_optimizer_adapter.py");
pub(crate) const RUNNER_ADAPTER: &str = include_str!("../adapters/onnx_runner_adapter.py");

/// Write an embedded adapter script under the cache root, keyed by content
/// digest so concurrent processes never see a half-written file.
pub(crate) fn materialize_adapter(
    cache_root: &Path,
    file_name: &str,
    source: &str,
) -> std::io::Result<PathBuf> {
    let digest = crate::orchestrator::sha256_hex(source.as_bytes());
    let dir = cache_root.join("adapters").join(&digest[..16]);
    let path = dir.join(file_name);
    if path.is_file() {
        return Ok(path);
    }
    std::fs::create_dir_all(&dir)?;
    let tmp = dir.join(format!("{file_name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, source)?;
    std::fs::rename(&tmp, &path)?;
    Ok(path)
}
