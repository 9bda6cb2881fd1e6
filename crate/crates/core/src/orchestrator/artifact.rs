use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::OrchestratorError;

/// Opaque handle on a model file: path, size and SHA-256 content digest.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub path: PathBuf,
    pub byte_len: u64,
    pub digest: String,
}

impl ModelArtifact {
    /// Re-hash the file and compare against the recorded digest.
    pub fn is_intact(&self) -> bool {
        matches!(digest_file(&self.path), Ok((len, d)) if len == self.byte_len && d == self.digest)
    }

    pub fn read(&self) -> std::io::Result<Vec<u8>> {
        fs::read(&self.path)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(crate) fn digest_file(path: &Path) -> std::io::Result<(u64, String)> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    let mut len = 0u64;
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        len += n as u64;
        hasher.update(&buf[..n]);
    }
    Ok((len, hex::encode(hasher.finalize())))
}

/// Load a model file from disk, recording its size and digest.
pub fn load_local_model(path: impl AsRef<Path>) -> Result<ModelArtifact, OrchestratorError> {
    let path = path.as_ref();
    let meta = match fs::metadata(path) {
        Ok(m) => m,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(OrchestratorError::NotFound(path.to_path_buf()))
        }
        Err(e) => return Err(OrchestratorError::InvalidArtifact(path.to_path_buf(), e.to_string())),
    };
    if !meta.is_file() {
        return Err(OrchestratorError::InvalidArtifact(
            path.to_path_buf(),
            "not a regular file".into(),
        ));
    }
    let (byte_len, digest) = digest_file(path)
        .map_err(|e| OrchestratorError::InvalidArtifact(path.to_path_buf(), e.to_string()))?;
    if byte_len == 0 {
        return Err(OrchestratorError::InvalidArtifact(
            path.to_path_buf(),
            "zero-length file".into(),
        ));
    }
    Ok(ModelArtifact {
        path: path.to_path_buf(),
        byte_len,
        digest,
    })
}
