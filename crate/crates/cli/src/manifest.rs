use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const CODE_VERSION: &str = concat!("dial-cli ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileHash {
    pub fn of(path: &Path) -> CliResult<Self> {
        Ok(Self {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }
}

/// Written before a run starts and rewritten when it ends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub datasets: Vec<FileHash>,
    pub code_version: String,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub finished_at: Option<u64>,
    pub outputs: Vec<PathBuf>,
}

pub fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

impl RunManifest {
    pub fn start(command: &str, config: &impl Serialize, seed: u64, datasets: &[&Path]) -> CliResult<Self> {
        let canonical = serde_json::to_vec(config).map_err(dial_core::DialError::from)?;
        Ok(Self {
            command: command.into(),
            config_hash: sha256_hex(&canonical),
            seed,
            datasets: datasets.iter().map(|p| FileHash::of(p)).collect::<CliResult<_>>()?,
            code_version: CODE_VERSION.into(),
            started_at: now(),
            finished_at: None,
            outputs: Vec::new(),
        })
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).map_err(dial_core::DialError::from)?;
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Fails when a dataset changed since the manifest was written.
    pub fn verify_datasets(&self) -> CliResult<()> {
        for d in &self.datasets {
            let now = sha256_file(&d.path)?;
            if now != d.sha256 {
                return Err(CliError::Usage(format!(
                    "dataset {} changed since the run started (sha256 {} != {})",
                    d.path.display(),
                    now,
                    d.sha256
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn detects_changed_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        std::fs::write(&p, "{}\n").unwrap();
        let m = RunManifest::start("train", &serde_json::json!({"a": 1}), 0, &[&p]).unwrap();
        m.verify_datasets().unwrap();
        std::fs::write(&p, "{}\n{}\n").unwrap();
        assert!(m.verify_datasets().is_err());
    }
}
