//! Replay manifests. Every command writes one next to its outputs; it is the
//! only artifact that carries a timestamp.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<FileDigest> {
        let data = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(FileDigest {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&data)),
            bytes: data.len() as u64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayManifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub tool_version: String,
    pub library_version: String,
    pub created_unix: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// Collects inputs and outputs while a command runs.
#[derive(Debug, Default)]
pub struct Recorder {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn input(&mut self, path: &Path) {
        if !self.inputs.iter().any(|p| p == path) {
            self.inputs.push(path.to_path_buf());
        }
    }

    pub fn output(&mut self, path: &Path) {
        if !self.outputs.iter().any(|p| p == path) {
            self.outputs.push(path.to_path_buf());
        }
    }

    pub fn finish(
        &self,
        command: &str,
        args: Vec<String>,
        seed: u64,
        config: serde_json::Value,
        out_dir: &Path,
    ) -> Result<PathBuf> {
        let manifest = ReplayManifest {
            command: command.to_string(),
            args,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            library_version: gazekit::VERSION.to_string(),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            config,
            inputs: self.inputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
            outputs: self.outputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
        };
        let path = out_dir.join(format!("replay.{command}.json"));
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
