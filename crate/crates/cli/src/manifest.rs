//! Output files and the run manifest that records them.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::CliResult;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub code_version: String,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileDigest>,
    pub duration_seconds: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes files under one directory and collects their digests.
pub struct OutputSet {
    dir: PathBuf,
    stem: String,
    started: Instant,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

impl OutputSet {
    pub fn new(dir: &Path, stem: &str) -> CliResult<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(OutputSet {
            dir: dir.to_path_buf(),
            stem: stem.to_string(),
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn add_input(&mut self, path: &Path) -> CliResult<()> {
        let bytes = std::fs::read(path)?;
        self.inputs.push(FileDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) });
        Ok(())
    }

    /// Writes `<stem><suffix>` and returns its path.
    pub fn write(&mut self, suffix: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let name = format!("{}{suffix}", self.stem);
        let path = self.dir.join(&name);
        std::fs::write(&path, bytes)?;
        self.outputs.push(FileDigest { path: name, sha256: sha256_hex(bytes) });
        Ok(path)
    }

    pub fn finish(self, config: serde_json::Value, seed: u64) -> CliResult<PathBuf> {
        let manifest = RunManifest {
            command: std::env::args().collect(),
            config,
            seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: self.inputs,
            outputs: self.outputs,
            duration_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = self.dir.join(format!("{}.manifest.json", self.stem));
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(path)
    }
}
