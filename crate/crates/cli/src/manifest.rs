use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Audit record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    /// Input path → SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub version: String,
    pub wall_time_seconds: f64,
}

pub struct Recorder {
    command: String,
    seed: u64,
    started: Instant,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

impl Recorder {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            seed,
            started: Instant::now(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    /// Hashes an input file. Fails with the path in the message if it cannot be read.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| funcut::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        self.inputs
            .insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> PathBuf {
        self.outputs.push(path.display().to_string());
        path.to_path_buf()
    }

    pub fn finish(self, out_dir: &Path) -> Result<()> {
        let path = out_dir.join(format!("{}.manifest.json", self.command));
        let manifest = RunManifest {
            command: self.command,
            argv: std::env::args().collect(),
            seed: self.seed,
            inputs: self.inputs,
            outputs: self.outputs,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
        };
        funcut::io::write_json(&path, &manifest).with_context(|| format!("writing {}", path.display()))
    }
}
