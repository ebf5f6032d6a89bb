use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one command invocation. Contains no timestamps, so rerunning
/// the same command reproduces it byte for byte.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub version: &'static str,
    pub inputs: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub out_dir: String,
    /// Output file name -> hex sha256.
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, out_dir: &Path) -> Self {
        Self {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            version: env!("CARGO_PKG_VERSION"),
            inputs: BTreeMap::new(),
            seeds: Vec::new(),
            out_dir: out_dir.display().to_string(),
            artifacts: BTreeMap::new(),
        }
    }

    /// Records an input file with its hash.
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.inputs
            .insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }

    /// Writes `bytes` to `out_dir/name` and records its hash.
    pub fn write(&mut self, out_dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = out_dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.artifacts.insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(path)
    }

    pub fn finish(self, out_dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        text.push('\n');
        let path = out_dir.join(MANIFEST_FILE);
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create `{}`: {e}", dir.display())))
}
