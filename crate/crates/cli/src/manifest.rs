use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

impl FileEntry {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Record of one command invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Effective settings after defaults were applied.
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub tool_version: String,
    /// Unix seconds; ignored when comparing runs.
    pub started_at: u64,
    pub finished_at: u64,
}

/// All runs that wrote into one directory, keyed by command and outputs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DirectoryManifest {
    pub runs: Vec<RunManifest>,
}

pub fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub struct RunRecorder {
    command: String,
    config: serde_json::Value,
    seed: u64,
    inputs: Vec<FileEntry>,
    started_at: u64,
}

impl RunRecorder {
    pub fn start(command: &str, config: serde_json::Value, seed: u64, inputs: &[&Path]) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            config,
            seed,
            inputs: inputs.iter().map(|p| FileEntry::of(p)).collect::<Result<_>>()?,
            started_at: now(),
        })
    }

    /// Hash the outputs and upsert the run into `dir/manifest.json`.
    pub fn finish(self, dir: &Path, outputs: &[PathBuf]) -> Result<()> {
        let run = RunManifest {
            command: self.command,
            config: self.config,
            seed: self.seed,
            inputs: self.inputs,
            outputs: outputs.iter().map(|p| FileEntry::of(p)).collect::<Result<_>>()?,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: self.started_at,
            finished_at: now(),
        };
        let path = dir.join(MANIFEST_NAME);
        let mut manifest: DirectoryManifest = if path.exists() {
            let text = fs::read_to_string(&path)?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            DirectoryManifest::default()
        };
        let key = |r: &RunManifest| (r.command.clone(), r.outputs.iter().map(|o| o.path.clone()).collect::<Vec<_>>());
        let k = key(&run);
        manifest.runs.retain(|r| key(r) != k);
        manifest.runs.push(run);
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }
}

/// Directory an output file lands in.
pub fn output_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}
