//! Run manifests and their verification.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::output::{canonical_json, sha256_hex};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_COPY: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    /// SHA-256 of the canonical config stored next to the manifest.
    pub config_hash: String,
    pub seed: u64,
    /// `config`, `env` (QLIMITS_SEED) or `flag` (--seed).
    pub seed_source: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: RunStatus,
    pub exit_code: Option<i32>,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST);
        std::fs::write(&path, canonical_json(self)?)
            .with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    /// The stored config no longer matches the hash, or the run never completed.
    Stale(Vec<String>),
    /// Output files are missing or their checksums changed.
    Corrupt(Vec<String>),
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::Stale(_) => "stale",
            Self::Corrupt(_) => "corrupt",
        }
    }
}

pub fn verify_manifest(dir: &Path) -> Result<Verdict> {
    let manifest = RunManifest::read(dir)?;
    let mut corrupt = Vec::new();
    for out in &manifest.outputs {
        match std::fs::read(dir.join(&out.path)) {
            Err(_) => corrupt.push(format!("{}: missing", out.path)),
            Ok(bytes) if sha256_hex(&bytes) != out.sha256 => {
                corrupt.push(format!("{}: checksum mismatch", out.path))
            }
            Ok(_) => {}
        }
    }
    if !corrupt.is_empty() {
        return Ok(Verdict::Corrupt(corrupt));
    }

    let mut stale = Vec::new();
    match std::fs::read(dir.join(CONFIG_COPY)) {
        Err(_) => stale.push(format!("{CONFIG_COPY}: missing")),
        Ok(bytes) if sha256_hex(&bytes) != manifest.config_hash => {
            stale.push(format!("{CONFIG_COPY}: hash differs from manifest"))
        }
        Ok(_) => {}
    }
    if manifest.status != RunStatus::Complete || manifest.finished_at.is_none() {
        stale.push("run did not complete".to_owned());
    }
    Ok(if stale.is_empty() {
        Verdict::Ok
    } else {
        Verdict::Stale(stale)
    })
}
