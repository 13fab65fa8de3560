//! Seeded, manifest-tracked experiment runs on top of `qlimits-core`.
//!
//! A run loads a config, resolves the master seed, writes `config.json` and a
//! `manifest.json` marked running, executes the experiment, writes its data
//! files and finalizes the manifest with checksums.

pub mod build;
pub mod config;
pub mod experiments;
pub mod manifest;
pub mod output;

use std::path::{Path, PathBuf};

use anyhow::Context;

use crate::config::{load_config, ExperimentConfig, ExperimentKind};
use crate::manifest::{OutputFile, RunManifest, RunStatus, CONFIG_COPY};
use crate::output::{canonical_json, sha256_hex, Artifacts};

pub const SEED_ENV: &str = "QLIMITS_SEED";
pub const DEFAULT_OUTPUT_DIR: &str = "qlimits-out";

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INPUT: i32 = 1;
    pub const VIOLATION: i32 = 2;
}

#[derive(Debug, Clone, Default)]
pub struct RunRequest {
    pub experiment: Option<ExperimentKind>,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    /// Value of `QLIMITS_SEED`, if set.
    pub env_seed: Option<String>,
}

#[derive(Debug)]
pub struct RunResult {
    pub dir: PathBuf,
    pub exit_code: i32,
    pub summary: Vec<String>,
    pub violations: Vec<String>,
    /// Set when the run failed on its input.
    pub error: Option<String>,
}

/// Config with the effective seed applied, as stored and hashed.
fn resolve(request: &RunRequest) -> anyhow::Result<(ExperimentConfig, PathBuf, &'static str)> {
    let mut config = load_config(&request.config)?;
    if let Some(kind) = request.experiment {
        if kind != config.experiment {
            anyhow::bail!(
                "config is for experiment `{}`, not `{}`",
                config.experiment.name(),
                kind.name()
            );
        }
    }
    let mut source = "config";
    if let Some(raw) = &request.env_seed {
        config.seed = raw
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={raw:?} is not an unsigned 64-bit integer"))?;
        source = "env";
    }
    if let Some(seed) = request.seed {
        config.seed = seed;
        source = "flag";
    }
    let dir = request
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    config.output_dir = None;
    Ok((config, dir, source))
}

fn input_failure(dir: PathBuf, err: &anyhow::Error) -> RunResult {
    RunResult {
        dir,
        exit_code: exit::INPUT,
        summary: Vec::new(),
        violations: Vec::new(),
        error: Some(format!("{err:#}")),
    }
}

pub fn run_experiment(request: &RunRequest) -> RunResult {
    let (config, dir, seed_source) = match resolve(request) {
        Ok(r) => r,
        Err(e) => return input_failure(request.out.clone().unwrap_or_default(), &e),
    };
    match execute(&config, &dir, seed_source, request.threads) {
        Ok(result) => result,
        Err(e) => input_failure(dir, &e),
    }
}

fn execute(
    config: &ExperimentConfig,
    dir: &Path,
    seed_source: &str,
    threads: Option<usize>,
) -> anyhow::Result<RunResult> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let config_json = canonical_json(config)?;
    std::fs::write(dir.join(CONFIG_COPY), &config_json)?;
    let mut manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_owned(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        experiment: config.experiment.name().to_owned(),
        config_hash: sha256_hex(config_json.as_bytes()),
        seed: config.seed,
        seed_source: seed_source.to_owned(),
        started_at: chrono::Utc::now().to_rfc3339(),
        finished_at: None,
        status: RunStatus::Running,
        exit_code: None,
        outputs: Vec::new(),
    };
    manifest.write(dir)?;

    let mut artifacts = Artifacts::new(dir);
    let outcome = match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .context("building thread pool")?
            .install(|| experiments::run(config, &mut artifacts)),
        None => experiments::run(config, &mut artifacts),
    };

    manifest.outputs = artifacts
        .files
        .iter()
        .map(|(path, sha256, bytes)| OutputFile {
            path: path.clone(),
            sha256: sha256.clone(),
            bytes: *bytes,
        })
        .collect();
    manifest.finished_at = Some(chrono::Utc::now().to_rfc3339());
    let result = match outcome {
        Ok(outcome) => {
            let exit_code = if outcome.violations.is_empty() {
                exit::OK
            } else {
                exit::VIOLATION
            };
            manifest.status = RunStatus::Complete;
            RunResult {
                dir: dir.to_path_buf(),
                exit_code,
                summary: outcome.summary,
                violations: outcome.violations,
                error: None,
            }
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            input_failure(dir.to_path_buf(), &e)
        }
    };
    manifest.exit_code = Some(result.exit_code);
    manifest.write(dir)?;
    Ok(result)
}
