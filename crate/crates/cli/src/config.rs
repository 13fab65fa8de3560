//! Experiment configuration: TOML (or JSON) on disk, validated on load.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qlimits_core::peres::EchoOrdering;
use qlimits_core::truncation::BasisChoice;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: `{field}` {constraint}")]
    Invalid { field: String, constraint: String },
}

fn invalid(field: impl Into<String>, constraint: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        constraint: constraint.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    TruncateSweep,
    Readout,
    Fidelity,
    PeresCondition,
    PeresEcho,
    SpeedLimit,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::TruncateSweep => "truncate-sweep",
            Self::Readout => "readout",
            Self::Fidelity => "fidelity",
            Self::PeresCondition => "peres-condition",
            Self::PeresEcho => "peres-echo",
            Self::SpeedLimit => "speed-limit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Self::TruncateSweep,
            Self::Readout,
            Self::Fidelity,
            Self::PeresCondition,
            Self::PeresEcho,
            Self::SpeedLimit,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

fn default_steps() -> usize {
    101
}

fn default_hbar() -> f64 {
    1.0
}

fn default_epsilon() -> f64 {
    1e-3
}

fn default_scale() -> f64 {
    1.0
}

fn default_k() -> f64 {
    1.0
}

fn default_ceiling() -> f64 {
    1e3
}

fn default_channels() -> usize {
    2
}

fn default_threshold() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Uniform grid on `[0, t_max]`.
    pub t_max: Option<f64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Explicit, strictly increasing sample times; replaces `t_max`/`steps`.
    pub points: Option<Vec<f64>>,
}

/// Source of a Hermitian matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OperatorSource {
    Explicit {
        re: Vec<Vec<f64>>,
        #[serde(default)]
        im: Option<Vec<Vec<f64>>>,
    },
    Gue {
        #[serde(default = "default_scale")]
        scale: f64,
    },
    Zero,
    /// Real Gaussian diagonal.
    DiagonalRandom {
        #[serde(default = "default_scale")]
        scale: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Phases {
    #[default]
    Random,
    Aligned,
}

/// Amplitude profile of a block of basis states, before joint normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AmplitudeSource {
    /// Complex Gaussian amplitudes.
    Random,
    /// `|a_j| = j^-exponent` for `j = 1, 2, ...` within the block.
    PowerLaw {
        exponent: f64,
        #[serde(default)]
        phases: Phases,
    },
    Constant {
        #[serde(default)]
        phases: Phases,
    },
    Explicit {
        re: Vec<f64>,
        #[serde(default)]
        im: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnergySource {
    /// Sorted Gaussian energies.
    Random {
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// `E_k = spacing * k`.
    Ladder {
        spacing: f64,
    },
    Explicit {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DeviceSource {
    Uniform {
        #[serde(default = "default_channels")]
        channels: usize,
    },
    /// Uniform random weights, normalized over channels for each state.
    Random {
        #[serde(default = "default_channels")]
        channels: usize,
    },
    /// `weights[alpha][k]`, columns summing to one.
    Explicit { weights: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeConfig {
    pub dim: usize,
    pub n_apparatus: usize,
    pub energies: EnergySource,
    pub interaction: OperatorSource,
    pub apparatus: AmplitudeSource,
    pub particle: AmplitudeSource,
    pub device: DeviceSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    pub dim: usize,
    pub hamiltonian: OperatorSource,
    pub observable: OperatorSource,
    pub state: AmplitudeSource,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub basis: BasisChoice,
    /// Rank whose error curve is written; defaults to the minimal rank for `epsilon`.
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutConfig {
    /// Cross-term cutoff; defaults to the full dimension.
    pub cutoff: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FidelityConfig {
    pub n1: usize,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default = "default_ceiling")]
    pub ceiling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeresConditionConfig {
    #[serde(default = "default_threshold")]
    pub epsilon: f64,
    #[serde(default = "default_threshold")]
    pub plateau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EchoConfig {
    pub dim: usize,
    pub members: usize,
    /// Perturbation norm; with `relative = true` a multiple of `||H||`.
    pub delta: f64,
    #[serde(default)]
    pub relative: bool,
    pub hamiltonian: OperatorSource,
    pub state: AmplitudeSource,
    #[serde(default)]
    pub ordering: EchoOrdering,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedLimitConfig {
    pub dim: usize,
    pub hamiltonian: OperatorSource,
    pub state: AmplitudeSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_hbar")]
    pub hbar: f64,
    pub output_dir: Option<PathBuf>,
    pub grid: GridConfig,
    pub truncation: Option<TruncationConfig>,
    pub composite: Option<CompositeConfig>,
    pub readout: Option<ReadoutConfig>,
    pub fidelity: Option<FidelityConfig>,
    pub peres_condition: Option<PeresConditionConfig>,
    pub echo: Option<EchoConfig>,
    pub speed_limit: Option<SpeedLimitConfig>,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |message: String| ConfigError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let config: ExperimentConfig = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?
    } else {
        toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?
    };
    config.validate()?;
    Ok(config)
}

fn check_square(field: &str, m: &[Vec<f64>], dim: usize) -> Result<(), ConfigError> {
    if m.len() != dim || m.iter().any(|r| r.len() != dim) {
        return Err(invalid(field, format!("must be a {dim}x{dim} matrix")));
    }
    Ok(())
}

impl OperatorSource {
    fn validate(&self, field: &str, dim: usize) -> Result<(), ConfigError> {
        match self {
            Self::Explicit { re, im } => {
                check_square(&format!("{field}.re"), re, dim)?;
                if let Some(im) = im {
                    check_square(&format!("{field}.im"), im, dim)?;
                }
            }
            Self::Gue { scale } | Self::DiagonalRandom { scale } => {
                if !(scale.is_finite() && *scale >= 0.0) {
                    return Err(invalid(format!("{field}.scale"), "must be finite and >= 0"));
                }
            }
            Self::Zero => {}
        }
        Ok(())
    }
}

impl AmplitudeSource {
    fn validate(&self, field: &str, len: usize) -> Result<(), ConfigError> {
        match self {
            Self::PowerLaw { exponent, .. } if !exponent.is_finite() => {
                Err(invalid(format!("{field}.exponent"), "must be finite"))
            }
            Self::Explicit { re, im } => {
                if re.len() != len {
                    return Err(invalid(
                        format!("{field}.re"),
                        format!("must have {len} entries"),
                    ));
                }
                if im.as_ref().is_some_and(|im| im.len() != len) {
                    return Err(invalid(
                        format!("{field}.im"),
                        format!("must have {len} entries"),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn require<'a, T>(
    section: &'a Option<T>,
    name: &str,
    kind: ExperimentKind,
) -> Result<&'a T, ConfigError> {
    section.as_ref().ok_or_else(|| {
        invalid(
            name,
            format!("section is required for experiment `{}`", kind.name()),
        )
    })
}

fn positive_dim(field: &str, dim: usize) -> Result<(), ConfigError> {
    if dim == 0 {
        return Err(invalid(field, "must be >= 1"));
    }
    Ok(())
}

impl CompositeConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        if self.n_apparatus == 0 || self.n_apparatus >= self.dim {
            return Err(invalid(
                "composite.n_apparatus",
                format!(
                    "must satisfy 0 < N < D (N = {}, D = {})",
                    self.n_apparatus, self.dim
                ),
            ));
        }
        self.interaction
            .validate("composite.interaction", self.dim)?;
        self.apparatus
            .validate("composite.apparatus", self.n_apparatus)?;
        self.particle
            .validate("composite.particle", self.dim - self.n_apparatus)?;
        match &self.energies {
            EnergySource::Explicit { values } if values.len() != self.dim => {
                return Err(invalid(
                    "composite.energies.values",
                    format!("must have {} entries", self.dim),
                ));
            }
            EnergySource::Ladder { spacing } if !spacing.is_finite() => {
                return Err(invalid("composite.energies.spacing", "must be finite"));
            }
            _ => {}
        }
        match &self.device {
            DeviceSource::Uniform { channels } | DeviceSource::Random { channels }
                if *channels == 0 =>
            {
                Err(invalid("composite.device.channels", "must be >= 1"))
            }
            DeviceSource::Explicit { weights }
                if weights.is_empty() || weights.iter().any(|r| r.len() != self.dim) =>
            {
                Err(invalid(
                    "composite.device.weights",
                    format!("must be a non-empty list of rows with {} entries", self.dim),
                ))
            }
            _ => Ok(()),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return Err(invalid("hbar", "must be finite and > 0"));
        }
        match (&self.grid.points, self.grid.t_max) {
            (Some(_), Some(_)) => {
                return Err(invalid("grid", "give either `points` or `t_max`, not both"))
            }
            (None, None) => return Err(invalid("grid", "needs `points` or `t_max`")),
            (Some(p), None) => {
                if p.is_empty()
                    || p.windows(2).any(|w| w[1] <= w[0])
                    || p.iter().any(|t| !t.is_finite())
                {
                    return Err(invalid(
                        "grid.points",
                        "must be finite and strictly increasing",
                    ));
                }
            }
            (None, Some(t)) => {
                if !(t.is_finite() && t > 0.0) {
                    return Err(invalid("grid.t_max", "must be finite and > 0"));
                }
                if self.grid.steps < 2 {
                    return Err(invalid("grid.steps", "must be >= 2"));
                }
            }
        }

        let kind = self.experiment;
        let sections: [(&str, bool, bool); 7] = [
            (
                "truncation",
                self.truncation.is_some(),
                kind == ExperimentKind::TruncateSweep,
            ),
            (
                "composite",
                self.composite.is_some(),
                matches!(
                    kind,
                    ExperimentKind::Readout
                        | ExperimentKind::Fidelity
                        | ExperimentKind::PeresCondition
                ),
            ),
            (
                "readout",
                self.readout.is_some(),
                kind == ExperimentKind::Readout,
            ),
            (
                "fidelity",
                self.fidelity.is_some(),
                kind == ExperimentKind::Fidelity,
            ),
            (
                "peres_condition",
                self.peres_condition.is_some(),
                kind == ExperimentKind::PeresCondition,
            ),
            (
                "echo",
                self.echo.is_some(),
                kind == ExperimentKind::PeresEcho,
            ),
            (
                "speed_limit",
                self.speed_limit.is_some(),
                kind == ExperimentKind::SpeedLimit,
            ),
        ];
        for (name, present, used) in sections {
            if present && !used {
                return Err(invalid(
                    name,
                    format!("is not used by experiment `{}`", kind.name()),
                ));
            }
        }

        match kind {
            ExperimentKind::TruncateSweep => {
                let t = require(&self.truncation, "truncation", kind)?;
                positive_dim("truncation.dim", t.dim)?;
                t.hamiltonian.validate("truncation.hamiltonian", t.dim)?;
                t.observable.validate("truncation.observable", t.dim)?;
                t.state.validate("truncation.state", t.dim)?;
                if !(t.epsilon.is_finite() && t.epsilon > 0.0) {
                    return Err(invalid("truncation.epsilon", "must be finite and > 0"));
                }
                if t.rank.is_some_and(|n| n > t.dim) {
                    return Err(invalid(
                        "truncation.rank",
                        format!("must be <= dim ({})", t.dim),
                    ));
                }
            }
            ExperimentKind::Readout | ExperimentKind::Fidelity | ExperimentKind::PeresCondition => {
                let c = require(&self.composite, "composite", kind)?;
                c.validate()?;
                if let Some(r) = &self.readout {
                    if r.cutoff.is_some_and(|k| k < c.n_apparatus || k > c.dim) {
                        return Err(invalid(
                            "readout.cutoff",
                            format!(
                                "must satisfy N <= cutoff <= D (N = {}, D = {})",
                                c.n_apparatus, c.dim
                            ),
                        ));
                    }
                }
                if kind == ExperimentKind::Fidelity {
                    let f = require(&self.fidelity, "fidelity", kind)?;
                    if f.n1 <= c.n_apparatus || f.n1 > c.dim {
                        return Err(invalid(
                            "fidelity.n1",
                            format!(
                                "must satisfy N < n1 <= D (N = {}, D = {}, n1 = {})",
                                c.n_apparatus, c.dim, f.n1
                            ),
                        ));
                    }
                    if !(f.k.is_finite() && f.k > 0.0) {
                        return Err(invalid("fidelity.k", "must be finite and > 0"));
                    }
                    if f.ceiling.is_nan() || f.ceiling <= 0.0 {
                        return Err(invalid("fidelity.ceiling", "must be > 0"));
                    }
                }
                if let Some(p) = &self.peres_condition {
                    if !(p.epsilon >= 0.0 && p.plateau >= 0.0) {
                        return Err(invalid("peres_condition", "thresholds must be >= 0"));
                    }
                }
            }
            ExperimentKind::PeresEcho => {
                let e = require(&self.echo, "echo", kind)?;
                positive_dim("echo.dim", e.dim)?;
                if e.members == 0 {
                    return Err(invalid("echo.members", "must be >= 1"));
                }
                if !(e.delta.is_finite() && e.delta >= 0.0) {
                    return Err(invalid("echo.delta", "must be finite and >= 0"));
                }
                if e.relative && e.hamiltonian == OperatorSource::Zero {
                    return Err(invalid(
                        "echo.relative",
                        "needs a Hamiltonian with nonzero norm",
                    ));
                }
                e.hamiltonian.validate("echo.hamiltonian", e.dim)?;
                e.state.validate("echo.state", e.dim)?;
            }
            ExperimentKind::SpeedLimit => {
                let s = require(&self.speed_limit, "speed_limit", kind)?;
                positive_dim("speed_limit.dim", s.dim)?;
                s.hamiltonian.validate("speed_limit.hamiltonian", s.dim)?;
                s.state.validate("speed_limit.state", s.dim)?;
            }
        }
        Ok(())
    }
}
