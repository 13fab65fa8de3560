//! Loschmidt echo experiments on ensembles of slightly uncertain Hamiltonians.
//!
//! Each ensemble member perturbs the nominal Hamiltonian by
//! `dH = delta * G / ||G||` with `G` drawn from the GUE, evolves forward under
//! the perturbed Hamiltonian and backward under the nominal one, and records
//! the return probability.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    ensure_dim, operator_norm, spectral_decompose, HermitianOperator, OperatorRole, PhaseSign,
    SpectralDecomposition, StateVector, TimeGrid,
};
use crate::seeding::{derive_seed, rng, Stream};

/// Tolerance on `echo <= 1`.
pub const ECHO_UPPER_SLACK: f64 = 1e-10;

/// Samples a GUE matrix: real `N(0, scale^2)` diagonal and complex
/// off-diagonal entries with independent `N(0, scale^2 / 2)` parts.
pub fn sample_gue(dim: usize, scale: f64, seed: u64) -> HermitianOperator {
    let mut r = rng(seed);
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    let off = scale / std::f64::consts::SQRT_2;
    for i in 0..dim {
        let d: f64 = r.sample(StandardNormal);
        m[(i, i)] = Complex64::new(scale * d, 0.0);
        for j in (i + 1)..dim {
            let re: f64 = r.sample(StandardNormal);
            let im: f64 = r.sample(StandardNormal);
            let z = Complex64::new(off * re, off * im);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    HermitianOperator::new(m, OperatorRole::Hamiltonian)
        .expect("GUE sample is Hermitian by construction")
}

/// Mean of `min(s_k, s_{k+1}) / max(s_k, s_{k+1})` over consecutive level spacings.
pub fn mean_spacing_ratio(eigenvalues: &[f64]) -> f64 {
    let spacings: Vec<f64> = eigenvalues.windows(2).map(|w| w[1] - w[0]).collect();
    let ratios: Vec<f64> = spacings
        .windows(2)
        .filter(|w| w[0].max(w[1]) > 0.0)
        .map(|w| w[0].min(w[1]) / w[0].max(w[1]))
        .collect();
    ratios.iter().sum::<f64>() / ratios.len() as f64
}

/// Which Hamiltonian drives the forward leg of the echo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EchoOrdering {
    /// `|<psi0| U_H(-t) U_{H+dH}(t) |psi0>|^2`
    #[default]
    ForwardPerturbed,
    /// `|<psi0| U_{H+dH}(-t) U_H(t) |psi0>|^2`
    ForwardNominal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaseHamiltonian {
    Explicit(HermitianOperator),
    Gue { scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub dim: usize,
    pub members: usize,
    /// Spectral norm of each perturbation.
    pub delta: f64,
    pub seed: u64,
    pub base: BaseHamiltonian,
    pub ordering: EchoOrdering,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.members == 0 {
            return Err(Error::param(
                "members",
                "ensemble needs at least one member",
            ));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::param(
                "delta",
                format!("must be finite and >= 0, got {}", self.delta),
            ));
        }
        match &self.base {
            BaseHamiltonian::Explicit(h) => ensure_dim("base Hamiltonian", self.dim, h.dim()),
            BaseHamiltonian::Gue { scale } if !(scale.is_finite() && *scale >= 0.0) => Err(
                Error::param("scale", format!("must be finite and >= 0, got {scale}")),
            ),
            BaseHamiltonian::Gue { .. } => Ok(()),
        }
    }

    /// The nominal Hamiltonian of the ensemble.
    pub fn base_hamiltonian(&self) -> HermitianOperator {
        match &self.base {
            BaseHamiltonian::Explicit(h) => h.clone(),
            BaseHamiltonian::Gue { scale } => sample_gue(
                self.dim,
                *scale,
                derive_seed(self.seed, Stream::Hamiltonian, 0),
            ),
        }
    }

    /// Perturbation of member `index`, normalized to spectral norm `delta`.
    pub fn perturbation(&self, index: usize) -> Result<HermitianOperator> {
        if self.delta == 0.0 {
            return Ok(HermitianOperator::zeros(
                self.dim,
                OperatorRole::Hamiltonian,
            ));
        }
        let g = sample_gue(
            self.dim,
            1.0,
            derive_seed(self.seed, Stream::EnsembleMember, index as u64),
        );
        let norm = operator_norm(g.matrix())?;
        Ok(g.scaled(self.delta / norm))
    }
}

/// Echo fidelity over a time grid, for one member or averaged over an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EchoCurve {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// One curve per member, in member order.
    pub members: Vec<Vec<f64>>,
}

impl EchoCurve {
    fn from_members(times: Vec<f64>, members: Vec<Vec<f64>>) -> Self {
        let m = members.len() as f64;
        let steps = times.len();
        let mut mean = vec![0.0; steps];
        let mut std = vec![0.0; steps];
        let mut min = vec![f64::INFINITY; steps];
        let mut max = vec![f64::NEG_INFINITY; steps];
        for k in 0..steps {
            let mut sum = 0.0;
            for curve in &members {
                sum += curve[k];
                min[k] = min[k].min(curve[k]);
                max[k] = max[k].max(curve[k]);
            }
            mean[k] = sum / m;
            let var = members
                .iter()
                .map(|c| (c[k] - mean[k]).powi(2))
                .sum::<f64>()
                / m;
            std[k] = var.sqrt();
        }
        Self {
            times,
            mean,
            std,
            min,
            max,
            members,
        }
    }

    /// Grid average of the mean echo.
    pub fn time_averaged_mean(&self) -> f64 {
        self.mean.iter().sum::<f64>() / self.mean.len() as f64
    }
}

fn echo_values(
    nominal: &SpectralDecomposition,
    perturbed: &SpectralDecomposition,
    psi0: &StateVector,
    grid: &TimeGrid,
    ordering: EchoOrdering,
) -> Vec<f64> {
    let v = psi0.amplitudes();
    let (forward, backward) = match ordering {
        EchoOrdering::ForwardPerturbed => (perturbed, nominal),
        EchoOrdering::ForwardNominal => (nominal, perturbed),
    };
    grid.points()
        .iter()
        .map(|&t| {
            if t == 0.0 {
                return 1.0;
            }
            // <psi0| U_b(-t) U_f(t) |psi0> = <U_b(t) psi0 | U_f(t) psi0>
            let f = forward.propagate(v, t, PhaseSign::Positive);
            let b = backward.propagate(v, t, PhaseSign::Positive);
            b.dotc(&f).norm_sqr()
        })
        .collect()
}

/// Single-member echo `|<psi0| U_H(-t) U_{H+dH}(t) |psi0>|^2`.
pub fn echo_experiment(
    h: &HermitianOperator,
    delta_h: &HermitianOperator,
    psi0: &StateVector,
    grid: &TimeGrid,
    ordering: EchoOrdering,
) -> Result<EchoCurve> {
    ensure_dim("perturbation", h.dim(), delta_h.dim())?;
    ensure_dim("initial state", h.dim(), psi0.dim())?;
    if !psi0.is_normalized() {
        return Err(Error::param("psi0", "initial state must be normalized"));
    }
    let nominal = spectral_decompose(h)?;
    let perturbed = spectral_decompose(&h.plus(delta_h)?)?;
    let values = echo_values(&nominal, &perturbed, psi0, grid, ordering);
    Ok(EchoCurve::from_members(
        grid.points().to_vec(),
        vec![values],
    ))
}

/// Ensemble-averaged echo. Members run in parallel; each draws its
/// perturbation from its own seed stream and results are reduced in member
/// order, so the curve is independent of the thread count.
pub fn ensemble_echo(
    spec: &EnsembleSpec,
    psi0: &StateVector,
    grid: &TimeGrid,
) -> Result<EchoCurve> {
    spec.validate()?;
    ensure_dim("initial state", spec.dim, psi0.dim())?;
    if !psi0.is_normalized() {
        return Err(Error::param("psi0", "initial state must be normalized"));
    }
    let h = spec.base_hamiltonian();
    let nominal = spectral_decompose(&h)?;
    let members = (0..spec.members)
        .into_par_iter()
        .map(|m| -> Result<Vec<f64>> {
            let dh = spec.perturbation(m)?;
            let perturbed = spectral_decompose(&h.plus(&dh)?)?;
            Ok(echo_values(&nominal, &perturbed, psi0, grid, spec.ordering))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EchoCurve::from_members(grid.points().to_vec(), members))
}
