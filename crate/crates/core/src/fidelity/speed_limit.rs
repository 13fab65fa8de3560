use serde::Serialize;

use crate::error::Result;
use crate::linalg::{
    ensure_dim, spectral_decompose, HermitianOperator, PhaseSign, StateVector, TimeGrid,
};

const SURVIVAL_SLACK: f64 = 1e-12;

/// Survival probability `S(t) = |<psi|exp(iHt)|psi>|^2` against `cos^2(dE t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedLimitReport {
    /// Energy spread `sqrt(<H^2> - <H>^2)`.
    pub delta_e: f64,
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    /// `cos^2(dE t)` where `dE t <= pi/2`, otherwise zero.
    pub bound: Vec<f64>,
    pub admissible: Vec<bool>,
    /// Times where `S(t) < cos^2(dE t)`.
    pub violations: Vec<f64>,
}

impl SpeedLimitReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn speed_limit_check(
    h: &HermitianOperator,
    psi: &StateVector,
    grid: &TimeGrid,
) -> Result<SpeedLimitReport> {
    ensure_dim("state", h.dim(), psi.dim())?;
    let psi = psi.clone().into_normalized();
    let v = psi.amplitudes();
    let dec = spectral_decompose(h)?;
    let coeffs = dec.to_eigenbasis(v);
    let weights: Vec<f64> = coeffs.iter().map(|c| c.norm_sqr()).collect();
    let mean: f64 = weights
        .iter()
        .zip(dec.eigenvalues())
        .map(|(w, e)| w * e)
        .sum();
    let var: f64 = weights
        .iter()
        .zip(dec.eigenvalues())
        .map(|(w, e)| w * (e - mean) * (e - mean))
        .sum();
    let delta_e = var.max(0.0).sqrt();

    let mut survival = Vec::with_capacity(grid.len());
    let mut bound = Vec::with_capacity(grid.len());
    let mut admissible = Vec::with_capacity(grid.len());
    let mut violations = Vec::new();
    for &t in grid.points() {
        let s = v.dotc(&dec.propagate(v, t, PhaseSign::Positive)).norm_sqr();
        let phase = delta_e * t.abs();
        let ok = phase <= std::f64::consts::FRAC_PI_2;
        let b = if ok { phase.cos().powi(2) } else { 0.0 };
        if ok && s < b - SURVIVAL_SLACK {
            violations.push(t);
        }
        survival.push(s);
        bound.push(b);
        admissible.push(ok);
    }
    Ok(SpeedLimitReport {
        delta_e,
        times: grid.points().to_vec(),
        survival,
        bound,
        admissible,
        violations,
    })
}
