//! Perfect versus coarse measurement devices.
//!
//! A coarse device only sums the apparatus-particle cross terms over particle
//! states `N..N1`; the perfect device sums them over `N..D`. The difference of
//! their qualities, `F = |Q| - |Q~|`, is bounded linearly in time by the tail
//! of the mixing matrix `M_ij = c_i conj(d_j) gamma_ij` as long as `t` stays
//! below the characteristic time `t0`.

mod bound;
mod speed_limit;
mod tail;

pub use bound::{
    bound_chain_rhs, bound_chain_terms, bound_points, fit_bound_constant, fraction_satisfied,
    BoundChain, BoundFit, BoundOptions, BoundPoint, ChainRow, ExcludedTime,
};
pub use speed_limit::{speed_limit_check, SpeedLimitReport};
pub use tail::{
    characteristic_time, mixing_matrix, peres_condition_check, tail_epsilon, CharacteristicTime,
    MixingMatrix, PeresProfile, PeresThresholds,
};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::TimeGrid;
use crate::measurement::{
    free_readout, interacting_readout, quality, readout_terms, CompositeModel,
    InteractionPropagator, MeasurementDevice, QualityReport,
};

/// Coarse-device cutoff: cross terms keep particle states `N..n1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CoarseningSpec {
    pub n1: usize,
}

impl CoarseningSpec {
    pub fn new(model: &CompositeModel, n1: usize) -> Result<Self> {
        let spec = Self { n1 };
        spec.validate(model)?;
        Ok(spec)
    }

    pub fn validate(&self, model: &CompositeModel) -> Result<()> {
        if self.n1 <= model.n_apparatus() || self.n1 > model.dim() {
            return Err(Error::CutoffOutOfRange {
                cutoff: self.n1,
                min: model.n_apparatus() + 1,
                max: model.dim(),
            });
        }
        Ok(())
    }
}

/// `Q` of a device whose cross terms stop at `cutoff`.
pub fn quality_with_cutoff(
    model: &CompositeModel,
    device: &MeasurementDevice,
    grid: &TimeGrid,
    cutoff: usize,
) -> Result<QualityReport> {
    quality(
        &interacting_readout(model, device, grid, cutoff)?,
        &free_readout(model, device, grid)?,
    )
}

/// Per-time gaps `q(t)` (perfect) and `q~(t)` (coarse), indexed `[alpha][k]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapCurves {
    pub times: Vec<f64>,
    pub perfect: Vec<Vec<f64>>,
    pub coarse: Vec<Vec<f64>>,
    /// Per apparatus row: `[alpha][i][k]` of the tail part of `q - q~` restricted to row `i`.
    pub tail_rows: Vec<Vec<Vec<f64>>>,
}

pub fn gap_curves(
    model: &CompositeModel,
    device: &MeasurementDevice,
    grid: &TimeGrid,
    spec: CoarseningSpec,
) -> Result<GapCurves> {
    spec.validate(model)?;
    if device.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            what: "device",
            expected: model.dim(),
            found: device.dim(),
        });
    }
    let prop = InteractionPropagator::new(model)?;
    let n = model.n_apparatus();
    let dim = model.dim();
    let channels = device.channels();
    type TimeSlice = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>);
    let per_time: Vec<TimeSlice> = grid
        .points()
        .par_iter()
        .map(|&t| {
            let w = prop.at(t);
            let full = readout_terms(model, device, &w, t, dim);
            let coarse = readout_terms(model, device, &w, t, spec.n1);
            let rows = tail_rows(model, device, &w, t, spec.n1);
            (
                full.iter().map(|r| r.gap().re).collect(),
                coarse.iter().map(|r| r.gap().re).collect(),
                rows,
            )
        })
        .collect();
    let mut perfect = vec![Vec::with_capacity(grid.len()); channels];
    let mut coarse = vec![Vec::with_capacity(grid.len()); channels];
    let mut tail = vec![vec![Vec::with_capacity(grid.len()); n]; channels];
    for (p, c, rows) in per_time {
        for alpha in 0..channels {
            perfect[alpha].push(p[alpha]);
            coarse[alpha].push(c[alpha]);
            for i in 0..n {
                tail[alpha][i].push(rows[alpha][i]);
            }
        }
    }
    Ok(GapCurves {
        times: grid.points().to_vec(),
        perfect,
        coarse,
        tail_rows: tail,
    })
}

/// `[alpha][i]`: `2 Re sum_{j >= n1} c_i conj(d_j) gamma_ij rho_ai |W_ij|^2`.
fn tail_rows(
    model: &CompositeModel,
    device: &MeasurementDevice,
    w: &crate::linalg::ComplexMatrix,
    t: f64,
    n1: usize,
) -> Vec<Vec<f64>> {
    let n = model.n_apparatus();
    let e = model.energies();
    (0..device.channels())
        .map(|alpha| {
            (0..n)
                .map(|i| {
                    let rho = device.weight(alpha, i);
                    (n1..model.dim())
                        .map(|j| {
                            let m = model.amplitude(i)
                                * model.amplitude(j).conj()
                                * crate::measurement::gamma_phase(e[i], e[j], t);
                            2.0 * m.re * rho * w[(i, j)].norm_sqr()
                        })
                        .sum()
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelGap {
    pub alpha: usize,
    /// Perfect-device quality `Q = max_t |q(t)|`.
    pub q: f64,
    /// Coarse-device quality `Q~ = max_t |q~(t)|`.
    pub q_coarse: f64,
    /// `|Q| - |Q~|`.
    pub f: f64,
    /// `max_t |q(t) - q~(t)|`.
    pub triangle_bound: f64,
    /// `sum_i max_t |tail_i(t)|`.
    pub row_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FidelityGap {
    pub n1: usize,
    pub channels: Vec<ChannelGap>,
    /// `max_alpha F_alpha`.
    pub aggregate: f64,
    /// Human-readable descriptions of ordering or triangle violations.
    pub violations: Vec<String>,
}

impl FidelityGap {
    pub fn ordering_holds(&self) -> bool {
        self.channels
            .iter()
            .all(|c| c.q >= c.q_coarse && c.q_coarse >= 0.0 && c.f >= 0.0)
    }

    pub fn triangle_holds(&self) -> bool {
        self.channels
            .iter()
            .all(|c| c.f.abs() <= c.triangle_bound + TRIANGLE_SLACK)
    }
}

const TRIANGLE_SLACK: f64 = 1e-14;

/// `F = |Q| - |Q~|` per channel, with the triangle bound `max_t |q - q~|`.
pub fn fidelity_gap(
    model: &CompositeModel,
    device: &MeasurementDevice,
    grid: &TimeGrid,
    spec: CoarseningSpec,
) -> Result<FidelityGap> {
    let curves = gap_curves(model, device, grid, spec)?;
    Ok(gap_from_curves(&curves, spec))
}

pub(crate) fn gap_from_curves(curves: &GapCurves, spec: CoarseningSpec) -> FidelityGap {
    let mut violations = Vec::new();
    let channels: Vec<ChannelGap> = curves
        .perfect
        .iter()
        .zip(&curves.coarse)
        .enumerate()
        .map(|(alpha, (p, c))| {
            let q = p.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let q_coarse = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let triangle_bound = p
                .iter()
                .zip(c)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let row_sum = curves.tail_rows[alpha]
                .iter()
                .map(|row| row.iter().fold(0.0f64, |m, x| m.max(x.abs())))
                .sum();
            let f = q - q_coarse;
            if f < 0.0 {
                violations.push(format!("channel {alpha}: Q = {q:e} < Q~ = {q_coarse:e}"));
            }
            if f.abs() > triangle_bound + TRIANGLE_SLACK {
                violations.push(format!(
                    "channel {alpha}: |F| = {:e} exceeds max_t|q - q~| = {triangle_bound:e}",
                    f.abs()
                ));
            }
            ChannelGap {
                alpha,
                q,
                q_coarse,
                f,
                triangle_bound,
                row_sum,
            }
        })
        .collect();
    let aggregate = channels
        .iter()
        .map(|c| c.f)
        .fold(f64::NEG_INFINITY, f64::max);
    FidelityGap {
        n1: spec.n1,
        channels,
        aggregate,
        violations,
    }
}
