use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::tail::{characteristic_time, mixing_matrix, CharacteristicTime};
use super::{gap_curves, CoarseningSpec};
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, TimeGrid};
use crate::measurement::{gamma_phase, CompositeModel, InteractionPropagator, MeasurementDevice};

/// Relative slack for floating-point comparisons in the bound chain.
const CHAIN_SLACK: f64 = 1e-12;

/// Chain terms of one apparatus row `i` in one channel.
///
/// * `sin_form`: `|sum_j (M_ij + conj(c_i) d_j gamma_ji) rho_ai <i|sin(Vt)|j>|`
/// * `abs_form`: `|sum_j (M_ij + conj(M_ij)) rho_ai sin(2 |V_ij| t)|`
/// * `linear_form`: `4 rho_ai |sum_j Re M_ij |V_ij| t|`
///
/// with `j` over the tail `n1..D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainRow {
    pub alpha: usize,
    pub i: usize,
    pub sin_form: f64,
    pub abs_form: f64,
    pub linear_form: f64,
    /// `sum_{j >= n1} |V_ij|`.
    pub v_tail_sum: f64,
}

impl ChainRow {
    /// `sin_form <= K * abs_form`.
    pub fn first_link(&self, k: f64) -> bool {
        self.sin_form <= k * self.abs_form + CHAIN_SLACK * (1.0 + self.sin_form)
    }

    /// `K * abs_form <= 2K * linear_form`.
    pub fn second_link(&self, k: f64) -> bool {
        k * self.abs_form <= 2.0 * k * self.linear_form + CHAIN_SLACK * (1.0 + self.abs_form)
    }

    pub fn holds(&self, k: f64) -> bool {
        self.first_link(k) && self.second_link(k)
    }

    /// `8K rho |sum_j Re M_ij |V_ij| t|`, the linearized right-hand side.
    pub fn linear_rhs(&self, k: f64) -> f64 {
        2.0 * k * self.linear_form
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundChain {
    pub t: f64,
    pub t0: f64,
    pub k: f64,
    pub rows: Vec<ChainRow>,
}

impl BoundChain {
    pub fn holds(&self) -> bool {
        self.rows.iter().all(|r| r.holds(self.k))
    }

    pub fn violations(&self) -> impl Iterator<Item = &ChainRow> {
        self.rows.iter().filter(move |r| !r.holds(self.k))
    }

    /// Per channel `sum_i 8K rho_ai |sum_j Re M_ij |V_ij| t|`.
    pub fn channel_rhs(&self, channels: usize) -> Vec<f64> {
        let mut out = vec![0.0; channels];
        for r in &self.rows {
            out[r.alpha] += r.linear_rhs(self.k);
        }
        out
    }
}

fn chain_rows(
    model: &CompositeModel,
    device: &MeasurementDevice,
    spec: CoarseningSpec,
    sin_vt: &ComplexMatrix,
    t: f64,
) -> Vec<ChainRow> {
    let n = model.n_apparatus();
    let dim = model.dim();
    let e = model.energies();
    let v = model.interaction().matrix();
    let mut rows = Vec::with_capacity(device.channels() * n);
    for alpha in 0..device.channels() {
        for i in 0..n {
            let rho = device.weight(alpha, i);
            let ci = model.amplitude(i);
            let mut sin_sum = Complex64::new(0.0, 0.0);
            let mut abs_sum = Complex64::new(0.0, 0.0);
            let mut lin_sum = 0.0;
            let mut v_tail_sum = 0.0;
            for j in spec.n1..dim {
                let dj = model.amplitude(j);
                let gamma = gamma_phase(e[i], e[j], t);
                let m = ci * dj.conj() * gamma;
                let s = sin_vt[(i, j)];
                sin_sum += m * rho * s + ci.conj() * dj * gamma.conj() * rho * s;
                let vt = v[(i, j)].norm();
                let sx = (2.0 * vt * t).sin();
                abs_sum += (m + m.conj()) * rho * sx;
                lin_sum += m.re * vt * t;
                v_tail_sum += vt;
            }
            rows.push(ChainRow {
                alpha,
                i,
                sin_form: sin_sum.norm(),
                abs_form: abs_sum.norm(),
                linear_form: 4.0 * rho * lin_sum.abs(),
                v_tail_sum,
            });
        }
    }
    rows
}

/// Chain terms at any `t`, including beyond `t0` where the chain may fail.
pub fn bound_chain_terms(
    model: &CompositeModel,
    device: &MeasurementDevice,
    spec: CoarseningSpec,
    t: f64,
    k: f64,
) -> Result<BoundChain> {
    spec.validate(model)?;
    let t0 = characteristic_time(model, spec)?.t0;
    let prop = InteractionPropagator::new(model)?;
    Ok(chain_at(model, device, spec, &prop, t, t0, k))
}

fn chain_at(
    model: &CompositeModel,
    device: &MeasurementDevice,
    spec: CoarseningSpec,
    prop: &InteractionPropagator,
    t: f64,
    t0: f64,
    k: f64,
) -> BoundChain {
    let sin_vt = prop
        .decomposition()
        .apply_function(|lambda| Complex64::new((lambda * t).sin(), 0.0));
    BoundChain {
        t,
        t0,
        k,
        rows: chain_rows(model, device, spec, &sin_vt, t),
    }
}

/// Chain terms for `t < t0`; later times are out of regime.
pub fn bound_chain_rhs(
    model: &CompositeModel,
    device: &MeasurementDevice,
    spec: CoarseningSpec,
    t: f64,
    k: f64,
) -> Result<BoundChain> {
    let t0 = characteristic_time(model, spec)?.t0;
    if t >= t0 {
        return Err(Error::OutOfRegime { t, t0 });
    }
    bound_chain_terms(model, device, spec, t, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundOptions {
    /// Constant of the operator-convexity step.
    pub k: f64,
    /// Largest acceptable fitted slope.
    pub ceiling: f64,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            k: 1.0,
            ceiling: 1e3,
        }
    }
}

/// `F_alpha(t) = |q_alpha(t)| - |q~_alpha(t)|` and `eps(n1)` at one admissible time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundPoint {
    pub t: f64,
    pub alpha: usize,
    pub f: f64,
    pub epsilon: f64,
}

impl BoundPoint {
    /// `F <= A t eps`.
    pub fn satisfied(&self, a: f64) -> bool {
        self.f <= a * self.t * self.epsilon
    }

    /// Smallest slope this point admits, `F / (t eps)`; zero when `F <= 0`.
    pub fn required_slope(&self) -> f64 {
        if self.f <= 0.0 {
            0.0
        } else if self.t * self.epsilon > 0.0 {
            self.f / (self.t * self.epsilon)
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExcludedTime {
    pub t: f64,
    /// Whether the chain fails at this time (allowed beyond `t0`, but reported).
    pub chain_violated: bool,
}

/// `F(t)` versus `A t eps` at admissible grid times `0 < t < t0`, plus the excluded times `t >= t0`.
pub fn bound_points(
    model: &CompositeModel,
    device: &MeasurementDevice,
    grid: &TimeGrid,
    spec: CoarseningSpec,
) -> Result<(CharacteristicTime, Vec<BoundPoint>, Vec<f64>)> {
    let t0 = characteristic_time(model, spec)?;
    let admissible: Vec<f64> = grid
        .points()
        .iter()
        .copied()
        .filter(|&t| t >= 0.0 && t < t0.t0)
        .collect();
    let excluded: Vec<f64> = grid
        .points()
        .iter()
        .copied()
        .filter(|&t| t >= t0.t0)
        .collect();
    if !admissible.iter().any(|&t| t > 0.0) {
        let first = grid
            .points()
            .iter()
            .copied()
            .find(|&t| t > 0.0)
            .unwrap_or(0.0);
        return Err(Error::NoAdmissibleTimes { t0: t0.t0, first });
    }
    let sub = TimeGrid::from_points(admissible)?;
    let curves = gap_curves(model, device, &sub, spec)?;
    let mut points = Vec::with_capacity(sub.len() * device.channels());
    for (k, &t) in sub.points().iter().enumerate() {
        if t == 0.0 {
            continue;
        }
        let epsilon = mixing_matrix(model, t).tail_profile()[spec.n1 - model.n_apparatus()];
        for alpha in 0..device.channels() {
            let f = curves.perfect[alpha][k].abs() - curves.coarse[alpha][k].abs();
            points.push(BoundPoint {
                t,
                alpha,
                f,
                epsilon,
            });
        }
    }
    Ok((t0, points, excluded))
}

/// Fitted constant of the linear bound `F(t) <= A t eps(n1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundFit {
    pub t0: f64,
    pub a: f64,
    pub k: f64,
    pub ceiling: f64,
    /// `A` finite and at most the ceiling.
    pub verdict: bool,
    pub points: Vec<BoundPoint>,
    pub excluded: Vec<ExcludedTime>,
    /// Chain evaluations at every admissible `t > 0`.
    pub chains: Vec<BoundChain>,
    /// Admissible chain failures as `(t, alpha, i)`.
    pub chain_violations: Vec<(f64, usize, usize)>,
    /// Smallest `C` with `8K rho |sum Re M |V| t| <= C eps t |sum |V||` on every admissible row.
    pub c_fitted: f64,
    /// Smallest `C~` with `8K rho |sum Re M |V| t| <= C~ t eps` on every admissible row.
    pub c_tilde_fitted: f64,
    /// Smallest `K` for which the first link holds on every admissible row.
    pub k_required: f64,
}

impl BoundFit {
    pub fn chain_holds(&self) -> bool {
        self.chain_violations.is_empty()
    }

    pub fn fraction_satisfied(&self) -> f64 {
        fraction_satisfied(&self.points, self.a)
    }
}

pub fn fraction_satisfied(points: &[BoundPoint], a: f64) -> f64 {
    if points.is_empty() {
        return 1.0;
    }
    points.iter().filter(|p| p.satisfied(a)).count() as f64 / points.len() as f64
}

/// Least slope `A` with `F(t) <= A t eps` at every admissible grid point.
pub fn fit_bound_constant(
    model: &CompositeModel,
    device: &MeasurementDevice,
    grid: &TimeGrid,
    spec: CoarseningSpec,
    options: BoundOptions,
) -> Result<BoundFit> {
    let (t0, points, excluded_times) = bound_points(model, device, grid, spec)?;
    let a = points
        .iter()
        .map(BoundPoint::required_slope)
        .fold(0.0, f64::max);
    let prop = InteractionPropagator::new(model)?;

    let admissible: Vec<f64> = {
        let mut ts: Vec<f64> = points.iter().map(|p| p.t).filter(|&t| t > 0.0).collect();
        ts.dedup();
        ts
    };
    let chains: Vec<BoundChain> = admissible
        .par_iter()
        .map(|&t| chain_at(model, device, spec, &prop, t, t0.t0, options.k))
        .collect();
    let excluded: Vec<ExcludedTime> = excluded_times
        .par_iter()
        .map(|&t| ExcludedTime {
            t,
            chain_violated: !chain_at(model, device, spec, &prop, t, t0.t0, options.k).holds(),
        })
        .collect();

    let mut chain_violations = Vec::new();
    let mut c_fitted = 0.0f64;
    let mut c_tilde_fitted = 0.0f64;
    let mut k_required = 0.0f64;
    for chain in &chains {
        let eps = mixing_matrix(model, chain.t).tail_profile()[spec.n1 - model.n_apparatus()];
        for row in &chain.rows {
            if !row.holds(options.k) {
                chain_violations.push((chain.t, row.alpha, row.i));
            }
            k_required = k_required.max(ratio(row.sin_form, row.abs_form));
            let rhs = row.linear_rhs(options.k);
            c_fitted = c_fitted.max(ratio(rhs, eps * chain.t * row.v_tail_sum));
            c_tilde_fitted = c_tilde_fitted.max(ratio(rhs, eps * chain.t));
        }
    }

    Ok(BoundFit {
        t0: t0.t0,
        a,
        k: options.k,
        ceiling: options.ceiling,
        verdict: a.is_finite() && a <= options.ceiling,
        points,
        excluded,
        chains,
        chain_violations,
        c_fitted,
        c_tilde_fitted,
        k_required,
    })
}

fn ratio(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        0.0
    } else if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}
