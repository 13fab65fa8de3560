use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use super::CoarseningSpec;
use crate::error::{Error, Result};
use crate::linalg::TimeGrid;
use crate::measurement::{gamma_phase, CompositeModel};

/// `M_ij(t) = c_i conj(d_j) gamma_ij(t)`, rows over apparatus states, columns
/// over particle states (column `j - N`).
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    pub t: f64,
    pub entries: DMatrix<Complex64>,
}

pub fn mixing_matrix(model: &CompositeModel, t: f64) -> MixingMatrix {
    let n = model.n_apparatus();
    let e = model.energies();
    let entries = DMatrix::from_fn(n, model.dim() - n, |i, col| {
        let j = col + n;
        model.amplitude(i) * model.amplitude(j).conj() * gamma_phase(e[i], e[j], t)
    });
    MixingMatrix { t, entries }
}

impl MixingMatrix {
    /// `eps(n1) = max_i max(|sum_{j >= n1} Re M_ij|, |sum_{j >= n1} Im M_ij|)`
    /// for every `n1` in `N..=D`; entry `k` belongs to `n1 = N + k`.
    pub fn tail_profile(&self) -> Vec<f64> {
        let (rows, cols) = self.entries.shape();
        let mut profile = vec![0.0f64; cols + 1];
        for i in 0..rows {
            let mut re = 0.0;
            let mut im = 0.0;
            for col in (0..cols).rev() {
                re += self.entries[(i, col)].re;
                im += self.entries[(i, col)].im;
                profile[col] = profile[col].max(re.abs()).max(im.abs());
            }
        }
        profile
    }
}

/// Tail measure `eps(n1)` at time `t`.
pub fn tail_epsilon(model: &CompositeModel, t: f64, n1: usize) -> f64 {
    mixing_matrix(model, t).tail_profile()[n1 - model.n_apparatus()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeresThresholds {
    /// The tail is considered decayed once `eps(n1) <= epsilon`.
    pub epsilon: f64,
    /// Relative tail size at which partial sums of `|V_ij|` count as converged.
    pub plateau: f64,
}

impl Default for PeresThresholds {
    fn default() -> Self {
        Self {
            epsilon: 1e-2,
            plateau: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeresProfile {
    pub times: Vec<f64>,
    /// Cutoffs `N+1..=D`.
    pub n1_values: Vec<usize>,
    /// `epsilon[k][m]` at `times[k]` and `n1_values[m]`.
    pub epsilon: Vec<Vec<f64>>,
    /// Max over the grid for each cutoff.
    pub max_epsilon: Vec<f64>,
    /// Smallest cutoff from which `eps` stays below the threshold at every larger cutoff.
    pub decayed_from: Option<usize>,
    /// Whether the tail decays below the threshold before `n1 = D`.
    pub verdict: bool,
    /// Per apparatus row: first `K < D` with `sum_{j >= K} |V_ij| <= plateau * sum_{N <= j < K} |V_ij|`.
    pub plateau_onset: Vec<Option<usize>>,
}

impl PeresProfile {
    pub fn series_converges(&self) -> bool {
        self.plateau_onset.iter().all(Option::is_some)
    }
}

/// Tail decay of the mixing matrix over all cutoffs and grid times.
pub fn peres_condition_check(
    model: &CompositeModel,
    grid: &TimeGrid,
    thresholds: PeresThresholds,
) -> Result<PeresProfile> {
    if !(thresholds.epsilon >= 0.0 && thresholds.plateau >= 0.0) {
        return Err(Error::param("thresholds", "must be non-negative"));
    }
    let n = model.n_apparatus();
    let dim = model.dim();
    let n1_values: Vec<usize> = ((n + 1)..=dim).collect();
    let epsilon: Vec<Vec<f64>> = grid
        .points()
        .iter()
        .map(|&t| mixing_matrix(model, t).tail_profile()[1..].to_vec())
        .collect();
    let max_epsilon: Vec<f64> = (0..n1_values.len())
        .map(|m| epsilon.iter().map(|row| row[m]).fold(0.0, f64::max))
        .collect();

    let mut decayed_from = None;
    for (m, &n1) in n1_values.iter().enumerate().rev() {
        if max_epsilon[m] <= thresholds.epsilon {
            decayed_from = Some(n1);
        } else {
            break;
        }
    }
    let verdict = decayed_from.is_some_and(|n1| n1 < dim);

    let v = model.interaction().matrix();
    let plateau_onset = (0..n)
        .map(|i| {
            let mags: Vec<f64> = (n..dim).map(|j| v[(i, j)].norm()).collect();
            let total: f64 = mags.iter().sum();
            let mut head = 0.0;
            for (k, m) in mags.iter().enumerate() {
                head += m;
                let tail = total - head;
                if k + 1 < mags.len() && tail <= thresholds.plateau * head {
                    return Some(n + k + 1);
                }
            }
            None
        })
        .collect();

    Ok(PeresProfile {
        times: grid.points().to_vec(),
        n1_values,
        epsilon,
        max_epsilon,
        decayed_from,
        verdict,
        plateau_onset,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharacteristicTime {
    /// `(pi / 2) / max |V_ij|`; infinite when the block vanishes.
    pub t0: f64,
    pub v_max: f64,
    /// Location `(i, j)` of the maximum, if the block is nonzero.
    pub argmax: Option<(usize, usize)>,
}

impl CharacteristicTime {
    pub fn is_bounded(&self) -> bool {
        self.t0.is_finite()
    }
}

/// `t0 = (pi/2) / max |<psi_i|V|psi_j>|` over apparatus rows `i < N` and
/// particle columns from the last coarse state on, `j >= n1 - 1`.
pub fn characteristic_time(
    model: &CompositeModel,
    spec: CoarseningSpec,
) -> Result<CharacteristicTime> {
    spec.validate(model)?;
    let v = model.interaction().matrix();
    let mut v_max = 0.0f64;
    let mut argmax = None;
    for i in 0..model.n_apparatus() {
        for j in (spec.n1 - 1)..model.dim() {
            let m = v[(i, j)].norm();
            if m > v_max {
                v_max = m;
                argmax = Some((i, j));
            }
        }
    }
    let t0 = if v_max > 0.0 {
        std::f64::consts::FRAC_PI_2 / v_max
    } else {
        f64::INFINITY
    };
    Ok(CharacteristicTime { t0, v_max, argmax })
}
