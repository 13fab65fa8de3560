//! Discrete-weight measurement devices and their readout curves.
//!
//! The composite system has `N` apparatus states (indices `0..N`) and `D - N`
//! particle states (`N..D`), all eigenstates of `H0 = diag(E)`. The apparatus
//! is coupled to the particle by the interaction `V`, whose propagator
//! `W(t) = exp(iVt)` enters the readout through the moduli `|W_ij|^2`.
//!
//! With `gamma_ij(t) = exp(i (E_i - E_j) t)` the interacting readout of
//! channel `alpha` is
//!
//! ```text
//! P_a(t) = sum_i |c_i|^2 rho_ai |W_ii|^2
//!        + sum_ij c_i conj(d_j) gamma_ij rho_ai |W_ij|^2
//!        + sum_ij conj(c_i) d_j gamma_ji rho_ai |W_ij|^2
//!        + sum_j |d_j|^2 rho_aj |W_jj|^2
//! ```
//!
//! and the free readout drops the two cross families. The particle index of
//! the cross families runs over `N..cutoff`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    ensure_dim, spectral_decompose, ComplexMatrix, ComplexVector, HermitianOperator, OperatorRole,
    PhaseSign, SpectralDecomposition, StateVector, TimeGrid,
};

/// Accepted deviation of a device column sum from 1.
pub const DEVICE_NORMALIZATION_TOLERANCE: f64 = 1e-9;
const MODEL_NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// `gamma_ij(t) = exp(i (E_i - E_j) t)`; `gamma_ji = conj(gamma_ij)`.
pub fn gamma_phase(e_i: f64, e_j: f64, t: f64) -> Complex64 {
    Complex64::from_polar(1.0, (e_i - e_j) * t)
}

/// Channel weights `rho[alpha][k]` over all `D` basis states, each column summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementDevice {
    weights: DMatrix<f64>,
}

pub fn build_device(weights: DMatrix<f64>) -> Result<MeasurementDevice> {
    if weights.nrows() == 0 || weights.ncols() == 0 {
        return Err(Error::Empty {
            what: "device weights",
        });
    }
    for alpha in 0..weights.nrows() {
        for k in 0..weights.ncols() {
            let value = weights[(alpha, k)];
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::NegativeWeight {
                    channel: alpha,
                    state: k,
                    value,
                });
            }
        }
    }
    for k in 0..weights.ncols() {
        let sum: f64 = weights.column(k).iter().sum();
        if (sum - 1.0).abs() > DEVICE_NORMALIZATION_TOLERANCE {
            return Err(Error::Normalization { state: k, sum });
        }
    }
    Ok(MeasurementDevice { weights })
}

impl MeasurementDevice {
    pub fn uniform(channels: usize, dim: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::param("channels", "need at least one channel"));
        }
        build_device(DMatrix::from_element(channels, dim, 1.0 / channels as f64))
    }

    pub fn channels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weight(&self, alpha: usize, k: usize) -> f64 {
        self.weights[(alpha, k)]
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }
}

/// Apparatus plus particle, `H = diag(E) + V`, initial state `(c, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeModel {
    n_apparatus: usize,
    c: Vec<Complex64>,
    d: Vec<Complex64>,
    energies: Vec<f64>,
    interaction: HermitianOperator,
}

impl CompositeModel {
    pub fn new(
        c: Vec<Complex64>,
        d: Vec<Complex64>,
        energies: Vec<f64>,
        interaction: HermitianOperator,
    ) -> Result<Self> {
        let n = c.len();
        let dim = n + d.len();
        if n == 0 {
            return Err(Error::param(
                "apparatus",
                "need at least one apparatus state",
            ));
        }
        if d.is_empty() {
            return Err(Error::param("particle", "need at least one particle state"));
        }
        ensure_dim("energies", dim, energies.len())?;
        ensure_dim("interaction", dim, interaction.dim())?;
        if energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite { what: "energies" });
        }
        if c.iter()
            .chain(&d)
            .any(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(Error::NonFinite { what: "amplitudes" });
        }
        let total: f64 = c.iter().chain(&d).map(|z| z.norm_sqr()).sum();
        if (total - 1.0).abs() > MODEL_NORMALIZATION_TOLERANCE {
            return Err(Error::param(
                "amplitudes",
                format!("sum of |c|^2 + |d|^2 is {total}, expected 1"),
            ));
        }
        Ok(Self {
            n_apparatus: n,
            c,
            d,
            energies,
            interaction: interaction.with_role(OperatorRole::Interaction),
        })
    }

    /// Splits a normalized state into apparatus (`0..n_apparatus`) and particle blocks.
    pub fn from_state(
        state: &StateVector,
        n_apparatus: usize,
        energies: Vec<f64>,
        interaction: HermitianOperator,
    ) -> Result<Self> {
        let s = state.clone().into_normalized();
        let amps = s.amplitudes();
        if n_apparatus > amps.len() {
            return Err(Error::param(
                "apparatus",
                "more apparatus states than the dimension",
            ));
        }
        let c = amps.rows(0, n_apparatus).iter().copied().collect();
        let d = amps
            .rows(n_apparatus, amps.len() - n_apparatus)
            .iter()
            .copied()
            .collect();
        Self::new(c, d, energies, interaction)
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn n_apparatus(&self) -> usize {
        self.n_apparatus
    }

    pub fn apparatus(&self) -> &[Complex64] {
        &self.c
    }

    pub fn particle(&self) -> &[Complex64] {
        &self.d
    }

    /// Amplitude of basis state `k` (apparatus first).
    pub fn amplitude(&self, k: usize) -> Complex64 {
        if k < self.n_apparatus {
            self.c[k]
        } else {
            self.d[k - self.n_apparatus]
        }
    }

    pub fn state(&self) -> ComplexVector {
        ComplexVector::from_iterator(self.dim(), self.c.iter().chain(&self.d).copied())
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn interaction(&self) -> &HermitianOperator {
        &self.interaction
    }

    /// Same model with the interaction multiplied by `factor`.
    pub fn with_interaction_scaled(&self, factor: f64) -> Self {
        Self {
            interaction: self.interaction.scaled(factor),
            ..self.clone()
        }
    }

    pub fn unperturbed_hamiltonian(&self) -> HermitianOperator {
        HermitianOperator::from_diagonal(&self.energies, OperatorRole::Hamiltonian)
    }

    fn check_device(&self, device: &MeasurementDevice) -> Result<()> {
        ensure_dim("device", self.dim(), device.dim())
    }

    pub(crate) fn check_cutoff(&self, cutoff: usize) -> Result<()> {
        if cutoff < self.n_apparatus || cutoff > self.dim() {
            return Err(Error::CutoffOutOfRange {
                cutoff,
                min: self.n_apparatus,
                max: self.dim(),
            });
        }
        Ok(())
    }
}

/// Per-channel pieces of the readout at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutTerms {
    pub apparatus_diagonal: f64,
    /// `sum_ij c_i conj(d_j) gamma_ij rho_ai |W_ij|^2`
    pub cross: Complex64,
    /// `sum_ij conj(c_i) d_j gamma_ji rho_ai |W_ij|^2`
    pub cross_conjugate: Complex64,
    pub particle_diagonal: f64,
}

impl ReadoutTerms {
    pub fn interacting(&self) -> Complex64 {
        Complex64::new(self.apparatus_diagonal, 0.0)
            + self.cross
            + self.cross_conjugate
            + Complex64::new(self.particle_diagonal, 0.0)
    }

    pub fn free(&self) -> f64 {
        self.apparatus_diagonal + self.particle_diagonal
    }

    /// `q(t)`, the cross-term part that separates interacting from free readout.
    pub fn gap(&self) -> Complex64 {
        self.cross + self.cross_conjugate
    }
}

/// Spectral data of `V`, reused across the grid.
#[derive(Debug, Clone)]
pub struct InteractionPropagator {
    decomposition: SpectralDecomposition,
}

impl InteractionPropagator {
    pub fn new(model: &CompositeModel) -> Result<Self> {
        Ok(Self {
            decomposition: spectral_decompose(model.interaction())?,
        })
    }

    /// `W(t) = exp(iVt)`.
    pub fn at(&self, t: f64) -> ComplexMatrix {
        self.decomposition.propagator(t, PhaseSign::Positive)
    }

    pub fn decomposition(&self) -> &SpectralDecomposition {
        &self.decomposition
    }
}

/// Readout terms for every channel, cross families restricted to particle indices `N..cutoff`.
pub fn readout_terms(
    model: &CompositeModel,
    device: &MeasurementDevice,
    w: &ComplexMatrix,
    t: f64,
    cutoff: usize,
) -> Vec<ReadoutTerms> {
    let n = model.n_apparatus();
    let dim = model.dim();
    let e = model.energies();
    (0..device.channels())
        .map(|alpha| {
            let mut apparatus_diagonal = 0.0;
            let mut cross = Complex64::new(0.0, 0.0);
            let mut cross_conjugate = Complex64::new(0.0, 0.0);
            for i in 0..n {
                let ci = model.c[i];
                let rho = device.weight(alpha, i);
                apparatus_diagonal += ci.norm_sqr() * rho * w[(i, i)].norm_sqr();
                for j in n..cutoff {
                    let dj = model.d[j - n];
                    let gamma = gamma_phase(e[i], e[j], t);
                    let w2 = w[(i, j)].norm_sqr();
                    cross += ci * dj.conj() * gamma * rho * w2;
                    cross_conjugate += ci.conj() * dj * gamma.conj() * rho * w2;
                }
            }
            let particle_diagonal = (n..dim)
                .map(|j| model.d[j - n].norm_sqr() * device.weight(alpha, j) * w[(j, j)].norm_sqr())
                .sum();
            ReadoutTerms {
                apparatus_diagonal,
                cross,
                cross_conjugate,
                particle_diagonal,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReadoutKind {
    Interacting,
    Free,
    ExactOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReadoutCurve {
    pub kind: ReadoutKind,
    pub times: Vec<f64>,
    /// `probabilities[alpha][k]` at `times[k]`.
    pub probabilities: Vec<Vec<f64>>,
    /// Largest `|Im P_alpha(t)|` encountered before taking the real part.
    pub max_imaginary: f64,
    pub cutoff: usize,
}

impl ReadoutCurve {
    pub fn channels(&self) -> usize {
        self.probabilities.len()
    }

    fn from_columns(
        kind: ReadoutKind,
        grid: &TimeGrid,
        columns: Vec<Vec<Complex64>>,
        cutoff: usize,
    ) -> Self {
        let channels = columns.first().map_or(0, Vec::len);
        let mut probabilities = vec![Vec::with_capacity(grid.len()); channels];
        let mut max_imaginary = 0.0f64;
        for col in &columns {
            for (alpha, p) in col.iter().enumerate() {
                probabilities[alpha].push(p.re);
                max_imaginary = max_imaginary.max(p.im.abs());
            }
        }
        Self {
            kind,
            times: grid.points().to_vec(),
            probabilities,
            max_imaginary,
            cutoff,
        }
    }
}

fn terms_on_grid(
    model: &CompositeModel,
    device: &MeasurementDevice,
    grid: &TimeGrid,
    cutoff: usize,
) -> Result<Vec<Vec<ReadoutTerms>>> {
    model.check_device(device)?;
    model.check_cutoff(cutoff)?;
    let prop = InteractionPropagator::new(model)?;
    Ok(grid
        .points()
        .par_iter()
        .map(|&t| readout_terms(model, device, &prop.at(t), t, cutoff))
        .collect())
}

/// Interacting readout with the cross families summed over particle states `N..cutoff`.
pub fn interacting_readout(
    model: &CompositeModel,
    device: &MeasurementDevice,
    grid: &TimeGrid,
    cutoff: usize,
) -> Result<ReadoutCurve> {
    let terms = terms_on_grid(model, device, grid, cutoff)?;
    let columns = terms
        .iter()
        .map(|per_channel| per_channel.iter().map(ReadoutTerms::interacting).collect())
        .collect();
    Ok(ReadoutCurve::from_columns(
        ReadoutKind::Interacting,
        grid,
        columns,
        cutoff,
    ))
}

/// Readout of an apparatus never brought into contact with the particle.
pub fn free_readout(
    model: &CompositeModel,
    device: &MeasurementDevice,
    grid: &TimeGrid,
) -> Result<ReadoutCurve> {
    let n = model.n_apparatus();
    let terms = terms_on_grid(model, device, grid, n)?;
    let columns = terms
        .iter()
        .map(|per_channel| {
            per_channel
                .iter()
                .map(|r| Complex64::new(r.free(), 0.0))
                .collect()
        })
        .collect();
    Ok(ReadoutCurve::from_columns(
        ReadoutKind::Free,
        grid,
        columns,
        n,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactComparison {
    pub curve: ReadoutCurve,
    /// `max_alpha |P_exact - P_interacting|` per grid point.
    pub deviation: Vec<f64>,
    pub max_deviation: f64,
}

/// Born-rule readout `sum_k rho_ak |<k| exp(i(H0 + V)t) |psi0>|^2` from exact
/// evolution, compared against [`interacting_readout`] at full cutoff.
pub fn exact_oracle_readout(
    model: &CompositeModel,
    device: &MeasurementDevice,
    grid: &TimeGrid,
) -> Result<ExactComparison> {
    model.check_device(device)?;
    let total = model.unperturbed_hamiltonian().plus(model.interaction())?;
    let dec = spectral_decompose(&total)?;
    let psi0 = model.state();
    let columns: Vec<Vec<Complex64>> = grid
        .points()
        .par_iter()
        .map(|&t| {
            let psi = dec.propagate(&psi0, t, PhaseSign::Positive);
            (0..device.channels())
                .map(|alpha| {
                    let p: f64 = psi
                        .iter()
                        .enumerate()
                        .map(|(k, a)| device.weight(alpha, k) * a.norm_sqr())
                        .sum();
                    Complex64::new(p, 0.0)
                })
                .collect()
        })
        .collect();
    let curve = ReadoutCurve::from_columns(ReadoutKind::ExactOracle, grid, columns, model.dim());
    let reference = interacting_readout(model, device, grid, model.dim())?;
    let deviation: Vec<f64> = (0..grid.len())
        .map(|k| {
            (0..device.channels())
                .map(|a| (curve.probabilities[a][k] - reference.probabilities[a][k]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let max_deviation = deviation.iter().copied().fold(0.0, f64::max);
    Ok(ExactComparison {
        curve,
        deviation,
        max_deviation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelQuality {
    pub alpha: usize,
    pub q: f64,
    pub t_at_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport {
    pub channels: Vec<ChannelQuality>,
    /// `max_alpha Q_alpha`.
    pub aggregate: f64,
}

/// `Q_alpha = max_t |P_alpha(t) - P'_alpha(t)|` over the shared grid.
pub fn quality(interacting: &ReadoutCurve, free: &ReadoutCurve) -> Result<QualityReport> {
    if interacting.times != free.times {
        return Err(Error::GridMismatch(
            "readout curves are sampled on different times".into(),
        ));
    }
    if interacting.channels() != free.channels() {
        return Err(Error::GridMismatch(format!(
            "{} vs {} channels",
            interacting.channels(),
            free.channels()
        )));
    }
    let channels: Vec<ChannelQuality> = interacting
        .probabilities
        .iter()
        .zip(&free.probabilities)
        .enumerate()
        .map(|(alpha, (p, pf))| {
            let mut best = ChannelQuality {
                alpha,
                q: 0.0,
                t_at_max: interacting.times[0],
            };
            for (k, (a, b)) in p.iter().zip(pf).enumerate() {
                let diff = (a - b).abs();
                if diff > best.q {
                    best.q = diff;
                    best.t_at_max = interacting.times[k];
                }
            }
            best
        })
        .collect();
    let aggregate = channels.iter().map(|c| c.q).fold(0.0, f64::max);
    Ok(QualityReport {
        channels,
        aggregate,
    })
}
