//! Finite-rank truncations `P_n A P_n` and their distance from the full evolution.
//!
//! A [`TruncationPair`] keeps the first `n` vectors of an ordered orthonormal
//! basis (by default the energy eigenbasis). The truncation error of an
//! observable is measured on expectation values along a [`TimeGrid`], and the
//! truncated propagator `P U P` comes with a singular-value certificate that
//! it is rank deficient.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    ensure_dim, ensure_square, evolve, max_abs, spectral_decompose, ComplexMatrix, ComplexVector,
    HermitianOperator, PhaseSign, SpectralDecomposition, StateVector, TimeGrid,
};

/// Singular values at or below this fraction of the largest one count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Ordered orthonormal basis in which the first `n` vectors are kept.
#[derive(Debug, Clone, Copy)]
pub enum Basis<'a> {
    Computational(usize),
    Eigen(&'a SpectralDecomposition),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BasisChoice {
    /// Eigenbasis of the Hamiltonian, eigenvalues ascending.
    #[default]
    Energy,
    Computational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationPair {
    rank: usize,
    basis: ComplexMatrix,
    p: ComplexMatrix,
    q: ComplexMatrix,
}

pub fn make_truncation(basis: Basis<'_>, n: usize) -> Result<TruncationPair> {
    let basis = match basis {
        Basis::Computational(dim) => {
            if dim == 0 {
                return Err(Error::Empty { what: "basis" });
            }
            ComplexMatrix::identity(dim, dim)
        }
        Basis::Eigen(dec) => dec.eigenvectors().clone(),
    };
    let dim = basis.nrows();
    if n > dim {
        return Err(Error::RankOutOfRange { rank: n, dim });
    }
    let kept = basis.columns(0, n);
    let p = kept * kept.adjoint();
    let q = ComplexMatrix::identity(dim, dim) - &p;
    Ok(TruncationPair {
        rank: n,
        basis,
        p,
        q,
    })
}

impl TruncationPair {
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn p(&self) -> &ComplexMatrix {
        &self.p
    }

    pub fn q(&self) -> &ComplexMatrix {
        &self.q
    }

    pub fn basis(&self) -> &ComplexMatrix {
        &self.basis
    }

    pub fn trace_p(&self) -> f64 {
        self.p.trace().re
    }

    /// Largest violation among `P^2 = P`, `Q^2 = Q`, `P = P^dagger`, `PQ = 0`, `P + Q = I`.
    pub fn projector_defect(&self) -> f64 {
        let dim = self.dim();
        let eye = ComplexMatrix::identity(dim, dim);
        [
            max_abs(&(&self.p * &self.p - &self.p)),
            max_abs(&(&self.q * &self.q - &self.q)),
            max_abs(&(&self.p - self.p.adjoint())),
            max_abs(&(&self.p * &self.q)),
            max_abs(&(&self.p + &self.q - eye)),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// `P A P`, embedded in the full space.
pub fn truncate_operator(a: &ComplexMatrix, t: &TruncationPair) -> Result<ComplexMatrix> {
    truncate_operator_between(a, t, t)
}

/// `P_left A P_right`, for distinct left and right ranks.
pub fn truncate_operator_between(
    a: &ComplexMatrix,
    left: &TruncationPair,
    right: &TruncationPair,
) -> Result<ComplexMatrix> {
    ensure_square(a)?;
    ensure_dim("left truncation", a.nrows(), left.dim())?;
    ensure_dim("right truncation", a.nrows(), right.dim())?;
    Ok(&left.p * a * &right.p)
}

/// Truncation error of one observable at one time, with its split into the
/// `Q A Q` term, the `Q A P + P A Q` cross term and the commutator term
/// `<psi| e^{iHt} (P A0 P - P A0 P) e^{-iHt} |psi>`. All terms are normalized
/// by `<psi|psi>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationPoint {
    pub t: f64,
    pub error: f64,
    pub term_qq: f64,
    pub term_cross: f64,
    pub term_comm: f64,
    /// `|diff - (qq + cross + comm)|` on the complex amplitudes.
    pub split_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationReport {
    pub rank: usize,
    pub max_error: f64,
    pub points: Vec<TruncationPoint>,
    pub epsilon: Option<f64>,
}

impl TruncationReport {
    pub fn meets(&self, epsilon: f64) -> bool {
        self.max_error <= epsilon
    }
}

fn bilinear(a: &ComplexMatrix, x: &ComplexVector, y: &ComplexVector) -> Complex64 {
    x.dotc(&(a * y))
}

/// `|<psi|A(t) - P A(t) P|psi>| / <psi|psi>` along `grid`, with `A(t) = e^{-iHt} A0 e^{iHt}`.
pub fn truncation_error(
    psi: &StateVector,
    a0: &HermitianOperator,
    h: &HermitianOperator,
    t: &TruncationPair,
    grid: &TimeGrid,
) -> Result<TruncationReport> {
    let dim = psi.dim();
    ensure_dim("observable", dim, a0.dim())?;
    ensure_dim("Hamiltonian", dim, h.dim())?;
    ensure_dim("truncation", dim, t.dim())?;
    let dec = spectral_decompose(h)?;

    let norm = psi.norm_sqr();
    let v = psi.amplitudes();
    let vp = &t.p * v;
    let vq = &t.q * v;
    let a = a0.matrix();

    let points: Vec<TruncationPoint> = grid
        .points()
        .par_iter()
        .map(|&time| {
            // <x|A(t)|y> = <U x|A0|U y> with U = e^{iHt}
            let u_v = dec.propagate(v, time, PhaseSign::Positive);
            let u_p = dec.propagate(&vp, time, PhaseSign::Positive);
            let u_q = dec.propagate(&vq, time, PhaseSign::Positive);
            let full = bilinear(a, &u_v, &u_v);
            let kept = bilinear(a, &u_p, &u_p);
            let diff = full - kept;
            let qq = bilinear(a, &u_q, &u_q);
            let cross = bilinear(a, &u_q, &u_p) + bilinear(a, &u_p, &u_q);
            // The commutator term P A0 P - P A0 P vanishes for a single projector pair.
            let cm = Complex64::new(0.0, 0.0);
            TruncationPoint {
                t: time,
                error: diff.norm() / norm,
                term_qq: qq.norm() / norm,
                term_cross: cross.norm() / norm,
                term_comm: cm.norm() / norm,
                split_residual: (diff - (qq + cross + cm)).norm() / norm,
            }
        })
        .collect();
    let max_error = points.iter().map(|p| p.error).fold(0.0, f64::max);
    Ok(TruncationReport {
        rank: t.rank(),
        max_error,
        points,
        epsilon: None,
    })
}

/// Max-over-grid truncation error for every rank `n = 0..=D` at once.
///
/// In the energy eigenbasis `<psi|P_n A(t) P_n|psi> = phi^dagger A0~ phi`
/// restricted to the leading `n x n` block, with `phi_k = e^{i lambda_k t} <s_k|psi>`
/// and `A0~ = S^dagger A0 S`, so all ranks follow from running block sums.
pub fn rank_profile(
    psi: &StateVector,
    a0: &HermitianOperator,
    h: &HermitianOperator,
    grid: &TimeGrid,
    basis: BasisChoice,
) -> Result<Vec<f64>> {
    let dim = psi.dim();
    ensure_dim("observable", dim, a0.dim())?;
    ensure_dim("Hamiltonian", dim, h.dim())?;
    let dec = spectral_decompose(h)?;
    let norm = psi.norm_sqr();
    let v = psi.amplitudes();
    let a = a0.matrix();
    let rotated = match basis {
        BasisChoice::Energy => Some(dec.eigenvectors().adjoint() * a * dec.eigenvectors()),
        BasisChoice::Computational => None,
    };
    let coeffs = match basis {
        BasisChoice::Energy => dec.to_eigenbasis(v),
        BasisChoice::Computational => v.clone(),
    };

    let per_time: Vec<Vec<f64>> = grid
        .points()
        .par_iter()
        .map(|&time| {
            let u_v = dec.propagate(v, time, PhaseSign::Positive);
            let full = bilinear(a, &u_v, &u_v);
            // gram[k][l] = y_k^dagger A0 y_l for y_k = coeff_k U b_k
            let gram: ComplexMatrix = match &rotated {
                Some(a_rot) => {
                    let phi: Vec<Complex64> = coeffs
                        .iter()
                        .zip(dec.eigenvalues())
                        .map(|(c, &lambda)| c * Complex64::from_polar(1.0, lambda * time))
                        .collect();
                    DMatrix::from_fn(dim, dim, |k, l| phi[k].conj() * a_rot[(k, l)] * phi[l])
                }
                None => {
                    let mut y = dec.propagator(time, PhaseSign::Positive);
                    for (k, c) in coeffs.iter().enumerate() {
                        for z in y.column_mut(k).iter_mut() {
                            *z *= c;
                        }
                    }
                    y.adjoint() * a * &y
                }
            };
            let mut errors = Vec::with_capacity(dim + 1);
            let mut kept = Complex64::new(0.0, 0.0);
            errors.push(full.norm() / norm);
            for n in 0..dim {
                kept += gram[(n, n)];
                for k in 0..n {
                    kept += gram[(n, k)] + gram[(k, n)];
                }
                errors.push((full - kept).norm() / norm);
            }
            errors
        })
        .collect();

    let mut profile = vec![0.0f64; dim + 1];
    for errors in &per_time {
        for (slot, e) in profile.iter_mut().zip(errors) {
            *slot = slot.max(*e);
        }
    }
    Ok(profile)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankSearch {
    pub rank: usize,
    pub epsilon: f64,
    /// Verified max-over-grid error at `rank`.
    pub error_at_rank: f64,
    /// Profile error at `rank - 1`, when `rank > 0`.
    pub error_below: Option<f64>,
    /// Max-over-grid error for every rank `0..=D`.
    pub profile: Vec<f64>,
}

/// Smallest rank `n` whose truncation error stays within `epsilon` on the grid.
pub fn minimal_rank_for_epsilon(
    psi: &StateVector,
    a0: &HermitianOperator,
    h: &HermitianOperator,
    grid: &TimeGrid,
    epsilon: f64,
) -> Result<RankSearch> {
    minimal_rank_in_basis(psi, a0, h, grid, epsilon, BasisChoice::Energy)
}

pub fn minimal_rank_in_basis(
    psi: &StateVector,
    a0: &HermitianOperator,
    h: &HermitianOperator,
    grid: &TimeGrid,
    epsilon: f64,
    basis: BasisChoice,
) -> Result<RankSearch> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::param(
            "epsilon",
            format!("must be finite and > 0, got {epsilon}"),
        ));
    }
    let profile = rank_profile(psi, a0, h, grid, basis)?;
    let dim = psi.dim();
    let dec = spectral_decompose(h)?;
    let basis_ref = match basis {
        BasisChoice::Energy => Basis::Eigen(&dec),
        BasisChoice::Computational => Basis::Computational(dim),
    };
    // The error is not monotone in n: every candidate is re-checked directly.
    for n in 0..=dim {
        if profile[n] > epsilon {
            continue;
        }
        let pair = make_truncation(basis_ref, n)?;
        let report = truncation_error(psi, a0, h, &pair, grid)?;
        if report.meets(epsilon) || n == dim {
            return Ok(RankSearch {
                rank: n,
                epsilon,
                error_at_rank: report.max_error,
                error_below: n.checked_sub(1).map(|m| profile[m]),
                profile,
            });
        }
    }
    unreachable!("rank D always terminates the search")
}

/// `P U P` with its singular values and a rank-deficiency certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedEvolution {
    pub rank: usize,
    pub matrix: ComplexMatrix,
    pub full: ComplexMatrix,
    /// Descending.
    pub singular_values: Vec<f64>,
    /// Number of singular values `<= RANK_TOLERANCE * sigma_max`.
    pub near_zero: usize,
}

impl TruncatedEvolution {
    /// At least `D - n` vanishing singular values, i.e. zero determinant.
    pub fn determinant_vanishes(&self) -> bool {
        self.near_zero >= self.full.nrows() - self.rank
    }

    pub fn numerical_rank(&self) -> usize {
        self.singular_values.len() - self.near_zero
    }

    /// `|<psi|U - P U P|psi>| / <psi|psi>`.
    pub fn expectation_gap(&self, psi: &StateVector) -> Result<f64> {
        ensure_dim("state", self.full.nrows(), psi.dim())?;
        let v = psi.amplitudes();
        let diff = &self.full - &self.matrix;
        Ok(bilinear(&diff, v, v).norm() / psi.norm_sqr())
    }
}

/// Descending singular values of `m`.
pub fn singular_values(m: &ComplexMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `|det m|` as the product of singular values.
pub fn determinant_modulus(m: &ComplexMatrix) -> f64 {
    singular_values(m).iter().product()
}

pub fn count_near_zero(singular: &[f64], relative: f64) -> usize {
    let max = singular.first().copied().unwrap_or(0.0);
    singular.iter().filter(|&&s| s <= relative * max).count()
}

/// `U_n = P U P` for `U = e^{iHt}`; refuses `n = D` since nothing is truncated.
pub fn truncated_evolution(
    h: &HermitianOperator,
    time: f64,
    t: &TruncationPair,
) -> Result<TruncatedEvolution> {
    ensure_dim("truncation", h.dim(), t.dim())?;
    if t.rank() == t.dim() {
        return Err(Error::NoOpTruncation { dim: t.dim() });
    }
    let full = evolve(h, time, PhaseSign::Positive)?;
    let matrix = truncate_operator(&full, t)?;
    let singular_values = singular_values(&matrix);
    let near_zero = count_near_zero(&singular_values, RANK_TOLERANCE);
    Ok(TruncatedEvolution {
        rank: t.rank(),
        matrix,
        full,
        singular_values,
        near_zero,
    })
}
