//! Dense complex linear algebra on the finite proxy Hilbert space.
//!
//! States are amplitude vectors, observables and Hamiltonians are Hermitian
//! matrices, and every matrix function (in particular the propagator
//! `U(t) = exp(± i H t)`) is evaluated through an eigendecomposition so that
//! unitarity holds to machine precision. `hbar = 1` throughout.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// Maximum entrywise deviation `|A - A^dagger|` accepted when building a
/// [`HermitianOperator`] from raw data.
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

const NORMALIZED_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorRole {
    #[default]
    Hamiltonian,
    Observable,
    Interaction,
}

/// Sign of the exponent of the propagator.
///
/// `Positive` is `U = exp(+iHt)`, `Negative` the textbook `exp(-iHt)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseSign {
    #[default]
    Positive,
    Negative,
}

impl PhaseSign {
    pub fn as_f64(self) -> f64 {
        match self {
            PhaseSign::Positive => 1.0,
            PhaseSign::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            PhaseSign::Positive => PhaseSign::Negative,
            PhaseSign::Negative => PhaseSign::Positive,
        }
    }
}

pub(crate) fn ensure_square(m: &ComplexMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(Error::Empty { what: "matrix" });
    }
    Ok(m.nrows())
}

pub(crate) fn ensure_finite(m: &ComplexMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what })
    }
}

pub(crate) fn ensure_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}

/// Largest entrywise modulus `max |a_ij|`.
pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `max |A - A^dagger|` over all entries.
pub fn hermitian_deviation(m: &ComplexMatrix) -> f64 {
    let n = m.nrows().min(m.ncols());
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// `max |U^dagger U - I|`, the unitarity defect used throughout the tests.
pub fn unitarity_defect(u: &ComplexMatrix) -> f64 {
    let gram = u.adjoint() * u;
    let eye = ComplexMatrix::identity(u.ncols(), u.ncols());
    max_abs(&(gram - eye))
}

/// A Hermitian matrix tagged with the physical role it plays.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: ComplexMatrix,
    role: OperatorRole,
}

impl HermitianOperator {
    /// Validates and symmetrizes `matrix` with the default tolerance.
    pub fn new(matrix: ComplexMatrix, role: OperatorRole) -> Result<Self> {
        Self::with_tolerance(matrix, role, HERMITIAN_TOLERANCE)
    }

    /// Accepts `matrix` if `max |A - A^dagger| <= tolerance` and stores
    /// `(A + A^dagger) / 2`; rejects it otherwise.
    pub fn with_tolerance(
        matrix: ComplexMatrix,
        role: OperatorRole,
        tolerance: f64,
    ) -> Result<Self> {
        ensure_square(&matrix)?;
        ensure_finite(&matrix, "operator")?;
        let deviation = hermitian_deviation(&matrix);
        if deviation > tolerance {
            return Err(Error::NotHermitian {
                deviation,
                tolerance,
            });
        }
        let sym = (&matrix + matrix.adjoint()).unscale(2.0);
        Ok(Self { matrix: sym, role })
    }

    pub fn zeros(dim: usize, role: OperatorRole) -> Self {
        Self {
            matrix: ComplexMatrix::zeros(dim, dim),
            role,
        }
    }

    pub fn from_diagonal(values: &[f64], role: OperatorRole) -> Self {
        let diag = ComplexVector::from_iterator(
            values.len(),
            values.iter().map(|&v| Complex64::new(v, 0.0)),
        );
        Self {
            matrix: ComplexMatrix::from_diagonal(&diag),
            role,
        }
    }

    /// Builds a Hermitian operator from real parts and imaginary parts.
    pub fn from_parts(re: &DMatrix<f64>, im: &DMatrix<f64>, role: OperatorRole) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(Error::DimensionMismatch {
                what: "imaginary part",
                expected: re.nrows(),
                found: im.nrows(),
            });
        }
        let m = ComplexMatrix::from_fn(re.nrows(), re.ncols(), |i, j| {
            Complex64::new(re[(i, j)], im[(i, j)])
        });
        Self::new(m, role)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn role(&self) -> OperatorRole {
        self.role
    }

    pub fn with_role(mut self, role: OperatorRole) -> Self {
        self.role = role;
        self
    }

    /// `scale * A`, still Hermitian for real `scale`.
    pub fn scaled(&self, scale: f64) -> Self {
        Self {
            matrix: self.matrix.scale(scale),
            role: self.role,
        }
    }

    /// Sum of two Hermitian operators of equal dimension; keeps `self`'s role.
    pub fn plus(&self, other: &HermitianOperator) -> Result<Self> {
        ensure_dim("operator sum", self.dim(), other.dim())?;
        Ok(Self {
            matrix: &self.matrix + &other.matrix,
            role: self.role,
        })
    }
}

/// Complex amplitude vector. Need not be normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: ComplexVector,
    normalized: bool,
}

impl StateVector {
    pub fn new(amplitudes: ComplexVector) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::Empty {
                what: "state vector",
            });
        }
        if !amplitudes
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
        {
            return Err(Error::NonFinite {
                what: "state vector",
            });
        }
        let norm = amplitudes.norm();
        if norm == 0.0 {
            return Err(Error::ZeroState);
        }
        let normalized = (norm - 1.0).abs() <= NORMALIZED_TOLERANCE;
        Ok(Self {
            amplitudes,
            normalized,
        })
    }

    /// Rescales the amplitudes to unit norm.
    pub fn normalized(amplitudes: ComplexVector) -> Result<Self> {
        let state = Self::new(amplitudes)?;
        Ok(state.into_normalized())
    }

    pub fn from_slice(amplitudes: &[Complex64]) -> Result<Self> {
        Self::new(ComplexVector::from_column_slice(amplitudes))
    }

    /// The k-th computational basis vector.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::param(
                "basis index",
                format!("{k} >= dimension {dim}"),
            ));
        }
        let mut v = ComplexVector::zeros(dim);
        v[k] = Complex64::new(1.0, 0.0);
        Self::new(v)
    }

    pub fn into_normalized(self) -> Self {
        if self.normalized {
            return self;
        }
        let norm = self.amplitudes.norm();
        Self {
            amplitudes: self.amplitudes.unscale(norm),
            normalized: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &ComplexVector {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }
}

/// Eigenvalues in ascending order together with the unitary matrix whose
/// columns are the matching eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: ComplexMatrix,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &ComplexMatrix {
        &self.eigenvectors
    }

    /// `S diag(f(lambda)) S^dagger`.
    pub fn apply_function<F>(&self, f: F) -> ComplexMatrix
    where
        F: Fn(f64) -> Complex64,
    {
        let mut scaled = self.eigenvectors.clone();
        for (k, &lambda) in self.eigenvalues.iter().enumerate() {
            let w = f(lambda);
            for z in scaled.column_mut(k).iter_mut() {
                *z *= w;
            }
        }
        scaled * self.eigenvectors.adjoint()
    }

    /// `exp(sign * i * H * t)`.
    pub fn propagator(&self, t: f64, sign: PhaseSign) -> ComplexMatrix {
        if t == 0.0 {
            return ComplexMatrix::identity(self.dim(), self.dim());
        }
        let s = sign.as_f64();
        self.apply_function(|lambda| Complex64::from_polar(1.0, s * lambda * t))
    }

    /// `exp(sign * i * H * t) v` without forming the propagator.
    pub fn propagate(&self, v: &ComplexVector, t: f64, sign: PhaseSign) -> ComplexVector {
        if t == 0.0 {
            return v.clone();
        }
        let s = sign.as_f64();
        let mut coeffs = self.eigenvectors.ad_mul(v);
        for (c, &lambda) in coeffs.iter_mut().zip(&self.eigenvalues) {
            *c *= Complex64::from_polar(1.0, s * lambda * t);
        }
        &self.eigenvectors * coeffs
    }

    /// Coordinates `S^dagger v` of `v` in the eigenbasis.
    pub fn to_eigenbasis(&self, v: &ComplexVector) -> ComplexVector {
        self.eigenvectors.ad_mul(v)
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.apply_function(|lambda| Complex64::new(lambda, 0.0))
    }

    /// `max |A - S Lambda S^dagger|`.
    pub fn reconstruction_error(&self, original: &ComplexMatrix) -> f64 {
        max_abs(&(original - self.reconstruct()))
    }

    /// `max |S^dagger S - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        unitarity_defect(&self.eigenvectors)
    }
}

/// Uniform or explicit sample times, strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    /// `steps` equally spaced points from 0 to `t_max` inclusive.
    pub fn uniform(t_max: f64, steps: usize) -> Result<Self> {
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "t_max must be finite and > 0, got {t_max}"
            )));
        }
        if steps < 2 {
            return Err(Error::InvalidGrid(format!(
                "steps must be >= 2, got {steps}"
            )));
        }
        let last = (steps - 1) as f64;
        let points = (0..steps)
            .map(|k| {
                if k + 1 == steps {
                    t_max
                } else {
                    t_max * k as f64 / last
                }
            })
            .collect();
        Ok(Self { points })
    }

    /// Arbitrary strictly increasing finite sample times (a single point is allowed).
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidGrid("no points".into()));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid("non-finite point".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(
                "points must be strictly increasing".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn t_max(&self) -> f64 {
        *self.points.last().expect("grid is never empty")
    }

    /// Splits every interval into `factor` equal pieces; original points are kept.
    pub fn refined(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        let mut points = Vec::with_capacity((self.points.len() - 1) * factor + 1);
        for w in self.points.windows(2) {
            for k in 0..factor {
                points.push(w[0] + (w[1] - w[0]) * k as f64 / factor as f64);
            }
        }
        points.push(self.t_max());
        Self { points }
    }

    /// Same samples with every time multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            points: self.points.iter().map(|t| t * factor).collect(),
        }
    }
}

const EIGEN_MAX_SWEEPS_PER_DIM: usize = 1000;

/// Eigendecomposition of a Hermitian operator with eigenvalues sorted ascending.
pub fn spectral_decompose(a: &HermitianOperator) -> Result<SpectralDecomposition> {
    let dim = a.dim();
    let max_iterations = EIGEN_MAX_SWEEPS_PER_DIM * dim.max(1);
    let eig = SymmetricEigen::try_new(a.matrix().clone(), f64::EPSILON, max_iterations).ok_or(
        Error::NoConvergence {
            dim,
            max_iterations,
        },
    )?;

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = ComplexMatrix::from_fn(dim, dim, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Spectral norm (largest singular value).
pub fn operator_norm(b: &ComplexMatrix) -> Result<f64> {
    ensure_square(b)?;
    ensure_finite(b, "operator")?;
    Ok(b.clone().singular_values().max())
}

/// The propagator `exp(sign * i * H * t)`.
pub fn evolve(h: &HermitianOperator, t: f64, sign: PhaseSign) -> Result<ComplexMatrix> {
    if !t.is_finite() {
        return Err(Error::param("t", "must be finite"));
    }
    Ok(spectral_decompose(h)?.propagator(t, sign))
}

/// Heisenberg-picture observable `A(t) = exp(-iHt) A0 exp(iHt)`.
pub fn heisenberg_observable(
    a0: &HermitianOperator,
    h: &HermitianOperator,
    t: f64,
) -> Result<HermitianOperator> {
    ensure_dim("Hamiltonian", a0.dim(), h.dim())?;
    let u = evolve(h, t, PhaseSign::Positive)?;
    let at = u.adjoint() * a0.matrix() * &u;
    let tol = 1e-10 * max_abs(a0.matrix()).max(1.0);
    HermitianOperator::with_tolerance(at, OperatorRole::Observable, tol)
}

/// `<psi|A|psi> / <psi|psi>`.
pub fn expectation(psi: &StateVector, a: &ComplexMatrix) -> Result<Complex64> {
    ensure_square(a)?;
    ensure_dim("operator", psi.dim(), a.nrows())?;
    let v = psi.amplitudes();
    Ok(v.dotc(&(a * v)) / psi.norm_sqr())
}
