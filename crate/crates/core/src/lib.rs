//! Finite-dimensional laboratory for truncated quantum evolution.
//!
//! * [`linalg`]: dense Hermitian operators, states, spectral propagators.
//! * [`truncation`]: projector truncations `P A P` of observables and of the
//!   propagator, with rank certificates.
//! * [`measurement`]: discrete-weight measurement devices, interacting and
//!   free readout curves, and the max-deviation quality metric.
//! * [`fidelity`]: perfect versus coarse devices, tail measures, the
//!   characteristic time `t0`, the linear-in-time bound and the
//!   Mandelstam-Tamm check.
//! * [`peres`]: GUE sampling and Loschmidt echo ensembles.

pub mod error;
pub mod fidelity;
pub mod linalg;
pub mod measurement;
pub mod peres;
pub mod seeding;
pub mod truncation;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use linalg::{
    evolve, expectation, heisenberg_observable, operator_norm, spectral_decompose, ComplexMatrix,
    ComplexVector, HermitianOperator, OperatorRole, PhaseSign, SpectralDecomposition, StateVector,
    TimeGrid,
};
pub use num_complex::Complex64;
