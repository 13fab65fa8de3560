use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{ComplexVector, HermitianOperator, StateVector};
use crate::peres::sample_gue;
use crate::seeding::rng;

pub fn random_hermitian(dim: usize, seed: u64) -> HermitianOperator {
    sample_gue(dim, 1.0, seed)
}

pub fn random_state(dim: usize, seed: u64) -> StateVector {
    let mut r = rng(seed ^ 0xA5A5_5A5A);
    let v = ComplexVector::from_fn(dim, |_, _| {
        Complex64::new(
            r.sample::<f64, _>(StandardNormal),
            r.sample::<f64, _>(StandardNormal),
        )
    });
    StateVector::normalized(v).unwrap()
}
