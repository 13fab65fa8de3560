//! Seed derivation for reproducible parallel runs.
//!
//! A run has one master seed. Every random component draws from its own
//! ChaCha8 stream keyed by `derive_seed(master, stream, index)`, so results do
//! not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags for the independent random components of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Hamiltonian = 1,
    Observable = 2,
    State = 3,
    Interaction = 4,
    Device = 5,
    Apparatus = 6,
    Particle = 7,
    Energies = 8,
    EnsembleMember = 9,
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix64(master ^ splitmix64((stream << 32) ^ index))`.
pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(((stream as u64) << 32) ^ index))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(master: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    rng(derive_seed(master, stream, index))
}
