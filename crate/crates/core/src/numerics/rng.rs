//! Seeded randomness. Every random object in the crate is derived from a
//! `u64` seed through ChaCha8, so runs are reproducible across platforms.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Matrix;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent child seed; used to fan one run seed out to
/// model, keys and inputs.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.random()
}

pub fn gaussian_vec(len: usize, std: f32, rng: &mut impl Rng) -> Vec<f32> {
    (0..len)
        .map(|_| {
            let z: f32 = rng.sample(StandardNormal);
            z * std
        })
        .collect()
}

pub fn gaussian_matrix(rows: usize, cols: usize, std: f32, rng: &mut impl Rng) -> Matrix {
    Matrix::from_raw(rows, cols, gaussian_vec(rows * cols, std, rng))
}
