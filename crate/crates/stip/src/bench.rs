//! Timing and traffic measurements.

use std::time::{Duration, Instant};

use stip_core::numerics::rng::{gaussian_matrix, seeded};
use stip_core::numerics::{apply_col_perm, matmul};
use stip_core::transform::para_trans;
use stip_core::{ModelParams, PermutationSet, PermutationVec};

use crate::error::{Error, Result};
use crate::wire::matrix_frame_len;

pub fn median(samples: &[Duration]) -> Duration {
    let mut v = samples.to_vec();
    v.sort();
    match v.len() {
        0 => Duration::ZERO,
        n if n % 2 == 1 => v[n / 2],
        n => (v[n / 2 - 1] + v[n / 2]) / 2,
    }
}

#[derive(Clone, Debug)]
pub struct PermTiming {
    pub dim: usize,
    pub index: Vec<Duration>,
    pub matmul: Vec<Duration>,
}

impl PermTiming {
    pub fn index_median(&self) -> Duration {
        median(&self.index)
    }

    pub fn matmul_median(&self) -> Duration {
        median(&self.matmul)
    }

    pub fn speedup(&self) -> f64 {
        self.matmul_median().as_secs_f64() / self.index_median().as_secs_f64().max(1e-12)
    }
}

/// Times `xπ` on a `dim × dim` matrix as a column gather and as a product
/// with the explicit permutation matrix, alternating the two per repetition.
pub fn time_permutation(dim: usize, reps: usize, seed: u64) -> Result<PermTiming> {
    let mut rng = seeded(seed);
    let x = gaussian_matrix(dim, dim, 1.0, &mut rng);
    let pi = PermutationVec::random_with(dim, &mut rng);
    let pm = pi.to_matrix();
    let mut t = PermTiming { dim, index: Vec::with_capacity(reps), matmul: Vec::with_capacity(reps) };
    for _ in 0..reps {
        let s = Instant::now();
        let a = std::hint::black_box(apply_col_perm(&x, &pi)?);
        t.index.push(s.elapsed());
        let s = Instant::now();
        let b = std::hint::black_box(matmul(&x, &pm)?);
        t.matmul.push(s.elapsed());
        if a != b {
            return Err(Error::Protocol("index and matrix permutation disagree".into()));
        }
    }
    Ok(t)
}

/// Wall time of the full parameter transformation.
pub fn time_transform(params: &ModelParams, set: &PermutationSet) -> Result<Duration> {
    let s = Instant::now();
    std::hint::black_box(para_trans(params, set)?);
    Ok(s.elapsed())
}

/// Frame sizes for one inference round over `n` tokens.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Traffic {
    pub request_bytes: usize,
    pub response_bytes: usize,
}

pub fn traffic(n: usize, d: usize, vocab: usize) -> Traffic {
    Traffic { request_bytes: matrix_frame_len(n, d), response_bytes: matrix_frame_len(n, vocab) }
}
