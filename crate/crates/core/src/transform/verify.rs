//! Checks that the transformed model reproduces the original one.

use alloc::vec::Vec;

use crate::error::{dim_err, Result};
use crate::model::{model_forward, model_forward_traced, Mask, ModelParams};
use crate::numerics::rng::{derive_seed, gaussian_matrix, seeded};
use crate::numerics::{apply_col_perm, Matrix, PermutationVec};

use super::keys::{PermutationSet, SharedKeys};
use super::para::para_trans;

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceReport {
    pub trials: usize,
    pub rows_compared: usize,
    /// Largest `|F_θ'(xπ)π_cᵀ − F_θ(x)|` over all trials.
    pub max_abs_diff: f32,
    /// Fraction of output rows whose argmax agrees between the two paths.
    pub argmax_match_rate: f64,
}

impl EquivalenceReport {
    pub fn passes(&self, tol: f32) -> bool {
        self.argmax_match_rate == 1.0 && self.max_abs_diff <= tol
    }
}

/// Recovers `o = o' π_cᵀ`.
pub fn recover_output(o_prime: &Matrix, pi_c: &PermutationVec) -> Result<Matrix> {
    apply_col_perm(o_prime, &pi_c.inverse())
}

/// Runs `trials` random inputs of `seq_len` tokens through the plain model
/// and through the permuted path, using only the shared keys on the
/// transformed side.
pub fn verify_deployment(
    original: &ModelParams,
    transformed: &ModelParams,
    keys: &SharedKeys,
    trials: usize,
    seq_len: usize,
    seed: u64,
) -> Result<EquivalenceReport> {
    if trials == 0 || seq_len == 0 {
        return Err(dim_err!("need at least one trial and one token"));
    }
    keys.validate_for(&original.config)?;
    if transformed.config != original.config {
        return Err(dim_err!("transformed model config differs from the original"));
    }
    let d = original.config.d_model;
    let mut max_abs_diff = 0f32;
    let mut matches = 0usize;
    let mut rows = 0usize;
    for t in 0..trials {
        let mut rng = seeded(derive_seed(seed, t as u64));
        let x = gaussian_matrix(seq_len, d, 1.0, &mut rng);
        let mask = Mask::for_kind(original.config.mask_kind, seq_len, derive_seed(seed, 1 << 32 | t as u64));
        let o = model_forward(&x, original, &mask)?;
        let o_prime = model_forward(&apply_col_perm(&x, &keys.pi)?, transformed, &mask)?;
        let rec = recover_output(&o_prime, &keys.pi_c)?;
        max_abs_diff = max_abs_diff.max(rec.max_abs_diff(&o).unwrap_or(f32::INFINITY));
        for i in 0..o.rows() {
            matches += usize::from(o.argmax_row(i) == rec.argmax_row(i));
        }
        rows += o.rows();
    }
    Ok(EquivalenceReport {
        trials,
        rows_compared: rows,
        max_abs_diff,
        argmax_match_rate: matches as f64 / rows as f64,
    })
}

/// Transforms `params` with `set` and compares both paths on random inputs.
pub fn verify_equivalence(
    params: &ModelParams,
    set: &PermutationSet,
    trials: usize,
    seq_len: usize,
    seed: u64,
) -> Result<EquivalenceReport> {
    let t = para_trans(params, set)?;
    verify_deployment(params, &t.params, &set.shared_part(), trials, seq_len, seed)
}

/// Largest deviation of each transformed intermediate from its permuted
/// original, over all layers.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    /// `(name, max |Δ|)`; names follow the layer equations.
    pub steps: Vec<(&'static str, f32)>,
    /// Every MoE token picked the same experts on both paths.
    pub routing_identical: bool,
}

impl StepReport {
    pub fn max(&self) -> f32 {
        self.steps.iter().map(|s| s.1).fold(0.0, f32::max)
    }
}

/// Compares every intermediate of the transformed forward pass against the
/// plain pass: `Q' = Qπ₁`, `K' = Kπ₁`, `V' = Vπ₂`, `u' = uπ`, `v' = vπ`,
/// `z' = zπ`, `y' = yπ`, `o' = oπ_c`.
pub fn step_equivalence(
    params: &ModelParams,
    set: &PermutationSet,
    x: &Matrix,
    mask: &Mask,
) -> Result<StepReport> {
    let t = para_trans(params, set)?;
    let plain = model_forward_traced(x, params, mask)?;
    let perm = model_forward_traced(&apply_col_perm(x, &set.pi)?, &t.params, mask)?;
    let mut worst = [0f32; 8];
    let mut routing_identical = true;
    let diff = |a: &Matrix, b: &Matrix, p: &PermutationVec| -> Result<f32> {
        Ok(b
            .max_abs_diff(&apply_col_perm(a, p)?)
            .unwrap_or(f32::INFINITY))
    };
    for ((a, b), keys) in plain.layers.iter().zip(&perm.layers).zip(&set.layers) {
        let d = [
            diff(&a.q, &b.q, &keys.attn_qk)?,
            diff(&a.k, &b.k, &keys.attn_qk)?,
            diff(&a.v, &b.v, &keys.attn_vo)?,
            diff(&a.u, &b.u, &set.pi)?,
            diff(&a.v_mid, &b.v_mid, &set.pi)?,
            diff(&a.z, &b.z, &set.pi)?,
            diff(&a.y, &b.y, &set.pi)?,
        ];
        for (w, v) in worst.iter_mut().zip(d) {
            *w = w.max(v);
        }
        routing_identical &= a.routing == b.routing;
    }
    worst[7] = diff(&plain.output, &perm.output, &set.pi_c)?;
    let names = ["Q", "K", "V", "u", "v", "z", "y", "o"];
    Ok(StepReport {
        steps: names.into_iter().zip(worst).collect(),
        routing_identical,
    })
}
