//! Row-wise and elementwise functions.
//!
//! Row reductions (softmax denominators, norm statistics) sum their terms in
//! sorted order, so the result depends only on the multiset of values in a
//! row. That makes every function here exactly equivariant under column
//! permutation: `f(x·π) == f(x)·π` bit for bit.

use alloc::vec::Vec;

use super::{Matrix, Vector};
use crate::error::{dim_err, Error, Result};

pub const DEFAULT_EPS: f32 = 1e-5;

/// Sum that is independent of the order of its terms.
pub fn order_free_sum(terms: &mut [f64]) -> f64 {
    terms.sort_unstable_by(f64::total_cmp);
    terms.iter().sum()
}

/// Per-row statistics used by the norms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowStats {
    pub mean: f64,
    /// Population variance.
    pub var: f64,
    /// Mean of squares.
    pub mean_sq: f64,
}

pub fn row_stats(row: &[f32], scratch: &mut Vec<f64>) -> RowStats {
    let n = row.len() as f64;
    scratch.clear();
    scratch.extend(row.iter().map(|&v| v as f64));
    let mean = order_free_sum(scratch) / n;
    scratch.clear();
    scratch.extend(row.iter().map(|&v| {
        let c = v as f64 - mean;
        c * c
    }));
    let var = order_free_sum(scratch) / n;
    scratch.clear();
    scratch.extend(row.iter().map(|&v| (v as f64) * (v as f64)));
    let mean_sq = order_free_sum(scratch) / n;
    RowStats { mean, var, mean_sq }
}

/// Numerically stable row softmax. `-inf` entries get probability 0; a row
/// with no finite entry is an error.
pub fn softmax_rows(x: &Matrix) -> Result<Matrix> {
    let mut out = Vec::with_capacity(x.data().len());
    let mut terms = Vec::with_capacity(x.cols());
    for (i, row) in x.iter_rows().enumerate() {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        if max == f32::NEG_INFINITY {
            return Err(Error::DegenerateRow(i));
        }
        let exps: Vec<f64> = row
            .iter()
            .map(|&v| libm::exp(v as f64 - max as f64))
            .collect();
        terms.clear();
        terms.extend_from_slice(&exps);
        let denom = order_free_sum(&mut terms);
        out.extend(exps.iter().map(|&e| (e / denom) as f32));
    }
    Ok(Matrix::from_raw(x.rows(), x.cols(), out))
}

/// `γ ∘ (x − μ)/√(σ² + eps) + β` per row, population variance.
pub fn layernorm(x: &Matrix, gamma: &Vector, beta: &Vector, eps: f32) -> Result<Matrix> {
    if x.cols() != gamma.dim() || x.cols() != beta.dim() {
        return Err(dim_err!(
            "layernorm on {} columns with gamma {} / beta {}",
            x.cols(),
            gamma.dim(),
            beta.dim()
        ));
    }
    let mut out = Vec::with_capacity(x.data().len());
    let mut scratch = Vec::with_capacity(x.cols());
    for row in x.iter_rows() {
        let st = row_stats(row, &mut scratch);
        let inv = 1.0 / libm::sqrt(st.var + eps as f64);
        out.extend(row.iter().zip(gamma.data()).zip(beta.data()).map(
            |((&v, &g), &b)| (g as f64 * ((v as f64 - st.mean) * inv) + b as f64) as f32,
        ));
    }
    Ok(Matrix::from_raw(x.rows(), x.cols(), out))
}

/// `γ ∘ x / √(mean(x²) + eps)` per row.
pub fn rmsnorm(x: &Matrix, gamma: &Vector, eps: f32) -> Result<Matrix> {
    if x.cols() != gamma.dim() {
        return Err(dim_err!(
            "rmsnorm on {} columns with gamma {}",
            x.cols(),
            gamma.dim()
        ));
    }
    let mut out = Vec::with_capacity(x.data().len());
    let mut scratch = Vec::with_capacity(x.cols());
    for row in x.iter_rows() {
        let st = row_stats(row, &mut scratch);
        let denom = libm::sqrt(st.mean_sq + eps as f64);
        if denom == 0.0 {
            out.extend(core::iter::repeat_n(0.0, row.len()));
            continue;
        }
        out.extend(
            row.iter()
                .zip(gamma.data())
                .map(|(&v, &g)| (g as f64 * v as f64 / denom) as f32),
        );
    }
    Ok(Matrix::from_raw(x.rows(), x.cols(), out))
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| v.max(0.0))
}

/// Exact GeLU, `x · Φ(x)`.
pub fn gelu(x: &Matrix) -> Matrix {
    x.map(|v| {
        let v = v as f64;
        (0.5 * v * (1.0 + libm::erf(v * core::f64::consts::FRAC_1_SQRT_2))) as f32
    })
}

pub fn sigmoid(x: &Matrix) -> Matrix {
    x.map(|v| (1.0 / (1.0 + libm::exp(-(v as f64)))) as f32)
}
