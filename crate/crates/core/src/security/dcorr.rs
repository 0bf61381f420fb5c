//! Sample distance correlation (Székely et al.).
//!
//! For observations `a_1..a_N`, `b_1..b_N` with pairwise distance matrices
//! `a_ij`, `b_ij`, the doubly-centered matrices are
//! `A_ij = a_ij − ā_i· − ā_·j + ā··` (likewise `B`), and
//!
//! ```text
//! dCov²  = mean(A ∘ B)
//! dCor   = sqrt(dCov² / sqrt(dVar²_a · dVar²_b))
//! ```
//!
//! The sums are streamed in two passes (row means, then centered products),
//! so large scalar samples need O(N) memory.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Error, Result};
use crate::numerics::rng::{gaussian_matrix, seeded};
use crate::numerics::{apply_col_perm, matmul, order_free_sum, Matrix, PermutationVec};

#[derive(Clone, Debug, PartialEq)]
pub struct DcorrReport {
    pub value: f64,
    /// Observations per sample.
    pub n_samples: usize,
    /// Shape of the first input.
    pub dims: (usize, usize),
}

fn dcor_from_distances(n: usize, da: impl Fn(usize, usize) -> f64, db: impl Fn(usize, usize) -> f64) -> f64 {
    let means = |d: &dyn Fn(usize, usize) -> f64| {
        let mut m = vec![0f64; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = d(i, j);
                m[i] += v;
                m[j] += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= n as f64);
        let grand = m.iter().sum::<f64>() / n as f64;
        (m, grand)
    };
    let (ma, ga) = means(&da);
    let (mb, gb) = means(&db);
    let (mut ab, mut aa, mut bb) = (0f64, 0f64, 0f64);
    for i in 0..n {
        let (mai, mbi) = (ma[i] - ga, mb[i] - gb);
        for j in (i + 1)..n {
            let a = da(i, j) - mai - ma[j];
            let b = db(i, j) - mbi - mb[j];
            ab += a * b;
            aa += a * a;
            bb += b * b;
        }
    }
    // off-diagonal terms appear twice in the full matrix
    ab *= 2.0;
    aa *= 2.0;
    bb *= 2.0;
    for i in 0..n {
        let a = ga - 2.0 * ma[i];
        let b = gb - 2.0 * mb[i];
        ab += a * b;
        aa += a * a;
        bb += b * b;
    }
    let nn = (n * n) as f64;
    let (dcov2, va, vb) = (ab / nn, aa / nn, bb / nn);
    let denom = va * vb;
    if denom <= 0.0 {
        return 0.0;
    }
    let r2 = (dcov2.max(0.0) / libm::sqrt(denom)).min(1.0);
    libm::sqrt(r2)
}

/// Euclidean distances between rows. Squared terms are summed in sorted
/// order, so reordering columns leaves every distance bit-identical.
fn row_distances(x: &Matrix) -> Vec<f64> {
    let n = x.rows();
    let mut out = vec![0f64; n * n];
    let mut terms = Vec::with_capacity(x.cols());
    for i in 0..n {
        for j in (i + 1)..n {
            terms.clear();
            terms.extend(x.row(i).iter().zip(x.row(j)).map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            }));
            let dist = libm::sqrt(order_free_sum(&mut terms));
            out[i * n + j] = dist;
            out[j * n + i] = dist;
        }
    }
    out
}

/// Distance correlation with matrix rows as observations and columns as
/// features. `x` and `y` may have different widths.
pub fn distance_correlation(x: &Matrix, y: &Matrix) -> Result<DcorrReport> {
    if x.rows() != y.rows() {
        return Err(dim_err!(
            "distance correlation needs equal row counts, got {} and {}",
            x.rows(),
            y.rows()
        ));
    }
    let n = x.rows();
    if n < 2 {
        return Err(Error::InsufficientSamples { need: 2, got: n });
    }
    let da = row_distances(x);
    let db = row_distances(y);
    let value = dcor_from_distances(n, |i, j| da[i * n + j], |i, j| db[i * n + j]);
    Ok(DcorrReport {
        value,
        n_samples: n,
        dims: x.shape(),
    })
}

/// U-centered entries of a full n×n distance matrix, zero on the diagonal.
fn u_center(d: &[f64], n: usize) -> Vec<f64> {
    let rs: Vec<f64> = (0..n).map(|i| d[i * n..(i + 1) * n].iter().sum()).collect();
    let total: f64 = rs.iter().sum();
    let (k1, k2) = ((n - 2) as f64, ((n - 1) * (n - 2)) as f64);
    let mut out = vec![0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out[i * n + j] = d[i * n + j] - rs[i] / k1 - rs[j] / k1 + total / k2;
            }
        }
    }
    out
}

/// Bias-corrected distance correlation (U-centered, rows as observations).
///
/// The plain estimator drifts towards 1 when the feature count is close to
/// the sample count, even for independent data; this one stays near 0
/// there. Negative estimates are clamped to 0.
pub fn bias_corrected_dcorr(x: &Matrix, y: &Matrix) -> Result<DcorrReport> {
    if x.rows() != y.rows() {
        return Err(dim_err!("row counts differ: {} and {}", x.rows(), y.rows()));
    }
    let n = x.rows();
    if n < 4 {
        return Err(Error::InsufficientSamples { need: 4, got: n });
    }
    let a = u_center(&row_distances(x), n);
    let b = u_center(&row_distances(y), n);
    let dot = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).sum::<f64>();
    let (ab, aa, bb) = (dot(&a, &b), dot(&a, &a), dot(&b, &b));
    let value = if aa <= 0.0 || bb <= 0.0 {
        0.0
    } else {
        (ab / libm::sqrt(aa * bb)).clamp(0.0, 1.0)
    };
    Ok(DcorrReport { value, n_samples: n, dims: x.shape() })
}

/// Distance correlation of two scalar samples.
pub fn scalar_distance_correlation(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(dim_err!("scalar samples of length {} and {}", a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::InsufficientSamples { need: 2, got: a.len() });
    }
    Ok(dcor_from_distances(
        a.len(),
        |i, j| (a[i] as f64 - a[j] as f64).abs(),
        |i, j| (b[i] as f64 - b[j] as f64).abs(),
    ))
}

/// Per-token leakage: for every row, the distance correlation between the
/// row's feature values and the matching row of `y`, treating the feature
/// coordinates as paired scalar observations. Returns the mean over rows.
///
/// Rows-as-observations correlation cannot see a column permutation at all
/// (it preserves every pairwise row distance), so this is the measure that
/// tracks how much a permuted embedding still reveals about the original
/// one.
pub fn token_feature_dcorr(x: &Matrix, y: &Matrix) -> Result<DcorrReport> {
    if x.shape() != y.shape() {
        return Err(dim_err!("shape mismatch {:?} vs {:?}", x.shape(), y.shape()));
    }
    if x.rows() == 0 {
        return Err(Error::InsufficientSamples { need: 1, got: 0 });
    }
    let mut total = 0f64;
    for i in 0..x.rows() {
        total += scalar_distance_correlation(x.row(i), y.row(i))?;
    }
    Ok(DcorrReport {
        value: total / x.rows() as f64,
        n_samples: x.cols(),
        dims: x.shape(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjectionKind {
    /// `x A π` with Gaussian `A` (d×d, entries N(0, 1/d)) and random `π`.
    RandomLinear,
    /// `x B` with Gaussian `B` (d×1).
    RandomOneDim,
}

/// `Corr(x, x A π)` for explicit `A` and `π`.
pub fn projection_dcorr(x: &Matrix, a: &Matrix, pi: &PermutationVec) -> Result<DcorrReport> {
    distance_correlation(x, &apply_col_perm(&matmul(x, a)?, pi)?)
}

/// Baseline projections for the leakage bound, seeded.
pub fn dcorr_baseline_projection(x: &Matrix, kind: ProjectionKind, seed: u64) -> Result<DcorrReport> {
    let d = x.cols();
    let mut rng = seeded(seed);
    let std = 1.0 / libm::sqrtf(d as f32);
    match kind {
        ProjectionKind::RandomLinear => {
            let a = gaussian_matrix(d, d, std, &mut rng);
            let pi = PermutationVec::random_with(d, &mut rng);
            projection_dcorr(x, &a, &pi)
        }
        ProjectionKind::RandomOneDim => {
            let b = gaussian_matrix(d, 1, 1.0, &mut rng);
            distance_correlation(x, &matmul(x, &b)?)
        }
    }
}

/// `Corr(x, x A)` in the per-token orientation of [`token_feature_dcorr`];
/// the random-projection baseline for permuted embeddings.
pub fn token_projection_dcorr(x: &Matrix, seed: u64) -> Result<DcorrReport> {
    let d = x.cols();
    let mut rng = seeded(seed);
    let a = gaussian_matrix(d, d, 1.0 / libm::sqrtf(d as f32), &mut rng);
    token_feature_dcorr(x, &matmul(x, &a)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::gaussian_vec;

    /// Textbook implementation with explicit distance matrices.
    fn dcor_oracle(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        let n = a.len();
        let dist = |p: &[Vec<f64>]| {
            let mut d = vec![vec![0f64; n]; n];
            for i in 0..n {
                for j in 0..n {
                    d[i][j] = p[i].iter().zip(&p[j]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                }
            }
            let rm: Vec<f64> = d.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
            let g = rm.iter().sum::<f64>() / n as f64;
            for i in 0..n {
                for j in 0..n {
                    d[i][j] = d[i][j] - rm[i] - rm[j] + g;
                }
            }
            d
        };
        let (da, db) = (dist(a), dist(b));
        let mut s = [0f64; 3];
        for i in 0..n {
            for j in 0..n {
                s[0] += da[i][j] * db[i][j];
                s[1] += da[i][j] * da[i][j];
                s[2] += db[i][j] * db[i][j];
            }
        }
        (s[0] / (s[1] * s[2]).sqrt()).max(0.0).sqrt()
    }

    fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
        m.iter_rows().map(|r| r.iter().map(|&v| v as f64).collect()).collect()
    }

    #[test]
    fn matches_textbook_oracle() {
        let mut rng = seeded(1);
        let x = gaussian_matrix(12, 3, 1.0, &mut rng);
        let y = x.map(|v| v * v) .add(&gaussian_matrix(12, 3, 0.3, &mut rng)).unwrap();
        let got = distance_correlation(&x, &y).unwrap().value;
        let want = dcor_oracle(&rows_of(&x), &rows_of(&y));
        assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
    }

    #[test]
    fn self_correlation_is_one() {
        let x = gaussian_matrix(30, 5, 1.0, &mut seeded(2));
        let r = distance_correlation(&x, &x).unwrap();
        assert!((r.value - 1.0).abs() <= 1e-6);
        assert_eq!((r.n_samples, r.dims), (30, (30, 5)));
    }

    #[test]
    fn symmetric() {
        let mut rng = seeded(3);
        let x = gaussian_matrix(25, 4, 1.0, &mut rng);
        let y = gaussian_matrix(25, 7, 1.0, &mut rng);
        let a = distance_correlation(&x, &y).unwrap().value;
        let b = distance_correlation(&y, &x).unwrap().value;
        assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn independent_samples_score_low() {
        let mut rng = seeded(4);
        let x = gaussian_matrix(500, 3, 1.0, &mut rng);
        let y = gaussian_matrix(500, 3, 1.0, &mut rng);
        assert!(distance_correlation(&x, &y).unwrap().value < 0.2);
    }

    #[test]
    fn degenerate_and_error_cases() {
        let x = gaussian_matrix(5, 2, 1.0, &mut seeded(5));
        assert_eq!(distance_correlation(&x, &Matrix::zeros(5, 2)).unwrap().value, 0.0);
        assert_eq!(
            distance_correlation(&Matrix::zeros(1, 2), &Matrix::zeros(1, 2)),
            Err(Error::InsufficientSamples { need: 2, got: 1 })
        );
        assert!(distance_correlation(&x, &Matrix::zeros(4, 2)).is_err());
    }

    #[test]
    fn column_permutation_is_invisible_to_row_orientation() {
        let mut rng = seeded(6);
        let x = gaussian_matrix(40, 64, 1.0, &mut rng);
        let pi = PermutationVec::random_with(64, &mut rng);
        let r = distance_correlation(&x, &apply_col_perm(&x, &pi).unwrap()).unwrap();
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn identity_projection_is_full_correlation() {
        let x = gaussian_matrix(20, 6, 1.0, &mut seeded(7));
        let r = projection_dcorr(&x, &Matrix::identity(6), &PermutationVec::identity(6)).unwrap();
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn permuted_embeddings_leak_little_per_token() {
        // 200 tokens at d = 4096
        let mut rng = seeded(8);
        let x = gaussian_matrix(200, 4096, 1.0, &mut rng);
        let pi = PermutationVec::random_with(4096, &mut rng);
        let r = token_feature_dcorr(&x, &apply_col_perm(&x, &pi).unwrap()).unwrap();
        assert!(r.value <= 0.1, "{}", r.value);
        assert_eq!(r.n_samples, 4096);
    }

    #[test]
    fn bias_correction_removes_high_dimensional_drift() {
        let mut rng = seeded(12);
        let x = gaussian_matrix(64, 64, 1.0, &mut rng);
        let y = gaussian_matrix(64, 64, 1.0, &mut rng);
        assert!(distance_correlation(&x, &y).unwrap().value > 0.8);
        assert!(bias_corrected_dcorr(&x, &y).unwrap().value < 0.1);
        assert!((bias_corrected_dcorr(&x, &x).unwrap().value - 1.0).abs() < 1e-9);
        assert!(bias_corrected_dcorr(&Matrix::zeros(3, 2), &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn scalar_path_matches_oracle() {
        let mut rng = seeded(9);
        let a = gaussian_vec(40, 1.0, &mut rng);
        let b: Vec<f32> = a.iter().map(|v| v.abs() + 0.1 * v).collect();
        let got = scalar_distance_correlation(&a, &b).unwrap();
        let col = |v: &[f32]| v.iter().map(|&x| vec![x as f64]).collect::<Vec<_>>();
        assert!((got - dcor_oracle(&col(&a), &col(&b))).abs() <= 1e-9);
    }

    #[test]
    fn transformed_parameters_decorrelate_unlike_random_projection() {
        use crate::transform::sandwich;
        let mut rng = seeded(10);
        let w = gaussian_matrix(128, 128, 1.0, &mut rng);
        let pi = PermutationVec::random_with(128, &mut rng);
        let pi1 = PermutationVec::random_with(128, &mut rng);
        let stip = bias_corrected_dcorr(&w, &sandwich(&w, &pi, &pi1).unwrap()).unwrap().value;
        let a = gaussian_matrix(128, 128, 1.0 / libm::sqrtf(128.0), &mut rng);
        let rp = bias_corrected_dcorr(&w, &matmul(&w, &a).unwrap()).unwrap().value;
        assert!(stip < rp / 2.0, "stip {stip} rp {rp}");
    }
}
