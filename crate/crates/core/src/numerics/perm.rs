use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::rng::seeded;
use super::{Matrix, Vector};
use crate::error::{dim_err, Error, Result};

/// A permutation of feature indices, stored as an index vector.
///
/// `map[j]` is the source column placed at position `j`, so applying it to
/// the columns of `x` computes `x · π` for the 0/1 matrix returned by
/// [`to_matrix`](Self::to_matrix).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PermutationVec {
    map: Vec<usize>,
}

impl PermutationVec {
    /// Validates that `map` is a bijection on `0..map.len()`.
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        if n == 0 {
            return Err(dim_err!("permutation dimension must be at least 1"));
        }
        let mut seen = vec![false; n];
        for (j, &src) in map.iter().enumerate() {
            if src >= n {
                return Err(Error::InvalidPermutation(alloc::format!(
                    "index {src} at position {j} out of range for dim {n}"
                )));
            }
            if core::mem::replace(&mut seen[src], true) {
                return Err(Error::InvalidPermutation(alloc::format!(
                    "index {src} repeated at position {j}"
                )));
            }
        }
        Ok(Self { map })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            map: (0..dim).collect(),
        }
    }

    /// Uniform random permutation from a seeded generator (Fisher–Yates).
    pub fn random(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(dim_err!("permutation dimension must be at least 1"));
        }
        Ok(Self::random_with(dim, &mut seeded(seed)))
    }

    /// Draws from an existing generator; `dim` must be non-zero.
    pub fn random_with(dim: usize, rng: &mut impl Rng) -> Self {
        let mut map: Vec<usize> = (0..dim).collect();
        map.shuffle(rng);
        Self { map }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.map.len()
    }

    #[inline]
    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(j, &s)| j == s)
    }

    /// `π⁻¹ = πᵀ`: `inverse.map[map[j]] = j`.
    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.dim()];
        for (j, &src) in self.map.iter().enumerate() {
            inv[src] = j;
        }
        Self { map: inv }
    }

    /// Matrix product `self · other`, i.e. applying `self` then `other` to
    /// columns.
    pub fn compose(&self, other: &PermutationVec) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(dim_err!(
                "compose dims {} and {}",
                self.dim(),
                other.dim()
            ));
        }
        Ok(Self {
            map: other.map.iter().map(|&k| self.map[k]).collect(),
        })
    }

    /// Dense 0/1 form with `π[k][j] = 1` iff `k == map[j]`. Test oracles only.
    pub fn to_matrix(&self) -> Matrix {
        let n = self.dim();
        let mut m = Matrix::zeros(n, n);
        for (j, &k) in self.map.iter().enumerate() {
            m.set(k, j, 1.0);
        }
        m
    }

    /// Number of positions left in place.
    pub fn fixed_points(&self) -> usize {
        self.map.iter().enumerate().filter(|(j, &s)| *j == s).count()
    }
}

/// Column permutation: `out[i][j] = x[i][p.map[j]]`, i.e. `x · π`.
pub fn apply_col_perm(x: &Matrix, p: &PermutationVec) -> Result<Matrix> {
    if x.cols() != p.dim() {
        return Err(dim_err!(
            "column permutation of dim {} on {} columns",
            p.dim(),
            x.cols()
        ));
    }
    let mut data = Vec::with_capacity(x.rows() * x.cols());
    for row in x.iter_rows() {
        data.extend(p.map.iter().map(|&k| row[k]));
    }
    Ok(Matrix::from_raw(x.rows(), x.cols(), data))
}

/// Row permutation `πᵀ · x`: row `i` of the output is row `p.map[i]` of `x`.
pub fn apply_row_perm(x: &Matrix, p: &PermutationVec) -> Result<Matrix> {
    if x.rows() != p.dim() {
        return Err(dim_err!(
            "row permutation of dim {} on {} rows",
            p.dim(),
            x.rows()
        ));
    }
    x.select_rows(&p.map)
}

/// `γ · π` for a row vector.
pub fn permute_vector(v: &Vector, p: &PermutationVec) -> Result<Vector> {
    if v.dim() != p.dim() {
        return Err(dim_err!(
            "vector permutation of dim {} on {} entries",
            p.dim(),
            v.dim()
        ));
    }
    Ok(Vector::from_raw(p.map.iter().map(|&k| v.data()[k]).collect()))
}

/// `gen_permutation` under its operation name.
pub fn gen_permutation(dim: usize, seed: u64) -> Result<PermutationVec> {
    PermutationVec::random(dim, seed)
}
