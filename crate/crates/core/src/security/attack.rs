//! Key-recovery attacks on the shared permutation `π`.

use alloc::vec::Vec;

use crate::error::{dim_err, Error, Result};
use crate::numerics::{Matrix, PermutationVec};

/// Default brute-force cap: 8! = 40320 candidates.
pub const BFA_DEFAULT_CAP: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub enum KpaResult {
    Recovered(PermutationVec),
    /// Groups of plaintext columns that cannot be told apart.
    Ambiguous(Vec<Vec<usize>>),
    Failed,
}

impl KpaResult {
    pub fn recovered(&self) -> Option<&PermutationVec> {
        match self {
            KpaResult::Recovered(p) => Some(p),
            _ => None,
        }
    }
}

fn check_pair(plain: &Matrix, perm: &Matrix) -> Result<()> {
    if plain.shape() != perm.shape() {
        return Err(dim_err!(
            "plaintext is {}x{}, ciphertext {}x{}",
            plain.rows(),
            plain.cols(),
            perm.rows(),
            perm.cols()
        ));
    }
    if plain.cols() == 0 {
        return Err(dim_err!("no columns to match"));
    }
    Ok(())
}

fn cols_match(a: &Matrix, ca: usize, b: &Matrix, cb: usize, tol: f32) -> bool {
    (0..a.rows()).all(|r| (a.get(r, ca) - b.get(r, cb)).abs() <= tol)
}

/// Matches every ciphertext column against the plaintext columns. `d`
/// column comparisons per ciphertext column suffice.
pub fn kpa_column_match(plain: &Matrix, perm: &Matrix, tol: f32) -> Result<KpaResult> {
    check_pair(plain, perm)?;
    let d = plain.cols();
    let mut map = Vec::with_capacity(d);
    let mut ambiguous = false;
    for j in 0..d {
        let hits: Vec<usize> = (0..d).filter(|&k| cols_match(perm, j, plain, k, tol)).collect();
        match hits.len() {
            0 => return Ok(KpaResult::Failed),
            1 => map.push(hits[0]),
            _ => {
                ambiguous = true;
                map.push(hits[0]);
            }
        }
    }
    if ambiguous {
        let mut seen = alloc::vec![false; d];
        let mut groups = Vec::new();
        for k in 0..d {
            if seen[k] {
                continue;
            }
            let g: Vec<usize> = (k..d).filter(|&l| cols_match(plain, k, plain, l, tol)).collect();
            for &l in &g {
                seen[l] = true;
            }
            if g.len() > 1 {
                groups.push(g);
            }
        }
        return Ok(KpaResult::Ambiguous(groups));
    }
    Ok(PermutationVec::new(map).map_or(KpaResult::Failed, KpaResult::Recovered))
}

/// Lexicographic successor; false once `p` is the last permutation.
fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).unwrap_or(i);
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Tries all `d!` column permutations in lexicographic order and returns the
/// first one that maps `plain` onto `perm` exactly. Refuses `d > max_dim`.
pub fn bfa_exhaustive(plain: &Matrix, perm: &Matrix, max_dim: usize) -> Result<KpaResult> {
    check_pair(plain, perm)?;
    let d = plain.cols();
    if d > max_dim {
        return Err(Error::KeyspaceTooLarge { dim: d, cap: max_dim });
    }
    let mut cand: Vec<usize> = (0..d).collect();
    loop {
        if (0..d).all(|j| cols_match(perm, j, plain, cand[j], 0.0)) {
            return Ok(KpaResult::Recovered(PermutationVec::new(cand)?));
        }
        if !next_permutation(&mut cand) {
            return Ok(KpaResult::Failed);
        }
    }
}
