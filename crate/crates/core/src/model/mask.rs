use alloc::vec::Vec;

use rand::Rng;

use super::config::MaskKind;
use crate::error::{dim_err, Error, Result};
use crate::numerics::rng::seeded;
use crate::numerics::Matrix;

/// Additive attention mask `M` with entries in `{0, -inf}`.
#[derive(Clone, Debug, PartialEq)]
pub enum Mask {
    None,
    /// Zeros on and below the diagonal, `-inf` strictly above.
    Causal,
    Custom(Matrix),
}

impl Mask {
    pub fn custom(values: Matrix) -> Result<Self> {
        if values.rows() != values.cols() {
            return Err(dim_err!(
                "mask must be square, got {}x{}",
                values.rows(),
                values.cols()
            ));
        }
        if let Some(i) = values
            .data()
            .iter()
            .position(|&v| v != 0.0 && v != f32::NEG_INFINITY)
        {
            return Err(Error::InvalidConfig(alloc::format!(
                "mask entry {i} is neither 0 nor -inf"
            )));
        }
        Ok(Mask::Custom(values))
    }

    /// Random sparse pattern: the diagonal is always visible, every other
    /// entry is visible with probability `keep`.
    pub fn random_sparse(n: usize, keep: f64, seed: u64) -> Self {
        let mut rng = seeded(seed);
        Mask::Custom(Matrix::from_fn(n, n, |i, j| {
            if i == j || rng.random_bool(keep.clamp(0.0, 1.0)) {
                0.0
            } else {
                f32::NEG_INFINITY
            }
        }))
    }

    /// Builds the mask a config asks for; custom masks need a seed.
    pub fn for_kind(kind: MaskKind, n: usize, seed: u64) -> Self {
        match kind {
            MaskKind::None => Mask::None,
            MaskKind::Causal => Mask::Causal,
            MaskKind::Custom => Mask::random_sparse(n, 0.5, seed),
        }
    }

    pub fn kind(&self) -> MaskKind {
        match self {
            Mask::None => MaskKind::None,
            Mask::Causal => MaskKind::Causal,
            Mask::Custom(_) => MaskKind::Custom,
        }
    }

    /// The explicit n×n matrix, or `None` when nothing is masked.
    pub fn materialize(&self, n: usize) -> Result<Option<Matrix>> {
        match self {
            Mask::None => Ok(None),
            Mask::Causal => Ok(Some(Matrix::from_fn(n, n, |i, j| {
                if j > i {
                    f32::NEG_INFINITY
                } else {
                    0.0
                }
            }))),
            Mask::Custom(m) if m.rows() == n => Ok(Some(m.clone())),
            Mask::Custom(m) => Err(dim_err!(
                "custom mask is {}x{}, sequence length {n}",
                m.rows(),
                m.cols()
            )),
        }
    }

    /// Finite encoding for storage: `-inf` becomes `f32::MIN`.
    pub fn encode_finite(values: &Matrix) -> Vec<f32> {
        values
            .data()
            .iter()
            .map(|&v| if v == f32::NEG_INFINITY { f32::MIN } else { v })
            .collect()
    }

    pub fn decode_finite(n: usize, data: &[f32]) -> Result<Self> {
        let values = data
            .iter()
            .map(|&v| if v == f32::MIN { f32::NEG_INFINITY } else { v })
            .collect();
        Mask::custom(Matrix::new(n, n, values)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn causal_shape() {
        let m = Mask::Causal.materialize(3).unwrap().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get(i, j) == 0.0, j <= i);
            }
        }
        assert_eq!(Mask::None.materialize(3).unwrap(), None);
    }

    #[test]
    fn custom_validation_and_finite_round_trip() {
        assert!(Mask::custom(Matrix::zeros(2, 3)).is_err());
        assert!(Mask::custom(Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap()).is_err());
        let m = Mask::random_sparse(6, 0.3, 9);
        let Mask::Custom(values) = &m else { unreachable!() };
        for i in 0..6 {
            assert_eq!(values.get(i, i), 0.0);
        }
        let enc = Mask::encode_finite(values);
        assert!(enc.iter().all(|v| v.is_finite()));
        assert_eq!(Mask::decode_finite(6, &enc).unwrap(), m);
        assert!(m.materialize(5).is_err());
    }
}
