//! Feature-space parameter transformation.
//!
//! With input permutation `π` and layer keys `(π₁, π₂, π₃)`:
//!
//! ```text
//! W_q' = πᵀ W_q π₁    W_k' = πᵀ W_k π₁    W_v' = πᵀ W_v π₂    W_o' = π₂ᵀ W_o π
//! W_1' = πᵀ W_1 π₃    W_3' = πᵀ W_3 π₃    W_2' = π₃ᵀ W_2 π
//! W_g' = πᵀ W_g       γ' = γπ             β' = βπ
//! W_c' = πᵀ W_c π_c
//! ```
//!
//! Every rule only moves entries, so the transformed model is computed by
//! the unchanged forward pass and `F_θ'(xπ) π_cᵀ = F_θ(x)`.

use crate::error::{dim_err, Result};
use crate::model::{FfnBlock, FfnWeights, LayerWeights, ModelConfig, ModelParams, NormWeights};
use crate::numerics::{apply_col_perm, apply_row_perm, permute_vector, Matrix, PermutationVec};

use super::keys::{LayerKeys, PermutationSet};

/// A model whose parameters live in the permuted feature space. Same shape
/// as [`ModelParams`]; the server runs it with the ordinary forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformedModel {
    pub params: ModelParams,
    /// Key epoch of the permutation set that produced it.
    pub epoch: u64,
}

/// `leftᵀ · w · right`.
pub fn sandwich(w: &Matrix, left: &PermutationVec, right: &PermutationVec) -> Result<Matrix> {
    apply_col_perm(&apply_row_perm(w, left)?, right)
}

fn transform_norm(n: &NormWeights, pi: &PermutationVec) -> Result<NormWeights> {
    Ok(NormWeights {
        gamma: permute_vector(&n.gamma, pi)?,
        beta: n.beta.as_ref().map(|b| permute_vector(b, pi)).transpose()?,
    })
}

/// Feedforward block rule, shared by ReLU/GeLU/SwiGLU and every expert.
pub fn transform_ffn(f: &FfnWeights, pi: &PermutationVec, inner: &PermutationVec) -> Result<FfnWeights> {
    Ok(FfnWeights {
        w1: sandwich(&f.w1, pi, inner)?,
        w2: sandwich(&f.w2, inner, pi)?,
        w3: f.w3.as_ref().map(|w| sandwich(w, pi, inner)).transpose()?,
    })
}

pub fn transform_layer(
    w: &LayerWeights,
    pi: &PermutationVec,
    keys: &LayerKeys,
    cfg: &ModelConfig,
) -> Result<LayerWeights> {
    w.validate(cfg)?;
    if pi.dim() != cfg.d_model {
        return Err(dim_err!("pi has dim {}, model d={}", pi.dim(), cfg.d_model));
    }
    if keys.ffn.len() != cfg.ffn_blocks() {
        return Err(dim_err!(
            "{} inner permutations for {} feedforward blocks",
            keys.ffn.len(),
            cfg.ffn_blocks()
        ));
    }
    let ffn = match &w.ffn {
        FfnBlock::Dense(f) => FfnBlock::Dense(transform_ffn(f, pi, &keys.ffn[0])?),
        FfnBlock::Moe { router, experts } => FfnBlock::Moe {
            router: apply_row_perm(router, pi)?,
            experts: experts
                .iter()
                .zip(&keys.ffn)
                .map(|(e, inner)| transform_ffn(e, pi, inner))
                .collect::<Result<_>>()?,
        },
    };
    Ok(LayerWeights {
        w_q: sandwich(&w.w_q, pi, &keys.attn_qk)?,
        w_k: sandwich(&w.w_k, pi, &keys.attn_qk)?,
        w_v: sandwich(&w.w_v, pi, &keys.attn_vo)?,
        w_o: sandwich(&w.w_o, &keys.attn_vo, pi)?,
        norm1: transform_norm(&w.norm1, pi)?,
        norm2: transform_norm(&w.norm2, pi)?,
        ffn,
    })
}

/// `W_c' = πᵀ W_c π_c`.
pub fn transform_classifier(w_c: &Matrix, pi: &PermutationVec, pi_c: &PermutationVec) -> Result<Matrix> {
    sandwich(w_c, pi, pi_c)
}

/// `W' = π_vᵀ W π_t`, so `(x_v π_v) W' = (x_v W) π_t`.
pub fn transform_projection(w: &Matrix, pi_v: &PermutationVec, pi_t: &PermutationVec) -> Result<Matrix> {
    sandwich(w, pi_v, pi_t)
}

/// Transforms every layer and the classifier. The embedding table is left
/// untouched: it is shipped to data owners in the clear.
pub fn para_trans(params: &ModelParams, set: &PermutationSet) -> Result<TransformedModel> {
    params.validate()?;
    let cfg = &params.config;
    set.validate_for(cfg)?;
    let layers = params
        .layers
        .iter()
        .zip(&set.layers)
        .map(|(w, keys)| transform_layer(w, &set.pi, keys, cfg))
        .collect::<Result<_>>()?;
    Ok(TransformedModel {
        params: ModelParams {
            config: cfg.clone(),
            embedding: params.embedding.clone(),
            layers,
            classifier: transform_classifier(&params.classifier, &set.pi, &set.pi_c)?,
        },
        epoch: set.epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        ffn, layer_forward, model_forward, FfnKind, Mask, ModelConfig, NormKind, NormPlacement,
    };
    use crate::numerics::rng::{gaussian_matrix, seeded};
    use crate::numerics::{matmul, softmax_rows};
    use alloc::vec;

    #[test]
    fn identity_set_is_a_no_op() {
        for cfg in [
            ModelConfig::new(2, 6, 10, 7),
            ModelConfig::new(2, 6, 10, 7).with_ffn(FfnKind::Swiglu).with_norm(NormKind::RmsNorm, NormPlacement::Pre),
            ModelConfig::new(2, 6, 10, 7).with_experts(3, 2),
        ] {
            let p = ModelParams::random(&cfg, 1).unwrap();
            let t = para_trans(&p, &PermutationSet::identity(&cfg)).unwrap();
            assert_eq!(t.params, p);
        }
    }

    #[test]
    fn hand_case_row_swap() {
        let wq = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let swap = PermutationVec::new(vec![1, 0]).unwrap();
        let id = PermutationVec::identity(2);
        assert_eq!(
            sandwich(&wq, &swap, &id).unwrap(),
            Matrix::from_rows(&[[3.0, 4.0], [1.0, 2.0]]).unwrap()
        );
        assert_eq!(
            transform_classifier(&wq, &swap, &swap).unwrap(),
            Matrix::from_rows(&[[4.0, 3.0], [2.0, 1.0]]).unwrap()
        );
        assert_eq!(transform_classifier(&wq, &id, &id).unwrap(), wq);
    }

    #[test]
    fn projection_rule() {
        let swap = PermutationVec::new(vec![1, 0]).unwrap();
        let id = PermutationVec::identity(2);
        assert_eq!(
            transform_projection(&Matrix::identity(2), &swap, &id).unwrap(),
            Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap()
        );
        let mut rng = seeded(4);
        let w = gaussian_matrix(5, 3, 1.0, &mut rng);
        assert_eq!(transform_projection(&w, &PermutationVec::identity(5), &PermutationVec::identity(3)).unwrap(), w);
        let xv = gaussian_matrix(4, 5, 1.0, &mut rng);
        let pv = PermutationVec::random_with(5, &mut rng);
        let pt = PermutationVec::random_with(3, &mut rng);
        let lhs = matmul(&apply_col_perm(&xv, &pv).unwrap(), &transform_projection(&w, &pv, &pt).unwrap()).unwrap();
        let rhs = apply_col_perm(&matmul(&xv, &w).unwrap(), &pt).unwrap();
        assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-5);
        assert!(transform_projection(&w, &pt, &pv).is_err());
    }

    #[test]
    fn transformed_layer_output_is_permuted_output() {
        let cfg = ModelConfig::new(1, 8, 12, 5);
        let p = ModelParams::random(&cfg, 3).unwrap();
        let set = PermutationSet::generate(&cfg, 4).unwrap();
        let x = gaussian_matrix(5, 8, 1.0, &mut seeded(5));
        let w2 = transform_layer(&p.layers[0], &set.pi, &set.layers[0], &cfg).unwrap();
        let lhs = layer_forward(&apply_col_perm(&x, &set.pi).unwrap(), &w2, &cfg, &Mask::Causal).unwrap();
        let rhs = apply_col_perm(&layer_forward(&x, &p.layers[0], &cfg, &Mask::Causal).unwrap(), &set.pi).unwrap();
        assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-5);
    }

    #[test]
    fn classifier_output_is_permuted_by_pi_c() {
        let mut rng = seeded(8);
        let wc = gaussian_matrix(6, 9, 1.0, &mut rng);
        let y = gaussian_matrix(3, 6, 1.0, &mut rng);
        let pi = PermutationVec::random_with(6, &mut rng);
        let pi_c = PermutationVec::random_with(9, &mut rng);
        let o = softmax_rows(&matmul(&y, &wc).unwrap()).unwrap();
        let o2 = softmax_rows(&matmul(&apply_col_perm(&y, &pi).unwrap(), &transform_classifier(&wc, &pi, &pi_c).unwrap()).unwrap()).unwrap();
        let want = apply_col_perm(&o, &pi_c).unwrap();
        assert!(o2.max_abs_diff(&want).unwrap() <= 1e-6);
        assert!(transform_classifier(&wc, &pi_c, &pi).is_err());
    }

    #[test]
    fn swiglu_ffn_is_equivariant() {
        let cfg = ModelConfig::new(1, 8, 12, 5).with_ffn(FfnKind::Swiglu);
        let p = ModelParams::random(&cfg, 6).unwrap();
        let FfnBlock::Dense(f) = &p.layers[0].ffn else { unreachable!() };
        let mut rng = seeded(7);
        let pi = PermutationVec::random_with(8, &mut rng);
        let inner = PermutationVec::random_with(12, &mut rng);
        let v = gaussian_matrix(4, 8, 1.0, &mut rng);
        let f2 = transform_ffn(f, &pi, &inner).unwrap();
        let lhs = ffn(&apply_col_perm(&v, &pi).unwrap(), &f2, FfnKind::Swiglu).unwrap();
        let rhs = apply_col_perm(&ffn(&v, f, FfnKind::Swiglu).unwrap(), &pi).unwrap();
        assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-5);
    }

    /// `W_1' = πᵀW_1` with no inner permutation leaves the gate in the
    /// original hidden basis while the value path is permuted, so the two
    /// no longer line up elementwise.
    #[test]
    fn gate_without_inner_permutation_breaks_swiglu() {
        let cfg = ModelConfig::new(1, 8, 12, 5).with_ffn(FfnKind::Swiglu);
        let p = ModelParams::random(&cfg, 6).unwrap();
        let FfnBlock::Dense(f) = &p.layers[0].ffn else { unreachable!() };
        let mut rng = seeded(7);
        let pi = PermutationVec::random_with(8, &mut rng);
        let inner = PermutationVec::random_with(12, &mut rng);
        let v = gaussian_matrix(4, 8, 1.0, &mut rng);
        let mut f2 = transform_ffn(f, &pi, &inner).unwrap();
        f2.w1 = apply_row_perm(&f.w1, &pi).unwrap();
        let lhs = ffn(&apply_col_perm(&v, &pi).unwrap(), &f2, FfnKind::Swiglu).unwrap();
        let rhs = apply_col_perm(&ffn(&v, f, FfnKind::Swiglu).unwrap(), &pi).unwrap();
        assert!(lhs.max_abs_diff(&rhs).unwrap() > 1e-3);
    }

    #[test]
    fn double_transform_with_inverse_restores_weights() {
        for cfg in [
            ModelConfig::new(2, 6, 10, 7),
            ModelConfig::new(2, 6, 10, 7).with_ffn(FfnKind::Swiglu).with_norm(NormKind::RmsNorm, NormPlacement::Pre),
            ModelConfig::new(2, 6, 10, 7).with_experts(3, 2),
        ] {
            let p = ModelParams::random(&cfg, 2).unwrap();
            let set = PermutationSet::generate(&cfg, 3).unwrap();
            let once = para_trans(&p, &set).unwrap();
            assert_ne!(once.params, p);
            let back = para_trans(&once.params, &set.inverse()).unwrap();
            assert_eq!(back.params, p);
        }
    }

    #[test]
    fn end_to_end_recovery_small() {
        let cfg = ModelConfig::new(2, 8, 16, 11).with_experts(3, 2).with_ffn(FfnKind::Gelu);
        let p = ModelParams::random(&cfg, 12).unwrap();
        let set = PermutationSet::generate(&cfg, 13).unwrap().with_epoch(7);
        let t = para_trans(&p, &set).unwrap();
        assert_eq!(t.epoch, 7);
        assert_eq!(t.params.embedding, p.embedding);
        let x = gaussian_matrix(6, 8, 1.0, &mut seeded(14));
        let o = model_forward(&x, &p, &Mask::Causal).unwrap();
        let o2 = model_forward(&apply_col_perm(&x, &set.pi).unwrap(), &t.params, &Mask::Causal).unwrap();
        let rec = apply_col_perm(&o2, &set.pi_c.inverse()).unwrap();
        assert!(rec.max_abs_diff(&o).unwrap() <= 1e-5);
    }

    #[test]
    fn mismatched_set_is_rejected() {
        let cfg = ModelConfig::new(2, 6, 10, 7);
        let p = ModelParams::random(&cfg, 1).unwrap();
        let other = PermutationSet::generate(&ModelConfig::new(2, 6, 11, 7), 1).unwrap();
        assert!(para_trans(&p, &other).is_err());
    }
}
