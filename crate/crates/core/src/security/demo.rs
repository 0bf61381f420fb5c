//! Demonstrations of what an attacker can and cannot do with leaked keys.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{dim_err, Result};
use crate::model::{greedy_decode_step, model_forward, EmbeddingTable, FfnBlock, Mask, ModelParams, NormWeights};
use crate::numerics::{apply_col_perm, apply_row_perm, permute_vector, Matrix, PermutationVec, Vector};
use crate::transform::{recover_output, PermutationSet, SharedKeys, TransformedModel};

use super::dcorr::token_feature_dcorr;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightRecovery {
    /// `layers.{i}.w_q`, `classifier`, ...
    pub name: String,
    /// Largest elementwise gap between the attacker's estimate and the truth.
    pub max_abs_diff: f32,
    /// Per-row distance correlation between estimate and truth.
    pub dcorr: f64,
}

impl WeightRecovery {
    pub fn recovered(&self) -> bool {
        self.max_abs_diff == 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResistanceReport {
    pub weights: Vec<WeightRecovery>,
}

impl ResistanceReport {
    pub fn get(&self, name: &str) -> Option<&WeightRecovery> {
        self.weights.iter().find(|w| w.name == name)
    }

    pub fn recovered_names(&self) -> Vec<&str> {
        self.weights.iter().filter(|w| w.recovered()).map(|w| w.name.as_str()).collect()
    }
}

fn compare(name: String, guess: &Matrix, truth: &Matrix) -> Result<WeightRecovery> {
    let max_abs_diff = guess.max_abs_diff(truth).ok_or_else(|| dim_err!("{name}: shape mismatch"))?;
    let dcorr = if truth.cols() >= 2 {
        token_feature_dcorr(guess, truth)?.value
    } else {
        // a single column carries no feature order to scramble
        f64::from(u8::from(max_abs_diff == 0.0))
    };
    Ok(WeightRecovery { name, max_abs_diff, dcorr })
}

fn vec_row(v: &Vector) -> Result<Matrix> {
    Matrix::new(1, v.dim(), v.data().to_vec())
}

/// Attacker knows `π` and strips it from every side it appears on:
/// `π W'` for left factors, `W' πᵀ` for right factors. Whatever is still
/// wrapped in a private permutation stays scrambled.
pub fn kpa_parameter_resistance_demo(
    params: &ModelParams,
    set: &PermutationSet,
    recovered_pi: &PermutationVec,
) -> Result<ResistanceReport> {
    let t = crate::transform::para_trans(params, set)?;
    let inv = recovered_pi.inverse();
    let left = |w: &Matrix| apply_row_perm(w, &inv);
    let right = |w: &Matrix| apply_col_perm(w, &inv);
    let norm = |prefix: &str, g: &NormWeights, truth: &NormWeights, out: &mut Vec<WeightRecovery>| -> Result<()> {
        out.push(compare(
            format!("{prefix}.gamma"),
            &vec_row(&permute_vector(&g.gamma, &inv)?)?,
            &vec_row(&truth.gamma)?,
        )?);
        if let (Some(b), Some(tb)) = (&g.beta, &truth.beta) {
            out.push(compare(format!("{prefix}.beta"), &vec_row(&permute_vector(b, &inv)?)?, &vec_row(tb)?)?);
        }
        Ok(())
    };
    let mut weights = Vec::new();
    for (i, (lt, lo)) in t.params.layers.iter().zip(&params.layers).enumerate() {
        weights.push(compare(format!("layers.{i}.w_q"), &left(&lt.w_q)?, &lo.w_q)?);
        weights.push(compare(format!("layers.{i}.w_k"), &left(&lt.w_k)?, &lo.w_k)?);
        weights.push(compare(format!("layers.{i}.w_v"), &left(&lt.w_v)?, &lo.w_v)?);
        weights.push(compare(format!("layers.{i}.w_o"), &right(&lt.w_o)?, &lo.w_o)?);
        norm(&format!("layers.{i}.norm1"), &lt.norm1, &lo.norm1, &mut weights)?;
        norm(&format!("layers.{i}.norm2"), &lt.norm2, &lo.norm2, &mut weights)?;
        let mut ffn = |prefix: String, ft: &crate::model::FfnWeights, fo: &crate::model::FfnWeights| -> Result<()> {
            weights.push(compare(format!("{prefix}.w_1"), &left(&ft.w1)?, &fo.w1)?);
            weights.push(compare(format!("{prefix}.w_2"), &right(&ft.w2)?, &fo.w2)?);
            if let (Some(a), Some(b)) = (&ft.w3, &fo.w3) {
                weights.push(compare(format!("{prefix}.w_3"), &left(a)?, b)?);
            }
            Ok(())
        };
        match (&lt.ffn, &lo.ffn) {
            (FfnBlock::Dense(ft), FfnBlock::Dense(fo)) => ffn(format!("layers.{i}"), ft, fo)?,
            (FfnBlock::Moe { router: rt, experts: et }, FfnBlock::Moe { router: ro, experts: eo }) => {
                for (j, (ft, fo)) in et.iter().zip(eo).enumerate() {
                    ffn(format!("layers.{i}.experts.{j}"), ft, fo)?;
                }
                weights.push(compare(format!("layers.{i}.router"), &left(rt)?, ro)?);
            }
            _ => return Err(dim_err!("layer {i}: feedforward kinds differ")),
        }
    }
    weights.push(compare("classifier".into(), &left(&t.params.classifier)?, &params.classifier)?);
    Ok(ResistanceReport { weights })
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnauthorizedUseReport {
    /// Fraction of positions where the two greedy streams differ.
    pub argmax_mismatch_rate: f64,
    /// Tokens from the keyed path (`xπ` in, `π_cᵀ` out).
    pub legit_tokens: Vec<usize>,
    /// Tokens from feeding raw embeddings and reading raw outputs.
    pub unauthorized_tokens: Vec<usize>,
}

fn greedy_stream(
    model: &ModelParams,
    table: &EmbeddingTable,
    prompt: &[usize],
    max_tokens: usize,
    mask_seed: u64,
    keys: Option<&SharedKeys>,
) -> Result<Vec<usize>> {
    let mut seq = prompt.to_vec();
    let mut out = Vec::with_capacity(max_tokens);
    for _ in 0..max_tokens {
        let mut x = table.embed(&seq)?;
        if let Some(k) = keys {
            x = apply_col_perm(&x, &k.pi)?;
        }
        let mask = Mask::for_kind(model.config.mask_kind, seq.len(), mask_seed);
        let mut o = model_forward(&x, model, &mask)?;
        if let Some(k) = keys {
            o = recover_output(&o, &k.pi_c)?;
        }
        let tok = greedy_decode_step(&o);
        out.push(tok);
        seq.push(tok);
    }
    Ok(out)
}

/// Someone holding the transformed parameters but no keys runs them on
/// plain embeddings. Both paths decode greedily for `max_tokens` steps.
pub fn unauthorized_use_demo(
    transformed: &TransformedModel,
    keys: &SharedKeys,
    prompt: &[usize],
    table: &EmbeddingTable,
    max_tokens: usize,
) -> Result<UnauthorizedUseReport> {
    if prompt.is_empty() {
        return Err(dim_err!("empty prompt"));
    }
    keys.validate_for(&transformed.params.config)?;
    let legit = greedy_stream(&transformed.params, table, prompt, max_tokens, 0, Some(keys))?;
    let rogue = greedy_stream(&transformed.params, table, prompt, max_tokens, 0, None)?;
    let mismatches = legit.iter().zip(&rogue).filter(|(a, b)| a != b).count();
    Ok(UnauthorizedUseReport {
        argmax_mismatch_rate: if max_tokens == 0 { 0.0 } else { mismatches as f64 / max_tokens as f64 },
        legit_tokens: legit,
        unauthorized_tokens: rogue,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_local, FfnKind, ModelConfig, NormKind};
    use crate::security::attack::kpa_column_match;
    use crate::transform::para_trans;

    #[test]
    fn identity_private_keys_give_full_recovery() {
        let cfg = ModelConfig::new(2, 8, 16, 10);
        let p = ModelParams::random(&cfg, 1).unwrap();
        let mut set = PermutationSet::identity(&cfg);
        set.pi = PermutationVec::random(8, 2).unwrap();
        let r = kpa_parameter_resistance_demo(&p, &set, &set.pi.clone()).unwrap();
        assert!(r.weights.iter().filter(|w| w.name != "classifier").all(|w| w.recovered()), "{r:?}");
    }

    #[test]
    fn private_keys_protect_projections() {
        let cfg = ModelConfig::new(2, 16, 32, 10).with_norm(NormKind::LayerNorm, crate::model::NormPlacement::Post);
        let p = ModelParams::random(&cfg, 1).unwrap();
        let set = PermutationSet::generate(&cfg, 2).unwrap();
        let r = kpa_parameter_resistance_demo(&p, &set, &set.pi).unwrap();
        for i in 0..2 {
            for w in ["w_q", "w_k", "w_v", "w_o", "w_1", "w_2"] {
                let e = r.get(&format!("layers.{i}.{w}")).unwrap();
                assert!(e.max_abs_diff > 0.0 && e.dcorr < 0.9, "{e:?}");
            }
            for n in ["norm1.gamma", "norm1.beta", "norm2.gamma", "norm2.beta"] {
                assert!(r.get(&format!("layers.{i}.{n}")).unwrap().recovered());
            }
        }
        assert!(!r.get("classifier").unwrap().recovered());
    }

    #[test]
    fn kpa_recovered_pi_feeds_the_demo() {
        let cfg = ModelConfig::new(1, 12, 24, 10).with_experts(3, 2);
        let p = ModelParams::random(&cfg, 3).unwrap();
        let set = PermutationSet::generate(&cfg, 4).unwrap();
        let x = p.embedding.embed(&[1, 2, 3]).unwrap();
        let pi = kpa_column_match(&x, &apply_col_perm(&x, &set.pi).unwrap(), 0.0)
            .unwrap()
            .recovered()
            .cloned()
            .unwrap();
        let r = kpa_parameter_resistance_demo(&p, &set, &pi).unwrap();
        // the router is only wrapped in π, so it leaks along with the norms
        assert!(r.get("layers.0.router").unwrap().recovered());
        assert!(!r.get("layers.0.experts.2.w_1").unwrap().recovered());
    }

    #[test]
    fn unauthorized_use() {
        let cfg = ModelConfig::new(2, 16, 32, 40).with_ffn(FfnKind::Gelu);
        let p = ModelParams::random(&cfg, 5).unwrap();
        let id = PermutationSet::identity(&cfg);
        let t = para_trans(&p, &id).unwrap();
        let r = unauthorized_use_demo(&t, &id.shared_part(), &[1, 2], &p.embedding, 10).unwrap();
        assert_eq!(r.argmax_mismatch_rate, 0.0);

        let set = PermutationSet::generate(&cfg, 6).unwrap();
        let t = para_trans(&p, &set).unwrap();
        let r = unauthorized_use_demo(&t, &set.shared_part(), &[1, 2], &p.embedding, 20).unwrap();
        assert_eq!(r.legit_tokens, generate_local(&p, &[1, 2], 20, 0).unwrap());
        assert_eq!(r.unauthorized_tokens.len(), 20);
        assert!(r.argmax_mismatch_rate > 0.5, "{r:?}");
    }
}
