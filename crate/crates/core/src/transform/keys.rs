use alloc::vec::Vec;

use crate::error::{dim_err, Result};
use crate::model::ModelConfig;
use crate::numerics::rng::seeded;
use crate::numerics::PermutationVec;

/// Developer-private permutations of one layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerKeys {
    /// `π_{i,1}` (d): shared by the query and key projections.
    pub attn_qk: PermutationVec,
    /// `π_{i,2}` (d): value projection / output projection.
    pub attn_vo: PermutationVec,
    /// `π_{i,3}` (m): one per feedforward block, so one per expert in MoE
    /// layers.
    pub ffn: Vec<PermutationVec>,
}

/// Permutations for a multimodal projection `π_vᵀ W π_t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProjectionKeys {
    pub pi_v: PermutationVec,
    pub pi_t: PermutationVec,
}

/// The full key material Π of a deployment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermutationSet {
    /// Input permutation `π` (d).
    pub pi: PermutationVec,
    /// Classifier output permutation `π_c` (s).
    pub pi_c: PermutationVec,
    pub layers: Vec<LayerKeys>,
    pub projection: Option<ProjectionKeys>,
    pub epoch: u64,
}

/// The half of Π handed to data owners: `{π, π_c}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharedKeys {
    pub pi: PermutationVec,
    pub pi_c: PermutationVec,
    pub epoch: u64,
}

impl PermutationSet {
    /// Draws every permutation independently from one seeded stream.
    pub fn generate(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeded(seed);
        let pi = PermutationVec::random_with(cfg.d_model, &mut rng);
        let pi_c = PermutationVec::random_with(cfg.vocab_size, &mut rng);
        let layers = (0..cfg.n_layers)
            .map(|_| LayerKeys {
                attn_qk: PermutationVec::random_with(cfg.d_model, &mut rng),
                attn_vo: PermutationVec::random_with(cfg.d_model, &mut rng),
                ffn: (0..cfg.ffn_blocks())
                    .map(|_| PermutationVec::random_with(cfg.d_ff, &mut rng))
                    .collect(),
            })
            .collect();
        Ok(Self {
            pi,
            pi_c,
            layers,
            projection: None,
            epoch: 0,
        })
    }

    /// All-identity set; transforming with it is a no-op.
    pub fn identity(cfg: &ModelConfig) -> Self {
        Self {
            pi: PermutationVec::identity(cfg.d_model),
            pi_c: PermutationVec::identity(cfg.vocab_size),
            layers: (0..cfg.n_layers)
                .map(|_| LayerKeys {
                    attn_qk: PermutationVec::identity(cfg.d_model),
                    attn_vo: PermutationVec::identity(cfg.d_model),
                    ffn: (0..cfg.ffn_blocks())
                        .map(|_| PermutationVec::identity(cfg.d_ff))
                        .collect(),
                })
                .collect(),
            projection: None,
            epoch: 0,
        }
    }

    pub fn with_epoch(mut self, epoch: u64) -> Self {
        self.epoch = epoch;
        self
    }

    /// Adds `π_v` (visual features, `d_v`) and `π_t`. The text side reuses
    /// `π` so projected visual tokens land in the same permuted space as
    /// text embeddings.
    pub fn with_projection(mut self, d_visual: usize, seed: u64) -> Result<Self> {
        self.projection = Some(ProjectionKeys {
            pi_v: PermutationVec::random(d_visual, seed)?,
            pi_t: self.pi.clone(),
        });
        Ok(self)
    }

    pub fn shared_part(&self) -> SharedKeys {
        SharedKeys {
            pi: self.pi.clone(),
            pi_c: self.pi_c.clone(),
            epoch: self.epoch,
        }
    }

    pub fn private_part(&self) -> &[LayerKeys] {
        &self.layers
    }

    /// Number of permutations: `3L + 2` dense, `2 + L(2 + e)` MoE.
    pub fn len(&self) -> usize {
        2 + self.layers.iter().map(|l| 2 + l.ffn.len()).sum::<usize>()
            + self.projection.as_ref().map_or(0, |_| 2)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Set of inverse permutations; transforming with it undoes a transform
    /// with `self`.
    pub fn inverse(&self) -> Self {
        Self {
            pi: self.pi.inverse(),
            pi_c: self.pi_c.inverse(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerKeys {
                    attn_qk: l.attn_qk.inverse(),
                    attn_vo: l.attn_vo.inverse(),
                    ffn: l.ffn.iter().map(PermutationVec::inverse).collect(),
                })
                .collect(),
            projection: self.projection.as_ref().map(|p| ProjectionKeys {
                pi_v: p.pi_v.inverse(),
                pi_t: p.pi_t.inverse(),
            }),
            epoch: self.epoch,
        }
    }

    pub fn validate_for(&self, cfg: &ModelConfig) -> Result<()> {
        let check = |what: &str, p: &PermutationVec, dim: usize| {
            if p.dim() == dim {
                Ok(())
            } else {
                Err(dim_err!("{what} has dim {}, expected {dim}", p.dim()))
            }
        };
        check("pi", &self.pi, cfg.d_model)?;
        check("pi_c", &self.pi_c, cfg.vocab_size)?;
        if self.layers.len() != cfg.n_layers {
            return Err(dim_err!(
                "{} layer key triples for {} layers",
                self.layers.len(),
                cfg.n_layers
            ));
        }
        for l in &self.layers {
            check("pi_i1", &l.attn_qk, cfg.d_model)?;
            check("pi_i2", &l.attn_vo, cfg.d_model)?;
            if l.ffn.len() != cfg.ffn_blocks() {
                return Err(dim_err!(
                    "{} inner ffn permutations, expected {}",
                    l.ffn.len(),
                    cfg.ffn_blocks()
                ));
            }
            for p in &l.ffn {
                check("pi_i3", p, cfg.d_ff)?;
            }
        }
        Ok(())
    }
}

impl SharedKeys {
    pub fn validate_for(&self, cfg: &ModelConfig) -> Result<()> {
        if self.pi.dim() != cfg.d_model || self.pi_c.dim() != cfg.vocab_size {
            return Err(dim_err!(
                "shared keys ({}, {}) for model (d={}, s={})",
                self.pi.dim(),
                self.pi_c.dim(),
                cfg.d_model,
                cfg.vocab_size
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_layer_set_has_five_permutations() {
        let cfg = ModelConfig::new(1, 6, 10, 7);
        let s = PermutationSet::generate(&cfg, 1).unwrap();
        assert_eq!(s.len(), 5);
        let dims = [
            s.pi.dim(),
            s.pi_c.dim(),
            s.layers[0].attn_qk.dim(),
            s.layers[0].attn_vo.dim(),
            s.layers[0].ffn[0].dim(),
        ];
        assert_eq!(dims, [6, 7, 6, 6, 10]);
        assert_eq!(s, PermutationSet::generate(&cfg, 1).unwrap());
        assert_ne!(s, PermutationSet::generate(&cfg, 2).unwrap());
    }

    #[test]
    fn per_layer_draws_differ() {
        let cfg = ModelConfig::new(4, 8, 8, 8);
        let s = PermutationSet::generate(&cfg, 3).unwrap();
        let mut all: Vec<&PermutationVec> = Vec::new();
        for l in &s.layers {
            all.extend([&l.attn_qk, &l.attn_vo]);
            all.extend(l.ffn.iter());
        }
        all.push(&s.pi);
        assert!(all.iter().any(|p| *p != all[0]));
        let distinct = all
            .iter()
            .enumerate()
            .filter(|(i, p)| all[..*i].iter().all(|q| q != *p))
            .count();
        assert!(distinct >= all.len() - 1);
    }

    #[test]
    fn moe_set_size_and_split() {
        let cfg = ModelConfig::new(3, 8, 8, 8).with_experts(4, 2);
        let s = PermutationSet::generate(&cfg, 3).unwrap();
        assert_eq!(s.len(), 2 + 3 * (2 + 4));
        let shared = s.shared_part();
        assert_eq!((shared.pi, shared.pi_c), (s.pi.clone(), s.pi_c.clone()));
        assert_eq!(s.private_part().len(), 3);
        s.validate_for(&cfg).unwrap();
        assert!(s.validate_for(&ModelConfig::new(3, 8, 8, 8)).is_err());
    }

    #[test]
    fn projection_keys() {
        let cfg = ModelConfig::new(1, 4, 4, 4);
        let s = PermutationSet::generate(&cfg, 0)
            .unwrap()
            .with_projection(6, 9)
            .unwrap();
        assert_eq!(s.len(), 7);
        assert_eq!(s.projection.as_ref().unwrap().pi_v.dim(), 6);
        assert_eq!(s.projection.as_ref().unwrap().pi_t, s.pi);
    }
}
