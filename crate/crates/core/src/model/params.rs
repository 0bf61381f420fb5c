use alloc::vec::Vec;

use rand::Rng;

use super::config::{FfnKind, ModelConfig, NormKind};
use crate::error::{dim_err, Error, Result};
use crate::numerics::rng::{gaussian_matrix, gaussian_vec, seeded};
use crate::numerics::{Matrix, Vector};

/// Norm weights. `beta` is absent for RMSNorm.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormWeights {
    pub gamma: Vector,
    pub beta: Option<Vector>,
}

/// One feedforward block: `w1` d×m, `w2` m×d, `w3` d×m for SwiGLU.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FfnWeights {
    pub w1: Matrix,
    pub w2: Matrix,
    pub w3: Option<Matrix>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FfnBlock {
    Dense(FfnWeights),
    /// Router `w_g` (d×e) and one feedforward per expert.
    Moe {
        router: Matrix,
        experts: Vec<FfnWeights>,
    },
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerWeights {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
    pub norm1: NormWeights,
    pub norm2: NormWeights,
    pub ffn: FfnBlock,
}

/// Token embedding table; row `i` embeds token id `i`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmbeddingTable {
    table: Matrix,
}

impl EmbeddingTable {
    pub fn new(table: Matrix) -> Self {
        Self { table }
    }

    pub fn vocab_size(&self) -> usize {
        self.table.rows()
    }

    pub fn d_model(&self) -> usize {
        self.table.cols()
    }

    pub fn table(&self) -> &Matrix {
        &self.table
    }

    /// Row `j` of the output is the embedding of `ids[j]`.
    pub fn embed(&self, ids: &[usize]) -> Result<Matrix> {
        if let Some(&id) = ids.iter().find(|&&id| id >= self.vocab_size()) {
            return Err(Error::UnknownToken {
                id,
                vocab: self.vocab_size(),
            });
        }
        self.table.select_rows(ids)
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelParams {
    pub config: ModelConfig,
    pub embedding: EmbeddingTable,
    pub layers: Vec<LayerWeights>,
    /// `W_c`, d×s.
    pub classifier: Matrix,
}

fn expect_shape(what: &str, m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(dim_err!(
            "{what} is {}x{}, expected {rows}x{cols}",
            m.rows(),
            m.cols()
        ));
    }
    Ok(())
}

impl NormWeights {
    fn validate(&self, what: &str, cfg: &ModelConfig) -> Result<()> {
        if self.gamma.dim() != cfg.d_model {
            return Err(dim_err!("{what}.gamma has dim {}", self.gamma.dim()));
        }
        match (cfg.norm_kind, &self.beta) {
            (NormKind::LayerNorm, None) => Err(Error::MissingWeight("beta")),
            (NormKind::LayerNorm, Some(b)) if b.dim() != cfg.d_model => {
                Err(dim_err!("{what}.beta has dim {}", b.dim()))
            }
            (NormKind::RmsNorm, Some(_)) => Err(Error::InvalidConfig(alloc::format!(
                "{what}: rmsnorm carries no beta"
            ))),
            _ => Ok(()),
        }
    }
}

impl FfnWeights {
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        let (d, m) = (cfg.d_model, cfg.d_ff);
        expect_shape("w1", &self.w1, d, m)?;
        expect_shape("w2", &self.w2, m, d)?;
        match (&self.w3, cfg.ffn_kind) {
            (None, FfnKind::Swiglu) => Err(Error::MissingWeight("w3")),
            (Some(w3), FfnKind::Swiglu) => expect_shape("w3", w3, d, m),
            (Some(_), _) => Err(Error::InvalidConfig("w3 only applies to swiglu".into())),
            (None, _) => Ok(()),
        }
    }
}

impl LayerWeights {
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        let d = cfg.d_model;
        expect_shape("w_q", &self.w_q, d, d)?;
        expect_shape("w_k", &self.w_k, d, d)?;
        expect_shape("w_v", &self.w_v, d, d)?;
        expect_shape("w_o", &self.w_o, d, d)?;
        self.norm1.validate("norm1", cfg)?;
        self.norm2.validate("norm2", cfg)?;
        match (&self.ffn, cfg.is_moe()) {
            (FfnBlock::Dense(f), false) => f.validate(cfg),
            (FfnBlock::Moe { router, experts }, true) => {
                expect_shape("w_g", router, d, cfg.n_experts)?;
                if experts.len() != cfg.n_experts {
                    return Err(dim_err!(
                        "{} experts, config says {}",
                        experts.len(),
                        cfg.n_experts
                    ));
                }
                experts.iter().try_for_each(|e| e.validate(cfg))
            }
            _ => Err(Error::InvalidConfig(
                "feedforward block does not match n_experts".into(),
            )),
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let cfg = &self.config;
        cfg.validate()?;
        expect_shape(
            "embedding",
            self.embedding.table(),
            cfg.vocab_size,
            cfg.d_model,
        )?;
        if self.layers.len() != cfg.n_layers {
            return Err(dim_err!(
                "{} layers, config says {}",
                self.layers.len(),
                cfg.n_layers
            ));
        }
        self.layers.iter().try_for_each(|l| l.validate(cfg))?;
        expect_shape("classifier", &self.classifier, cfg.d_model, cfg.vocab_size)
    }

    /// Seeded random model: weights ~ N(0, 1/d), embeddings ~ N(0, 1),
    /// norm gains near 1 and biases near 0.
    pub fn random(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(seed);
        let cfg = config.clone();
        let d = cfg.d_model;
        let std = 1.0 / libm::sqrtf(d as f32);
        let embedding = EmbeddingTable::new(gaussian_matrix(cfg.vocab_size, d, 1.0, &mut rng));
        let layers = (0..cfg.n_layers)
            .map(|_| random_layer(&cfg, std, &mut rng))
            .collect();
        let classifier = gaussian_matrix(d, cfg.vocab_size, std, &mut rng);
        Ok(Self {
            config: cfg,
            embedding,
            layers,
            classifier,
        })
    }
}

fn random_norm(cfg: &ModelConfig, rng: &mut impl Rng) -> NormWeights {
    let d = cfg.d_model;
    let gamma = gaussian_vec(d, 0.1, rng).into_iter().map(|v| 1.0 + v).collect();
    let beta = match cfg.norm_kind {
        NormKind::LayerNorm => Some(Vector::from_raw(gaussian_vec(d, 0.1, rng))),
        NormKind::RmsNorm => None,
    };
    NormWeights {
        gamma: Vector::from_raw(gamma),
        beta,
    }
}

fn random_ffn(cfg: &ModelConfig, std: f32, rng: &mut impl Rng) -> FfnWeights {
    let (d, m) = (cfg.d_model, cfg.d_ff);
    let w1 = gaussian_matrix(d, m, std, rng);
    let w2 = gaussian_matrix(m, d, std, rng);
    let w3 = (cfg.ffn_kind == FfnKind::Swiglu).then(|| gaussian_matrix(d, m, std, rng));
    FfnWeights { w1, w2, w3 }
}

fn random_layer(cfg: &ModelConfig, std: f32, rng: &mut impl Rng) -> LayerWeights {
    let d = cfg.d_model;
    let w_q = gaussian_matrix(d, d, std, rng);
    let w_k = gaussian_matrix(d, d, std, rng);
    let w_v = gaussian_matrix(d, d, std, rng);
    let w_o = gaussian_matrix(d, d, std, rng);
    let norm1 = random_norm(cfg, rng);
    let norm2 = random_norm(cfg, rng);
    let ffn = if cfg.is_moe() {
        let router = gaussian_matrix(d, cfg.n_experts, std, rng);
        let experts = (0..cfg.n_experts).map(|_| random_ffn(cfg, std, rng)).collect();
        FfnBlock::Moe { router, experts }
    } else {
        FfnBlock::Dense(random_ffn(cfg, std, rng))
    };
    LayerWeights {
        w_q,
        w_k,
        w_v,
        w_o,
        norm1,
        norm2,
        ffn,
    }
}
