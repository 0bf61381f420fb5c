use alloc::format;

use crate::error::{Error, Result};
use crate::numerics::DEFAULT_EPS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum NormKind {
    LayerNorm,
    RmsNorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum NormPlacement {
    /// `norm(sublayer(x) + x)`.
    Post,
    /// `sublayer(norm(x)) + x`.
    Pre,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum FfnKind {
    Relu,
    Gelu,
    Swiglu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum MaskKind {
    None,
    Causal,
    Custom,
}

macro_rules! wire_enum {
    ($ty:ident { $($variant:ident = $code:literal, $name:literal;)* }) => {
        impl $ty {
            pub fn code(self) -> u8 {
                match self { $($ty::$variant => $code,)* }
            }

            pub fn from_code(code: u8) -> Option<Self> {
                match code { $($code => Some($ty::$variant),)* _ => None }
            }

            pub fn name(self) -> &'static str {
                match self { $($ty::$variant => $name,)* }
            }

            pub fn from_name(name: &str) -> Option<Self> {
                match name { $($name => Some($ty::$variant),)* _ => None }
            }
        }

        impl core::fmt::Display for $ty {
            fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

wire_enum!(NormKind { LayerNorm = 0, "layernorm"; RmsNorm = 1, "rmsnorm"; });
wire_enum!(NormPlacement { Post = 0, "post"; Pre = 1, "pre"; });
wire_enum!(FfnKind { Relu = 0, "relu"; Gelu = 1, "gelu"; Swiglu = 2, "swiglu"; });
wire_enum!(MaskKind { None = 0, "none"; Causal = 1, "causal"; Custom = 2, "custom"; });

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    /// `k` in `QKᵀ/√k`.
    pub attn_scale: f32,
    pub norm_kind: NormKind,
    pub norm_placement: NormPlacement,
    pub ffn_kind: FfnKind,
    /// 0 for a dense feedforward, otherwise at least 2.
    pub n_experts: usize,
    /// Experts mixed per token; ignored for dense models.
    pub top_k: usize,
    pub mask_kind: MaskKind,
    pub norm_eps: f32,
}

impl ModelConfig {
    /// Desk-scale defaults: L=4, d=64, m=256, s=100, post-LN ReLU, causal.
    pub fn desk() -> Self {
        Self::new(4, 64, 256, 100)
    }

    pub fn new(n_layers: usize, d_model: usize, d_ff: usize, vocab_size: usize) -> Self {
        Self {
            n_layers,
            d_model,
            d_ff,
            vocab_size,
            attn_scale: d_model as f32,
            norm_kind: NormKind::LayerNorm,
            norm_placement: NormPlacement::Post,
            ffn_kind: FfnKind::Relu,
            n_experts: 0,
            top_k: 2,
            mask_kind: MaskKind::Causal,
            norm_eps: DEFAULT_EPS,
        }
    }

    pub fn with_norm(mut self, kind: NormKind, placement: NormPlacement) -> Self {
        self.norm_kind = kind;
        self.norm_placement = placement;
        self
    }

    pub fn with_ffn(mut self, kind: FfnKind) -> Self {
        self.ffn_kind = kind;
        self
    }

    pub fn with_experts(mut self, n_experts: usize, top_k: usize) -> Self {
        self.n_experts = n_experts;
        self.top_k = top_k;
        self
    }

    pub fn with_mask(mut self, kind: MaskKind) -> Self {
        self.mask_kind = kind;
        self
    }

    pub fn is_moe(&self) -> bool {
        self.n_experts >= 2
    }

    /// Inner FFN permutations per layer: one, or one per expert.
    pub fn ffn_blocks(&self) -> usize {
        if self.is_moe() {
            self.n_experts
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if self.n_layers < 1 {
            return bad(format!("n_layers must be >= 1, got {}", self.n_layers));
        }
        if self.d_model < 2 {
            return bad(format!("d_model must be >= 2, got {}", self.d_model));
        }
        if self.d_ff < 1 {
            return bad(format!("d_ff must be >= 1, got {}", self.d_ff));
        }
        if self.vocab_size < 2 {
            return bad(format!("vocab_size must be >= 2, got {}", self.vocab_size));
        }
        if self.n_experts == 1 {
            return bad("n_experts must be 0 (dense) or >= 2".into());
        }
        if self.is_moe() && (self.top_k < 1 || self.top_k > self.n_experts) {
            return bad(format!(
                "top_k {} outside 1..={}",
                self.top_k, self.n_experts
            ));
        }
        if !(self.attn_scale > 0.0 && self.attn_scale.is_finite()) {
            return bad(format!("attn_scale must be positive, got {}", self.attn_scale));
        }
        if !(self.norm_eps >= 0.0 && self.norm_eps.is_finite()) {
            return bad(format!("norm_eps must be >= 0, got {}", self.norm_eps));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(ModelConfig::desk().validate().is_ok());
        assert!(ModelConfig::new(0, 4, 4, 4).validate().is_err());
        assert!(ModelConfig::new(1, 1, 4, 4).validate().is_err());
        assert!(ModelConfig::new(1, 4, 4, 1).validate().is_err());
        assert!(ModelConfig::new(1, 4, 4, 4).with_experts(1, 1).validate().is_err());
        assert!(ModelConfig::new(1, 4, 4, 4).with_experts(2, 3).validate().is_err());
        assert!(ModelConfig::new(1, 4, 4, 4).with_experts(4, 2).validate().is_ok());
        let mut c = ModelConfig::new(1, 4, 4, 4);
        c.attn_scale = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn enum_codes_round_trip() {
        for k in [FfnKind::Relu, FfnKind::Gelu, FfnKind::Swiglu] {
            assert_eq!(FfnKind::from_code(k.code()), Some(k));
            assert_eq!(FfnKind::from_name(k.name()), Some(k));
        }
        assert_eq!(MaskKind::from_code(9), None);
    }
}
