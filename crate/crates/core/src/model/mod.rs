//! Desk-scale Transformer inference.

mod config;
mod forward;
mod mask;
mod params;

pub use config::{FfnKind, MaskKind, ModelConfig, NormKind, NormPlacement};
pub use forward::{
    attention, embed, ffn, generate_local, greedy_decode_step, layer_forward,
    layer_forward_traced, model_forward, model_forward_traced, moe_ffn, norm, route,
    router_logits, LayerTrace, ModelTrace, Routing,
};
pub use mask::Mask;
pub use params::{EmbeddingTable, FfnBlock, FfnWeights, LayerWeights, ModelParams, NormWeights};
