//! Permutation-based secure Transformer inference.
//!
//! The crate is split the same way the computation is:
//!
//! - [`numerics`]: dense `f32` matrices, permutation vectors and the
//!   row-wise functions (softmax, LayerNorm, RMSNorm, activations).
//! - [`model`]: a single-head Transformer forward pass with post/pre norm,
//!   ReLU/GeLU/SwiGLU feedforwards, MoE routing and arbitrary masks.
//! - [`transform`]: permutation sets and the feature-space parameter
//!   transformation, plus equivalence checks against the plain model.
//! - [`security`]: distance correlation, keyspace accounting and the
//!   known-plaintext / brute-force attacks used to evaluate the scheme.
//!
//! Everything here is `no_std` + `alloc`; file formats, transports and the
//! command line live in the `stip` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod model;
pub mod numerics;
pub mod security;
pub mod transform;

pub use error::{Error, Result};
pub use model::{
    EmbeddingTable, FfnKind, FfnWeights, LayerWeights, Mask, MaskKind, ModelConfig, ModelParams,
    NormKind, NormPlacement, NormWeights,
};
pub use numerics::{Matrix, PermutationVec, Vector};
pub use transform::{PermutationSet, SharedKeys, TransformedModel};
