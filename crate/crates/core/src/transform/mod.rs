//! Permutation key sets and the parameter transformation that moves a
//! model into a permuted feature space.

mod keys;
mod para;
mod verify;

pub use keys::{LayerKeys, PermutationSet, ProjectionKeys, SharedKeys};
pub use para::{
    para_trans, sandwich, transform_classifier, transform_ffn, transform_layer,
    transform_projection, TransformedModel,
};
pub use verify::{
    recover_output, step_equivalence, verify_deployment, verify_equivalence, EquivalenceReport,
    StepReport,
};
