//! On-disk formats: the model container and the permutation-set file.

pub mod container;
pub mod keys;

pub use container::{
    decode_model, decode_transformed, encode_model, encode_transformed, model_from_json,
    model_to_json, tensor_list,
};
pub use keys::{KeyEntry, KeyFile, KeyRole};
