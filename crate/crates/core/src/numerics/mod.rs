//! Dense matrices, permutations and the elementary functions of the
//! forward pass.

mod matrix;
mod ops;
mod perm;
pub mod rng;

pub use matrix::{argmax, matmul, matmul_transposed, Matrix, Vector};
pub use ops::{
    gelu, layernorm, order_free_sum, relu, rmsnorm, row_stats, sigmoid, softmax_rows, RowStats,
    DEFAULT_EPS,
};
pub use perm::{apply_col_perm, apply_row_perm, gen_permutation, permute_vector, PermutationVec};
