//! Leakage measures and attacks on the permutation scheme.

mod attack;
mod dcorr;
mod demo;
mod keyspace;

pub use attack::{bfa_exhaustive, kpa_column_match, KpaResult, BFA_DEFAULT_CAP};
pub use dcorr::{
    bias_corrected_dcorr, dcorr_baseline_projection, distance_correlation, projection_dcorr, scalar_distance_correlation,
    token_feature_dcorr, token_projection_dcorr, DcorrReport, ProjectionKind,
};
pub use demo::{
    kpa_parameter_resistance_demo, unauthorized_use_demo, ResistanceReport, UnauthorizedUseReport,
    WeightRecovery,
};
pub use keyspace::{keyspace_log_size, ln_factorial, KeyspaceReport};
