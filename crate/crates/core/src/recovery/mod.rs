//! Recovery of branched processes from partial data: interpolation and
//! one-sided least squares for sampled band-limited branches, alternating
//! projections for interval observations with a known spectrum gap, chain
//! propagation across glued pairs, and a small-grid uniqueness oracle.

mod oracle;
mod pocs;
mod propagate;
mod sampling;

pub use oracle::{parse_index_spec, uniqueness_oracle, OracleVerdict, ORACLE_MAX_N, RANK_REL};
pub use pocs::{
    gap_extrapolate, pocs_masks, Extrapolation, LogEntry, ObservationSpec, PocsOptions,
};
pub use propagate::{
    carry, propagate_branches, propagate_from_root, sample_and_recover, BranchRecovery,
    PairResidual, Recovery, SampleRecovery, SamplingDiagnostics,
};
pub use sampling::{
    band_bins, one_sided_reconstruct, sinc_reconstruct, OneSided, Regularization, Samples,
    SamplingSpec, ILL_CONDITIONED, TIKHONOV_REL,
};
