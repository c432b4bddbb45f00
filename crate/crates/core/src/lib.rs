//! Compressed sensing image reconstruction with a group-sparse low-rank
//! prior and nonconvex spectral penalties.
//!
//! Similar patches are stacked into groups whose singular values are shrunk
//! by iteratively reweighted nuclear norm minimization. The group denoiser
//! is the `Z` step of an ADMM loop whose `X` step fits the measurements with
//! either least squares or a half-quadratic M-estimator.

pub mod error;
pub mod grouping;
pub mod image;
pub mod lowrank;
pub mod measfile;
pub mod measurement;
pub mod metrics;
pub mod penalty;
pub mod solver;
pub mod synthetic;

pub use error::{Error, Result};
pub use grouping::{aggregate_groups, build_groups, extract_patch, match_group, GroupingConfig, PatchGroup};
pub use image::{read_pgm, write_pgm, Image};
pub use lowrank::{
    irnn_denoise_group, rank_sparsity_check, svd_small, wsvt, DenoiseResult, InitWeights, SvdFactors,
    WeightScheme, WeightingMode,
};
pub use measurement::{
    add_noise, operator_norm_estimate, LinearOperator, MeasurementOp, NoiseModel, NoiseSpec, OperatorKind,
};
pub use metrics::{psnr, QualityReport};
pub use penalty::{Penalty, PenaltyKind};
pub use solver::{recover, Fidelity, Init, RobustScale, SolverConfig, SolverState, TraceRecord};
