//! Ensemble conditional variance estimation for linear sufficient dimension
//! reduction.
//!
//! Finds a basis B of the minimal subspace such that Y ⟂ X | BᵀX by
//! minimizing, over Stiefel points V ∈ S(p, q) with q = p − k, an averaged
//! local conditional variance of transformed responses around the affine
//! subspaces s₀ + span(V). The estimated reduction is the orthonormal
//! complement of the minimizer.

pub mod ensemble;
pub mod error;
pub mod estimator;
pub mod kernel;
pub mod objective;
pub mod optimizer;
pub mod seed;
pub mod simulation;
pub mod stiefel;

pub use ensemble::{build_ensemble, default_m, Ensemble, EnsembleKind, EnsembleSpec, SizeChoice};
pub use error::{Error, Result};
pub use estimator::{fit, fit_cve, EcveFit, FitConfig};
pub use kernel::{bandwidth_rule, kernel_eval, Bandwidth, KernelSpec};
pub use objective::{
    gradient_ensemble, objective_ensemble, ObjectiveConfig, ObjectiveValue, Sample, Weighting,
};
pub use optimizer::{minimize, OptimizerConfig, OptimizationResult};
pub use simulation::{
    generate, run_study, DistId, MethodSpec, ModelId, ModelSpec, PredictorDist, StudyResult,
};
pub use stiefel::{
    complement_basis, orthonormalize, random_stiefel, retract, subspace_error, tangent_project,
    StiefelPoint, SubspaceProjector, TangentVector,
};
