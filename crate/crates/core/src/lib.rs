//! Movement primitives in a reduced parameter space.
//!
//! Trajectories are encoded as weights of normalized radial basis functions
//! fitted by ridge regression ([`mpcore`]). A Gaussian over those weights
//! ([`promp`]) is decomposed by PCA into a mean movement plus a small set of
//! *principal movements* ([`primos`]), so that each demonstration is described
//! by a handful of coefficients. [`cpca`] implements the configuration-space
//! PCA baseline, [`eval`] the NRMSE metric, parameter/error frontiers and
//! leave-one-out analysis, and [`synth`] a seeded generator of datasets with
//! known principal movements.

pub mod basis;
pub mod cpca;
pub mod error;
pub mod eval;
pub mod io;
mod linalg;
pub mod mpcore;
pub mod primos;
pub mod promp;
pub mod synth;

pub use basis::{
    block_apply, feature_matrix, features_at, phase_from_timestamps, BasisConfig, FeatureMatrix, PhaseVector,
};
pub use error::{Error, ErrorClass, Result};
pub use mpcore::{
    fit_weights, parameter_count, reconstruct, ModelKind, MpWeights, ObservationNoise, ParamCount, RidgeConfig,
    RidgeScale, Trajectory,
};
pub use primos::{
    fit_alpha, fit_pro_primos, fit_pro_primos_detailed, principal_movements, reconstruct_primo, AlphaCoeffs,
    PrincipalMovements, ProPrimoDistribution,
};
pub use promp::{Gaussian, PrompDistribution};
