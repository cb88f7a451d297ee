//! Sign-perturbed sums (SPS) confidence regions for ARX systems.
//!
//! SPS builds confidence regions for the parameters of an ARX model that
//! contain the true parameter with an exact, user-chosen probability for any
//! finite sample size, assuming only that the noise is independent and
//! symmetric about zero.
//!
//! - [`arx`]: model types, simulation, regressors, prediction errors.
//! - [`numerics`]: symmetric eigensolver, `M^{-1/2}` with pseudoinverse, least squares, chi-square quantile.
//! - [`sps`]: initialization, perturbed trajectories, `S` statistics, ranking and the indicator.
//! - [`regions`]: grid evaluation, asymptotic ellipsoids, region metrics.
//! - [`experiments`]: signal generators and the coverage/consistency/shape harness.
//! - [`io`]: CSV and JSON formats.

pub mod arx;
pub mod error;
pub mod experiments;
pub mod io;
pub mod numerics;
pub mod regions;
pub mod rng;
pub mod sps;

pub use arx::{
    ar_poly_stable, build_regressors, least_squares, prediction_errors, simulate_arx, ArxOrder, Dataset,
    ParamVector, RegressorSequence, Stability,
};
pub use error::{Result, SpsError};
pub use sps::{
    compute_s_vectors, perturbed_regressors, perturbed_trajectory, rank_under_pi, resolve_mq, sps_indicator,
    Confidence, SpsEvaluation, SpsEvaluator, SpsSetup, SpsSetupRecord,
};
pub use numerics::{chi2_quantile, psd_inv_sqrt, LsReport, PsdFactor, SymMatrix};
pub use regions::{
    asymptotic_ellipsoid, ellipsoid_contains, region_metrics, sps_region_grid, AsymptoticEllipsoid, Ellipsoid,
    GridSpec, IndicatorGrid, NoiseVariance, RegionMetrics,
};
