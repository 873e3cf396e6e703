//! Estimating the learning coefficient of Bayesian models from data.
//!
//! The crate provides a model zoo with known learning coefficients, an
//! adaptive random-walk Metropolis sampler for tempered posteriors, three
//! estimators (two-temperature WBIC quotient, posterior-variance, and
//! empirical-loss), a quadrature oracle for one- and two-parameter models,
//! and an experiment harness for replicate studies.

pub mod bootstrap;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod models;
pub mod oracle;
pub mod sampler;
pub mod stats;

pub use error::{Error, Result};
pub use estimators::{
    empirical_loss, estimate_with_mcmc, inject_outliers, lambda_empirical, lambda_imai,
    lambda_watanabe, wbic, EstimateRecord, EstimatorSettings,
};

pub use experiments::{run_study, ExperimentConfig, ExperimentSummary, StudyKind, StudyOutput};
pub use models::{sample_true, Dataset, ModelSpec, Support, TrueDistribution};
pub use oracle::{quad_lambda_estimates, quad_posterior_expectation, QuadratureGrid};
pub use sampler::{run_mcmc, tempered_log_target, McmcConfig, PosteriorDraws};
