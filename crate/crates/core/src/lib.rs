//! Bayesian forecasting of compositional time series on the simplex.
//!
//! Three model families share a VARMA mean recursion in additive log-ratio
//! space: a Dirichlet observation model with log-linear precision (B-DARMA),
//! the same observation model with an ARCH-style recursion on the log
//! precision (B-DARMA-DARCH), and a Gaussian VARMA on the transformed data
//! (B-tVARMA). Inference runs on a built-in gradient-based sampler with
//! no-U-turn trajectory termination; posterior-predictive forecasting,
//! forecast-accuracy metrics, and a simulation-study harness round out the
//! toolkit.

pub mod compositional;
pub mod covariates;
pub mod dirichlet;
pub mod error;
pub mod forecast;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod simulation;
pub mod sweep;

pub use error::{Error, Result};
