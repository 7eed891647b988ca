//! Model-based small area estimation for species-level inventory attributes.
//!
//! The pipeline fits a two-stage multivariate spatial hurdle model to
//! plot-level data: a Bernoulli-logit occurrence stage and a conditional
//! log-normal abundance stage, each with hierarchical regression effects and
//! a latent spatial factor process approximated by a nearest-neighbor
//! Gaussian process (NNGP). Posterior draws are pushed through a dense
//! prediction grid and averaged within user-defined areas to produce
//! small area estimates with full posterior uncertainty, alongside a
//! design-based direct estimator for comparison and a simulation harness
//! for calibration checks.

pub mod data;
pub mod diag;
pub mod direct;
pub mod error;
pub mod linalg;
pub mod mcmc;
pub mod model;
pub mod nngp;
pub mod pg;
pub mod predict;
pub mod rng;
pub mod sim;
pub mod stats;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
