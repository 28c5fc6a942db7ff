//! Robust particle filtering for nonlinear state-space models whose measurement
//! noise is contaminated by outliers from an unknown distribution.
//!
//! The outlier distribution is learned online as a Dirichlet process mixture
//! (DPM) of Gaussians with conjugate normal-inverse-Wishart cluster priors. At
//! every filter step the measurement is explained by one of `K + 2` hypotheses:
//! the known standard noise, one of the `K` active outlier clusters, or a fresh
//! cluster drawn from the prior. The sampled hypothesis drives the importance
//! weights, and the estimated noise residual feeds the mixture model, which is
//! periodically refined by Gibbs sweeps.
//!
//! The crate ships:
//!
//! - [`kernels`]: seedable samplers and log-densities (Gaussian, Gamma,
//!   inverse-Wishart, NIW, Dirichlet, categorical);
//! - [`dpm`]: the clustered outlier model and its Gibbs refinement;
//! - [`filter`] / [`resample`]: the robust filter engine, a plain bootstrap
//!   baseline, and residual resampling;
//! - [`benchmark`]: a univariate nonlinear benchmark system with switching
//!   measurement branches and contaminated noise;
//! - [`metrics`]: MSE, Monte Carlo KL divergence, and run aggregation;
//! - [`config`] / [`runner`]: the batch-experiment front end behind the
//!   `dpm-rpf` binary.

pub mod benchmark;
pub mod config;
pub mod dpm;
pub mod error;
pub mod filter;
pub mod kernels;
pub mod metrics;
pub mod resample;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
pub use rng::SeedStream;
