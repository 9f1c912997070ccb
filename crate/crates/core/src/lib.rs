//! Distributed continual learning of linear-regression task streams with the
//! CoCoA algorithm.
//!
//! A task stream is a sequence of noisy linear models `y_t = A_t w_t* + z_t`
//! presented one at a time. The model coordinates (and the matching columns of
//! each regressor matrix) are split across `K` nodes; every task is fitted with
//! a fixed number of CoCoA iterations, warm-started from the previous task's
//! estimate. The crate provides:
//!
//! * [`cocoa`] — the feature-partitioned iterative solver itself, plus its
//!   one-step closed form used as an internal cross-check;
//! * [`theory`] — closed-form expressions for the expected generalization
//!   error under isotropic Gaussian regressors (block recursion, equal-
//!   dimension specialization, shared-parameter task model, large-`T` limits);
//! * [`taskgen`] — synthetic task-stream generators and the MNIST
//!   random-feature pipeline inputs;
//! * [`metrics`] — empirical training error, forgetting and generalization
//!   error, with a seeded Monte-Carlo harness that reproduces the closed
//!   forms statistically;
//! * [`baseline`] — the offline centralized least-squares benchmark.
//!
//! Everything is deterministic given a seed: Monte-Carlo trials draw from
//! counter-split [`rng::RngStream`]s so parallel and serial runs agree.

pub mod baseline;
pub mod cocoa;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod mnist;
pub mod rng;
pub mod taskgen;
pub mod theory;

pub use error::{Error, Result};
pub use matrix::{Matrix, Vector};
pub use rng::RngStream;
