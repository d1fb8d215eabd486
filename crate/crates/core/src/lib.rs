//! Design toolkit for variable-density k-space sampling.
//!
//! The crate covers the full path from a parametric family of sampling
//! densities to an optimized sampling scheme: exact non-uniform Fourier
//! operators, kernel-discrepancy particle samplers under speed and
//! acceleration constraints, total-variation regularized reconstruction,
//! and Bayesian optimization of the density over a convex hull of
//! projected family members.
//!
//! All randomized components take explicit seeds and every parallel
//! reduction runs in a fixed order, so identical inputs produce
//! bit-identical outputs regardless of thread count.

pub mod bayesopt;
pub mod density;
pub mod error;
pub mod grid;
pub mod io;
pub mod kinematics;
pub mod metrics;
pub mod nuft;
pub mod pipeline;
pub mod recon;
pub mod rng;
pub mod sampler;
pub mod scheme;

pub use error::{Error, Result};

/// Half-width of the normalized k-space box; all sampling coordinates
/// live in `[-BOX_HALF, BOX_HALF]^2`.
pub const BOX_HALF: f64 = std::f64::consts::PI;

/// Full width of the normalized k-space box.
pub const BOX_WIDTH: f64 = 2.0 * std::f64::consts::PI;
