//! Exact simulation and Gaussian quasi-likelihood estimation for the ergodic
//! square-root diffusion
//!
//! ```text
//! dX_t = (alpha - beta X_t) dt + sqrt(gamma X_t) dW_t,   X_0 > 0,
//! ```
//!
//! observed at equidistant times t_j = j h under high-frequency ergodic
//! sampling (h -> 0, n h -> infinity).
//!
//! What the crate provides:
//!
//! - [`simulate`]: bias-free path generation through the exact noncentral
//!   chi-square transition law, with reproducible, worker-independent random
//!   streams.
//! - [`gql`]: the Gaussian quasi-likelihood surface, its analytic gradient,
//!   a finite-difference Hessian, and the closed-form asymptotic information
//!   matrix with inverse and square root.
//! - [`estimate`]: closed-form initial estimators and one-step
//!   Newton-Raphson / Fisher-scoring refinements, plus studentization against
//!   a known truth.
//! - [`montecarlo`]: a deterministic parallel replication harness with
//!   summary statistics, normality diagnostics, and CSV/JSON artifacts.
//! - [`model`]: parameter space, observation grid, invariant law and its
//!   fractional moments, ergodic averages.
//!
//! The `cir` binary exposes the same functionality as a command-line tool;
//! see the crate examples for library usage.

pub mod error;
pub mod model;
pub mod montecarlo;
pub mod estimate;
pub mod gql;
pub mod numeric;
pub mod simulate;

pub use error::{CirError, Result};
pub use model::{CirParams, InvariantLaw, SamplingScheme};
pub use simulate::{Path, StreamSeed};
