//! Error type shared across the crate.
//!
//! Every fallible operation returns a typed variant rather than a panic or a
//! silent NaN, so that the Monte Carlo driver can record per-replication
//! failures by name and keep going.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CirError>;

/// All failure modes of model evaluation, simulation, and estimation.
#[derive(Debug, Error)]
pub enum CirError {
    /// Parameter or configuration value outside its domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Stationary moment of this order does not exist.
    #[error("moment of order {order} undefined: requires order > -2*alpha/gamma = {bound}")]
    MomentUndefined { order: f64, bound: f64 },

    /// Operation needs at least one increment (two observations).
    #[error("path has no increments")]
    EmptyPath,

    /// Transition kernel degrees of freedom collapsed to a non-positive value.
    #[error("degenerate transition kernel: degrees of freedom {0} <= 0")]
    DegenerateKernel(f64),

    /// A conditional variance underflowed or a likelihood term left the reals.
    #[error("quasi-likelihood not finite at step {step}")]
    NonFiniteLikelihood { step: usize },

    /// Lag-one regression coefficient was not positive, so log() is undefined.
    #[error("lag-one regression coefficient {0} is not positive; no finite decay rate fits")]
    NonPositiveCorrelation(f64),

    /// Regressor has zero variance (constant path), slope undefined.
    #[error("constant path: lag regression is degenerate")]
    DegenerateRegressor,

    /// One-step update refused because the pilot estimate left the admissible set.
    #[error("pilot estimate ({0}, {1}, {2}) is not admissible")]
    InadmissibleInitial(f64, f64, f64),

    /// Newton system could not be solved at working precision.
    #[error("singular Hessian: pivot below threshold")]
    SingularHessian,

    /// Studentization refused because the estimate left the admissible set.
    #[error("estimate ({0}, {1}, {2}) is not admissible; cannot studentize")]
    InadmissibleEstimate(f64, f64, f64),

    /// Matrix square root requested for a matrix that is not positive definite.
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    /// Monte Carlo study produced no successful replication for any estimator.
    #[error("all {0} replications failed")]
    AllReplicationsFailed(usize),

    /// Malformed input file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// I/O failure while reading or writing an artifact.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CirError {
    /// Stable machine-readable name, used as the `status` field of
    /// per-replication records and in CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            CirError::InvalidInput(_) => "invalid-input",
            CirError::MomentUndefined { .. } => "moment-undefined",
            CirError::EmptyPath => "empty-path",
            CirError::DegenerateKernel(_) => "degenerate-kernel",
            CirError::NonFiniteLikelihood { .. } => "non-finite-likelihood",
            CirError::NonPositiveCorrelation(_) => "non-positive-correlation",
            CirError::DegenerateRegressor => "degenerate-regressor",
            CirError::InadmissibleInitial(..) => "inadmissible-initial",
            CirError::SingularHessian => "singular-hessian",
            CirError::InadmissibleEstimate(..) => "inadmissible-estimate",
            CirError::NotPositiveDefinite => "not-positive-definite",
            CirError::AllReplicationsFailed(_) => "all-replications-failed",
            CirError::Parse { .. } => "parse-error",
            CirError::Io(_) => "io-error",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_stable() {
        assert_eq!(CirError::SingularHessian.name(), "singular-hessian");
        assert_eq!(
            CirError::NonPositiveCorrelation(-0.5).name(),
            "non-positive-correlation"
        );
        assert_eq!(
            CirError::InadmissibleInitial(1.0, 1.0, 1.0).name(),
            "inadmissible-initial"
        );
    }

    #[test]
    fn display_carries_context() {
        let e = CirError::MomentUndefined {
            order: -6.0,
            bound: -6.0,
        };
        let msg = e.to_string();
        assert!(msg.contains("-6"), "message should cite the order: {msg}");
    }
}
