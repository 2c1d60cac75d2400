//! Crate-wide error type.
//!
//! Numerical routines return structured errors for every failure mode that a
//! caller can act on (bad geometry, non-certifiable weights, solver
//! non-convergence, exhausted randomized searches). Internal consistency
//! violations that indicate a bug, not bad input, panic via `assert!`.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QmError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("metric is not symmetric positive definite at {location:?}: {detail}")]
    NonSpdMetric { location: Vec<f64>, detail: String },

    #[error("field validation failed: {0}")]
    FieldValidation(String),

    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error("eigensolver failed to converge: {detail} (residuals: {residuals:?})")]
    EigenConvergence { detail: String, residuals: Vec<f64> },

    #[error("singular factorization: {0}")]
    SingularFactor(String),

    #[error("weight rejected: {0}")]
    WeightRejected(String),

    #[error("degenerate critical point near {location:?} (|det Hess| = {det:.3e})")]
    DegenerateCritical { location: Vec<f64>, det: f64 },

    #[error("randomized search exhausted after {attempts} attempts: {context}")]
    SearchExhausted { attempts: usize, context: String },

    #[error("relocation tubes cannot be made disjoint: {0}")]
    TubeDisjointness(String),

    #[error("rate fit impossible: {0}")]
    FitImpossible(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),
}
