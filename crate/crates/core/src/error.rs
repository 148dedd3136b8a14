use thiserror::Error;

/// Errors raised by model construction, fitting and region computation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// The inverse link is undefined for the requested probabilities.
    #[error("inverse link undefined for category {category}: 1 + alpha * t = {value} <= 0")]
    InverseDomain { category: usize, value: f64 },

    #[error("link evaluation left its domain: {0}")]
    LinkDomain(String),

    #[error("information matrix is singular ({0})")]
    SingularInformation(String),

    #[error("fisher scoring did not converge after {iterations} iterations (score max-norm {score_norm:e})")]
    NotConverged { iterations: usize, score_norm: f64 },

    #[error("no grid point produced a converged profile fit")]
    AllGridFailed,

    #[error("percentile set is not a singleton: {0}")]
    NotSingleton(String),

    #[error("percentile system is underdetermined: {unknowns} covariates, {equations} equations")]
    Underdetermined { unknowns: usize, equations: usize },

    #[error("percentile system has no solution: {0}")]
    NoSolution(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, Error>;
