//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Covariance or scale matrix is not symmetric positive definite.
    #[error("invalid covariance: matrix is not symmetric positive definite")]
    InvalidCovariance,

    /// A distribution parameter is outside its valid domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Vector/matrix dimensions do not line up.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Categorical sampling asked for a draw from an all-zero weight vector.
    #[error("categorical weights are all zero")]
    AllZeroWeights,

    /// Allocation referenced a cluster id outside 1..=K+1.
    #[error("invalid cluster id {id} for a model with {k} clusters")]
    InvalidClusterId { id: usize, k: usize },

    /// Gibbs refinement requires at least one outlier and one cluster.
    #[error("outlier model is empty; nothing to refine")]
    EmptyModel,

    /// No outlier cluster is active yet, so no predictive mixture exists.
    #[error("no outlier model yet: zero active clusters")]
    NoOutlierModel,

    /// Repeated covariance draws failed the positive-definiteness check.
    #[error("degenerate covariance sampled {attempts} times in a row")]
    DegenerateCovariance { attempts: usize },

    /// Every hypothesis had zero posterior mass.
    #[error("total likelihood underflow across all hypotheses")]
    TotalLikelihoodUnderflow,

    /// All particle likelihoods under the selected hypothesis underflowed.
    #[error("weight collapse{}", fmt_time(.t))]
    WeightCollapse { t: Option<usize> },

    /// Sequence lengths disagree (e.g. estimates vs. truth in MSE).
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// A CSV input could not be parsed.
    #[error("{path}:{line}: {msg}")]
    ParseCsv {
        path: String,
        line: usize,
        msg: String,
    },

    /// Configuration file is malformed or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_time(t: &Option<usize>) -> String {
    match t {
        Some(t) => format!(" at time step {t}"),
        None => String::new(),
    }
}
