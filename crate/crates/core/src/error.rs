//! Error types shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("matrix is not symmetric within tolerance (asymmetry residual {residual:.3e})")]
    NotSymmetric { residual: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:.6e})")]
    NotPsd { min_eigenvalue: f64 },

    /// Raised by the full-rank path when B is singular; callers must opt into
    /// the singular-B operations explicitly.
    #[error("B is rank deficient (rank {rank} < {dim}); use the singular-B path")]
    SingularB { rank: usize, dim: usize },

    /// Raised by the singular-B path when B actually has full rank.
    #[error("B has full rank; the singular-B path does not apply")]
    BFullRank,

    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    #[error("{count} index sets exceed the enumeration cap {cap}")]
    SizeCap { count: u128, cap: u128 },

    #[error("W22 block is numerically singular (condition number {cond:.3e})")]
    Decomposition { cond: f64 },

    #[error(
        "iterate diverged at iteration {at_iter} \
         (last recorded iteration: {last_recorded_iter:?}, last error: {last_error:?})"
    )]
    Divergence {
        at_iter: usize,
        last_recorded_iter: Option<usize>,
        last_error: Option<f64>,
    },

    #[error("one or more runs diverged: {0}")]
    SweepDivergence(String),

    #[error("undefined ratio: denominator coordinate w_{j} is zero")]
    UndefinedRatio { j: usize },

    #[error("coordinate {index} is the dominant mode, not a saddle")]
    NotASaddle { index: usize },

    #[error("mode is not mean reverting (beta_1 = {beta_1} <= beta_i = {beta_i})")]
    UnstableMode { beta_1: f64, beta_i: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("theory violation: {0}")]
    TheoryViolation(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
