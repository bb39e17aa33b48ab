//! Online generalized eigenvalue (GEV) solving with a stochastic primal-dual
//! Hebbian iteration, complete landscape analysis of the GEV Lagrangian, and
//! empirical diagnostics for the solver's diffusion limits.
//!
//! The problem is `min -tr(X^T A X)` subject to `X^T B X = I_r` for a
//! symmetric pencil `(A, B)` observed only through unbiased random samples.
//! The crate provides:
//!
//! - [`matrix`]: dense symmetric kernels (eigendecomposition, Kronecker and
//!   box products, PSD square roots);
//! - [`gev`]: the problem type, Lagrangian, assumption checks, ground truth;
//! - [`landscape`]: enumeration and stable/unstable classification of all
//!   Lagrangian equilibria, including rank-deficient `B`;
//! - [`oracle`]: seeded unbiased matrix-sample streams;
//! - [`sgha`]: the stochastic solver and its step-size heuristics;
//! - [`diffusion`]: ODE/O-U diagnostics for the commutative case;
//! - [`harness`]: reproducible multi-seed experiment sweeps;
//! - [`io`]: CSV/JSON formats used by the CLI.

pub mod diffusion;
pub mod error;
pub mod gev;
pub mod harness;
pub mod io;
pub mod landscape;
pub mod matrix;
pub mod oracle;
pub mod seeding;
pub mod sgha;

pub use error::{Error, Result};
pub use gev::{GevProblem, GroundTruth, SingularVerdict, WhitenedProblem};
pub use landscape::{Classification, Equilibrium, SingularDecomposition};
pub use matrix::{Mat, SymEigen, Vector};
pub use oracle::{OracleKind, OracleMoments, OracleSpec};
pub use sgha::{Record, RunOutput, SghaConfig, SghaState, StepMode, Trajectory};
