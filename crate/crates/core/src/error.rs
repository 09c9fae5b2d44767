//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dilation matrix is not expansive: eigenvalue modulus {0} <= 1")]
    NotExpansive(f64),
    #[error("dilation matrix has non-integer entry {0}")]
    NotInteger(f64),
    #[error("branch index {index} out of range 1..={count}")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("matrix size mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("frequency set is not closed under the transfer operator at {0:?}")]
    SupportNotClosed(Vec<i64>),
    #[error("peripheral eigenvalue {eigenvalue} is defective (algebraic {algebraic}, geometric {geometric})")]
    DefectivePeripheral {
        eigenvalue: String,
        algebraic: usize,
        geometric: usize,
    },
    #[error("harmonic unit candidate is not invertible: min eigenvalue {0:.3e}")]
    NotInvertible(f64),
    #[error("least-squares fit residual {0:.3e} exceeds tolerance {1:.3e}")]
    FitResidualTooLarge(f64, f64),
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("tolerance {tol:.3e} not reached within depth {depth}: bound {achieved:.3e}")]
    TolNotReached { tol: f64, depth: usize, achieved: f64 },
    #[error("term budget exceeded: {needed} > {budget}")]
    BudgetExceeded { needed: u64, budget: u64 },
    #[error("lattice tail bound not met: estimated tail {0:.3e} > {1:.3e}")]
    TailBoundNotMet(f64, f64),
    #[error("Wedderburn block dimension {0} is not a perfect square")]
    NonIntegralBlock(f64),
    #[error("parse error: {0}")]
    ParseError(String),
    #[error("unknown builtin filter `{0}`")]
    UnknownBuiltin(String),
    #[error("matrix is singular at evaluation point {0:?}")]
    SingularAtPoint(Vec<f64>),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
