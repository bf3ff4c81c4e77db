use thiserror::Error;

use crate::driver::CrqSolution;

/// Every failure the toolkit can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("constraint matrix has numerical rank {rank} but {m} columns")]
    RankDeficient { rank: usize, m: usize },

    #[error("operator failed the symmetry probe (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("problem is infeasible: minimum-norm solution has norm {norm_n0}")]
    Infeasible { norm_n0: f64 },

    #[error("Lanczos start vector is zero")]
    ZeroStart,

    #[error("secular function has no root left of the smallest pole")]
    NoRoot,

    #[error("{what} did not converge within {iterations} iterations")]
    MaxIter { what: &'static str, iterations: usize },

    #[error("no real eigenvalue found in the linearized quadratic eigenproblem")]
    NoRealEigenvalue,

    #[error("leading component of the QEP eigenvector vanishes")]
    DegenerateEigenvector,

    #[error("eigensolver failure: {0}")]
    EigFailure(String),

    #[error("Lanczos iteration stopped at k = {} without meeting the tolerance", .0.k)]
    NotConverged(Box<CrqSolution>),

    #[error("dense path refused: n = {n} exceeds cap {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("could not bracket the maximizer of the dual function")]
    BracketFailure,

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("spectrum matrix H is singular")]
    SingularH,

    #[error("verification failed: {0}")]
    VerificationFailed(String),

    #[error("label set {0} is empty")]
    EmptySide(&'static str),

    #[error("pixel {0} has no neighbours with positive weight")]
    IsolatedPixel(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error in {source_name} at line {line}: {msg}")]
    Parse {
        source_name: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
