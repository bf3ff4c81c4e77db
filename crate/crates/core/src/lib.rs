//! Lanczos solvers for the linearly constrained Rayleigh quotient problem
//!
//! ```text
//! min vᵀAv  subject to  ‖v‖ = 1,  Cᵀv = b
//! ```
//!
//! with `A` symmetric and accessed only through matrix-vector products.
//! The crate provides the projection solver ([`driver::solve`]), a dense
//! reference solver and validators ([`reference`]), convergence bounds
//! ([`analysis`]), a generator of synthetic hard instances ([`instances`]),
//! and a constrained normalized-cut image segmenter ([`clustering`]).

pub mod analysis;
pub mod clustering;
pub mod driver;
pub mod error;
pub mod instances;
pub mod io;
pub mod lanczos;
pub mod linalg;
pub mod operator;
pub mod problem;
pub mod qepmin;
pub mod reference;
pub mod secular;

pub use driver::{solve, CheckRecord, CrqSolution, Method, SolutionCase, SolveOptions};
pub use error::{Error, Result};
pub use operator::{CsrMatrix, DenseSym, SymOperator};
pub use problem::{CrqProblem, Feasibility, ProjectedOperator};

/// Environment variable capping the worker threads used by parallel kernels.
pub const THREADS_ENV: &str = "CRQOPT_THREADS";

/// Configures the global thread pool from `CRQOPT_THREADS`, if set.
/// Returns the thread count in effect. Later calls have no effect.
pub fn init_threads_from_env() -> usize {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    rayon::current_num_threads()
}
