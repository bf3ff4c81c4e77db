//! The Lanczos solver: feasibility dispatch, the main projection loop with
//! periodic reduced solves and stopping tests, recovery of `v = n0 + Q_k x`,
//! and hard-case detection.

use std::io::Write;

use log::{debug, info};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lanczos::{smallest_eigenpair_above, LanczosState, StepOutcome};
use crate::problem::{
    b0_zero_tol, classify, resolve_b0_zero, CrqProblem, Feasibility, InteriorSetup, ProjectedOperator,
};
use crate::qepmin::{qep_residual_bound, reduced_qep_to_rlgopt, solve_reduced_qep};
use crate::secular::solve_rlgopt;

/// Which reduced problem is solved at each check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Secular equation on the Lanczos tridiagonal.
    LGopt,
    /// Leftmost real eigenvalue of the linearized reduced QEP.
    QEPmin,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lgopt" => Ok(Method::LGopt),
            "qepmin" => Ok(Method::QEPmin),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub method: Method,
    /// Stop once the residual bound `δ` is at most this.
    pub tol: f64,
    pub maxit: usize,
    /// First step at which the reduced problem is solved.
    pub minit: usize,
    /// Steps between checks after `minit`.
    pub checkstep: usize,
    /// Run the hard-case test after the main loop.
    pub detect_hard: bool,
    /// Keep `Q_k` in the solution.
    pub return_basis: bool,
    /// Keep `v⁽ᵏ⁾` in every history record.
    pub record_iterates: bool,
    /// Also solve the reduced problem by the other method at every check.
    pub cross_check: bool,
    /// Seed for the random start vectors of the auxiliary eigensolves.
    pub rng_seed: u64,
}

impl Default for SolveOptions {
    /// Settings for synthetic test problems.
    fn default() -> Self {
        Self {
            method: Method::LGopt,
            tol: 1e-15,
            maxit: 200,
            minit: 1,
            checkstep: 1,
            detect_hard: true,
            return_basis: false,
            record_iterates: false,
            cross_check: false,
            rng_seed: 0,
        }
    }
}

impl SolveOptions {
    /// Settings used for image segmentation.
    pub fn clustering() -> Self {
        Self {
            method: Method::QEPmin,
            tol: 8e-5,
            maxit: 300,
            minit: 120,
            checkstep: 5,
            detect_hard: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.checkstep == 0 {
            return Err(Error::InvalidArgument("checkstep must be at least 1".into()));
        }
        if self.minit > self.maxit {
            return Err(Error::InvalidArgument(format!(
                "minit ({}) exceeds maxit ({})",
                self.minit, self.maxit
            )));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::InvalidArgument(format!("tol must be nonnegative, got {}", self.tol)));
        }
        Ok(())
    }
}

/// How the returned solution was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolutionCase {
    /// The Lanczos iterate itself.
    Easy,
    /// Hard case detected; the iterate was padded with an eigenvector.
    HardDetected,
    /// `b0 = 0`: eigenvector of the projected matrix.
    B0Zero,
    /// `‖n0‖ = 1`: the constraint set is a single point.
    UniquePoint,
}

impl std::fmt::Display for SolutionCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolutionCase::Easy => "easy",
            SolutionCase::HardDetected => "hard",
            SolutionCase::B0Zero => "b0-zero",
            SolutionCase::UniquePoint => "unique-point",
        };
        f.write_str(s)
    }
}

/// One stopping-test evaluation.
#[derive(Debug, Clone)]
pub struct CheckRecord {
    pub k: usize,
    pub mu: f64,
    /// Computable residual bound used by the stopping test.
    pub delta: f64,
    /// Normalized residual.
    pub nres: f64,
    /// `h(v⁽ᵏ⁾)`.
    pub objective: f64,
    /// Multiplier from the other reduced method, when cross-checking.
    pub mu_other: Option<f64>,
    /// `v⁽ᵏ⁾`, when iterates are recorded.
    pub v: Option<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct CrqSolution {
    pub v: DVector<f64>,
    pub mu: f64,
    /// Lanczos steps taken.
    pub k: usize,
    pub history: Vec<CheckRecord>,
    pub case: SolutionCase,
    pub objective: f64,
    pub converged: bool,
    /// `λ_min(H)` when the hard-case test ran. When the test cleared the easy
    /// case early this is a Ritz value, an upper estimate.
    pub lambda_min_h: Option<f64>,
    /// Lanczos basis, when requested.
    pub basis: Option<DMatrix<f64>>,
}

impl CrqSolution {
    /// `λ_min(H) − μ`; small values flag a nearly hard problem.
    pub fn hard_gap(&self) -> Option<f64> {
        self.lambda_min_h.map(|l| l - self.mu)
    }
}

/// Solves the constrained Rayleigh quotient problem by Lanczos projection.
pub fn solve(problem: &CrqProblem, opts: &SolveOptions) -> Result<CrqSolution> {
    opts.validate()?;
    let proj = ProjectedOperator::new(problem)?;
    let setup = match classify(problem, &proj)? {
        Feasibility::Infeasible { norm_n0, .. } => return Err(Error::Infeasible { norm_n0 }),
        Feasibility::UniquePoint { n0 } => return Ok(unique_point(problem, n0)),
        Feasibility::Interior(s) => s,
    };
    if let Some(sol) = resolve_b0_zero(problem, &proj, &setup, opts.rng_seed)? {
        return Ok(sol);
    }
    main_loop(problem, &proj, &setup, opts)
}

pub(crate) fn unique_point(problem: &CrqProblem, n0: DVector<f64>) -> CrqSolution {
    let objective = problem.objective(&n0);
    CrqSolution {
        v: n0,
        mu: objective,
        k: 0,
        history: Vec::new(),
        case: SolutionCase::UniquePoint,
        objective,
        converged: true,
        lambda_min_h: None,
        basis: None,
    }
}

/// Reduced solution at one check, in Lanczos coordinates.
struct Reduced {
    mu: f64,
    x: Vec<f64>,
    delta: f64,
    /// QEP residual, when the QEP path supplied it.
    qep_nres: Option<f64>,
    mu_other: Option<f64>,
}

fn reduced_solve(
    st: &LanczosState<'_>,
    opts: &SolveOptions,
    norm_a: f64,
    gamma: f64,
) -> Result<Reduced> {
    let beta1 = st.start_norm();
    let (alpha, off) = (st.alpha(), st.offdiag());
    let k = st.k();
    match opts.method {
        Method::LGopt => {
            let lg = solve_rlgopt(alpha, off, beta1, gamma)?;
            let nx = lg.x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let delta = st.beta_next().abs() * lg.x[k - 1].abs() / ((norm_a + lg.mu.abs()) * nx + beta1);
            let mu_other = if opts.cross_check {
                Some(solve_reduced_qep(alpha, off, beta1, gamma)?.mu)
            } else {
                None
            };
            Ok(Reduced {
                mu: lg.mu,
                x: lg.x,
                delta,
                qep_nres: None,
                mu_other,
            })
        }
        Method::QEPmin => {
            let qep = solve_reduced_qep(alpha, off, beta1, gamma)?;
            let x = reduced_qep_to_rlgopt(&qep, beta1, gamma)?;
            let res = qep_residual_bound(st, &qep, norm_a, gamma, beta1);
            let mu_other = if opts.cross_check {
                Some(solve_rlgopt(alpha, off, beta1, gamma)?.mu)
            } else {
                None
            };
            Ok(Reduced {
                mu: qep.mu,
                x,
                delta: res.delta,
                qep_nres: Some(res.nres),
                mu_other,
            })
        }
    }
}

fn main_loop(
    problem: &CrqProblem,
    proj: &ProjectedOperator,
    setup: &InteriorSetup,
    opts: &SolveOptions,
) -> Result<CrqSolution> {
    let norm_a = problem.norm_a();
    let a = problem.a();
    let an0 = a.apply_vec(&setup.n0);
    let h0 = setup.n0.dot(&an0);
    // The Krylov space cannot outgrow N(Cᵀ).
    let dim = problem.n() - problem.m();
    let cap = opts.maxit.min(dim).max(1);

    let mut st = LanczosState::init(proj, &setup.b0, norm_a)?;
    let mut history = Vec::new();
    let (mu, v, objective, converged) = loop {
        let outcome = st.step();
        let k = st.k();
        let exhausted = outcome == StepOutcome::BrokeDown || k >= dim;
        let at_end = exhausted || k >= cap;
        let at_check = k >= opts.minit && (k - opts.minit).is_multiple_of(opts.checkstep);
        if !(at_check || at_end) {
            continue;
        }
        let red = reduced_solve(&st, opts, norm_a, setup.gamma)?;
        let mut u = st.combine(&red.x);
        // Rounding in μ leaves ‖x‖ slightly off γ; rescale so v stays on the
        // unit sphere and objectives are comparable across checks.
        let nu = u.norm();
        if nu > 0.0 {
            u *= setup.gamma / nu;
        }
        let au = a.apply_vec(&u);
        let v = &setup.n0 + &u;
        // h(n0 + u) = h(n0) + 2 uᵀA n0 + uᵀAu.
        let objective = h0 + 2.0 * u.dot(&an0) + u.dot(&au);
        let nres = match red.qep_nres {
            Some(r) => r,
            None => {
                // True Lagrangian residual ‖PAu − μu + b0‖.
                let mut r = proj.apply_p(&au);
                r.axpy(-red.mu, &u, 1.0);
                r += &setup.b0;
                r.norm() / ((norm_a + red.mu.abs()) * u.norm() + setup.norm_b0)
            }
        };
        let converged = red.delta <= opts.tol || exhausted;
        debug!(
            "k = {k}: mu = {:.16e}, delta = {:.3e}, nres = {:.3e}, h = {:.16e}",
            red.mu, red.delta, nres, objective
        );
        history.push(CheckRecord {
            k,
            mu: red.mu,
            delta: red.delta,
            nres,
            objective,
            mu_other: red.mu_other,
            v: opts.record_iterates.then(|| v.clone()),
        });
        if converged || at_end {
            break (red.mu, v, objective, converged);
        }
    };
    let k = st.k();
    info!("Lanczos stopped at k = {k} (converged: {converged})");
    let mut sol = CrqSolution {
        v,
        mu,
        k,
        history,
        case: SolutionCase::Easy,
        objective,
        converged,
        lambda_min_h: None,
        basis: opts.return_basis.then(|| DMatrix::from_columns(st.basis())),
    };
    if opts.detect_hard {
        match detect_hard_case(problem, proj, setup, &st, mu, opts.rng_seed)? {
            HardCheck::Easy { lambda_min } => sol.lambda_min_h = Some(lambda_min),
            HardCheck::Hard { lambda_min, v } => {
                sol.lambda_min_h = Some(lambda_min);
                sol.objective = problem.objective(&v);
                sol.v = v;
                sol.mu = lambda_min;
                sol.case = SolutionCase::HardDetected;
            }
        }
    }
    if sol.converged {
        Ok(sol)
    } else {
        Err(Error::NotConverged(Box::new(sol)))
    }
}

/// Outcome of the hard-case test.
#[derive(Debug, Clone)]
pub enum HardCheck {
    Easy { lambda_min: f64 },
    Hard { lambda_min: f64, v: DVector<f64> },
}

/// Compares the reduced multiplier with `λ_min(H)` from an independent
/// eigensolve started at `P c` with random `c`. In the hard case the Lanczos
/// iterate is replaced by the least-squares solution of the shifted,
/// bordered tridiagonal system, padded with the eigenvector to norm `γ`.
pub fn detect_hard_case(
    problem: &CrqProblem,
    proj: &ProjectedOperator,
    setup: &InteriorSetup,
    st: &LanczosState<'_>,
    reduced_mu: f64,
    seed: u64,
) -> Result<HardCheck> {
    let norm_a = problem.norm_a();
    let dim = problem.n() - problem.m();
    let c = crate::linalg::seeded_normal_vector(problem.n(), seed ^ 0x6861_7264);
    // Stop early once λ_min(H) is certainly above μ + ε; the ε used here is
    // the one below evaluated at μ, which is no larger for λ_min > μ ≥ 0 and
    // close enough otherwise.
    let floor = reduced_mu + 1e-8 * (1.0 + reduced_mu.abs());
    let pair = smallest_eigenpair_above(proj, &c, norm_a, 1e-12, dim, floor)
        .or_else(|_| smallest_eigenpair_above(proj, &c, norm_a, 1e-9, dim, floor))
        .map_err(|e| Error::EigFailure(format!("hard-case eigensolve: {e}")))?;
    let lambda_min = pair.value;
    let eps_hard = 1e-8 * (1.0 + lambda_min.abs());
    if reduced_mu < lambda_min - eps_hard || pair.value - pair.residual > floor {
        return Ok(HardCheck::Easy { lambda_min });
    }
    info!("hard case detected: mu = {reduced_mu:.12e} >= lambda_min(H) = {lambda_min:.12e}");

    // Least squares [T_k − λI; β_{k+1}e_kᵀ] ỹ ≈ −‖b0‖e₁.
    let k = st.k();
    let mut ls = DMatrix::zeros(k + 1, k);
    ls.view_mut((0, 0), (k, k)).copy_from(&st.tridiagonal());
    for i in 0..k {
        ls[(i, i)] -= lambda_min;
    }
    ls[(k, k - 1)] = st.beta_next();
    let mut rhs = DVector::zeros(k + 1);
    rhs[0] = -st.start_norm();
    let y = ls
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::EigFailure(format!("hard-case least squares: {e}")))?;
    let mut xt = st.combine(y.as_slice());

    // Make the iterate orthogonal to the eigenvector before padding along it.
    // In exact arithmetic it already is; after many steps rounding can bring
    // the eigenvector into the Krylov space, so deflating the eigenvector
    // against Q_k instead would leave only noise.
    let z = &pair.vector;
    let h = z.dot(&xt);
    xt.axpy(-h, z, 1.0);
    let pad = (setup.gamma * setup.gamma - xt.norm_squared()).max(0.0).sqrt();
    let mut v = &setup.n0 + &xt;
    v.axpy(pad / z.norm(), z, 1.0);
    Ok(HardCheck::Hard { lambda_min, v })
}

/// Residuals of the Lagrangian system at a breakdown step.
#[derive(Debug, Clone)]
pub struct FiniteStepReport {
    pub breakdown_k: Option<usize>,
    /// `‖(PAP − μI)u + b0‖`.
    pub lagrange_residual: f64,
    /// `|‖u‖ − γ|`.
    pub norm_gap: f64,
    /// `‖Cᵀu‖`.
    pub null_space_residual: f64,
    /// `‖v − v_direct‖` against the dense reference solver.
    pub direct_gap: f64,
    pub mu: f64,
    pub lambda_star: f64,
}

/// Runs the solver to breakdown on a small problem and compares with the
/// dense reference. Intended for easy-case problems whose Krylov space
/// becomes invariant before `n − m` steps.
pub fn finite_step_check(problem: &CrqProblem, opts: &SolveOptions) -> Result<FiniteStepReport> {
    let opts = SolveOptions {
        tol: 0.0,
        maxit: problem.n(),
        detect_hard: false,
        ..opts.clone()
    };
    let proj = ProjectedOperator::new(problem)?;
    let setup = match classify(problem, &proj)? {
        Feasibility::Interior(s) => s,
        _ => return Err(Error::InvalidArgument("finite-step check needs an interior problem".into())),
    };
    if setup.norm_b0 <= b0_zero_tol(problem, &setup) {
        return Err(Error::InvalidArgument("finite-step check needs b0 != 0".into()));
    }
    let sol = main_loop(problem, &proj, &setup, &opts)?;
    let breakdown_k = (sol.k < problem.n() - problem.m()).then_some(sol.k);
    let u = &sol.v - &setup.n0;
    let mut r = proj.apply_pa(&u);
    r.axpy(-sol.mu, &u, 1.0);
    r += &setup.b0;
    let direct = crate::reference::direct_solve(problem)?;
    Ok(FiniteStepReport {
        breakdown_k,
        lagrange_residual: r.norm(),
        norm_gap: (u.norm() - setup.gamma).abs(),
        null_space_residual: problem.c().tr_mul(&u).norm(),
        direct_gap: (&sol.v - &direct.v).norm(),
        mu: sol.mu,
        lambda_star: direct.mu,
    })
}

/// Writes the check history as CSV with columns `k, mu, delta, nres, objective`.
pub fn write_history_csv<W: Write>(history: &[CheckRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "mu", "delta", "nres", "objective"])?;
    for r in history {
        w.write_record([
            r.k.to_string(),
            format!("{:.17e}", r.mu),
            format!("{:.6e}", r.delta),
            format!("{:.6e}", r.nres),
            format!("{:.17e}", r.objective),
        ])?;
    }
    w.flush()?;
    Ok(())
}
