//! Problem data, the projector onto the constraint null space, and the
//! feasibility classification that reduces the problem to a Lagrangian
//! system on `N(Cᵀ)`.

use std::sync::{Arc, OnceLock};

use nalgebra::{linalg::ColPivQR, DMatrix, DVector};

use crate::driver::{CrqSolution, SolutionCase};
use crate::error::{Error, Result};
use crate::lanczos::smallest_eigenpair;
use crate::linalg::{estimate_norm, seeded_normal_vector};
use crate::operator::SymOperator;

/// Lanczos steps used for the cached `‖A‖` estimate.
const NORM_STEPS: usize = 20;

/// `min vᵀAv` subject to `‖v‖ = 1` and `Cᵀv = b`.
#[derive(Clone)]
pub struct CrqProblem {
    a: Arc<dyn SymOperator>,
    c: DMatrix<f64>,
    b: DVector<f64>,
    norm_a: Arc<OnceLock<f64>>,
}

impl std::fmt::Debug for CrqProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CrqProblem")
            .field("n", &self.n())
            .field("m", &self.m())
            .finish()
    }
}

impl CrqProblem {
    /// Validates shapes and spot-checks symmetry of `a` on two random probes.
    pub fn new(a: Arc<dyn SymOperator>, c: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = a.dim();
        if c.nrows() != n {
            return Err(Error::Dimension(format!("C has {} rows, A is {n}×{n}", c.nrows())));
        }
        if c.ncols() != b.len() {
            return Err(Error::Dimension(format!(
                "C has {} columns but b has length {}",
                c.ncols(),
                b.len()
            )));
        }
        if c.ncols() >= n {
            return Err(Error::Dimension(format!("need m < n, got m = {}, n = {n}", c.ncols())));
        }
        let problem = Self {
            a,
            c,
            b,
            norm_a: Arc::new(OnceLock::new()),
        };
        problem.check_symmetry()?;
        Ok(problem)
    }

    fn check_symmetry(&self) -> Result<()> {
        let n = self.n();
        let x = seeded_normal_vector(n, 0x73796d31);
        let y = seeded_normal_vector(n, 0x73796d32);
        let ax = self.a.apply_vec(&x);
        let ay = self.a.apply_vec(&y);
        let gap = (y.dot(&ax) - x.dot(&ay)).abs();
        let scale = x.norm() * y.norm() * self.norm_a().max(f64::MIN_POSITIVE);
        let rel = gap / scale;
        if rel > 1e-10 {
            return Err(Error::NotSymmetric(rel));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.dim()
    }

    pub fn m(&self) -> usize {
        self.c.ncols()
    }

    pub fn a(&self) -> &Arc<dyn SymOperator> {
        &self.a
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// Cached estimate of `‖A‖₂`.
    pub fn norm_a(&self) -> f64 {
        *self
            .norm_a
            .get_or_init(|| estimate_norm(self.a.as_ref(), NORM_STEPS))
    }

    pub fn objective(&self, v: &DVector<f64>) -> f64 {
        v.dot(&self.a.apply_vec(v))
    }

    /// `‖Cᵀv − b‖`.
    pub fn constraint_residual(&self, v: &DVector<f64>) -> f64 {
        (self.c.tr_mul(v) - &self.b).norm()
    }
}

/// Applies `P = I − CC†` and `PAP` through a thin orthogonal factorization of `C`.
#[derive(Clone)]
pub struct ProjectedOperator {
    a: Arc<dyn SymOperator>,
    q1: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl ProjectedOperator {
    /// Factorizes `C`. Fails with [`Error::RankDeficient`] when a pivoted
    /// factorization finds numerical rank below `m`.
    pub fn new(problem: &CrqProblem) -> Result<Self> {
        let c = problem.c();
        let (n, m) = c.shape();
        let rank = numerical_rank(c);
        if rank < m {
            return Err(Error::RankDeficient { rank, m });
        }
        let qr = c.clone().qr();
        let q1 = qr.q();
        let r = qr.r();
        debug_assert_eq!(q1.shape(), (n, m));
        Ok(Self {
            a: problem.a().clone(),
            q1,
            r,
        })
    }

    pub fn dim(&self) -> usize {
        self.q1.nrows()
    }

    /// Orthonormal basis of `R(C)`.
    pub fn range_basis(&self) -> &DMatrix<f64> {
        &self.q1
    }

    /// Minimum-norm solution of `Cᵀv = b`.
    pub fn min_norm_solution(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let z = self
            .r
            .transpose()
            .solve_lower_triangular(b)
            .ok_or(Error::RankDeficient { rank: 0, m: b.len() })?;
        Ok(&self.q1 * z)
    }

    /// `c − C(C†c)`, the component of `c` orthogonal to `R(C)`.
    pub fn apply_p(&self, c: &DVector<f64>) -> DVector<f64> {
        let coeff = self.q1.tr_mul(c);
        let mut out = c.clone();
        out.gemv(-1.0, &self.q1, &coeff, 1.0);
        out
    }

    /// `P A x`. Equals `PAPx` whenever `x ∈ N(Cᵀ)`, which holds for every
    /// Lanczos vector, so the inner projection is skipped.
    pub fn apply_pa(&self, x: &DVector<f64>) -> DVector<f64> {
        self.apply_p(&self.a.apply_vec(x))
    }

    /// `PAPx` for arbitrary `x`.
    pub fn apply_pap(&self, x: &DVector<f64>) -> DVector<f64> {
        self.apply_pa(&self.apply_p(x))
    }

    pub fn operator(&self) -> &Arc<dyn SymOperator> {
        &self.a
    }
}

/// Numerical rank of `c` from column-pivoted QR.
pub fn numerical_rank(c: &DMatrix<f64>) -> usize {
    let (n, m) = c.shape();
    if m == 0 {
        return 0;
    }
    let r = ColPivQR::new(c.clone()).r();
    let r00 = r[(0, 0)].abs();
    if r00 == 0.0 {
        return 0;
    }
    let tol = (n.max(m) as f64) * f64::EPSILON * r00;
    (0..m.min(n)).filter(|&i| r[(i, i)].abs() > tol).count()
}

/// Setup quantities for the interior case.
#[derive(Debug, Clone)]
pub struct InteriorSetup {
    /// Minimum-norm solution of `Cᵀv = b`.
    pub n0: DVector<f64>,
    /// `sqrt(1 − ‖n0‖²)`, the radius left for the null-space component.
    pub gamma: f64,
    /// `P A n0`, the linear term of the reduced problem.
    pub b0: DVector<f64>,
    pub norm_b0: f64,
}

/// Outcome of the feasibility test on `‖n0‖`.
#[derive(Debug, Clone)]
pub enum Feasibility {
    /// No unit vector satisfies the constraints.
    Infeasible { n0: DVector<f64>, norm_n0: f64 },
    /// `n0` is the only feasible point.
    UniquePoint { n0: DVector<f64> },
    Interior(InteriorSetup),
}

/// Boundary tolerance for `‖n0‖ = 1`.
pub fn feasibility_tol(problem: &CrqProblem) -> f64 {
    1e-12 * (1.0 + problem.b().norm())
}

pub fn compute_n0(problem: &CrqProblem, proj: &ProjectedOperator) -> Result<DVector<f64>> {
    proj.min_norm_solution(problem.b())
}

pub fn classify(problem: &CrqProblem, proj: &ProjectedOperator) -> Result<Feasibility> {
    let n0 = compute_n0(problem, proj)?;
    let norm_n0 = n0.norm();
    let eps = feasibility_tol(problem);
    if norm_n0 > 1.0 + eps {
        return Ok(Feasibility::Infeasible { n0, norm_n0 });
    }
    if (norm_n0 - 1.0).abs() <= eps {
        return Ok(Feasibility::UniquePoint { n0 });
    }
    let gamma = (1.0 - norm_n0 * norm_n0).sqrt();
    let b0 = proj.apply_pa(&n0);
    let norm_b0 = b0.norm();
    Ok(Feasibility::Interior(InteriorSetup {
        n0,
        gamma,
        b0,
        norm_b0,
    }))
}

/// Threshold below which `b0` is treated as zero.
pub fn b0_zero_tol(problem: &CrqProblem, setup: &InteriorSetup) -> f64 {
    1e-12 * problem.norm_a() * setup.n0.norm()
}

/// Resolves the interior case with `b0 = 0`, where the problem reduces to
/// the smallest eigenpair of `PAP` on `N(Cᵀ)`: `v = n0 + γ z₁`.
///
/// The eigensolver is started from `P c` with random `c`, so its Ritz
/// vectors already lie in `N(Cᵀ)` and the zero eigenvalues contributed by
/// `R(C)` never appear. Returns `None` when `b0` is not negligible.
pub fn resolve_b0_zero(
    problem: &CrqProblem,
    proj: &ProjectedOperator,
    setup: &InteriorSetup,
    seed: u64,
) -> Result<Option<CrqSolution>> {
    if setup.norm_b0 > b0_zero_tol(problem, setup) {
        return Ok(None);
    }
    let dim = problem.n() - problem.m();
    let c = seeded_normal_vector(problem.n(), seed ^ 0x6230_7a65);
    let pair = smallest_eigenpair(proj, &c, problem.norm_a(), 1e-12, dim)
        .map_err(|e| Error::EigFailure(format!("b0 = 0 eigensolve: {e}")))?;
    let mut v = setup.n0.clone();
    v.axpy(setup.gamma / pair.vector.norm(), &pair.vector, 1.0);
    let objective = problem.objective(&v);
    Ok(Some(CrqSolution {
        v,
        mu: pair.value,
        k: pair.steps,
        history: Vec::new(),
        case: SolutionCase::B0Zero,
        objective,
        converged: true,
        lambda_min_h: Some(pair.value),
        basis: None,
    }))
}
