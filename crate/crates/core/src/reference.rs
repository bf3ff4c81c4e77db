//! Dense direct solver and validators.
//!
//! Everything here works with explicit matrices: an orthogonal basis
//! `S = [S1 S2]` with `R(S1) = N(Cᵀ)`, the projected matrix `H = S1ᵀAS1`,
//! `g0 = S1ᵀb0`, and a full eigendecomposition of `H`. The root of the
//! secular equation is found by plain bisection so that this module can act
//! as an oracle for the Lanczos solver.

use nalgebra::{DMatrix, DVector};

use crate::driver::{unique_point, CrqSolution, SolutionCase};
use crate::error::{Error, Result};
use crate::linalg::sym_eigen_sorted;
use crate::problem::{b0_zero_tol, classify, CrqProblem, Feasibility, InteriorSetup, ProjectedOperator};
use crate::qepmin::{leftmost_real_eigenpair, linearize};

/// Default size limit for dense work.
pub const DENSE_CAP: usize = 5000;

/// Explicit reduction of the problem to `N(Cᵀ)` coordinates.
#[derive(Debug, Clone)]
pub struct DenseReduction {
    /// Orthonormal basis of `N(Cᵀ)`; empty when built from parts.
    pub s1: DMatrix<f64>,
    /// Orthonormal basis of `R(C)`; empty when built from parts.
    pub s2: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub g0: DVector<f64>,
    /// Eigenvalues of `H`, ascending.
    pub theta: DVector<f64>,
    /// Orthonormal eigenvectors of `H`, column `i` for `theta[i]`.
    pub y: DMatrix<f64>,
}

impl DenseReduction {
    /// Builds the reduction directly from `H` and `g0`. Diagonal `H` skips the eigensolve.
    pub fn from_parts(h: DMatrix<f64>, g0: DVector<f64>) -> Self {
        let n = h.nrows();
        let is_diag = (0..n).all(|j| (0..n).all(|i| i == j || h[(i, j)] == 0.0));
        let (theta, y) = if is_diag {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| h[(a, a)].total_cmp(&h[(b, b)]));
            let theta = DVector::from_iterator(n, order.iter().map(|&i| h[(i, i)]));
            let mut y = DMatrix::zeros(n, n);
            for (col, &i) in order.iter().enumerate() {
                y[(i, col)] = 1.0;
            }
            (theta, y)
        } else {
            sym_eigen_sorted(h.clone())
        };
        Self {
            s1: DMatrix::zeros(0, 0),
            s2: DMatrix::zeros(0, 0),
            h,
            g0,
            theta,
            y,
        }
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    /// `g0` in the eigenbasis of `H`.
    pub fn g0_coords(&self) -> DVector<f64> {
        self.y.tr_mul(&self.g0)
    }

    /// Indices of eigenvalues equal to `θ₁` up to a relative tolerance.
    pub fn smallest_eigenspace(&self) -> Vec<usize> {
        let t1 = self.theta[0];
        let scale = 1.0 + self.theta.amax();
        (0..self.dim())
            .filter(|&i| (self.theta[i] - t1).abs() <= 1e-12 * scale)
            .collect()
    }

    /// `(H − λI)† r` computed in the eigenbasis, dropping eigenvalues within
    /// `1e-12` (relative) of `λ`.
    pub fn pinv_apply(&self, lambda: f64, r: &DVector<f64>) -> DVector<f64> {
        let c = self.y.tr_mul(r);
        let scale = self.theta.iter().map(|t| (t - lambda).abs()).fold(1.0f64, f64::max);
        let mut out = DVector::zeros(self.dim());
        for i in 0..self.dim() {
            let d = self.theta[i] - lambda;
            if d.abs() > 1e-12 * scale {
                out.axpy(c[i] / d, &self.y.column(i), 1.0);
            }
        }
        out
    }
}

/// Reduces `problem` explicitly. `b0` is taken from `setup`.
pub fn build_reduction(problem: &CrqProblem, setup: &InteriorSetup, cap: usize) -> Result<DenseReduction> {
    let (n, m) = (problem.n(), problem.m());
    if n > cap {
        return Err(Error::TooLarge { n, cap });
    }
    let (s1, s2) = orthogonal_split(problem.c());
    let a_s1 = DMatrix::from_columns(
        &s1.column_iter()
            .map(|col| problem.a().apply_vec(&col.into_owned()))
            .collect::<Vec<_>>(),
    );
    let mut h = s1.tr_mul(&a_s1);
    // Symmetrize away rounding.
    h = (&h + h.transpose()) * 0.5;
    let g0 = s1.tr_mul(&setup.b0);
    debug_assert_eq!(s2.ncols(), m);
    let mut red = DenseReduction::from_parts(h, g0);
    red.s1 = s1;
    red.s2 = s2;
    Ok(red)
}

/// `(S1, S2)` from a full orthogonal factorization of `C`.
pub fn orthogonal_split(c: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = c.shape();
    let qr = c.clone().qr();
    let mut qt = DMatrix::<f64>::identity(n, n);
    qr.q_tr_mul(&mut qt);
    let q = qt.transpose();
    (q.columns(m, n - m).into_owned(), q.columns(0, m).into_owned())
}

/// Which branch of the case analysis produced the minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlgCase {
    /// `λ* < θ₁`, unique minimizer.
    Easy,
    /// `g0 ⊥ U` and `‖(H − θ₁I)†g0‖ = γ`: `λ* = θ₁`, no padding needed.
    HardBoundaryExact,
    /// `g0 ⊥ U` and `‖(H − θ₁I)†g0‖ < γ`: padded with an eigenvector of `θ₁`.
    HardBoundaryPadded,
}

#[derive(Debug, Clone)]
pub struct PlgSolution {
    pub lambda: f64,
    /// Minimizer in `N(Cᵀ)` coordinates, `‖y‖ = γ`.
    pub y: DVector<f64>,
    pub case: PlgCase,
}

/// Relative size below which `g0` counts as orthogonal to the eigenspace of `θ₁`.
const ORTHO_EPS: f64 = 1e-10;

/// Solves `min λ` s.t. `(H − λI)y = −g0`, `‖y‖ = γ` by the full case analysis.
pub fn solve_plgopt_dense(red: &DenseReduction, gamma: f64) -> PlgSolution {
    let c = red.g0_coords();
    let u = red.smallest_eigenspace();
    let t1 = red.theta[0];
    let g_norm = red.g0.norm();
    let cu = u.iter().map(|&i| c[i] * c[i]).sum::<f64>().sqrt();

    let easy = |terms: &[usize]| {
        let lambda = bisect_secular(&red.theta, &c, terms, gamma);
        let mut y = DVector::zeros(red.dim());
        for &i in terms {
            y.axpy(-c[i] / (red.theta[i] - lambda), &red.y.column(i), 1.0);
        }
        PlgSolution {
            lambda,
            y,
            case: PlgCase::Easy,
        }
    };

    let all: Vec<usize> = (0..red.dim()).collect();
    if cu > ORTHO_EPS * g_norm {
        return easy(&all);
    }
    let rest: Vec<usize> = all.iter().copied().filter(|i| !u.contains(i)).collect();
    let mut w = DVector::zeros(red.dim());
    for &i in &rest {
        w.axpy(-c[i] / (red.theta[i] - t1), &red.y.column(i), 1.0);
    }
    let nw = w.norm();
    if nw > gamma * (1.0 + 1e-12) {
        return easy(&rest);
    }
    if nw >= gamma * (1.0 - 1e-12) {
        return PlgSolution {
            lambda: t1,
            y: w,
            case: PlgCase::HardBoundaryExact,
        };
    }
    let pad = (gamma * gamma - nw * nw).sqrt();
    let mut y = w;
    y.axpy(pad, &red.y.column(u[0]), 1.0);
    PlgSolution {
        lambda: t1,
        y,
        case: PlgCase::HardBoundaryPadded,
    }
}

/// Bisection for the root of `Σ_{i∈terms} cᵢ²/(λ − θᵢ)² = γ²` left of `θ₁`.
fn bisect_secular(theta: &DVector<f64>, c: &DVector<f64>, terms: &[usize], gamma: f64) -> f64 {
    let t1 = theta[0];
    let cn = terms.iter().map(|&i| c[i] * c[i]).sum::<f64>().sqrt();
    let chi = |l: f64| terms.iter().map(|&i| (c[i] / (l - theta[i])).powi(2)).sum::<f64>() - gamma * gamma;
    let mut lo = t1 - cn / gamma - 1e-300;
    // Guard against rounding in the lower bound.
    while chi(lo) > 0.0 {
        lo = t1 - 2.0 * (t1 - lo);
    }
    let mut hi = t1;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if chi(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `g0 ⊥ U` and `‖(H − θ₁I)†g0‖ ≤ γ`.
pub fn hard_case_predicate(red: &DenseReduction, gamma: f64) -> bool {
    let c = red.g0_coords();
    let cu = red
        .smallest_eigenspace()
        .iter()
        .map(|&i| c[i] * c[i])
        .sum::<f64>()
        .sqrt();
    if cu > ORTHO_EPS * red.g0.norm() {
        return false;
    }
    red.pinv_apply(red.theta[0], &red.g0).norm() <= gamma * (1.0 + 1e-12)
}

/// Minimizer of the full problem from the dense case analysis.
pub fn direct_solve(problem: &CrqProblem) -> Result<CrqSolution> {
    direct_solve_capped(problem, DENSE_CAP)
}

pub fn direct_solve_capped(problem: &CrqProblem, cap: usize) -> Result<CrqSolution> {
    if problem.n() > cap {
        return Err(Error::TooLarge { n: problem.n(), cap });
    }
    let proj = ProjectedOperator::new(problem)?;
    let setup = match classify(problem, &proj)? {
        Feasibility::Infeasible { norm_n0, .. } => return Err(Error::Infeasible { norm_n0 }),
        Feasibility::UniquePoint { n0 } => return Ok(unique_point(problem, n0)),
        Feasibility::Interior(s) => s,
    };
    let red = build_reduction(problem, &setup, cap)?;
    let sol = solve_plgopt_dense(&red, setup.gamma);
    let v = &setup.n0 + &red.s1 * &sol.y;
    let objective = problem.objective(&v);
    let case = if setup.norm_b0 <= b0_zero_tol(problem, &setup) {
        SolutionCase::B0Zero
    } else if sol.case == PlgCase::Easy {
        SolutionCase::Easy
    } else {
        SolutionCase::HardDetected
    };
    Ok(CrqSolution {
        v,
        mu: sol.lambda,
        k: 0,
        history: Vec::new(),
        case,
        objective,
        converged: true,
        lambda_min_h: Some(red.theta[0]),
        basis: None,
    })
}

/// Leftmost real eigenpair of `(H − λI)²w = γ⁻² g0 g0ᵀ w`.
#[derive(Debug, Clone)]
pub struct DenseQep {
    pub lambda: f64,
    pub w: DVector<f64>,
    pub spectrum: Vec<nalgebra::Complex<f64>>,
}

pub fn dense_qep(red: &DenseReduction, gamma: f64) -> Result<DenseQep> {
    let k = red.dim();
    let kmat = &red.g0 * red.g0.transpose() * (-1.0 / (gamma * gamma));
    let l = linearize(&red.h, &kmat);
    let (lambda, s, spectrum) = leftmost_real_eigenpair(&l, red.h.norm())?;
    let w = s.rows(k, k).into_owned();
    Ok(DenseQep { lambda, w, spectrum })
}

/// Residuals of the maps between the Lagrangian and QEP formulations.
#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub lambda_lg: f64,
    pub lambda_qep: f64,
    /// `|λ_LG − λ_QEP|`.
    pub value_gap: f64,
    /// Reduced QEP residual of the image of the Lagrangian minimizer.
    pub lg_to_qep: f64,
    /// Reduced Lagrangian residual (system and norm) of the image of the QEP minimizer.
    pub qep_to_lg: f64,
    /// The same two maps in full coordinates with `PAP`.
    pub full_lg_to_qep: f64,
    pub full_qep_to_lg: f64,
    /// The QEP eigenvector was orthogonal to `g0`, so the padded map was used.
    pub orthogonal_branch: bool,
}

impl EquivalenceReport {
    pub fn max_residual(&self) -> f64 {
        [self.lg_to_qep, self.qep_to_lg, self.full_lg_to_qep, self.full_qep_to_lg]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Solves both reduced formulations independently and checks the maps between them.
/// The full-coordinate checks need `red.s1`, i.e. a reduction built from a problem.
pub fn equivalence_maps(
    red: &DenseReduction,
    gamma: f64,
    problem: Option<&CrqProblem>,
) -> Result<EquivalenceReport> {
    let k = red.dim();
    let plg = solve_plgopt_dense(red, gamma);
    let qep = dense_qep(red, gamma)?;
    let lambda = plg.lambda;
    let shifted = |x: &DVector<f64>, l: f64| &red.h * x - x * l;
    let qep_res = |w: &DVector<f64>, l: f64| {
        let lhs = shifted(&shifted(w, l), l);
        let rhs = &red.g0 * (red.g0.dot(w) / (gamma * gamma));
        (lhs - rhs).norm() / w.norm().max(f64::MIN_POSITIVE)
    };
    let lg_res = |y: &DVector<f64>, l: f64| (shifted(y, l) + &red.g0).norm() + (y.norm() - gamma).abs();

    // Lagrangian → QEP.
    let w_fwd = if lambda < red.theta[0] {
        let mut d = red.h.clone();
        for i in 0..k {
            d[(i, i)] -= lambda;
        }
        d.lu().solve(&plg.y).ok_or(Error::SingularH)?
    } else {
        red.y.column(0).into_owned()
    };
    let lg_to_qep = qep_res(&w_fwd, lambda);

    // QEP → Lagrangian.
    let w = &qep.w;
    let gw = red.g0.dot(w);
    let orthogonal_branch = gw.abs() <= 1e-6 * red.g0.norm() * w.norm();
    let y_back = if orthogonal_branch {
        let x = -red.pinv_apply(qep.lambda, &red.g0);
        let pad = (gamma * gamma - x.norm_squared()).max(0.0).sqrt();
        x + w * (pad / w.norm())
    } else {
        shifted(w, qep.lambda) * (-gamma * gamma / gw)
    };
    let qep_to_lg = lg_res(&y_back, qep.lambda);

    let (full_lg_to_qep, full_qep_to_lg) = match problem {
        Some(p) if red.s1.ncols() == k => full_maps(p, red, gamma, &plg, &qep, orthogonal_branch)?,
        _ => (0.0, 0.0),
    };
    Ok(EquivalenceReport {
        lambda_lg: lambda,
        lambda_qep: qep.lambda,
        value_gap: (lambda - qep.lambda).abs(),
        lg_to_qep,
        qep_to_lg,
        full_lg_to_qep,
        full_qep_to_lg,
        orthogonal_branch,
    })
}

/// Maps in full coordinates with an explicit `PAP` and its pseudoinverse.
fn full_maps(
    problem: &CrqProblem,
    red: &DenseReduction,
    gamma: f64,
    plg: &PlgSolution,
    qep: &DenseQep,
    orthogonal_branch: bool,
) -> Result<(f64, f64)> {
    let n = problem.n();
    let p = &red.s1 * red.s1.transpose();
    let pap = &p * problem.a().to_dense() * &p;
    let pap = (&pap + pap.transpose()) * 0.5;
    let b0 = &red.s1 * &red.g0;
    let (vals, vecs) = sym_eigen_sorted(pap.clone());
    let pinv = |l: f64, r: &DVector<f64>| {
        let c = vecs.tr_mul(r);
        let scale = vals.iter().map(|t| (t - l).abs()).fold(1.0f64, f64::max);
        let mut out = DVector::zeros(n);
        for i in 0..n {
            let d = vals[i] - l;
            if d.abs() > 1e-12 * scale {
                out.axpy(c[i] / d, &vecs.column(i), 1.0);
            }
        }
        out
    };
    let shifted = |x: &DVector<f64>, l: f64| &pap * x - x * l;

    let lambda = plg.lambda;
    let u = &red.s1 * &plg.y;
    let z = if plg.case == PlgCase::Easy {
        pinv(lambda, &u)
    } else {
        &red.s1 * red.y.column(0)
    };
    let lhs = shifted(&shifted(&z, lambda), lambda);
    let rhs = &b0 * (b0.dot(&z) / (gamma * gamma));
    let fwd = (lhs - rhs).norm() / z.norm().max(f64::MIN_POSITIVE);

    let zq = &red.s1 * &qep.w;
    let bz = b0.dot(&zq);
    let u_back = if orthogonal_branch {
        let x = -pinv(qep.lambda, &b0);
        let pad = (gamma * gamma - x.norm_squared()).max(0.0).sqrt();
        x + &zq * (pad / zq.norm())
    } else {
        shifted(&zq, qep.lambda) * (-gamma * gamma / bz)
    };
    let back = (shifted(&u_back, qep.lambda) + &b0).norm()
        + (u_back.norm() - gamma).abs()
        + problem.c().tr_mul(&u_back).norm();
    Ok((fwd, back))
}

/// Result of maximizing the dual eigenvalue function.
#[derive(Debug, Clone)]
pub struct DualReport {
    pub t_star: f64,
    /// `max_t λ_min(L + tE, M)`.
    pub dual_value: f64,
    /// Objective of the direct solution.
    pub primal_value: f64,
    pub gap: f64,
    /// `λ_min(M)`.
    pub m_min_eig: f64,
}

/// Evaluates `f(t) = λ_min(L + tE, M)` for the homogenized problem and
/// maximizes it; the maximum equals the optimal objective.
pub fn dual_check(problem: &CrqProblem) -> Result<DualReport> {
    let n = problem.n();
    let m = problem.m();
    if n > DENSE_CAP {
        return Err(Error::TooLarge { n, cap: DENSE_CAP });
    }
    let proj = ProjectedOperator::new(problem)?;
    let n0 = proj.min_norm_solution(problem.b())?;
    let (s1, _) = orthogonal_split(problem.c());
    let d = n - m + 1;
    let sqrt_n = (n as f64).sqrt();
    // N = [[S1, √n n0], [0, 1]].
    let mut big_n = DMatrix::zeros(n + 1, d);
    big_n.view_mut((0, 0), (n, n - m)).copy_from(&s1);
    for i in 0..n {
        big_n[(i, d - 1)] = sqrt_n * n0[i];
    }
    big_n[(n, d - 1)] = 1.0;

    let a = problem.a().to_dense();
    let top = big_n.rows(0, n).into_owned();
    let last = big_n.row(n).into_owned();
    let l = top.tr_mul(&(&a * &top));
    let l = (&l + l.transpose()) * 0.5;
    let gram = top.tr_mul(&top);
    let nf = n as f64 + 1.0;
    // E = Nᵀ diag(−I/(n+1), 1 − 1/(n+1)) N.
    let e = &gram * (-1.0 / nf) + last.transpose() * &last * (1.0 - 1.0 / nf);
    let mm = gram;
    let m_min_eig = sym_eigen_sorted(mm.clone()).0[0];
    let chol = mm
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("M in the dual eigenvalue problem"))?;
    if m_min_eig.is_nan() || m_min_eig <= 0.0 {
        return Err(Error::NotPositiveDefinite("M in the dual eigenvalue problem"));
    }
    let kinv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or(Error::NotPositiveDefinite("M in the dual eigenvalue problem"))?;
    let lt = &kinv * &l * kinv.transpose();
    let et = &kinv * &e * kinv.transpose();
    let f = |t: f64| {
        let s = &lt + &et * t;
        let s = (&s + s.transpose()) * 0.5;
        s.symmetric_eigenvalues().min()
    };
    let t_star = maximize_concave(&f)?;
    let dual_value = f(t_star);
    let primal = direct_solve(problem)?;
    Ok(DualReport {
        t_star,
        dual_value,
        primal_value: primal.objective,
        gap: (dual_value - primal.objective).abs(),
        m_min_eig,
    })
}

/// Maximizes `f` by expanding a bracket around 0 and golden-section search,
/// falling back to a dense grid when the bracket cannot be closed.
fn maximize_concave(f: &dyn Fn(f64) -> f64) -> Result<f64> {
    let f0 = f(0.0);
    let mut step = 1.0 + f0.abs();
    let mut bracket = None;
    for _ in 0..80 {
        let (fl, fr) = (f(-step), f(step));
        if fl < f0 && fr < f0 {
            bracket = Some((-step, step));
            break;
        }
        step *= 2.0;
        if !step.is_finite() {
            break;
        }
    }
    let (mut lo, mut hi) = match bracket {
        Some(b) => b,
        None => return grid_fallback(f),
    };
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-8 * (1.0 + mid.abs()) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        }
    }
    let best = [(lo, f(lo)), (x1, f1), (x2, f2), (hi, f(hi))]
        .into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    Ok(best.0)
}

fn grid_fallback(f: &dyn Fn(f64) -> f64) -> Result<f64> {
    let span = 1e6;
    let pts = 10_000;
    let best = (0..=pts)
        .map(|i| -span + 2.0 * span * i as f64 / pts as f64)
        .map(|t| (t, f(t)))
        .filter(|(_, v)| v.is_finite())
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(Error::BracketFailure)?;
    let h = 2.0 * span / pts as f64;
    if (best.0.abs() - span).abs() < h {
        return Err(Error::BracketFailure);
    }
    Ok(best.0)
}
