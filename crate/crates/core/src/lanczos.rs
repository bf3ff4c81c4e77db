//! Symmetric Lanczos process on `M = PAP`, with full reorthogonalization.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{tridiag_dense, tridiag_eigen, EigVectors};
use crate::problem::ProjectedOperator;

/// `n·k` above which reorthogonalization is spread across threads.
const PAR_WORK: usize = 1 << 20;
/// Rows per parallel chunk when subtracting projections.
const CHUNK: usize = 2048;

/// Result of one Lanczos step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Continued,
    /// `β_{k+1}` fell below the breakdown tolerance: the Krylov space is invariant.
    BrokeDown,
}

/// Lanczos basis and tridiagonal coefficients after `k` steps.
///
/// `beta[0]` holds the start norm `‖b0‖`; `beta[j]` for `j ≥ 1` is the
/// coupling between `q_j` and `q_{j+1}` (1-based), so after `k` steps
/// `beta.len() == k + 1` and `beta[k]` is the trailing `β_{k+1}`.
pub struct LanczosState<'a> {
    op: &'a ProjectedOperator,
    q: Vec<DVector<f64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    broke_down: bool,
    breakdown_tol: f64,
    second_passes: usize,
}

impl<'a> LanczosState<'a> {
    /// Starts from `b0 / ‖b0‖`. `norm_a` sets the breakdown tolerance
    /// `1e-14·√n·max(‖A‖, 1)`; the `√n` covers the rounding the projector
    /// adds to every product, which would otherwise hide exact breakdowns.
    pub fn init(op: &'a ProjectedOperator, b0: &DVector<f64>, norm_a: f64) -> Result<Self> {
        let nb = b0.norm();
        if nb == 0.0 || !nb.is_finite() {
            return Err(Error::ZeroStart);
        }
        Ok(Self {
            op,
            q: vec![b0 / nb],
            alpha: Vec::new(),
            beta: vec![nb],
            broke_down: false,
            breakdown_tol: 1e-14 * (b0.len() as f64).sqrt() * norm_a.max(1.0),
            second_passes: 0,
        })
    }

    /// One three-term recurrence step followed by reorthogonalization.
    pub fn step(&mut self) -> StepOutcome {
        assert!(!self.broke_down, "step after breakdown");
        let k = self.alpha.len();
        let qk = &self.q[k];
        let mut w = self.op.apply_pa(qk);
        if k > 0 {
            w.axpy(-self.beta[k], &self.q[k - 1], 1.0);
        }
        let a = qk.dot(&w);
        w.axpy(-a, qk, 1.0);

        let h = orthogonalize(&mut w, &self.q);
        // Rounding in the recurrence leaks into R(C), where PAP has the
        // eigenvalue 0; project it out before it can grow.
        w = self.op.apply_p(&w);
        let mut b = w.norm();
        if h > 1e-10 * b {
            self.second_passes += 1;
            orthogonalize(&mut w, &self.q);
            b = w.norm();
        }
        self.alpha.push(a);
        self.beta.push(b);
        if b <= self.breakdown_tol {
            self.broke_down = true;
            return StepOutcome::BrokeDown;
        }
        w /= b;
        self.q.push(w);
        StepOutcome::Continued
    }

    /// Number of completed steps.
    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn broke_down(&self) -> bool {
        self.broke_down
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Off-diagonal of `T_k` (length `k − 1`).
    pub fn offdiag(&self) -> &[f64] {
        let k = self.k();
        if k == 0 {
            &[]
        } else {
            &self.beta[1..k]
        }
    }

    /// `β_{k+1}`; zero before the first step.
    pub fn beta_next(&self) -> f64 {
        let k = self.k();
        if k == 0 {
            0.0
        } else {
            self.beta[k]
        }
    }

    /// `‖b0‖`.
    pub fn start_norm(&self) -> f64 {
        self.beta[0]
    }

    /// `q_1 … q_k`.
    pub fn basis(&self) -> &[DVector<f64>] {
        &self.q[..self.k().min(self.q.len())]
    }

    /// `q_{k+1}` when the process has not broken down.
    pub fn q_next(&self) -> Option<&DVector<f64>> {
        self.q.get(self.k())
    }

    /// `Q_k c`.
    pub fn combine(&self, coeffs: &[f64]) -> DVector<f64> {
        let basis = self.basis();
        assert_eq!(coeffs.len(), basis.len());
        let n = self.op.dim();
        let mut out = DVector::zeros(n);
        if n * basis.len() >= PAR_WORK {
            out.as_mut_slice()
                .par_chunks_mut(CHUNK)
                .enumerate()
                .for_each(|(c, chunk)| {
                    let lo = c * CHUNK;
                    for (q, &x) in basis.iter().zip(coeffs) {
                        let src = &q.as_slice()[lo..lo + chunk.len()];
                        for (o, s) in chunk.iter_mut().zip(src) {
                            *o += x * s;
                        }
                    }
                });
        } else {
            for (q, &x) in basis.iter().zip(coeffs) {
                out.axpy(x, q, 1.0);
            }
        }
        out
    }

    /// Dense `T_k`.
    pub fn tridiagonal(&self) -> DMatrix<f64> {
        tridiag_dense(&self.alpha, self.offdiag())
    }

    /// How many steps needed a second Gram–Schmidt pass.
    pub fn second_passes(&self) -> usize {
        self.second_passes
    }

    pub fn operator(&self) -> &ProjectedOperator {
        self.op
    }
}

/// One classical Gram–Schmidt sweep of `w` against `basis`. Returns the norm
/// of the removed coefficient vector.
fn orthogonalize(w: &mut DVector<f64>, basis: &[DVector<f64>]) -> f64 {
    let n = w.len();
    let h: Vec<f64> = if n * basis.len() >= PAR_WORK {
        basis.par_iter().map(|q| q.dot(w)).collect()
    } else {
        basis.iter().map(|q| q.dot(w)).collect()
    };
    if n * basis.len() >= PAR_WORK {
        w.as_mut_slice()
            .par_chunks_mut(CHUNK)
            .enumerate()
            .for_each(|(c, chunk)| {
                let lo = c * CHUNK;
                for (q, &hj) in basis.iter().zip(&h) {
                    let src = &q.as_slice()[lo..lo + chunk.len()];
                    for (o, s) in chunk.iter_mut().zip(src) {
                        *o -= hj * s;
                    }
                }
            });
    } else {
        for (q, &hj) in basis.iter().zip(&h) {
            w.axpy(-hj, q, 1.0);
        }
    }
    h.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Ritz approximation to the smallest eigenpair of `PAP` on `N(Cᵀ)`.
#[derive(Debug, Clone)]
pub struct RitzPair {
    pub value: f64,
    /// Unit vector in `N(Cᵀ)`.
    pub vector: DVector<f64>,
    /// `‖PAPz − θz‖`.
    pub residual: f64,
    pub steps: usize,
    /// All Ritz values at termination, ascending.
    pub ritz_values: Vec<f64>,
}

/// Lanczos eigensolver for the smallest eigenpair of `PAP` restricted to
/// `N(Cᵀ)`, started from `P c`. Stops when the residual estimate is at most
/// `tol·‖A‖`, on breakdown, or fails after `maxit` steps.
pub fn smallest_eigenpair(
    op: &ProjectedOperator,
    c: &DVector<f64>,
    norm_a: f64,
    tol: f64,
    maxit: usize,
) -> Result<RitzPair> {
    smallest_eigenpair_above(op, c, norm_a, tol, maxit, f64::INFINITY)
}

/// As [`smallest_eigenpair`], but also stops once the smallest Ritz value
/// minus its residual exceeds `floor` and the Ritz value moved by less than
/// 1% of its distance to `floor` since the previous check. With a generic
/// start the smallest eigenvalue is then above `floor`, though this is not a
/// certificate. The returned value is only an upper estimate of it.
pub fn smallest_eigenpair_above(
    op: &ProjectedOperator,
    c: &DVector<f64>,
    norm_a: f64,
    tol: f64,
    maxit: usize,
    floor: f64,
) -> Result<RitzPair> {
    let start = op.apply_p(c);
    let mut st = LanczosState::init(op, &start, norm_a)?;
    let target = tol * norm_a.max(f64::MIN_POSITIVE);
    let cap = maxit.min(op.dim());
    let mut previous = f64::INFINITY;
    loop {
        let outcome = st.step();
        let k = st.k();
        let done = outcome == StepOutcome::BrokeDown || k >= cap;
        if done || k % 5 == 0 {
            let eig = tridiag_eigen(st.alpha(), st.offdiag(), EigVectors::FirstLast)?;
            let last_row = if k > 1 { 1 } else { 0 };
            let resid = st.beta_next() * eig.vectors[(last_row, 0)].abs();
            let converged = outcome == StepOutcome::BrokeDown || resid <= target;
            let theta = eig.values[0];
            let cleared = theta - resid > floor && previous - theta <= 0.01 * (theta - floor);
            previous = theta;
            if converged || cleared || done {
                if !converged && !cleared {
                    return Err(Error::MaxIter {
                        what: "Lanczos eigensolver",
                        iterations: k,
                    });
                }
                let full = tridiag_eigen(st.alpha(), st.offdiag(), EigVectors::Full)?;
                let y: Vec<f64> = full.vectors.column(0).iter().copied().collect();
                let mut z = st.combine(&y);
                let nz = z.norm();
                z /= nz;
                let residual = (op.apply_pap(&z) - &z * full.values[0]).norm();
                return Ok(RitzPair {
                    value: full.values[0],
                    vector: z,
                    residual,
                    steps: k,
                    ritz_values: full.values,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{seeded_normal_vector, sym_eigen_sorted};
    use crate::operator::DenseSym;
    use crate::problem::{classify, CrqProblem, Feasibility};
    use std::sync::Arc;

    fn dense_problem(n: usize, m: usize, seed: u64) -> CrqProblem {
        let g = DMatrix::from_column_slice(n, n, seeded_normal_vector(n * n, seed).as_slice());
        let a = (&g + g.transpose()) * 0.5;
        let c = DMatrix::from_column_slice(n, m, seeded_normal_vector(n * m, seed + 1).as_slice());
        let b = seeded_normal_vector(m, seed + 2) * 0.1;
        CrqProblem::new(Arc::new(DenseSym::new(a)), c, b).unwrap()
    }

    fn interior(p: &CrqProblem, proj: &ProjectedOperator) -> crate::problem::InteriorSetup {
        match classify(p, proj).unwrap() {
            Feasibility::Interior(s) => s,
            _ => panic!("not interior"),
        }
    }

    #[test]
    fn start_vector_normalization() {
        let p = dense_problem(4, 1, 3);
        let proj = ProjectedOperator::new(&p).unwrap();
        let b0 = proj.apply_p(&DVector::from_vec(vec![2.0, 0.0, 0.0, 0.0]));
        let st = LanczosState::init(&proj, &b0, 1.0).unwrap();
        assert!((st.start_norm() - b0.norm()).abs() < 1e-15);
        assert!((&st.q[0] - &b0 / b0.norm()).norm() < 1e-15);
        assert!(matches!(
            LanczosState::init(&proj, &DVector::zeros(4), 1.0),
            Err(Error::ZeroStart)
        ));
    }

    #[test]
    fn identity_breaks_down_after_one_step() {
        let p = CrqProblem::new(
            Arc::new(DenseSym::new(DMatrix::identity(3, 3))),
            DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]),
            DVector::from_vec(vec![0.2]),
        )
        .unwrap();
        let proj = ProjectedOperator::new(&p).unwrap();
        let mut st = LanczosState::init(&proj, &DVector::from_vec(vec![0.0, 1.0, 1.0]), 1.0).unwrap();
        assert_eq!(st.step(), StepOutcome::BrokeDown);
        assert!((st.alpha()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tridiagonal_is_projected_gram_matrix() {
        for seed in [1u64, 5, 11] {
            let p = dense_problem(12, 3, seed);
            let proj = ProjectedOperator::new(&p).unwrap();
            let s = interior(&p, &proj);
            let mut st = LanczosState::init(&proj, &s.b0, p.norm_a()).unwrap();
            for _ in 0..6 {
                st.step();
            }
            let k = st.k();
            let qk = DMatrix::from_columns(st.basis());
            let pap = DMatrix::from_fn(12, 12, |i, j| {
                let mut e = DVector::zeros(12);
                e[j] = 1.0;
                proj.apply_pap(&e)[i]
            });
            let gram = qk.transpose() * &pap * &qk;
            assert!((gram - st.tridiagonal()).norm() < 1e-10 * p.norm_a());
            // Orthonormality and null-space membership.
            let ortho = qk.transpose() * &qk - DMatrix::identity(k, k);
            assert!(ortho.norm() < 1e-13);
            assert!((p.c().transpose() * &qk).norm() < 1e-10 * p.c().norm());
            // Compact relation M Q_k = Q_k T_k + β_{k+1} q_{k+1} e_kᵀ.
            let mut rhs = &qk * st.tridiagonal();
            let qn = st.q_next().unwrap();
            for i in 0..12 {
                rhs[(i, k - 1)] += st.beta_next() * qn[i];
            }
            assert!((&pap * &qk - rhs).norm() < 1e-10 * p.norm_a());
        }
    }

    #[test]
    fn krylov_span_matches_dense_basis() {
        let p = dense_problem(10, 2, 21);
        let proj = ProjectedOperator::new(&p).unwrap();
        let s = interior(&p, &proj);
        let mut st = LanczosState::init(&proj, &s.b0, p.norm_a()).unwrap();
        for _ in 0..4 {
            st.step();
        }
        // Dense Krylov basis [b0, Mb0, M²b0, M³b0], orthonormalized by QR.
        let mut cols = vec![s.b0.clone()];
        for j in 1..4 {
            let next = proj.apply_pap(&cols[j - 1]);
            cols.push(next);
        }
        let kry = DMatrix::from_columns(&cols).qr().q();
        let qk = DMatrix::from_columns(st.basis());
        // Principal angles: singular values of QkᵀK all equal 1.
        let sv = (qk.transpose() * kry).singular_values();
        for v in sv.iter() {
            assert!((v - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn smallest_eigenpair_matches_reduced_spectrum() {
        let p = dense_problem(15, 3, 8);
        let proj = ProjectedOperator::new(&p).unwrap();
        let pair = smallest_eigenpair(&proj, &seeded_normal_vector(15, 99), p.norm_a(), 1e-12, 100).unwrap();
        // Oracle: eigenvalues of S1ᵀAS1 with S1 an orthonormal basis of N(Cᵀ).
        let full_q = {
            let qr = p.c().clone().qr();
            let mut qt = DMatrix::<f64>::identity(15, 15);
            qr.q_tr_mul(&mut qt);
            qt.transpose()
        };
        let s1 = full_q.columns(3, 12).into_owned();
        let h = s1.transpose() * p.a().to_dense() * &s1;
        let (vals, _) = sym_eigen_sorted(h);
        assert!((pair.value - vals[0]).abs() < 1e-10);
        assert!(pair.residual < 1e-9);
        assert!(p.c().tr_mul(&pair.vector).norm() < 1e-10);
    }
}
