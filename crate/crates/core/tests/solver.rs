mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use crqopt::instances::{generate, InstanceSpec};
use crqopt::lanczos::{LanczosState, StepOutcome};
use crqopt::linalg::tridiag_dense;
use crqopt::problem::{classify, Feasibility, InteriorSetup};
use crqopt::qepmin::solve_reduced_qep;
use crqopt::reference::{build_reduction, direct_solve, DENSE_CAP};
use crqopt::secular::solve_rlgopt;
use crqopt::{solve, CrqProblem, Method, ProjectedOperator, SolutionCase, SolveOptions};

fn interior(p: &CrqProblem) -> (ProjectedOperator, InteriorSetup) {
    let proj = ProjectedOperator::new(p).unwrap();
    match classify(p, &proj).unwrap() {
        Feasibility::Interior(s) => (proj, s),
        other => panic!("not interior: {other:?}"),
    }
}

fn dense_a(p: &CrqProblem) -> DMatrix<f64> {
    p.a().to_dense()
}

/// Minimum of `vᵀAv` over `v = n0 + Qx`, `‖x‖ = γ`, for orthonormal `Q`,
/// from the eigendecomposition of `QᵀAQ` and bisection on the secular
/// equation. Assumes the easy case in the slice.
fn slice_minimum(a: &DMatrix<f64>, q: &DMatrix<f64>, n0: &DVector<f64>, gamma: f64) -> f64 {
    let hk = q.transpose() * a * q;
    let g = q.transpose() * (a * n0);
    let eig = hk.clone().symmetric_eigen();
    let c = eig.eigenvectors.transpose() * &g;
    let theta = &eig.eigenvalues;
    let t1 = theta.min();
    let norm = |l: f64| c.iter().zip(theta.iter()).map(|(ci, t)| (ci / (t - l)).powi(2)).sum::<f64>().sqrt();
    let (mut lo, mut hi) = (t1 - g.norm() / gamma - 1.0, t1);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if norm(mid) < gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let coords = DVector::from_iterator(c.len(), c.iter().zip(theta.iter()).map(|(ci, t)| -ci / (t - lambda)));
    let x = &eig.eigenvectors * coords;
    n0.dot(&(a * n0)) + 2.0 * g.dot(&x) + x.dot(&(&hk * &x))
}

#[test]
fn iterates_minimize_over_the_krylov_slice() {
    for seed in 0..6 {
        let p = common::random_dense(10 + seed, 40, 3, 0.5);
        let (proj, setup) = interior(&p);
        let a = dense_a(&p);
        let opts = SolveOptions {
            record_iterates: true,
            tol: 0.0,
            maxit: 12,
            ..SolveOptions::default()
        };
        let sol = match solve(&p, &opts) {
            Ok(s) => s,
            Err(crqopt::Error::NotConverged(s)) => *s,
            Err(e) => panic!("{e}"),
        };
        // Independent Krylov basis: dense powers of PAP on b0, orthonormalized.
        let mut cols = vec![setup.b0.clone()];
        for _ in 1..12 {
            let next = proj.apply_pap(cols.last().unwrap());
            cols.push(next);
        }
        for rec in &sol.history {
            let k = rec.k;
            let q = DMatrix::from_columns(&cols[..k]).qr().q();
            let best = slice_minimum(&a, &q, &setup.n0, setup.gamma);
            assert!((rec.objective - best).abs() <= 1e-8 * (1.0 + best.abs()), "seed {seed} k {k}: {} vs {best}", rec.objective);
        }
    }
}

#[test]
fn generated_instances_are_deterministic() {
    let spec = InstanceSpec::chebyshev(300, 20, 1.0, 100.0, 42);
    let (p1, t1) = generate(&spec).unwrap();
    let (p2, t2) = generate(&spec).unwrap();
    assert_eq!(p1.c(), p2.c());
    assert_eq!(p1.b(), p2.b());
    assert_eq!(t1.v_star, t2.v_star);
    let probe = DVector::from_fn(300, |i, _| ((i * 7919) % 101) as f64 - 50.0);
    assert_eq!(p1.a().apply_vec(&probe), p2.a().apply_vec(&probe));
    let s1 = solve(&p1, &SolveOptions::default()).unwrap();
    let s2 = solve(&p2, &SolveOptions::default()).unwrap();
    assert_eq!(s1.v, s2.v);
    assert_eq!(s1.k, s2.k);
}

#[test]
fn unique_minimizer_is_seed_independent() {
    let p = common::random_dense(77, 60, 4, 0.4);
    let a = solve(&p, &SolveOptions { rng_seed: 1, ..SolveOptions::default() }).unwrap();
    let b = solve(&p, &SolveOptions { rng_seed: 2, ..SolveOptions::default() }).unwrap();
    assert!((&a.v - &b.v).norm() <= 1e-8);
}

#[test]
fn projected_spectrum_is_reduced_spectrum_plus_zeros() {
    let p = common::random_dense(5, 30, 4, 0.3);
    let (proj, setup) = interior(&p);
    let red = build_reduction(&p, &setup, DENSE_CAP).unwrap();
    let n = p.n();
    let pap = DMatrix::from_columns(&(0..n).map(|j| proj.apply_pap(&DVector::from_fn(n, |i, _| f64::from(i == j)))).collect::<Vec<_>>());
    let mut full: Vec<f64> = pap.symmetric_eigen().eigenvalues.iter().copied().collect();
    let mut expect: Vec<f64> = red.theta.iter().copied().chain(std::iter::repeat_n(0.0, p.m())).collect();
    full.sort_by(f64::total_cmp);
    expect.sort_by(f64::total_cmp);
    for (x, y) in full.iter().zip(&expect) {
        assert!((x - y).abs() <= 1e-8, "{x} vs {y}");
    }
}

#[test]
fn identity_operator_breaks_down_after_one_step() {
    let p = CrqProblem::new(
        std::sync::Arc::new(crqopt::DenseSym::new(DMatrix::identity(6, 6))),
        DMatrix::from_column_slice(6, 1, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]),
        DVector::from_vec(vec![0.5]),
    )
    .unwrap();
    let proj = ProjectedOperator::new(&p).unwrap();
    // Start inside N(Cᵀ) so that PAP acts as the identity on it.
    let start = DVector::from_vec(vec![1.0, -1.0, 1.0, 0.0, 0.0, 0.0]);
    let mut st = LanczosState::init(&proj, &start, 1.0).unwrap();
    assert_eq!(st.step(), StepOutcome::BrokeDown);
    assert!((st.alpha()[0] - 1.0).abs() < 1e-15);
}

fn dims() -> impl Strategy<Value = (u64, usize, usize, f64)> {
    (0u64..10_000, 8usize..40, 1usize..5, 0.05f64..0.9).prop_map(|(s, n, m, r)| (s, n.max(m + 3), m, r))
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 48,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn setup_is_consistent((seed, n, m, radius) in dims()) {
        let p = common::random_dense(seed, n, m, radius);
        let (proj, setup) = interior(&p);
        prop_assert!((setup.n0.norm_squared() + setup.gamma * setup.gamma - 1.0).abs() <= 1e-14);
        prop_assert!((proj.apply_p(&setup.b0) - &setup.b0).norm() <= 1e-12 * (1.0 + setup.norm_b0));
        prop_assert!(p.c().tr_mul(&setup.b0).norm() <= 1e-12 * p.c().norm() * (1.0 + setup.norm_b0));
        let c = DVector::from_fn(n, |i, _| ((i as f64) * 0.37).sin());
        let pc = proj.apply_p(&c);
        prop_assert!((proj.apply_p(&pc) - &pc).norm() <= 1e-13 * c.norm());
    }

    #[test]
    fn lanczos_relations_hold((seed, n, m, radius) in dims()) {
        let p = common::random_dense(seed, n, m, radius);
        let (proj, setup) = interior(&p);
        let mut st = LanczosState::init(&proj, &setup.b0, p.norm_a()).unwrap();
        while st.k() < (n - m).min(15) && st.step() == StepOutcome::Continued {}
        let k = st.k();
        let q = DMatrix::from_columns(&st.basis()[..k]);
        let t = tridiag_dense(&st.alpha()[..k], &st.offdiag()[..k.saturating_sub(1)]);
        let pap_q = DMatrix::from_columns(&(0..k).map(|j| proj.apply_pap(&q.column(j).into_owned())).collect::<Vec<_>>());
        let scale = p.norm_a();
        prop_assert!((q.transpose() * &pap_q - &t).norm() <= 1e-10 * scale);
        prop_assert!((q.transpose() * &q - DMatrix::identity(k, k)).norm() <= 1e-12);
        prop_assert!(p.c().tr_mul(&q).norm() <= 1e-10 * p.c().norm());
        if let Some(next) = st.q_next() {
            let mut rel = &pap_q - &q * &t;
            let mut last = rel.column_mut(k - 1);
            last.axpy(-st.beta_next(), next, 1.0);
            prop_assert!(rel.norm() <= 1e-10 * scale);
        }
    }

    #[test]
    fn solutions_are_feasible_and_objective_decreases((seed, n, m, radius) in dims()) {
        let p = common::random_dense(seed, n, m, radius);
        let sol = solve(&p, &SolveOptions::default()).unwrap();
        prop_assert!((sol.v.norm() - 1.0).abs() <= 1e-10);
        prop_assert!(p.constraint_residual(&sol.v) <= 1e-10 * (p.c().norm() + p.b().norm()));
        prop_assert!((sol.objective - p.objective(&sol.v)).abs() <= 1e-10 * (1.0 + sol.objective.abs()));
        for w in sol.history.windows(2) {
            prop_assert!(w[1].objective <= w[0].objective + 1e-12 * (1.0 + w[0].objective.abs()));
        }
        if sol.case == SolutionCase::Easy {
            let direct = direct_solve(&p).unwrap();
            prop_assert!((sol.objective - direct.objective).abs() <= 1e-9 * (1.0 + direct.objective.abs()));
        }
    }

    #[test]
    fn reduced_paths_agree((seed, n, m, radius) in dims()) {
        let p = common::random_dense(seed, n, m, radius);
        let (proj, setup) = interior(&p);
        let mut st = LanczosState::init(&proj, &setup.b0, p.norm_a()).unwrap();
        while st.k() < (n - m).min(12) && st.step() == StepOutcome::Continued {
            let k = st.k();
            let (alpha, off) = (&st.alpha()[..k], &st.offdiag()[..k - 1]);
            let lg = solve_rlgopt(alpha, off, st.start_norm(), setup.gamma).unwrap();
            let qep = solve_reduced_qep(alpha, off, st.start_norm(), setup.gamma).unwrap();
            prop_assert!((lg.mu - qep.mu).abs() <= 1e-10 * (1.0 + lg.mu.abs()), "k {}: {} vs {}", k, lg.mu, qep.mu);
            prop_assert!(lg.mu < lg.theta_min);
        }
    }

    #[test]
    fn qep_residual_never_exceeds_its_bound((seed, n, m, radius) in dims()) {
        let p = common::random_dense(seed, n, m, radius);
        let opts = SolveOptions { method: Method::QEPmin, ..SolveOptions::default() };
        let sol = solve(&p, &opts).unwrap();
        for rec in &sol.history {
            prop_assert!(rec.nres <= rec.delta, "k {}: {} > {}", rec.k, rec.nres, rec.delta);
        }
    }
}
