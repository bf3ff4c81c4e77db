//! Instance builders shared by the integration tests.

#![allow(dead_code)]

use std::sync::Arc;

use crqopt::reference::orthogonal_split;
use crqopt::{CrqProblem, DenseSym};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    normal_matrix(rng, n, n).qr().q()
}

/// Random symmetric `A`, Gaussian `C`, and `b = Cᵀx` for a random `x` of
/// norm `radius < 1`, so the feasible set has interior points.
pub fn random_dense(seed: u64, n: usize, m: usize, radius: f64) -> CrqProblem {
    let mut r = rng(seed);
    let g = normal_matrix(&mut r, n, n);
    let a = (&g + g.transpose()) * 0.5;
    let c = normal_matrix(&mut r, n, m);
    let x = normal_vector(&mut r, n);
    let x = &x * (radius / x.norm());
    let b = c.transpose() * x;
    CrqProblem::new(Arc::new(DenseSym::new(a)), c, b).unwrap()
}

/// A problem with prescribed reduced data: `S1ᵀAS1 = H`, `S1ᵀ A n0 = g0`
/// and `n0 = S2 a`, where `[S1 S2]` comes from a QR factorization of a
/// random `C`.
pub struct Assembled {
    pub problem: CrqProblem,
    pub s1: DMatrix<f64>,
    pub n0: DVector<f64>,
    pub gamma: f64,
    pub h: DMatrix<f64>,
    pub g0: DVector<f64>,
}

pub fn assemble(rng: &mut ChaCha8Rng, h: &DMatrix<f64>, g0: &DVector<f64>, m: usize, zeta: f64) -> Assembled {
    let l = h.nrows();
    let n = l + m;
    let c = normal_matrix(rng, n, m);
    let (s1, s2) = orthogonal_split(&c);
    let a = normal_vector(rng, m);
    let a = &a * (zeta / a.norm());
    // S1ᵀAS2 = g0 aᵀ/‖a‖² + X(I − aaᵀ/‖a‖²) maps a to g0.
    let aa = a.norm_squared();
    let x = normal_matrix(rng, l, m);
    let proj = DMatrix::identity(m, m) - &a * a.transpose() / aa;
    let b12 = g0 * a.transpose() / aa + x * proj;
    let g22 = normal_matrix(rng, m, m);
    let b22 = (&g22 + g22.transpose()) * 0.5;
    let mut q = DMatrix::zeros(n, n);
    q.view_mut((0, 0), (n, l)).copy_from(&s1);
    q.view_mut((0, l), (n, m)).copy_from(&s2);
    let mut mid = DMatrix::zeros(n, n);
    mid.view_mut((0, 0), (l, l)).copy_from(h);
    mid.view_mut((0, l), (l, m)).copy_from(&b12);
    mid.view_mut((l, 0), (m, l)).copy_from(&b12.transpose());
    mid.view_mut((l, l), (m, m)).copy_from(&b22);
    let amat = &q * mid * q.transpose();
    let amat = (&amat + amat.transpose()) * 0.5;
    let n0 = &s2 * &a;
    let b = c.transpose() * &n0;
    let problem = CrqProblem::new(Arc::new(DenseSym::new(amat)), c, b).unwrap();
    Assembled {
        problem,
        s1,
        n0,
        gamma: (1.0 - zeta * zeta).sqrt(),
        h: h.clone(),
        g0: g0.clone(),
    }
}

/// Hard case: `λ_min(H) = 1` is simple, `g0` is orthogonal to its
/// eigenvector and `‖(H − I)†g0‖ = γ/2`.
pub fn hard_instance(seed: u64, n: usize, m: usize) -> Assembled {
    let mut r = rng(seed);
    let l = n - m;
    let theta: Vec<f64> = std::iter::once(1.0)
        .chain((1..l).map(|i| 2.0 + 8.0 * i as f64 / l as f64))
        .collect();
    let w = random_orthogonal(&mut r, l);
    let h = &w * DMatrix::from_diagonal(&DVector::from_vec(theta.clone())) * w.transpose();
    let h = (&h + h.transpose()) * 0.5;
    let zeta: f64 = 0.6;
    let gamma = (1.0 - zeta * zeta).sqrt();
    let mut coords = normal_vector(&mut r, l);
    coords[0] = 0.0;
    let shifted_norm = (1..l).map(|i| (coords[i] / (theta[i] - 1.0)).powi(2)).sum::<f64>().sqrt();
    coords *= 0.5 * gamma / shifted_norm;
    let g0 = &w * coords;
    assemble(&mut r, &h, &g0, m, zeta)
}

/// Easy case whose `H` has only `d` distinct eigenvalues, so the Krylov
/// space generated from `g0` has dimension `d`. Built in coordinates where
/// `C` is supported on the last `m` rows and `H` is diagonal, then permuted
/// with random signs; every step is exact, so the computed `β_{d+1}` sits at
/// the rounding level.
pub fn krylov_deficient(seed: u64, n: usize, m: usize, d: usize) -> Assembled {
    use rand::seq::SliceRandom;

    let mut r = rng(seed);
    let l = n - m;
    let levels: Vec<f64> = (0..d).map(|j| 1.0 + 3.0 * j as f64).collect();
    let theta: Vec<f64> = (0..l).map(|i| levels[i * d / l]).collect();
    let h = DMatrix::from_diagonal(&DVector::from_vec(theta));
    let g0 = normal_vector(&mut r, l);
    let a = normal_vector(&mut r, m);
    let a = &a * (0.5 / a.norm());
    let aa = a.norm_squared();
    let x = normal_matrix(&mut r, l, m);
    let b12 = &g0 * a.transpose() / aa + x * (DMatrix::identity(m, m) - &a * a.transpose() / aa);
    let g22 = normal_matrix(&mut r, m, m);
    let b22 = (&g22 + g22.transpose()) * 0.5;
    let rmat = normal_matrix(&mut r, m, m);

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut r);
    let sign: Vec<f64> = (0..n).map(|_| if r.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    // Entry (i, j) of the block matrix lands at (perm[i], perm[j]).
    let block = |i: usize, j: usize| match (i < l, j < l) {
        (true, true) => h[(i, j)],
        (true, false) => b12[(i, j - l)],
        (false, true) => b12[(j, i - l)],
        (false, false) => b22[(i - l, j - l)],
    };
    let mut amat = DMatrix::zeros(n, n);
    let mut c = DMatrix::zeros(n, m);
    let mut n0 = DVector::zeros(n);
    let mut s1 = DMatrix::zeros(n, l);
    for i in 0..n {
        for j in 0..n {
            amat[(perm[i], perm[j])] = sign[i] * sign[j] * block(i, j);
        }
        if i >= l {
            for j in 0..m {
                c[(perm[i], j)] = sign[i] * rmat[(i - l, j)];
            }
            n0[perm[i]] = sign[i] * a[i - l];
        } else {
            s1[(perm[i], i)] = sign[i];
        }
    }
    let b = c.transpose() * &n0;
    let problem = CrqProblem::new(Arc::new(DenseSym::new(amat)), c, b).unwrap();
    Assembled {
        problem,
        s1,
        n0,
        gamma: (1.0f64 - 0.25).sqrt(),
        h,
        g0,
    }
}
