//! Small dense kernels shared by the solvers: symmetric tridiagonal
//! eigendecomposition, pivoted tridiagonal solves, sorted dense symmetric
//! eigendecomposition and an operator norm estimate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::operator::SymOperator;

/// Which eigenvector data [`tridiag_eigen`] should accumulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigVectors {
    /// Only the first component of every eigenvector.
    FirstRow,
    /// First and last components of every eigenvector.
    FirstLast,
    /// The full orthogonal eigenvector matrix.
    Full,
}

/// Eigen-decomposition of a symmetric tridiagonal matrix, ascending order.
#[derive(Debug, Clone)]
pub struct TridiagEigen {
    pub values: Vec<f64>,
    /// Selected rows of the eigenvector matrix, column `j` belonging to
    /// `values[j]`: row 0 only, rows 0 and `k-1`, or all `k` rows.
    pub vectors: DMatrix<f64>,
}

/// Implicit QL with Wilkinson shifts on the tridiagonal matrix with diagonal
/// `diag` and off-diagonal `off` (`off.len() == diag.len() - 1`).
pub fn tridiag_eigen(diag: &[f64], off: &[f64], want: EigVectors) -> Result<TridiagEigen> {
    let n = diag.len();
    if n == 0 {
        return Ok(TridiagEigen {
            values: vec![],
            vectors: DMatrix::zeros(0, 0),
        });
    }
    if off.len() + 1 != n {
        return Err(Error::Dimension(format!(
            "tridiagonal with {} diagonal and {} off-diagonal entries",
            n,
            off.len()
        )));
    }
    let tracked: Vec<usize> = match want {
        EigVectors::FirstRow => vec![0],
        EigVectors::FirstLast if n > 1 => vec![0, n - 1],
        EigVectors::FirstLast => vec![0],
        EigVectors::Full => (0..n).collect(),
    };
    let rows = tracked.len();
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    // z is rows × n, row-major.
    let mut z = vec![0.0; rows * n];
    for (r, &orig) in tracked.iter().enumerate() {
        z[r * n + orig] = 1.0;
    }

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::EigFailure("tridiagonal QL did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in z.chunks_exact_mut(n) {
                    let f = row[i + 1];
                    row[i + 1] = s * row[i] + c * f;
                    row[i] = c * row[i] - s * f;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values = order.iter().map(|&j| d[j]).collect();
    let vectors = DMatrix::from_fn(rows, n, |r, j| z[r * n + order[j]]);
    Ok(TridiagEigen { values, vectors })
}

/// Solves `(T - shift I) x = rhs` for the symmetric tridiagonal `T` by
/// Gaussian elimination with partial pivoting. Returns `None` if singular.
pub fn tridiag_solve(diag: &[f64], off: &[f64], shift: f64, rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Some(vec![]);
    }
    let mut d: Vec<f64> = diag.iter().map(|a| a - shift).collect();
    let mut dl = off.to_vec();
    let mut du = off.to_vec();
    let mut b = rhs.to_vec();
    for i in 0..n.saturating_sub(1) {
        if d[i].abs() >= dl[i].abs() {
            if d[i] == 0.0 {
                return None;
            }
            let fact = dl[i] / d[i];
            d[i + 1] -= fact * du[i];
            b[i + 1] -= fact * b[i];
            dl[i] = 0.0;
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let temp = d[i + 1];
            d[i + 1] = du[i] - fact * temp;
            if i + 2 < n {
                dl[i] = du[i + 1];
                du[i + 1] = -fact * dl[i];
            } else {
                dl[i] = 0.0;
            }
            du[i] = temp;
            let temp = b[i];
            b[i] = b[i + 1];
            b[i + 1] = temp - fact * b[i + 1];
        }
    }
    if d[n - 1] == 0.0 {
        return None;
    }
    b[n - 1] /= d[n - 1];
    if n > 1 {
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        b[i] = (b[i] - du[i] * b[i + 1] - dl[i] * b[i + 2]) / d[i];
    }
    if b.iter().all(|v| v.is_finite()) {
        Some(b)
    } else {
        None
    }
}

/// Multiplies the symmetric tridiagonal matrix by `x`.
pub fn tridiag_mul(diag: &[f64], off: &[f64], x: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = diag[i] * x[i];
        if i > 0 {
            y[i] += off[i - 1] * x[i - 1];
        }
        if i + 1 < n {
            y[i] += off[i] * x[i + 1];
        }
    }
    y
}

/// Dense tridiagonal matrix, handy for the linearizations and for tests.
pub fn tridiag_dense(diag: &[f64], off: &[f64]) -> DMatrix<f64> {
    let n = diag.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            diag[i]
        } else if i + 1 == j {
            off[i]
        } else if j + 1 == i {
            off[j]
        } else {
            0.0
        }
    })
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub fn sym_eigen_sorted(m: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&j| eig.eigenvalues[j]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Standard normal vector from a seeded ChaCha stream.
pub fn seeded_normal_vector(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng))
}

/// Spectral norm estimate of a symmetric operator from `steps` Lanczos steps
/// with full reorthogonalization. The extreme Ritz value is inflated by its
/// residual norm, so the estimate is an upper bound in all but contrived cases.
pub fn estimate_norm(op: &dyn SymOperator, steps: usize) -> f64 {
    let n = op.dim();
    if n == 0 {
        return 0.0;
    }
    let mut q = seeded_normal_vector(n, 0x6e6f_726d);
    q /= q.norm();
    let mut basis: Vec<DVector<f64>> = vec![q];
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let steps = steps.min(n);
    for k in 0..steps {
        let mut w = op.apply_vec(&basis[k]);
        let a = basis[k].dot(&w);
        alpha.push(a);
        for _ in 0..2 {
            for qj in &basis {
                let h = qj.dot(&w);
                w.axpy(-h, qj, 1.0);
            }
        }
        let b = w.norm();
        if b <= 1e-14 * alpha.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300) {
            beta.push(0.0);
            break;
        }
        beta.push(b);
        if k + 1 < steps {
            basis.push(w / b);
        }
    }
    let k = alpha.len();
    let off = &beta[..k - 1];
    let eig = match tridiag_eigen(&alpha, off, EigVectors::Full) {
        Ok(e) => e,
        Err(_) => return alpha.iter().fold(0.0f64, |m, v| m.max(v.abs())) + beta[k - 1],
    };
    let last = beta[k - 1];
    let lo = eig.values[0];
    let hi = eig.values[k - 1];
    let res_lo = last * eig.vectors[(k - 1, 0)].abs();
    let res_hi = last * eig.vectors[(k - 1, k - 1)].abs();
    (lo.abs() + res_lo).max(hi.abs() + res_hi)
}
