//! Reduced quadratic eigenvalue path.
//!
//! The projected QEP `(T − λI)²w = γ⁻²β₁² e₁e₁ᵀw` is linearized as
//! `[[T, K], [−I, T]] [y; w] = λ [y; w]` with `K = −γ⁻²β₁² e₁e₁ᵀ`, solved densely,
//! and its leftmost real eigenvalue taken. The eigenvector comes from inverse
//! iteration on the linearization, so nothing here shares code with the
//! secular route.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lanczos::LanczosState;
use crate::linalg::tridiag_dense;

/// Leftmost real eigenpair of a reduced QEP.
#[derive(Debug, Clone)]
pub struct ReducedQepSolution {
    pub mu: f64,
    pub w: DVector<f64>,
    /// `(T − μI) w`.
    pub y: DVector<f64>,
    /// All eigenvalues of the linearization.
    pub spectrum: Vec<Complex<f64>>,
}

/// Linearization of `(T − λI)²w + K w = 0` as a `2k × 2k` matrix.
pub fn linearize(t: &DMatrix<f64>, k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = t.nrows();
    let mut l = DMatrix::zeros(2 * n, 2 * n);
    l.view_mut((0, 0), (n, n)).copy_from(t);
    l.view_mut((0, n), (n, n)).copy_from(k);
    l.view_mut((n, n), (n, n)).copy_from(t);
    for i in 0..n {
        l[(n + i, i)] = -1.0;
    }
    l
}

/// All eigenvalues of a general real matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = m.nrows();
    let f = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    let vals = f
        .eigenvalues()
        .map_err(|e| Error::EigFailure(format!("nonsymmetric eigensolver: {e:?}")))?;
    Ok(vals.into_iter().map(|z| Complex::new(z.re, z.im)).collect())
}

/// Realness test for eigenvalues of a linearization built on a matrix of norm `norm_t`.
pub fn is_real(lambda: Complex<f64>, norm_t: f64) -> bool {
    let eps_im = 1e-8 * (1.0 + norm_t);
    lambda.im.abs() <= eps_im * (1.0 + lambda.re.abs() + norm_t)
}

/// Leftmost real eigenvalue of the linearization `l` and a refined real
/// eigenvector `s = [y; w]`.
pub fn leftmost_real_eigenpair(
    l: &DMatrix<f64>,
    norm_t: f64,
) -> Result<(f64, DVector<f64>, Vec<Complex<f64>>)> {
    let spectrum = eigenvalues(l)?;
    let mu0 = spectrum
        .iter()
        .filter(|z| is_real(**z, norm_t))
        .map(|z| z.re)
        .min_by(f64::total_cmp)
        .ok_or(Error::NoRealEigenvalue)?;
    let scale = 1.0 + l.norm();
    let s = inverse_iteration(l, mu0, scale)?;
    let t = inverse_iteration(&l.transpose(), mu0, scale)?;
    // Two-sided Rayleigh quotient refines a simple eigenvalue quadratically.
    let ts = t.dot(&s);
    let mu = if ts.abs() > 1e-8 {
        let refined = t.dot(&(l * &s)) / ts;
        if (refined - mu0).abs() <= 1e-6 * scale {
            refined
        } else {
            mu0
        }
    } else {
        mu0
    };
    Ok((mu, s, spectrum))
}

fn inverse_iteration(l: &DMatrix<f64>, sigma: f64, scale: f64) -> Result<DVector<f64>> {
    let n = l.nrows();
    let shifted = |sig: f64| {
        let mut m = l.clone();
        for i in 0..n {
            m[(i, i)] -= sig;
        }
        m.lu()
    };
    let mut lu = shifted(sigma);
    let mut x = DVector::from_fn(n, |i, _| 1.0 + (i as f64) * 1e-3);
    x /= x.norm();
    if lu.solve(&x).is_none() {
        lu = shifted(sigma + 1e-13 * scale);
    }
    for _ in 0..3 {
        let mut next = lu
            .solve(&x)
            .ok_or_else(|| Error::EigFailure("shifted linearization is singular".into()))?;
        let nn = next.norm();
        if !nn.is_finite() || nn == 0.0 {
            return Err(Error::EigFailure("inverse iteration broke down".into()));
        }
        next /= nn;
        x = next;
    }
    Ok(x)
}

/// Solves the reduced QEP with the trailing `β_{k+1}²e_ke_kᵀ` term dropped.
pub fn solve_reduced_qep(
    alpha: &[f64],
    off: &[f64],
    beta1: f64,
    gamma: f64,
) -> Result<ReducedQepSolution> {
    solve_tridiagonal_qep(alpha, off, beta1, gamma, None)
}

/// Diagnostic variant keeping the `β_{k+1}²e_ke_kᵀ` term of the exact
/// projection. Its spectrum can be entirely complex.
pub fn solve_reduced_qep_undropped(
    alpha: &[f64],
    off: &[f64],
    beta1: f64,
    gamma: f64,
    beta_next: f64,
) -> Result<ReducedQepSolution> {
    solve_tridiagonal_qep(alpha, off, beta1, gamma, Some(beta_next))
}

fn solve_tridiagonal_qep(
    alpha: &[f64],
    off: &[f64],
    beta1: f64,
    gamma: f64,
    beta_next: Option<f64>,
) -> Result<ReducedQepSolution> {
    let k = alpha.len();
    let t = tridiag_dense(alpha, off);
    let mut kmat = DMatrix::zeros(k, k);
    kmat[(0, 0)] = -beta1 * beta1 / (gamma * gamma);
    if let Some(b) = beta_next {
        kmat[(k - 1, k - 1)] += b * b;
    }
    let l = linearize(&t, &kmat);
    let norm_t = t.norm();
    let (mu, s, spectrum) = leftmost_real_eigenpair(&l, norm_t)?;
    let mut w = s.rows(k, k).into_owned();
    if w[0] < 0.0 {
        w = -w;
    }
    // Rebuild y from w so the pair is consistent with the refined μ.
    let mut y = &t * &w;
    y.axpy(-mu, &w, 1.0);
    Ok(ReducedQepSolution { mu, w, y, spectrum })
}

/// Maps a reduced QEP eigenpair to the reduced Lagrangian solution
/// `x = −γ²/(β₁ e₁ᵀw) · y`.
pub fn reduced_qep_to_rlgopt(sol: &ReducedQepSolution, beta1: f64, gamma: f64) -> Result<Vec<f64>> {
    let w1 = sol.w[0];
    if w1.abs() < 1e-12 * sol.w.norm() {
        return Err(Error::DegenerateEigenvector);
    }
    let c = -gamma * gamma / (beta1 * w1);
    Ok(sol.y.iter().map(|v| c * v).collect())
}

/// Normalized QEP residual and its computable upper bound.
#[derive(Debug, Clone, Copy)]
pub struct QepResidual {
    pub nres: f64,
    pub delta: f64,
}

/// Evaluates the normalized residual of `(μ, Q_k w)` and the bound `δ`.
/// The residual uses one extra product with `q_{k+1}`.
pub fn qep_residual_bound(
    state: &LanczosState<'_>,
    sol: &ReducedQepSolution,
    norm_a: f64,
    gamma: f64,
    beta1: f64,
) -> QepResidual {
    let k = state.k();
    let bn = state.beta_next();
    let s = norm_a + sol.mu.abs();
    let denom = (s * s + beta1 * beta1 / (gamma * gamma)) * sol.w.norm();
    let ey = sol.y[k - 1];
    let ew = sol.w[k - 1];
    let delta = bn.abs() * (ey.abs() + s * ew.abs()) / denom;
    let nres = match state.q_next() {
        Some(q) if bn != 0.0 && !state.broke_down() => {
            let mut mq = state.operator().apply_pa(q);
            mq.axpy(-sol.mu, q, 1.0);
            let mut r = mq * (bn * ew);
            r.axpy(bn * ey, q, 1.0);
            r.norm() / denom
        }
        _ => 0.0,
    };
    QepResidual { nres, delta }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::secular::solve_rlgopt;

    #[test]
    fn scalar_qep() {
        let s = solve_reduced_qep(&[3.0], &[], 2.0, 0.5).unwrap();
        assert!((s.mu - (3.0 - 4.0)).abs() < 1e-12);
        let x = reduced_qep_to_rlgopt(&s, 2.0, 0.5).unwrap();
        assert!((x[0] + 0.5).abs() < 1e-12);
        assert_eq!(s.spectrum.len(), 2);
    }

    #[test]
    fn linearization_eigenvectors_solve_the_qep() {
        let alpha = [0.5, 2.0, 1.5];
        let off = [0.9, -0.4];
        let (beta1, gamma) = (1.3, 0.7);
        let s = solve_reduced_qep(&alpha, &off, beta1, gamma).unwrap();
        let t = tridiag_dense(&alpha, &off);
        let shifted = &t - DMatrix::identity(3, 3) * s.mu;
        let lhs = &shifted * &shifted * &s.w;
        let mut rhs = DVector::zeros(3);
        rhs[0] = beta1 * beta1 / (gamma * gamma) * s.w[0];
        assert!((lhs - rhs).norm() < 1e-11 * s.w.norm());
        for z in &s.spectrum {
            if is_real(*z, t.norm()) {
                assert!(s.mu <= z.re + 1e-12);
            }
        }
    }

    #[test]
    fn qep_and_secular_paths_agree() {
        let alpha = [1.0, 2.5, -0.3, 4.0, 0.2];
        let off = [0.7, 1.1, 0.4, 2.0];
        let (beta1, gamma) = (0.8, 0.6);
        let qep = solve_reduced_qep(&alpha, &off, beta1, gamma).unwrap();
        let lg = solve_rlgopt(&alpha, &off, beta1, gamma).unwrap();
        assert!((qep.mu - lg.mu).abs() < 1e-10 * (1.0 + lg.mu.abs()));
        let x = reduced_qep_to_rlgopt(&qep, beta1, gamma).unwrap();
        let gap: f64 = x.iter().zip(&lg.x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(gap < 1e-8);
    }

    #[test]
    fn undropped_variant_can_lose_all_real_eigenvalues() {
        // A 1×1 reduced problem with a large trailing coupling: the undropped
        // quadratic (a − λ)² + β² − c² has no real roots once β > c.
        let err = solve_reduced_qep_undropped(&[1.0], &[], 1.0, 1.0, 2.0).unwrap_err();
        assert!(matches!(err, Error::NoRealEigenvalue));
    }
}
