//! Smallest root of the secular function
//! `χ(λ) = Σ ξᵢ²/(λ − θᵢ)² − γ²` left of the spectrum, and the reduced
//! Lagrangian solve on a Lanczos tridiagonal built on top of it.
//!
//! The root finder fits `g(λ) = −b + a/(λ − θ_{j0})²` to `χ` and `χ′` at the
//! current iterate and jumps to the root of the model, falling back to
//! bisection whenever the model step is undefined or leaves the bracket.

use log::warn;

use crate::error::{Error, Result};
use crate::linalg::{tridiag_eigen, tridiag_solve, EigVectors};

/// Iteration cap for the root finder.
pub const MAX_ITER: usize = 200;

/// Poles `θ` (ascending), weights `ξ` and radius `γ` of a secular function.
#[derive(Debug, Clone)]
pub struct SecularSpec {
    pub theta: Vec<f64>,
    pub xi: Vec<f64>,
    pub gamma: f64,
}

/// A root together with the number of `χ` evaluations spent on it.
#[derive(Debug, Clone, Copy)]
pub struct SecularRoot {
    pub lambda: f64,
    pub iterations: usize,
}

impl SecularSpec {
    pub fn new(theta: Vec<f64>, xi: Vec<f64>, gamma: f64) -> Result<Self> {
        if theta.len() != xi.len() || theta.is_empty() {
            return Err(Error::Dimension(format!(
                "secular spec with {} poles and {} weights",
                theta.len(),
                xi.len()
            )));
        }
        if theta.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("secular poles must be ascending".into()));
        }
        if gamma.is_nan() || gamma <= 0.0 {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self { theta, xi, gamma })
    }

    /// `χ(λ)`.
    pub fn chi(&self, lambda: f64) -> f64 {
        self.sums(lambda).0 - self.gamma * self.gamma
    }

    /// `χ′(λ)`.
    pub fn chi_prime(&self, lambda: f64) -> f64 {
        -2.0 * self.sums(lambda).1
    }

    /// `(Σ ξᵢ²/(λ−θᵢ)², Σ ξᵢ²/(λ−θᵢ)³)`.
    fn sums(&self, lambda: f64) -> (f64, f64) {
        let mut s2 = 0.0;
        let mut s3 = 0.0;
        for (&t, &x) in self.theta.iter().zip(&self.xi) {
            if x == 0.0 {
                continue;
            }
            let d = lambda - t;
            let q = x * x / (d * d);
            s2 += q;
            s3 += q / d;
        }
        (s2, s3)
    }

    /// Initial bracket half-width `δ0 = ‖ξ‖/γ`.
    pub fn delta0(&self) -> f64 {
        self.xi.iter().map(|x| x * x).sum::<f64>().sqrt() / self.gamma
    }

    /// Whether a root exists in `(−∞, θ₁)`: `χ` must blow up or stay
    /// positive as `λ → θ₁⁻`.
    fn has_root(&self) -> bool {
        let t1 = self.theta[0];
        let mut limit = 0.0;
        for (&t, &x) in self.theta.iter().zip(&self.xi) {
            if x == 0.0 {
                continue;
            }
            if t == t1 {
                return true;
            }
            limit += x * x / ((t1 - t) * (t1 - t));
        }
        limit > self.gamma * self.gamma
    }
}

/// Smallest root of `χ` in `(θ₁ − δ0, θ₁)`.
pub fn smallest_root(spec: &SecularSpec) -> Result<SecularRoot> {
    let j0 = spec.xi.iter().position(|&x| x != 0.0).ok_or(Error::NoRoot)?;
    if !spec.has_root() {
        return Err(Error::NoRoot);
    }
    let t1 = spec.theta[0];
    let pole = spec.theta[j0];
    let delta0 = spec.delta0();
    let eps = 1e-14 * (1.0 + t1.abs() + delta0);

    let mut lo = t1 - delta0;
    let mut hi = t1;
    if lo == hi {
        return Ok(SecularRoot {
            lambda: lo,
            iterations: 0,
        });
    }

    // Initial guess from the dominant pole with the remaining terms frozen at the bracket end.
    let shifted = pole - delta0;
    let eta = spec.gamma * spec.gamma
        - spec.theta[j0 + 1..]
            .iter()
            .zip(&spec.xi[j0 + 1..])
            .map(|(&t, &x)| x * x / ((shifted - t) * (shifted - t)))
            .sum::<f64>();
    let mut lambda = if eta > 0.0 {
        pole - spec.xi[j0].abs() / eta.sqrt()
    } else {
        pole - delta0 / 2.0
    };
    if !(lambda > lo && lambda < hi) {
        lambda = 0.5 * (lo + hi);
    }

    for iter in 1..=MAX_ITER {
        let (s2, s3) = spec.sums(lambda);
        let chi = s2 - spec.gamma * spec.gamma;
        if chi == 0.0 {
            return Ok(SecularRoot {
                lambda,
                iterations: iter,
            });
        }
        if chi < 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let d = lambda - pole;
        let a = d * d * d * s3;
        let b = d * s3 - chi;
        let model = if b > 0.0 && a >= 0.0 {
            Some(pole - (a / b).sqrt())
        } else {
            None
        };
        let next = match model {
            Some(c) if c > lo && c < hi => c,
            _ => 0.5 * (lo + hi),
        };
        if (next - lambda).abs() < eps || hi - lo < eps {
            return Ok(SecularRoot {
                lambda: next,
                iterations: iter,
            });
        }
        lambda = next;
    }
    Err(Error::MaxIter {
        what: "secular root finder",
        iterations: MAX_ITER,
    })
}

/// Reduced Lagrangian solution on a Lanczos tridiagonal `T_k`.
#[derive(Debug, Clone)]
pub struct ReducedLgSolution {
    /// Multiplier `μ⁽ᵏ⁾ < λ_min(T_k)`.
    pub mu: f64,
    /// `x⁽ᵏ⁾ = −‖b0‖ (T_k − μI)⁻¹ e₁`.
    pub x: Vec<f64>,
    /// `λ_min(T_k)`.
    pub theta_min: f64,
    pub iterations: usize,
    /// The first eigenvector weight is tiny relative to `‖b0‖`.
    pub near_hard: bool,
}

/// Solves `min λ` s.t. `(T − λI)x = −β₁e₁`, `‖x‖ = γ` for the tridiagonal
/// `T` with diagonal `alpha` and off-diagonal `off`.
pub fn solve_rlgopt(alpha: &[f64], off: &[f64], beta1: f64, gamma: f64) -> Result<ReducedLgSolution> {
    let eig = tridiag_eigen(alpha, off, EigVectors::FirstRow)?;
    let xi: Vec<f64> = eig.vectors.row(0).iter().map(|y| beta1 * y).collect();
    let near_hard = xi[0].abs() < 1e-10 * beta1;
    if near_hard {
        warn!(
            "reduced problem is nearly hard: |xi_1| = {:.3e}, |b0| = {:.3e}",
            xi[0].abs(),
            beta1
        );
    }
    let theta_min = eig.values[0];
    let spec = SecularSpec::new(eig.values, xi, gamma)?;
    let root = smallest_root(&spec)?;
    let mu = root.lambda;
    let mut rhs = vec![0.0; alpha.len()];
    rhs[0] = -beta1;
    let x = tridiag_solve(alpha, off, mu, &rhs)
        .ok_or_else(|| Error::EigFailure("shifted tridiagonal is singular at the secular root".into()))?;
    Ok(ReducedLgSolution {
        mu,
        x,
        theta_min,
        iterations: root.iterations,
        near_hard,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{tridiag_dense, tridiag_mul};
    use proptest::prelude::*;

    /// Plain bisection on `χ` over the initial bracket, run to interval width 1e-13 relative.
    fn bisection_oracle(spec: &SecularSpec) -> f64 {
        let mut lo = spec.theta[0] - spec.delta0();
        let mut hi = spec.theta[0];
        let tol = 1e-13 * (1.0 + spec.theta[0].abs());
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if spec.chi(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn single_pole_root() {
        let spec = SecularSpec::new(vec![0.0], vec![1.0], 1.0).unwrap();
        let r = smallest_root(&spec).unwrap();
        assert!((r.lambda + 1.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_specs_have_no_root() {
        let spec = SecularSpec::new(vec![1.0, 2.0], vec![0.0, 0.0], 1.0).unwrap();
        assert!(matches!(smallest_root(&spec), Err(Error::NoRoot)));
        // ξ₁ = 0 and χ(θ₁⁻) = 0.25 − 1 < 0.
        let spec = SecularSpec::new(vec![1.0, 2.0], vec![0.0, 0.5], 1.0).unwrap();
        assert!(matches!(smallest_root(&spec), Err(Error::NoRoot)));
        // ξ₁ = 0 but χ(θ₁⁻) = 4 − 1 > 0: root exists left of θ₁.
        let spec = SecularSpec::new(vec![1.0, 2.0], vec![0.0, 2.0], 1.0).unwrap();
        let r = smallest_root(&spec).unwrap();
        assert!(r.lambda < 1.0);
        assert!((r.lambda - bisection_oracle(&spec)).abs() < 1e-12);
    }

    #[test]
    fn chebyshev_spectrum_root() {
        // 1000 translated Chebyshev extreme nodes on [1, 100], unit weights, γ² = 0.19.
        let l = 999;
        let (a, b) = (1.0f64, 100.0f64);
        let mut theta: Vec<f64> = (0..=l)
            .map(|j| 0.5 * (b - a) * (j as f64 * std::f64::consts::PI / l as f64).cos() + 0.5 * (a + b))
            .collect();
        theta.sort_by(f64::total_cmp);
        let spec = SecularSpec::new(theta, vec![1.0; l + 1], 0.19f64.sqrt()).unwrap();
        let r = smallest_root(&spec).unwrap();
        assert!((r.lambda + 42.6007).abs() < 5e-4, "root {}", r.lambda);
    }

    #[test]
    fn scalar_rlgopt() {
        let s = solve_rlgopt(&[3.0], &[], 2.0, 0.5).unwrap();
        assert!((s.mu - (3.0 - 4.0)).abs() < 1e-13);
        // x = −β₁/(α − μ) = −γ.
        assert!((s.x[0] + 0.5).abs() < 1e-13);
    }

    #[test]
    fn rlgopt_matches_dense_solve() {
        let alpha = [1.0, 2.5, -0.3, 4.0];
        let off = [0.7, 1.1, 0.4];
        let (beta1, gamma) = (0.8, 0.6);
        let s = solve_rlgopt(&alpha, &off, beta1, gamma).unwrap();
        // Residual of the shifted system and norm constraint.
        let tx = tridiag_mul(&alpha, &off, &s.x);
        let mut r: f64 = 0.0;
        for (i, (t, x)) in tx.iter().zip(&s.x).enumerate() {
            let e = if i == 0 { beta1 } else { 0.0 };
            r = r.max((t - s.mu * x + e).abs());
        }
        assert!(r < 1e-12);
        let nx = s.x.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((nx - gamma).abs() < 1e-10);
        // μ below the spectrum of T, from an independent dense eigensolve.
        let (vals, _) = crate::linalg::sym_eigen_sorted(tridiag_dense(&alpha, &off));
        assert!(s.mu < vals[0]);
        assert!((s.theta_min - vals[0]).abs() < 1e-12);
    }

    fn spec_strategy() -> impl Strategy<Value = SecularSpec> {
        (1usize..=50)
            .prop_flat_map(|l| {
                (
                    prop::collection::vec(-50.0f64..50.0, l),
                    prop::collection::vec(-3.0f64..3.0, l),
                    0.05f64..5.0,
                )
            })
            .prop_filter_map("needs nonzero first weight", |(mut theta, xi, gamma)| {
                theta.sort_by(f64::total_cmp);
                if xi[0].abs() < 1e-3 {
                    return None;
                }
                SecularSpec::new(theta, xi, gamma).ok()
            })
    }

    proptest! {
        #[test]
        fn root_matches_bisection(spec in spec_strategy()) {
            let r = smallest_root(&spec).unwrap();
            let oracle = bisection_oracle(&spec);
            prop_assert!((r.lambda - oracle).abs() <= 1e-12 * (1.0 + spec.theta[0].abs()));
            prop_assert!(r.iterations <= 60);
            prop_assert!(r.lambda < spec.theta[0]);
        }

        #[test]
        fn chi_is_increasing_left_of_spectrum(spec in spec_strategy(), t in 0.001f64..10.0) {
            let lambda = spec.theta[0] - t;
            prop_assert!(spec.chi_prime(lambda) > 0.0);
            prop_assert!(spec.chi(lambda - 1e-3) < spec.chi(lambda));
        }
    }
}
