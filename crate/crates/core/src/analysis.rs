//! Convergence bounds for the Lanczos iterates and error histories against
//! a reference solution.
//!
//! With `κ = (θmax − λ*)/(θmin − λ*)` and `Γ = (√κ + 1)/(√κ − 1)`, the
//! Chebyshev bounds decay like `[Γᵏ + Γ⁻ᵏ]⁻¹`. The sharper variant replaces
//! `κ` by `κ₊ = (θmax − λ*)/(θ₂ − λ*)`, paying a prefactor
//! `(θmax − θmin)/(θmin − λ*)`. All powers of `Γ` are evaluated in the log
//! domain.

use std::io::Write;

use nalgebra::DVector;

use crate::driver::CheckRecord;
use crate::error::Result;
use crate::operator::SymOperator;

/// Spectral data entering the bounds.
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs {
    pub theta_min: f64,
    pub theta_2: f64,
    pub theta_max: f64,
    pub lambda_star: f64,
    pub gamma: f64,
    pub norm_b0: f64,
}

/// Bounds on `h(v⁽ᵏ⁾) − h(v*)`, `‖v⁽ᵏ⁾ − v*‖` and `|μ⁽ᵏ⁾ − λ*|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

impl Bounds {
    const ZERO: Bounds = Bounds {
        b1: 0.0,
        b2: 0.0,
        b3: 0.0,
    };
}

/// `κ` values this close to 1 make `Γ` infinite; the Krylov space is then exact after one step.
const KAPPA_GUARD: f64 = 1.0 + 1e-14;

impl BoundInputs {
    /// `‖H − λ*I‖₂`.
    pub fn norm_h_shift(&self) -> f64 {
        (self.theta_min - self.lambda_star)
            .abs()
            .max((self.theta_max - self.lambda_star).abs())
    }

    pub fn kappa(&self) -> f64 {
        (self.theta_max - self.lambda_star) / (self.theta_min - self.lambda_star)
    }

    pub fn kappa_plus(&self) -> f64 {
        (self.theta_max - self.lambda_star) / (self.theta_2 - self.lambda_star)
    }

    /// `(θmax − θmin)/(θmin − λ*)`.
    pub fn remark_prefactor(&self) -> f64 {
        (self.theta_max - self.theta_min) / (self.theta_min - self.lambda_star)
    }
}

/// `ln Γ_κ`.
pub fn log_gamma_factor(kappa: f64) -> f64 {
    let s = kappa.sqrt();
    ((s + 1.0) / (s - 1.0)).ln()
}

/// `[Γᵏ + Γ⁻ᵏ]⁻¹` for `ln Γ = lg`, without overflow.
pub fn inv_cheb_sum(k: f64, lg: f64) -> f64 {
    let t = (-k * lg).exp();
    t / (1.0 + t * t)
}

/// Chebyshev polynomial of the first kind, `𝒯_k(x)`.
pub fn chebyshev_t(k: usize, x: f64) -> f64 {
    if x.abs() <= 1.0 {
        (k as f64 * x.acos()).cos()
    } else {
        let r = x.abs() + (x * x - 1.0).sqrt();
        let v = 0.5 * (r.powi(k as i32) + r.powi(-(k as i32)));
        if x < 0.0 && k % 2 == 1 {
            -v
        } else {
            v
        }
    }
}

fn cheb_bounds(inp: &BoundInputs, kappa_rate: f64, exponent: f64, prefactor: f64) -> Bounds {
    let lg = log_gamma_factor(kappa_rate);
    let s1 = inv_cheb_sum(exponent, lg);
    let s2 = s1 * s1;
    let nh = inp.norm_h_shift();
    let sk = inp.kappa().sqrt();
    Bounds {
        b1: prefactor * 16.0 * inp.gamma * inp.gamma * nh * s2,
        b2: prefactor * 4.0 * inp.gamma * sk * s1,
        b3: prefactor * (16.0 * nh * s2 + 4.0 / inp.gamma * inp.norm_b0 * sk * s1),
    }
}

/// Chebyshev bounds with rate `Γ_κ` after `k` steps.
pub fn theorem43_bounds(inp: &BoundInputs, k: usize) -> Bounds {
    if inp.kappa() <= KAPPA_GUARD {
        return Bounds::ZERO;
    }
    cheb_bounds(inp, inp.kappa(), k as f64, 1.0)
}

/// Deflated bounds with rate `Γ_{κ₊}` and exponent `k − 1`. The prefactor
/// enters linearly in every bound.
pub fn remark42_bounds(inp: &BoundInputs, k: usize) -> Bounds {
    if inp.kappa() <= KAPPA_GUARD || inp.kappa_plus() <= KAPPA_GUARD {
        return Bounds::ZERO;
    }
    let e = k.saturating_sub(1) as f64;
    cheb_bounds(inp, inp.kappa_plus(), e, inp.remark_prefactor())
}

/// Errors of one iterate against the reference solution.
#[derive(Debug, Clone, Copy)]
pub struct ErrorRow {
    pub k: usize,
    /// `|h(v⁽ᵏ⁾) − h(v*)| / |h(v*)|`.
    pub err1: f64,
    /// `‖v⁽ᵏ⁾ − v*‖`, NaN when the iterate was not recorded.
    pub err2: f64,
    /// `|μ⁽ᵏ⁾ − λ*| / |λ*|`.
    pub err3: f64,
}

/// Reference solution for [`error_history`].
pub struct Reference<'a> {
    pub v: &'a DVector<f64>,
    pub objective: f64,
    pub lambda: f64,
    pub a: &'a dyn SymOperator,
}

/// Per-check errors. When iterates were recorded, the objective gap is
/// evaluated as `dᵀ(A − λ*I)d` with `d = v⁽ᵏ⁾ − v*`, which equals
/// `h(v⁽ᵏ⁾) − h(v*)` for feasible iterates and avoids cancellation.
pub fn error_history(history: &[CheckRecord], reference: &Reference<'_>) -> Vec<ErrorRow> {
    let hs = reference.objective.abs();
    let ls = reference.lambda.abs();
    history
        .iter()
        .map(|rec| {
            let (gap, err2) = match &rec.v {
                Some(v) => {
                    let d = v - reference.v;
                    let ad = reference.a.apply_vec(&d);
                    ((d.dot(&ad) - reference.lambda * d.norm_squared()).abs(), d.norm())
                }
                None => ((rec.objective - reference.objective).abs(), f64::NAN),
            };
            ErrorRow {
                k: rec.k,
                err1: gap / hs,
                err2,
                err3: (rec.mu - reference.lambda).abs() / ls,
            }
        })
        .collect()
}

/// One row of the error/bound table.
#[derive(Debug, Clone, Copy)]
pub struct BoundRow {
    pub errors: ErrorRow,
    pub theorem: Bounds,
    pub remark: Bounds,
}

pub fn bound_table(errors: &[ErrorRow], inp: &BoundInputs) -> Vec<BoundRow> {
    errors
        .iter()
        .map(|e| BoundRow {
            errors: *e,
            theorem: theorem43_bounds(inp, e.k),
            remark: remark42_bounds(inp, e.k),
        })
        .collect()
}

/// Writes `k, err1, err2, err3, b1, b2, b3, b1p, b2p, b3p`. The bounds are
/// scaled like the errors they bound: `b1` by `1/|h*|` and `b3` by `1/|λ*|`.
pub fn write_bounds_csv<W: Write>(rows: &[BoundRow], h_star: f64, lambda_star: f64, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "err1", "err2", "err3", "b1", "b2", "b3", "b1p", "b2p", "b3p"])?;
    let (hs, ls) = (h_star.abs(), lambda_star.abs());
    for r in rows {
        let e = &r.errors;
        let vals = [
            e.err1,
            e.err2,
            e.err3,
            r.theorem.b1 / hs,
            r.theorem.b2,
            r.theorem.b3 / ls,
            r.remark.b1 / hs,
            r.remark.b2,
            r.remark.b3 / ls,
        ];
        let mut rec = vec![e.k.to_string()];
        rec.extend(vals.iter().map(|v| format!("{v:.6e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
