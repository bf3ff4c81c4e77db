//! Synthetic test problems with prescribed reduced data.
//!
//! Given a diagonal `H` and a vector `g0`, the generator builds `(A, C, b)`
//! whose projection onto `N(Cᵀ)` is exactly `(H, g0)` with radius
//! `γ = √(1 − ζ²)`:
//!
//! ```text
//! C = S2 R,   b = ζ² Rᵀa,   A = S [[H, g0 aᵀ], [a g0ᵀ, ηI]] Sᵀ,   S = [S1 S2]
//! ```
//!
//! with `‖a‖ = 1/ζ` and `η = g0ᵀH⁻¹g0 / ζ²`. Spectra are translated
//! Chebyshev extreme nodes, on which Lanczos converges slowest.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::analysis::BoundInputs;
use crate::error::{Error, Result};
use crate::linalg::sym_eigen_sorted;
use crate::operator::SymOperator;
use crate::problem::{classify, CrqProblem, Feasibility, ProjectedOperator};
use crate::reference::{orthogonal_split, solve_plgopt_dense, DenseReduction, PlgCase, DENSE_CAP};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum G0Kind {
    Ones,
    /// `g0ᵢ = e^{iη}` for `i = 1..n−m`.
    Geometric(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectrumKind {
    /// `n−m` extreme nodes on `[α, β]`.
    ChebyshevExtreme,
    /// `n−m−1` extreme nodes on `[α, β]` followed by one isolated eigenvalue.
    ChebyshevPlusIsolated(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub beta: f64,
    pub zeta: f64,
    pub g0_kind: G0Kind,
    pub spectrum_kind: SpectrumKind,
    pub rng_seed: u64,
}

impl InstanceSpec {
    /// Chebyshev spectrum on `[alpha, beta]` with `g0 = 1` and `ζ = 0.9`.
    pub fn chebyshev(n: usize, m: usize, alpha: f64, beta: f64, seed: u64) -> Self {
        Self {
            n,
            m,
            alpha,
            beta,
            zeta: 0.9,
            g0_kind: G0Kind::Ones,
            spectrum_kind: SpectrumKind::ChebyshevExtreme,
            rng_seed: seed,
        }
    }

    /// Nearly hard problem: nodes on `[2, 1000]`, isolated eigenvalue 1 and
    /// geometrically decaying `g0`, so that `λ*` sits just below `λ_min(H)`.
    pub fn near_hard(n: usize, m: usize, seed: u64) -> Self {
        Self {
            n,
            m,
            alpha: 2.0,
            beta: 1000.0,
            zeta: 0.9,
            g0_kind: G0Kind::Geometric(-5e-3),
            spectrum_kind: SpectrumKind::ChebyshevPlusIsolated(1.0),
            rng_seed: seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.m >= self.n {
            return bad(format!("need m < n, got m = {}, n = {}", self.m, self.n));
        }
        if self.m == 0 {
            return bad("need at least one constraint".into());
        }
        if self.alpha.partial_cmp(&self.beta) != Some(std::cmp::Ordering::Less) {
            return bad(format!("need alpha < beta, got [{}, {}]", self.alpha, self.beta));
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return bad(format!("zeta must lie in (0, 1), got {}", self.zeta));
        }
        let nodes = self.n - self.m - usize::from(matches!(self.spectrum_kind, SpectrumKind::ChebyshevPlusIsolated(_)));
        if nodes < 2 {
            return bad("spectrum needs at least two Chebyshev nodes".into());
        }
        Ok(())
    }

    /// Diagonal of `H` in generation order.
    pub fn h_diagonal(&self) -> Vec<f64> {
        let k = self.n - self.m;
        match self.spectrum_kind {
            SpectrumKind::ChebyshevExtreme => chebyshev_extreme_nodes(k - 1, self.alpha, self.beta),
            SpectrumKind::ChebyshevPlusIsolated(iso) => {
                let mut d = chebyshev_extreme_nodes(k - 2, self.alpha, self.beta);
                d.push(iso);
                d
            }
        }
    }

    pub fn g0(&self) -> DVector<f64> {
        let k = self.n - self.m;
        match self.g0_kind {
            G0Kind::Ones => DVector::from_element(k, 1.0),
            G0Kind::Geometric(eta) => DVector::from_fn(k, |i, _| ((i + 1) as f64 * eta).exp()),
        }
    }

    /// Parses `key=value` lines. Keys: `n`, `m`, `alpha`, `beta`, `zeta`,
    /// `g0_kind` (`ones` or `geometric`), `eta`, `spectrum` (`chebyshev` or
    /// `isolated`), `iso`, `seed`. `#` starts a comment.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut spec = Self::chebyshev(0, 0, 1.0, 100.0, 0);
        let mut g0_kind = "ones".to_string();
        let mut eta = -5e-3;
        let mut spectrum = "chebyshev".to_string();
        let mut iso = 1.0;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                source_name: source_name.to_string(),
                line: lineno + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            fn num<T: FromStr>(v: &str, e: impl Fn(String) -> Error) -> Result<T> {
                v.parse().map_err(|_| e(format!("cannot parse `{v}`")))
            }
            match key {
                "n" => spec.n = num(value, err)?,
                "m" => spec.m = num(value, err)?,
                "alpha" => spec.alpha = num(value, err)?,
                "beta" => spec.beta = num(value, err)?,
                "zeta" => spec.zeta = num(value, err)?,
                "seed" => spec.rng_seed = num(value, err)?,
                "eta" => eta = num(value, err)?,
                "iso" => iso = num(value, err)?,
                "g0_kind" => g0_kind = value.to_ascii_lowercase(),
                "spectrum" => spectrum = value.to_ascii_lowercase(),
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        spec.g0_kind = match g0_kind.as_str() {
            "ones" => G0Kind::Ones,
            "geometric" => G0Kind::Geometric(eta),
            other => return Err(Error::InvalidArgument(format!("unknown g0_kind `{other}`"))),
        };
        spec.spectrum_kind = match spectrum.as_str() {
            "chebyshev" => SpectrumKind::ChebyshevExtreme,
            "isolated" => SpectrumKind::ChebyshevPlusIsolated(iso),
            other => return Err(Error::InvalidArgument(format!("unknown spectrum `{other}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for InstanceSpec {
    /// The `key=value` form read by [`InstanceSpec::parse`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n={}", self.n)?;
        writeln!(f, "m={}", self.m)?;
        writeln!(f, "alpha={}", self.alpha)?;
        writeln!(f, "beta={}", self.beta)?;
        writeln!(f, "zeta={}", self.zeta)?;
        match self.g0_kind {
            G0Kind::Ones => writeln!(f, "g0_kind=ones")?,
            G0Kind::Geometric(eta) => writeln!(f, "g0_kind=geometric\neta={eta}")?,
        }
        match self.spectrum_kind {
            SpectrumKind::ChebyshevExtreme => writeln!(f, "spectrum=chebyshev")?,
            SpectrumKind::ChebyshevPlusIsolated(iso) => writeln!(f, "spectrum=isolated\niso={iso}")?,
        }
        writeln!(f, "seed={}", self.rng_seed)
    }
}

/// The `l + 1` extreme points of `𝒯_l` mapped affinely onto `[alpha, beta]`,
/// in decreasing order. Endpoints are exact.
pub fn chebyshev_extreme_nodes(l: usize, alpha: f64, beta: f64) -> Vec<f64> {
    let omega = (beta - alpha) / 2.0;
    let tau = -(alpha + beta) / (beta - alpha);
    (0..=l)
        .map(|j| {
            if j == 0 {
                beta
            } else if j == l {
                alpha
            } else {
                omega * ((j as f64 * std::f64::consts::PI / l as f64).cos() - tau)
            }
        })
        .collect()
}

/// The generated matrix, applied as `x ↦ S M Sᵀx` without forming `A`.
#[derive(Debug, Clone)]
pub struct StructuredOp {
    /// `[S1 S2]`.
    s: DMatrix<f64>,
    h: DVector<f64>,
    g0: DVector<f64>,
    a: DVector<f64>,
    eta: f64,
}

impl StructuredOp {
    fn k(&self) -> usize {
        self.h.len()
    }

    pub fn s1(&self) -> DMatrix<f64> {
        self.s.columns(0, self.k()).into_owned()
    }

    pub fn s2(&self) -> DMatrix<f64> {
        let k = self.k();
        self.s.columns(k, self.s.ncols() - k).into_owned()
    }

    /// `A₂₂ = ηI` scale.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn coupling_vector(&self) -> &DVector<f64> {
        &self.a
    }

    /// The middle factor `M`.
    pub fn middle(&self) -> DMatrix<f64> {
        let (n, k) = (self.s.nrows(), self.k());
        let mut m = DMatrix::zeros(n, n);
        for i in 0..k {
            m[(i, i)] = self.h[i];
        }
        let a12 = &self.g0 * self.a.transpose();
        m.view_mut((0, k), (k, n - k)).copy_from(&a12);
        m.view_mut((k, 0), (n - k, k)).copy_from(&a12.transpose());
        for i in k..n {
            m[(i, i)] = self.eta;
        }
        m
    }
}

impl SymOperator for StructuredOp {
    fn dim(&self) -> usize {
        self.s.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let k = self.k();
        let x = DVector::from_column_slice(x);
        let z = self.s.tr_mul(&x);
        let (p, q) = (z.rows(0, k), z.rows(k, z.len() - k));
        let aq = self.a.dot(&q);
        let gp = self.g0.dot(&p);
        let mut w = DVector::zeros(z.len());
        for i in 0..k {
            w[i] = self.h[i] * p[i] + self.g0[i] * aq;
        }
        for i in 0..q.len() {
            w[k + i] = self.a[i] * gp + self.eta * q[i];
        }
        let out = &self.s * w;
        y.copy_from_slice(out.as_slice());
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let a = &self.s * self.middle() * self.s.transpose();
        (&a + a.transpose()) * 0.5
    }
}

/// Exact reduced data and reference solution of a generated problem.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub h: DVector<f64>,
    pub g0: DVector<f64>,
    pub gamma: f64,
    pub zeta: f64,
    pub lambda_star: f64,
    pub case: PlgCase,
    pub theta_min: f64,
    /// Second smallest eigenvalue of `H`.
    pub theta_2: f64,
    pub theta_max: f64,
    pub kappa: f64,
    pub kappa_plus: f64,
    /// Minimizer in `N(Cᵀ)` coordinates.
    pub y_star: DVector<f64>,
    pub n0: DVector<f64>,
    pub v_star: DVector<f64>,
    pub objective_star: f64,
    pub op: Arc<StructuredOp>,
}

impl GroundTruth {
    pub fn bound_inputs(&self) -> BoundInputs {
        BoundInputs {
            theta_min: self.theta_min,
            theta_2: self.theta_2,
            theta_max: self.theta_max,
            lambda_star: self.lambda_star,
            gamma: self.gamma,
            norm_b0: self.g0.norm(),
        }
    }
}

/// Builds the problem and its reference solution.
pub fn generate(spec: &InstanceSpec) -> Result<(CrqProblem, GroundTruth)> {
    spec.validate()?;
    let (n, m) = (spec.n, spec.m);
    let h = DVector::from_vec(spec.h_diagonal());
    let g0 = spec.g0();
    if h.iter().any(|&d| d == 0.0) {
        return Err(Error::SingularH);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut a = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
    a *= 1.0 / (spec.zeta * a.norm());
    let c = DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));

    let (s1, s2) = orthogonal_split(&c);
    let r = s2.tr_mul(&c);
    let zeta2 = spec.zeta * spec.zeta;
    let b = r.tr_mul(&a) * zeta2;
    let eta = g0.iter().zip(h.iter()).map(|(g, d)| g * g / d).sum::<f64>() / zeta2;

    let mut s = DMatrix::zeros(n, n);
    s.columns_mut(0, n - m).copy_from(&s1);
    s.columns_mut(n - m, m).copy_from(&s2);
    let op = Arc::new(StructuredOp {
        s,
        h: h.clone(),
        g0: g0.clone(),
        a: a.clone(),
        eta,
    });
    let problem = CrqProblem::new(op.clone(), c, b)?;

    let gamma = (1.0 - zeta2).sqrt();
    let red = DenseReduction::from_parts(DMatrix::from_diagonal(&h), g0.clone());
    let sol = solve_plgopt_dense(&red, gamma);
    let theta = &red.theta;
    let (theta_min, theta_2, theta_max) = (theta[0], theta[1], theta[theta.len() - 1]);
    let lambda_star = sol.lambda;
    // n0 = S2 R⁻ᵀ b = ζ² S2 a.
    let n0 = &s2 * &a * zeta2;
    let v_star = &n0 + &s1 * &sol.y;
    let objective_star = problem.objective(&v_star);
    let truth = GroundTruth {
        h,
        g0,
        gamma,
        zeta: spec.zeta,
        lambda_star,
        case: sol.case,
        theta_min,
        theta_2,
        theta_max,
        kappa: (theta_max - lambda_star) / (theta_min - lambda_star),
        kappa_plus: (theta_max - lambda_star) / (theta_2 - lambda_star),
        y_star: sol.y,
        n0,
        v_star,
        objective_star,
        op,
    };
    Ok((problem, truth))
}

/// Residuals of the identities a generated problem must satisfy.
#[derive(Debug, Clone)]
pub struct RoundtripReport {
    /// `‖S1ᵀAS1 − H‖ / ‖H‖` with `A` formed densely.
    pub h_residual: f64,
    /// `‖S1ᵀb0 − g0‖ / ‖g0‖` with `b0` from the problem's own projection.
    pub g0_residual: f64,
    /// `|γ − √(1 − ζ²)|` with `γ` from the problem's own feasibility test.
    pub gamma_residual: f64,
    /// `λ_min(A) / ‖A‖`, checked when `H ≻ 0`.
    pub min_eig_a: Option<f64>,
}

/// Recomputes the reduced data from `(A, C, b)` alone and compares with the truth.
pub fn verify_roundtrip(problem: &CrqProblem, truth: &GroundTruth) -> Result<RoundtripReport> {
    if problem.n() > DENSE_CAP {
        return Err(Error::TooLarge {
            n: problem.n(),
            cap: DENSE_CAP,
        });
    }
    let s1 = truth.op.s1();
    let a = problem.a().to_dense();
    let h_dense = s1.tr_mul(&(&a * &s1));
    let h_true = DMatrix::from_diagonal(&truth.h);
    let h_residual = (&h_dense - &h_true).norm() / h_true.norm();

    let proj = ProjectedOperator::new(problem)?;
    let setup = match classify(problem, &proj)? {
        Feasibility::Interior(s) => s,
        other => return Err(Error::VerificationFailed(format!("expected interior feasibility, got {other:?}"))),
    };
    let g0_residual = (s1.tr_mul(&setup.b0) - &truth.g0).norm() / truth.g0.norm();
    let gamma_residual = (setup.gamma - (1.0 - truth.zeta * truth.zeta).sqrt()).abs();

    let min_eig_a = if truth.theta_min > 0.0 {
        let (vals, _) = sym_eigen_sorted(a.clone());
        let scale = vals.amax();
        Some(vals[0] / scale)
    } else {
        None
    };

    let report = RoundtripReport {
        h_residual,
        g0_residual,
        gamma_residual,
        min_eig_a,
    };
    if h_residual > 1e-10 {
        return Err(Error::VerificationFailed(format!("S1ᵀAS1 differs from H by {h_residual:.3e}")));
    }
    if g0_residual > 1e-10 {
        return Err(Error::VerificationFailed(format!("S1ᵀb0 differs from g0 by {g0_residual:.3e}")));
    }
    if gamma_residual > 1e-12 {
        return Err(Error::VerificationFailed(format!("γ off by {gamma_residual:.3e}")));
    }
    if let Some(e) = min_eig_a {
        if e < -1e-10 {
            return Err(Error::VerificationFailed(format!("A has a negative eigenvalue, λ_min/‖A‖ = {e:.3e}")));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::chebyshev_t;

    #[test]
    fn node_endpoints() {
        assert_eq!(chebyshev_extreme_nodes(1, 0.0, 1.0), vec![1.0, 0.0]);
        let n = chebyshev_extreme_nodes(2, -1.0, 1.0);
        assert_eq!(n[0], 1.0);
        assert!(n[1].abs() < 1e-15);
        assert_eq!(n[2], -1.0);
    }

    #[test]
    fn nodes_are_chebyshev_extrema() {
        let (alpha, beta) = (1.0, 100.0);
        let nodes = chebyshev_extreme_nodes(999, alpha, beta);
        assert_eq!(nodes.len(), 1000);
        assert_eq!(nodes.iter().cloned().fold(f64::INFINITY, f64::min), 1.0);
        assert_eq!(nodes.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 100.0);
        for x in nodes {
            let t = (2.0 * x - alpha - beta) / (beta - alpha);
            assert!((chebyshev_t(999, t).abs() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn small_instance_round_trips() {
        let spec = InstanceSpec::chebyshev(100, 10, 1.0, 100.0, 3);
        let (p, t) = generate(&spec).unwrap();
        let rep = verify_roundtrip(&p, &t).unwrap();
        assert!(rep.min_eig_a.unwrap() >= -1e-10);
        assert!((t.gamma - 0.19f64.sqrt()).abs() < 1e-15);
        assert!((p.constraint_residual(&t.v_star)) < 1e-12);
        assert!((t.v_star.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn near_hard_round_trips() {
        let spec = InstanceSpec::near_hard(120, 20, 5);
        let (p, t) = generate(&spec).unwrap();
        verify_roundtrip(&p, &t).unwrap();
        assert_eq!(t.theta_min, 1.0);
        assert_eq!(t.theta_2, 2.0);
    }

    #[test]
    fn schur_complement_identity() {
        let spec = InstanceSpec::chebyshev(60, 7, 1.0, 10.0, 11);
        let (_, t) = generate(&spec).unwrap();
        let m = t.op.middle();
        let k = t.h.len();
        let a12 = m.view((0, k), (k, 7)).into_owned();
        let a22 = m.view((k, k), (7, 7)).into_owned();
        let hinv = DMatrix::from_diagonal(&t.h.map(|d| 1.0 / d));
        let lhs = &a22 - a12.transpose() * &hinv * &a12;
        let a = t.op.coupling_vector();
        let ghg = t.g0.dot(&(&hinv * &t.g0));
        let rhs = (DMatrix::identity(7, 7) * a.norm_squared() - a * a.transpose()) * ghg;
        assert!((&lhs - &rhs).norm() <= 1e-10 * rhs.norm());
    }

    #[test]
    fn same_seed_same_problem() {
        let spec = InstanceSpec::chebyshev(50, 5, 1.0, 100.0, 42);
        let (p1, _) = generate(&spec).unwrap();
        let (p2, _) = generate(&spec).unwrap();
        assert_eq!(p1.c(), p2.c());
        assert_eq!(p1.b(), p2.b());
        let probe = crate::linalg::seeded_normal_vector(50, 1);
        assert_eq!(p1.a().apply_vec(&probe), p2.a().apply_vec(&probe));
    }

    #[test]
    fn structured_apply_matches_dense() {
        let spec = InstanceSpec::near_hard(40, 4, 9);
        let (p, t) = generate(&spec).unwrap();
        let x = crate::linalg::seeded_normal_vector(40, 2);
        let dense = t.op.to_dense() * &x;
        assert!((p.a().apply_vec(&x) - dense).norm() < 1e-10 * x.norm() * t.op.to_dense().norm());
    }

    #[test]
    fn spec_file_round_trip() {
        let spec = InstanceSpec::near_hard(300, 30, 17);
        let text = spec.to_string();
        assert_eq!(InstanceSpec::parse(&text, "spec").unwrap(), spec);
        let err = InstanceSpec::parse("n=10\nfoo=1\n", "spec").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = InstanceSpec::chebyshev(10, 2, 1.0, 100.0, 0);
        spec.zeta = 1.0;
        assert!(spec.validate().is_err());
        spec.zeta = 0.5;
        spec.alpha = 200.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn zero_eigenvalue_is_singular() {
        let spec = InstanceSpec::chebyshev(10, 2, 0.0, 1.0, 0);
        assert!(matches!(generate(&spec), Err(Error::SingularH)));
    }
}
