//! Second-order linear ODEs A(t)x'' + B(t;l)x' + D(t;l)x = f(t;l) whose
//! leading coefficient has a simple zero at t0 inside the domain, with a
//! complex parameter l entering B affinely and D, f polynomially.
//!
//! At such a point the equation has a one-parameter family of solutions
//! analytic at t0; the recursion for their Taylor coefficients divides by
//! (n+1)(n A'(t0) + B(t0;l)) at each order, so it breaks exactly when the
//! parameter makes one of those divisors vanish (the bad set). This crate
//! screens for bad orders ([`indicial`]), builds the analytic branch as a
//! Taylor series ([`series_solution`]), extends it by adaptive
//! integration away from the singular point ([`solve_from_singular`]),
//! and evaluates the resonance-clearing polynomial ([`psi1`]) whose zero
//! set on a disk is exactly the bad set there.

use num_complex::Complex64;
use std::sync::Arc;
use thiserror::Error;

mod series;
mod solve;

pub use series::{series_solution, Normalization, SeriesSolution};
pub use solve::{max_equation_residual, solve_from_singular, SingularSolve};

/// Relative tolerance deciding bad-set membership of a divisor.
pub const BAD_REL_TOL: f64 = 1e-9;
/// Divisors below this relative size degrade series accuracy enough to
/// warrant a warning even though they are not flagged bad.
pub const NEAR_BAD_REL_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SingularOdeError {
    #[error("leading coefficient does not vanish simply at t0: A(t0) = {a0:.3e}, A'(t0) = {a1:.3e}")]
    NotSimpleZero { a0: f64, a1: f64 },
    #[error(
        "order {n} is resonant: |{n}*A'(t0) + B(t0)| = {divisor_abs:.3e} \
         (relative {rel:.3e}); the parameter lies in the bad set"
    )]
    BadOrder { n: u32, divisor_abs: f64, rel: f64 },
    #[error(
        "forcing does not vanish to order {n} at t0 (|coefficient {idx}| = {mag:.3e}); \
         the vanishing normalization is inconsistent"
    )]
    ForcingNotVanishing { n: u32, idx: u32, mag: f64 },
    #[error("guard radius {guard:.3e} does not fit inside the integration span {span:.3e}")]
    BadGuard { guard: f64, span: f64 },
    #[error("leading coefficient vanishes inside the integration range at t = {t:.6}")]
    InteriorZero { t: f64 },
    #[error(
        "series and integrator disagree by {gap:.3e} (tolerance {tol:.3e}) \
         at the guard handoff, radius {guard:.3e}"
    )]
    Handoff { gap: f64, tol: f64, guard: f64 },
    #[error("integration failed: {0}")]
    Ode(String),
}

/// Real coefficient function of t: evaluable anywhere on the domain and
/// Taylor-expandable at the problem's singular point.
pub trait Coeff: Send + Sync {
    fn eval(&self, t: f64) -> f64;
    /// Taylor coefficients c_0..c_order at t0: f(t) = sum c_i (t - t0)^i.
    /// Implementations may support only the singular point they were
    /// built for and panic elsewhere.
    fn taylor(&self, t0: f64, order: usize) -> Vec<f64>;
}

pub type CoeffRef = Arc<dyn Coeff>;

/// Polynomial sum c_i (t - center)^i; `taylor` recenters exactly.
#[derive(Debug, Clone)]
pub struct Poly {
    pub center: f64,
    pub coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(center: f64, coeffs: Vec<f64>) -> Self {
        Poly { center, coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Poly { center: 0.0, coeffs: vec![c] }
    }
}

impl Coeff for Poly {
    fn eval(&self, t: f64) -> f64 {
        let u = t - self.center;
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }

    fn taylor(&self, t0: f64, order: usize) -> Vec<f64> {
        // Horner-style Taylor shift: after pass k, w[k] is the
        // coefficient of (t - t0)^k.
        let s = t0 - self.center;
        let n = self.coeffs.len();
        let mut w = self.coeffs.clone();
        for k in 0..n {
            for i in (k..n.saturating_sub(1)).rev() {
                w[i] += s * w[i + 1];
            }
        }
        w.resize(order + 1, 0.0);
        w
    }
}

/// Coefficient given by an evaluation closure plus a precomputed Taylor
/// jet at one anchor point (the singular location of the problem it
/// belongs to).
pub struct AnchoredFn<F: Fn(f64) -> f64 + Send + Sync> {
    pub f: F,
    pub anchor: f64,
    /// Taylor coefficients at `anchor`.
    pub jet: Vec<f64>,
}

impl<F: Fn(f64) -> f64 + Send + Sync> Coeff for AnchoredFn<F> {
    fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    fn taylor(&self, t0: f64, order: usize) -> Vec<f64> {
        assert!(
            (t0 - self.anchor).abs() <= 1e-12 * (1.0 + self.anchor.abs()),
            "jet anchored at {} queried at {}",
            self.anchor,
            t0
        );
        assert!(
            self.jet.len() > order,
            "jet carries {} coefficients, order {} requested",
            self.jet.len(),
            order
        );
        self.jet[..=order].to_vec()
    }
}

/// A(t)x'' + B(t;l)x' + D(t;l)x = f(t;l) with A(t0) = 0, A'(t0) != 0,
/// B = b_tilde + l*b_hat, D = sum_j l^j d[j], f = sum_j l^j f[j].
#[derive(Clone)]
pub struct SingularOdeProblem {
    pub a: CoeffRef,
    pub b_tilde: CoeffRef,
    pub b_hat: CoeffRef,
    pub d: Vec<CoeffRef>,
    pub f: Vec<CoeffRef>,
    pub t0: f64,
    pub lambda: Complex64,
    pub interval: (f64, f64),
}

impl SingularOdeProblem {
    /// Same coefficients at another parameter value.
    pub fn with_lambda(&self, lambda: Complex64) -> Self {
        let mut p = self.clone();
        p.lambda = lambda;
        p
    }

    pub fn b_at(&self, t: f64) -> Complex64 {
        Complex64::from(self.b_tilde.eval(t)) + self.lambda * self.b_hat.eval(t)
    }

    pub fn d_at(&self, t: f64) -> Complex64 {
        poly_in_lambda(&self.d, self.lambda, t)
    }

    pub fn f_at(&self, t: f64) -> Complex64 {
        poly_in_lambda(&self.f, self.lambda, t)
    }

    /// A'(t0), after checking that A vanishes simply there.
    pub fn a_prime_at_t0(&self) -> Result<f64, SingularOdeError> {
        let jet = self.a.taylor(self.t0, 1);
        let (a0, a1) = (jet[0], jet[1]);
        if a1 == 0.0 || a0.abs() > 1e-10 * (a1.abs() + 1.0) {
            return Err(SingularOdeError::NotSimpleZero { a0, a1 });
        }
        Ok(a1)
    }
}

fn poly_in_lambda(terms: &[CoeffRef], lambda: Complex64, t: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    let mut pow = Complex64::new(1.0, 0.0);
    for (j, c) in terms.iter().enumerate() {
        if j > 0 {
            pow *= lambda;
        }
        acc += pow * c.eval(t);
    }
    acc
}

/// Outcome of screening the recursion divisors n A'(t0) + B(t0;l) for
/// n in [0, n_max].
#[derive(Debug, Clone)]
pub struct IndicialData {
    /// B(t0;l) / A'(t0).
    pub ratio: Complex64,
    /// Orders whose divisor vanishes to relative tolerance [`BAD_REL_TOL`].
    pub bad_orders: Vec<u32>,
    pub is_bad: bool,
    /// Orders whose divisor is small (relative below
    /// [`NEAR_BAD_REL_TOL`]) without being flagged bad; series accuracy
    /// degrades near them.
    pub near_bad_orders: Vec<u32>,
}

/// Screen the divisor n A'(t0) + B(t0;l) over n in [0, n_max]. The
/// analytic branch through t0 exists iff no order is bad.
pub fn indicial(problem: &SingularOdeProblem, n_max: u32) -> IndicialData {
    let a1 = problem.a.taylor(problem.t0, 1)[1];
    let b0 = problem.b_at(problem.t0);
    let ratio = b0 / a1;
    let mut bad_orders = Vec::new();
    let mut near_bad_orders = Vec::new();
    for n in 0..=n_max {
        let div = (n as f64 * a1 + b0).norm();
        let scale = (n as f64 * a1).abs() + b0.norm() + 1.0;
        if div < BAD_REL_TOL * scale {
            bad_orders.push(n);
        } else if div < NEAR_BAD_REL_TOL * scale {
            near_bad_orders.push(n);
        }
    }
    IndicialData { ratio, is_bad: !bad_orders.is_empty(), bad_orders, near_bad_orders }
}

/// The resonance-clearing polynomial: the product of the first `n_terms`
/// divisors, prod_{j<n_terms} (j A'(t0) + B(t0;l)), when the parameter
/// actually couples to B at t0; identically 1 when it does not (then no
/// divisor depends on l and the bad set is empty by the non-degeneracy
/// hypothesis). Its zeros on any disk are exactly the bad parameters
/// whose resonant order is below `n_terms`.
pub fn psi1(problem: &SingularOdeProblem, n_terms: usize, lambda: Complex64) -> Complex64 {
    assert!(n_terms >= 1, "the product needs at least one factor");
    let a1 = problem.a.taylor(problem.t0, 1)[1];
    let bt0 = problem.b_tilde.eval(problem.t0);
    let bh0 = problem.b_hat.eval(problem.t0);
    if bh0.abs() <= 1e-14 * (bt0.abs() + a1.abs() + 1.0) {
        return Complex64::new(1.0, 0.0);
    }
    (0..n_terms)
        .map(|j| Complex64::from(j as f64 * a1 + bt0) + lambda * bh0)
        .product()
}

/// Bad parameters with resonant order n in [0, n_max]:
/// l_n = -(n A'(t0) + b_tilde(t0)) / b_hat(t0). Empty when the parameter
/// does not couple to B at t0.
pub fn bad_lambdas(problem: &SingularOdeProblem, n_max: u32) -> Vec<Complex64> {
    let a1 = problem.a.taylor(problem.t0, 1)[1];
    let bt0 = problem.b_tilde.eval(problem.t0);
    let bh0 = problem.b_hat.eval(problem.t0);
    if bh0.abs() <= 1e-14 * (bt0.abs() + a1.abs() + 1.0) {
        return Vec::new();
    }
    (0..=n_max).map(|n| Complex64::from(-(n as f64 * a1 + bt0) / bh0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_b_problem(b0: f64) -> SingularOdeProblem {
        SingularOdeProblem {
            a: Arc::new(Poly::new(0.0, vec![0.0, 1.0])),
            b_tilde: Arc::new(Poly::constant(b0)),
            b_hat: Arc::new(Poly::constant(0.0)),
            d: vec![],
            f: vec![],
            t0: 0.0,
            lambda: Complex64::new(0.0, 0.0),
            interval: (0.0, 2.0),
        }
    }

    #[test]
    fn indicial_clears_positive_ratio() {
        // A = t, B = 2: divisors n + 2 never vanish for n >= 0.
        let data = indicial(&constant_b_problem(2.0), 30);
        assert_eq!(data.ratio, Complex64::new(2.0, 0.0));
        assert!(data.bad_orders.is_empty());
        assert!(!data.is_bad);
        assert!(data.near_bad_orders.is_empty());
    }

    #[test]
    fn indicial_flags_integer_resonance() {
        // A = t, B = -3: divisor vanishes at n = 3 only.
        let data = indicial(&constant_b_problem(-3.0), 30);
        assert_eq!(data.bad_orders, vec![3]);
        assert!(data.is_bad);
    }

    #[test]
    fn indicial_respects_lambda_coupling() {
        // A = t, B = 1 + l: at l = -4 the order-3 divisor 3 + B vanishes.
        let mut p = constant_b_problem(1.0);
        p.b_hat = Arc::new(Poly::constant(1.0));
        p.lambda = Complex64::new(-4.0, 0.0);
        let data = indicial(&p, 10);
        assert_eq!(data.bad_orders, vec![3]);
    }

    #[test]
    fn poly_taylor_recenters_exactly() {
        let p = Poly::new(1.0, vec![2.0, -3.0, 0.5, 1.25]);
        let shifted = p.taylor(0.25, 6);
        for &t in &[-0.5, 0.0, 0.3, 1.7] {
            let direct = p.eval(t);
            let u: f64 = t - 0.25;
            let via: f64 = shifted.iter().rev().fold(0.0, |acc, &c| acc * u + c);
            assert!((direct - via).abs() < 1e-12 * (1.0 + direct.abs()));
        }
        assert_eq!(shifted.len(), 7);
        assert_eq!(&shifted[4..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn anchored_fn_serves_its_jet() {
        let c = AnchoredFn { f: |t: f64| t.exp(), anchor: 0.0, jet: vec![1.0, 1.0, 0.5] };
        assert_eq!(c.eval(0.3), 0.3_f64.exp());
        assert_eq!(c.taylor(0.0, 2), vec![1.0, 1.0, 0.5]);
    }

    #[test]
    #[should_panic(expected = "jet carries")]
    fn anchored_fn_rejects_short_jet() {
        let c = AnchoredFn { f: |_| 0.0, anchor: 0.0, jet: vec![1.0] };
        let _ = c.taylor(0.0, 5);
    }

    #[test]
    fn psi1_is_one_without_lambda_coupling() {
        let p = constant_b_problem(2.0);
        for &l in &[0.0, -3.5, 17.0] {
            assert_eq!(psi1(&p, 8, Complex64::new(l, 0.0)), Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn psi1_vanishes_exactly_on_the_bad_set() {
        // A = t, B = 0.7 + l * 1.3.
        let mut p = constant_b_problem(0.7);
        p.b_hat = Arc::new(Poly::constant(1.3));
        let n = 6;
        let bad = bad_lambdas(&p, n - 1);
        assert_eq!(bad.len(), n as usize);
        for &l in &bad {
            let val = psi1(&p, n as usize, l).norm();
            assert!(val < 1e-10, "psi1 at a bad parameter: {val:.3e}");
            let data = indicial(&p.with_lambda(l), n);
            assert!(data.is_bad);
        }
        // Midpoints between consecutive bad parameters stay well away
        // from zero, so the sampled zero set is exactly the bad set.
        for w in bad.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            assert!(psi1(&p, n as usize, mid).norm() > 1e-2);
            assert!(!indicial(&p.with_lambda(mid), n).is_bad);
        }
    }

    #[test]
    fn psi1_degree_matches_factor_count() {
        let mut p = constant_b_problem(0.7);
        p.b_hat = Arc::new(Poly::constant(1.3));
        let n = 5;
        // Leading behavior: psi1(l)/l^n -> b_hat(t0)^n as |l| grows.
        let l = Complex64::new(1e6, 0.0);
        let lead = psi1(&p, n, l) / l.powi(n as i32);
        let expect = 1.3_f64.powi(n as i32);
        assert!((lead.re - expect).abs() < 1e-3 * expect);
        assert!(lead.im.abs() < 1e-12 * expect);
    }
}
