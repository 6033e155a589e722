//! Taylor expansion of the analytic branch at the simple zero of the
//! leading coefficient.
//!
//! Writing x = sum c_n (t - t0)^n and matching powers in
//! A x'' + B x' + D x = f gives, at order n,
//!
//!   (n+1)(n a_1 + b_0) c_{n+1}
//!     = f_n - sum_{i>=2} a_i (n+2-i)(n+1-i) c_{n+2-i}
//!           - sum_{i>=1} b_i (n+1-i) c_{n+1-i}
//!           - sum_{i>=0} d_i c_{n-i},
//!
//! where a_i, b_i, d_i, f_i are the coefficient expansions at t0 (a_0 =
//! 0 by assumption). Only c_0 is free; every later coefficient is
//! forced, dividing by (n+1)(n a_1 + b_0). The division fails exactly
//! at the bad parameters screened by [`indicial`](crate::indicial).

use crate::{SingularOdeError, SingularOdeProblem, BAD_REL_TOL, NEAR_BAD_REL_TOL};
use num_complex::Complex64;

/// Which branch the series normalizes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// x(t0) = 1: the generic analytic branch.
    ValueOne,
    /// x vanishes to order N at t0 (c_0 = .. = c_N = 0), available when
    /// the forcing vanishes to order N there. Orders below N place no
    /// constraint, so resonances at n < N are tolerated.
    VanishToOrder(u32),
}

/// Truncated Taylor series of the analytic branch, centered at t0.
#[derive(Debug, Clone)]
pub struct SeriesSolution {
    /// c_0..c_order.
    pub coeffs: Vec<Complex64>,
    /// Smallest relative divisor size met while recursing; small values
    /// mean the parameter sits near the bad set and accuracy suffers.
    pub min_divisor_rel: f64,
    pub warning: Option<String>,
}

impl SeriesSolution {
    /// (x, x') at offset dt = t - t0.
    pub fn eval(&self, dt: f64) -> (Complex64, Complex64) {
        let (x, dx, _) = self.eval2(dt);
        (x, dx)
    }

    /// (x, x', x'') at offset dt = t - t0.
    pub fn eval2(&self, dt: f64) -> (Complex64, Complex64, Complex64) {
        let mut x = Complex64::new(0.0, 0.0);
        let mut dx = Complex64::new(0.0, 0.0);
        let mut ddx = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            ddx = ddx * dt + 2.0 * dx;
            dx = dx * dt + x;
            x = x * dt + c;
        }
        (x, dx, ddx)
    }

    /// Radius within which the truncation tail sits below `tol`,
    /// estimated from the trailing coefficient by a ratio argument:
    /// if |c_N| r^N = tol with N the last substantial order, the
    /// geometric tail beyond it is comparable to tol. Falls back to 1
    /// when the series terminates (polynomial solution, any radius
    /// works; the caller clamps to the span anyway).
    pub fn tail_radius(&self, tol: f64) -> f64 {
        let tol = tol.max(1e-300);
        let scale = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
        let last = self
            .coeffs
            .iter()
            .enumerate()
            .rev()
            .find(|(_, c)| c.norm() > 1e-14 * scale)
            .map(|(n, c)| (n, c.norm()));
        match last {
            Some((n, mag)) if n >= 2 => (tol * scale / mag).powf(1.0 / n as f64),
            _ => 1.0,
        }
    }
}

/// Expand the analytic branch to the given truncation order.
///
/// Errors when A does not vanish simply at t0, when a needed divisor
/// vanishes (the parameter is bad at that order), or when
/// [`Normalization::VanishToOrder`] is requested but the forcing does
/// not actually vanish to that order.
pub fn series_solution(
    problem: &SingularOdeProblem,
    order: usize,
    normalization: Normalization,
) -> Result<SeriesSolution, SingularOdeError> {
    let a1 = problem.a_prime_at_t0()?;
    let t0 = problem.t0;
    let l = problem.lambda;

    let a: Vec<f64> = problem.a.taylor(t0, order);
    let bt = problem.b_tilde.taylor(t0, order);
    let bh = problem.b_hat.taylor(t0, order);
    let b: Vec<Complex64> =
        bt.iter().zip(&bh).map(|(&bt_i, &bh_i)| Complex64::from(bt_i) + l * bh_i).collect();
    let d = collapse_lambda(&problem.d, l, t0, order);
    let f = collapse_lambda(&problem.f, l, t0, order);

    let (c0, start) = match normalization {
        Normalization::ValueOne => (Complex64::new(1.0, 0.0), 0usize),
        Normalization::VanishToOrder(n) => {
            let fscale = f.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
            for (idx, c) in f.iter().enumerate().take((n as usize).min(order + 1)) {
                if c.norm() > 1e-9 * fscale {
                    return Err(SingularOdeError::ForcingNotVanishing {
                        n,
                        idx: idx as u32,
                        mag: c.norm(),
                    });
                }
            }
            (Complex64::new(0.0, 0.0), n as usize)
        }
    };

    let mut c = vec![Complex64::new(0.0, 0.0); order + 1];
    c[0] = c0;
    let mut min_divisor_rel = f64::INFINITY;
    for n in start..order {
        // Accumulate the order-n coefficient of Ax'' + Bx' + Dx with the
        // unknown c_{n+1} left out.
        let mut rhs = f[n];
        for (i, &a_i) in a.iter().enumerate().take(n + 1).skip(2) {
            let m = n + 2 - i;
            rhs -= a_i * ((m * (m - 1)) as f64) * c[m];
        }
        for (i, &b_i) in b.iter().enumerate().take(n + 1).skip(1) {
            let m = n + 1 - i;
            rhs -= b_i * (m as f64) * c[m];
        }
        for (i, &d_i) in d.iter().enumerate().take(n + 1) {
            rhs -= d_i * c[n - i];
        }

        let divisor = (n as f64 + 1.0) * (Complex64::from(n as f64 * a1) + b[0]);
        let rel = divisor.norm() / ((n as f64 + 1.0) * ((n as f64 * a1).abs() + b[0].norm() + 1.0));
        min_divisor_rel = min_divisor_rel.min(rel);
        if rel < BAD_REL_TOL {
            return Err(SingularOdeError::BadOrder {
                n: n as u32,
                divisor_abs: divisor.norm(),
                rel,
            });
        }
        c[n + 1] = rhs / divisor;
    }

    let warning = if min_divisor_rel < NEAR_BAD_REL_TOL {
        Some(format!(
            "parameter within {min_divisor_rel:.1e} (relative) of the bad set; \
             series accuracy is degraded"
        ))
    } else {
        None
    };
    Ok(SeriesSolution { coeffs: c, min_divisor_rel, warning })
}

/// Taylor coefficients of sum_j l^j terms[j](t) at t0.
fn collapse_lambda(
    terms: &[crate::CoeffRef],
    lambda: Complex64,
    t0: f64,
    order: usize,
) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); order + 1];
    let mut pow = Complex64::new(1.0, 0.0);
    for (j, term) in terms.iter().enumerate() {
        if j > 0 {
            pow *= lambda;
        }
        for (o, &v) in term.taylor(t0, order).iter().enumerate() {
            out[o] += pow * v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Coeff, Poly};
    use std::sync::Arc;

    fn problem(
        a: Poly,
        b_tilde: Poly,
        d: Vec<Poly>,
        f: Vec<Poly>,
    ) -> SingularOdeProblem {
        SingularOdeProblem {
            a: Arc::new(a),
            b_tilde: Arc::new(b_tilde),
            b_hat: Arc::new(Poly::constant(0.0)),
            d: d.into_iter().map(|p| Arc::new(p) as crate::CoeffRef).collect(),
            f: f.into_iter().map(|p| Arc::new(p) as crate::CoeffRef).collect(),
            t0: 0.0,
            lambda: Complex64::new(0.0, 0.0),
            interval: (0.0, 1.0),
        }
    }

    fn t() -> Poly {
        Poly::new(0.0, vec![0.0, 1.0])
    }

    #[test]
    fn unforced_branch_is_constant() {
        // t x'' + 2 x' = 0: the branch analytic at 0 is x = 1 (the other
        // solution 1/t blows up).
        let p = problem(t(), Poly::constant(2.0), vec![], vec![]);
        let s = series_solution(&p, 12, Normalization::ValueOne).unwrap();
        assert_eq!(s.coeffs[0], Complex64::new(1.0, 0.0));
        for c in &s.coeffs[1..] {
            assert_eq!(c.norm(), 0.0);
        }
        assert!(s.warning.is_none());
    }

    #[test]
    fn linear_forcing_gives_quadratic_branch() {
        // t x'' + 2 x' = t: substituting x = 1 + t^2/6 checks out
        // (x'' = 1/3, x' = t/3, t/3 + 2t/3 = t), so c_2 = 1/6 and the
        // second derivative at the singular point is 2! c_2 = 1/3.
        let p = problem(t(), Poly::constant(2.0), vec![], vec![t()]);
        let s = series_solution(&p, 10, Normalization::ValueOne).unwrap();
        assert!((s.coeffs[2] - Complex64::from(1.0 / 6.0)).norm() < 1e-15);
        let (_, _, ddx) = s.eval2(0.0);
        assert!((ddx - Complex64::from(1.0 / 3.0)).norm() < 1e-15);
        for (n, c) in s.coeffs.iter().enumerate() {
            if n != 0 && n != 2 {
                assert!(c.norm() < 1e-16, "unexpected c_{n} = {c}");
            }
        }
    }

    #[test]
    fn low_order_coefficients_match_closed_forms() {
        // A = t, constant B = b0 and D = d0, forcing f0 + f1 t + f2 t^2,
        // c_0 = 1. Hand-solving the first three steps of the recursion:
        //   c_1 = (f_0 - d_0 c_0) / b_0
        //   c_2 = (f_1 - b_1 c_1 - d_0 c_1) / (2 (a_1 + b_0)), b_1 = 0
        //   c_3 = (f_2 - d_0 c_2) / (3 (2 a_1 + b_0))
        let (b0, d0) = (2.5, 1.5);
        let (f0, f1, f2) = (0.5, -1.0, 2.0);
        let p = problem(
            t(),
            Poly::constant(b0),
            vec![Poly::constant(d0)],
            vec![Poly::new(0.0, vec![f0, f1, f2])],
        );
        let s = series_solution(&p, 8, Normalization::ValueOne).unwrap();
        let c1 = (f0 - d0) / b0;
        let c2 = (f1 - d0 * c1) / (2.0 * (1.0 + b0));
        let c3 = (f2 - d0 * c2) / (3.0 * (2.0 + b0));
        assert!((s.coeffs[1] - Complex64::from(c1)).norm() < 1e-15);
        assert!((s.coeffs[2] - Complex64::from(c2)).norm() < 1e-15);
        assert!((s.coeffs[3] - Complex64::from(c3)).norm() < 1e-15);
    }

    #[test]
    fn truncation_residual_shrinks_at_the_truncation_order() {
        // t x'' + (3/2) x' + x = f with a forcing rich enough that no
        // coefficient collapses. Truncating at order N satisfies the
        // matched equations through order N - 1, so the residual is
        // O(t^N) and its log-log slope against t is about N.
        let fc: Vec<f64> = (0..=10).map(|i| 2.0 / (i as f64 + 1.0)).collect();
        let forcing = Poly::new(0.0, fc);
        let p = problem(t(), Poly::constant(1.5), vec![Poly::constant(1.0)], vec![
            forcing.clone(),
        ]);
        let order = 6;
        let s = series_solution(&p, order, Normalization::ValueOne).unwrap();
        let mut ts = Vec::new();
        let mut rs = Vec::new();
        for k in 0..8 {
            let tau = 0.3 * 0.6_f64.powi(k);
            let (x, dx, ddx) = s.eval2(tau);
            let r = (tau * ddx + 1.5 * dx + x - forcing.eval(tau)).norm();
            ts.push(tau.ln());
            rs.push(r.max(1e-300).ln());
        }
        let (slope, _) = numkit::fit::linear_fit(&ts, &rs);
        assert!(
            (slope - order as f64).abs() < 1.5,
            "residual slope {slope:.2}, truncation order {order}"
        );
    }

    #[test]
    fn resonant_order_is_an_error_for_the_generic_branch() {
        // B = -3: the order-3 divisor 4 (3 a_1 + b_0) vanishes.
        let p = problem(t(), Poly::constant(-3.0), vec![], vec![Poly::constant(1.0)]);
        match series_solution(&p, 10, Normalization::ValueOne) {
            Err(SingularOdeError::BadOrder { n: 3, .. }) => {}
            other => panic!("expected a bad order at n = 3, got {other:?}"),
        }
    }

    #[test]
    fn vanishing_normalization_skips_low_resonances() {
        // Same resonant B = -3, but the forcing t^4 vanishes to order 4,
        // so the branch vanishing to order 4 never divides at n < 4.
        let p = problem(
            t(),
            Poly::constant(-3.0),
            vec![],
            vec![Poly::new(0.0, vec![0.0, 0.0, 0.0, 0.0, 1.0])],
        );
        let s = series_solution(&p, 12, Normalization::VanishToOrder(4)).unwrap();
        for c in &s.coeffs[..=4] {
            assert_eq!(c.norm(), 0.0);
        }
        // Order-4 equation: 5 (4 a_1 + b_0) c_5 = f_4 = 1, so c_5 = 1/5.
        assert!((s.coeffs[5] - Complex64::from(0.2)).norm() < 1e-15);
    }

    #[test]
    fn vanish_to_order_zero_pins_the_value_not_one() {
        // Same equation as the quadratic-branch test, but the particular
        // solution with x(0) = 0: the recursion is identical except c_0,
        // so x = t^2/6 alone.
        let p = problem(t(), Poly::constant(2.0), vec![], vec![t()]);
        let s = series_solution(&p, 10, Normalization::VanishToOrder(0)).unwrap();
        assert_eq!(s.coeffs[0].norm(), 0.0);
        assert!((s.coeffs[2] - Complex64::from(1.0 / 6.0)).norm() < 1e-15);
        let one = series_solution(&p, 10, Normalization::ValueOne).unwrap();
        assert_eq!(one.coeffs[0], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn vanishing_normalization_rejects_nonvanishing_forcing() {
        let p = problem(t(), Poly::constant(2.0), vec![], vec![t()]);
        match series_solution(&p, 10, Normalization::VanishToOrder(3)) {
            Err(SingularOdeError::ForcingNotVanishing { n: 3, idx: 1, .. }) => {}
            other => panic!("expected the forcing check to fail, got {other:?}"),
        }
    }

    #[test]
    fn series_is_linear_in_the_forcing() {
        // With c_0 pinned to zero by the vanishing normalization the
        // branch is linear in f: solve for f1, f2, f1 + f2 and compare.
        let f1 = Poly::new(0.0, vec![0.0, 0.0, 1.0, 0.5]);
        let f2 = Poly::new(0.0, vec![0.0, 0.0, -0.25, 0.0, 2.0]);
        let fsum = Poly::new(0.0, vec![0.0, 0.0, 0.75, 0.5, 2.0]);
        let base = |f: Poly| {
            problem(t(), Poly::constant(1.25), vec![Poly::constant(-0.5)], vec![f])
        };
        let s1 = series_solution(&base(f1), 14, Normalization::VanishToOrder(2)).unwrap();
        let s2 = series_solution(&base(f2), 14, Normalization::VanishToOrder(2)).unwrap();
        let ssum = series_solution(&base(fsum), 14, Normalization::VanishToOrder(2)).unwrap();
        for n in 0..=14 {
            let lin = s1.coeffs[n] + s2.coeffs[n];
            assert!(
                (ssum.coeffs[n] - lin).norm() < 1e-14 * (1.0 + lin.norm()),
                "coefficient {n} not additive"
            );
        }
    }

    #[test]
    fn near_bad_parameter_warns() {
        // B = -3 + 1e-8: order 3 divisor is tiny but above the hard cut.
        let p = problem(t(), Poly::constant(-3.0 + 1e-8), vec![], vec![Poly::constant(1.0)]);
        let s = series_solution(&p, 10, Normalization::ValueOne).unwrap();
        assert!(s.warning.is_some());
        assert!(s.min_divisor_rel < 1e-6);
    }

    #[test]
    fn tail_radius_tracks_the_trailing_coefficient() {
        // Geometric series: c_n = 2^-n has radius-of-influence
        // (tol * max / |c_N|)^(1/N).
        let coeffs: Vec<Complex64> =
            (0..12).map(|n| Complex64::from(0.5_f64.powi(n))).collect();
        let s = SeriesSolution { coeffs, min_divisor_rel: 1.0, warning: None };
        let tol = 1e-8;
        let r = s.tail_radius(tol);
        let expect = (tol / 0.5_f64.powi(11)).powf(1.0 / 11.0);
        assert!((r - expect).abs() < 1e-12);
        // Terminating series falls back to the unit radius.
        let poly = SeriesSolution {
            coeffs: vec![Complex64::from(1.0), Complex64::from(0.5)],
            min_divisor_rel: 1.0,
            warning: None,
        };
        assert_eq!(poly.tail_radius(tol), 1.0);
    }
}
