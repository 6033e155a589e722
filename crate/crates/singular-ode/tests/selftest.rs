//! End-to-end fixtures with closed-form or structurally forced answers.
//! These are the checks behind the library's self-test entry point:
//! if any of them fails, the singular-point machinery cannot be trusted
//! on problems whose answer is unknown.

use num_complex::Complex64;
use numkit::ode::{dopri5, OdeOptions, StepOutcome};
use proptest::prelude::*;
use singular_ode::{
    bad_lambdas, indicial, max_equation_residual, psi1, series_solution, solve_from_singular,
    Coeff, Normalization, Poly, SingularOdeError, SingularOdeProblem,
};
use std::sync::Arc;

fn problem(
    a: Poly,
    b_tilde: Poly,
    b_hat: Poly,
    d: Option<Poly>,
    f: Option<Poly>,
    t_max: f64,
) -> SingularOdeProblem {
    SingularOdeProblem {
        a: Arc::new(a),
        b_tilde: Arc::new(b_tilde),
        b_hat: Arc::new(b_hat),
        d: d.map(|p| Arc::new(p) as singular_ode::CoeffRef).into_iter().collect(),
        f: f.map(|p| Arc::new(p) as singular_ode::CoeffRef).into_iter().collect(),
        t0: 0.0,
        lambda: Complex64::new(0.0, 0.0),
        interval: (0.0, t_max),
    }
}

fn t_poly() -> Poly {
    Poly::new(0.0, vec![0.0, 1.0])
}

#[test]
fn constant_branch_survives_the_whole_interval() {
    // t x'' + 2 x' = 0: the branch analytic at the singular point is
    // x = 1; the non-smooth companion 1/t must not leak in anywhere
    // between the series region and the far end.
    let tol = 1e-8;
    let p = problem(t_poly(), Poly::constant(2.0), Poly::constant(0.0), None, None, 3.0);
    let sol = solve_from_singular(&p, 20, None, 3.0, tol, Normalization::ValueOne).unwrap();
    for (i, &t) in sol.ts.iter().enumerate() {
        assert!(
            (sol.xs[i] - Complex64::from(1.0)).norm() < 1e-12,
            "x({t}) strayed from the constant branch"
        );
        assert!(sol.dxs[i].norm() < 1e-12);
    }
    assert!(max_equation_residual(&p, &sol) < 100.0 * tol);
}

#[test]
fn cauchy_euler_problem_returns_the_analytic_branch() {
    // t x'' - x'/2 = 0 has the two-branch general solution
    // c1 + c2 t^(3/2). The half-integer exponent is not analytic, so
    // the series normalized to x(0) = 1 must produce exactly the
    // constant, and the integration legs must not excite the t^(3/2)
    // mode (its signature would be a growing slope).
    let tol = 1e-10;
    let p = problem(t_poly(), Poly::constant(-0.5), Poly::constant(0.0), None, None, 2.0);
    let data = indicial(&p, 40);
    assert_eq!(data.ratio, Complex64::from(-0.5));
    assert!(!data.is_bad, "ratio -1/2 is not a nonnegative integer");
    let sol = solve_from_singular(&p, 20, None, 2.0, tol, Normalization::ValueOne).unwrap();
    for (i, &t) in sol.ts.iter().enumerate() {
        assert!((sol.xs[i] - Complex64::from(1.0)).norm() < 1e-10, "x({t}) off the branch");
        assert!(sol.dxs[i].norm() < 1e-10, "slope contamination at t = {t}");
    }
}

#[test]
fn vanishing_branch_residual_drops_at_the_truncation_order() {
    // Resonant drag B = -3 rules out the generic branch (order-3
    // divisor vanishes), but a forcing vanishing to order 4 admits the
    // branch with c_0..c_4 = 0. Truncating that series at order N
    // leaves an equation residual O(t^N): the log-log slope against t
    // reveals whether every matched order really cancelled.
    let forcing = Poly::new(0.0, vec![0.0, 0.0, 0.0, 0.0, 1.0]);
    let p = problem(
        t_poly(),
        Poly::constant(-3.0),
        Poly::constant(0.0),
        Some(Poly::constant(0.5)),
        Some(forcing.clone()),
        1.0,
    );
    match series_solution(&p, 12, Normalization::ValueOne) {
        Err(SingularOdeError::BadOrder { n: 3, .. }) => {}
        other => panic!("generic branch should hit the order-3 resonance, got {other:?}"),
    }
    let order = 6;
    let s = series_solution(&p, order, Normalization::VanishToOrder(4)).unwrap();
    let mut lt = Vec::new();
    let mut lr = Vec::new();
    for k in 0..8 {
        let tau = 0.3 * 0.6_f64.powi(k);
        let (x, dx, ddx) = s.eval2(tau);
        let r = (tau * ddx - 3.0 * dx + 0.5 * x - forcing.eval(tau)).norm();
        lt.push(tau.ln());
        lr.push(r.max(1e-300).ln());
    }
    let (slope, _) = numkit::fit::linear_fit(&lt, &lr);
    assert!(
        slope > order as f64 - 1.0 && slope < order as f64 + 1.5,
        "residual slope {slope:.2} should sit near the truncation order {order}"
    );
}

#[test]
fn reversing_the_main_leg_retraces_to_the_guard_edge() {
    // Integrator self-consistency: starting from the far end of the
    // computed trajectory and integrating backward must land on the
    // guard-edge state within a small multiple of the tolerance.
    let tol = 1e-9;
    let forcing = Poly::new(0.0, (0..=10).map(|i| 2.0 / (i as f64 + 1.0)).collect());
    let p = problem(
        t_poly(),
        Poly::constant(1.5),
        Poly::constant(0.0),
        Some(Poly::constant(1.0)),
        Some(forcing),
        2.0,
    );
    let sol = solve_from_singular(&p, 20, None, 2.0, tol, Normalization::ValueOne).unwrap();
    assert!(max_equation_residual(&p, &sol) < 100.0 * tol);

    let (t_end, x_end, dx_end) = sol.jet(sol.ts.len() - 1);
    let edge_idx = sol
        .ts
        .iter()
        .position(|&t| (t - sol.guard).abs() < 1e-12)
        .expect("guard edge is a sample");
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let x = Complex64::new(y[0], y[1]);
        let dx = Complex64::new(y[2], y[3]);
        let ddx = (p.f_at(t) - p.b_at(t) * dx - p.d_at(t) * x) / p.a.eval(t);
        dy[0] = y[2];
        dy[1] = y[3];
        dy[2] = ddx.re;
        dy[3] = ddx.im;
    };
    let opts = OdeOptions { rtol: tol * 1e-2, atol: 1e-14, ..OdeOptions::default() };
    let y_end = [x_end.re, x_end.im, dx_end.re, dx_end.im];
    let (back, _) =
        dopri5(rhs, t_end, &y_end, sol.guard, &opts, |_| StepOutcome::Continue).unwrap();
    let yb = &back.last().unwrap().y;
    let gap = (Complex64::new(yb[0], yb[1]) - sol.xs[edge_idx]).norm()
        + (Complex64::new(yb[2], yb[3]) - sol.dxs[edge_idx]).norm();
    assert!(gap < 10.0 * tol, "retrace gap {gap:.3e} exceeds 10 tol");
}

#[test]
fn lambda_continuity_holds_at_three_parameter_samples() {
    // Away from the bad set the solution is differentiable in the
    // parameter: halving a finite-difference increment must halve the
    // endpoint gap, at several points of the parameter plane.
    let forcing = Poly::new(0.0, (0..=10).map(|i| 2.0 / (i as f64 + 1.0)).collect());
    let mut p = problem(
        t_poly(),
        Poly::constant(1.5),
        Poly::constant(1.0),
        Some(Poly::constant(1.0)),
        Some(forcing),
        2.0,
    );
    for lam in [
        Complex64::new(0.3, 0.1),
        Complex64::new(-0.7, 0.0),
        Complex64::new(1.2, -0.4),
    ] {
        p.lambda = lam;
        let end = |pp: &SingularOdeProblem| {
            let s = solve_from_singular(pp, 20, Some(0.2), 2.0, 1e-9, Normalization::ValueOne)
                .unwrap();
            *s.xs.last().unwrap()
        };
        let x0 = end(&p);
        let d = 1e-4;
        let g1 = (end(&p.with_lambda(lam + d)) - x0).norm();
        let g2 = (end(&p.with_lambda(lam + d * 0.5)) - x0).norm();
        let ratio = g1 / g2;
        assert!(
            (1.6..=2.4).contains(&ratio),
            "gap ratio {ratio:.3} at parameter {lam} is not first order"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Randomized slopes and drags: the parameter that zeroes the
    /// order-n divisor must be flagged by the screening and must be a
    /// zero of the clearing polynomial.
    #[test]
    fn bad_parameters_are_detected_and_cleared(
        a1 in prop_oneof![0.2f64..5.0, -5.0f64..-0.2],
        bt0 in -5.0f64..5.0,
        bh0 in prop_oneof![0.2f64..5.0, -5.0f64..-0.2],
        n in 0u32..8,
    ) {
        let p = SingularOdeProblem {
            a: Arc::new(Poly::new(0.0, vec![0.0, a1])),
            b_tilde: Arc::new(Poly::constant(bt0)),
            b_hat: Arc::new(Poly::constant(bh0)),
            d: vec![],
            f: vec![],
            t0: 0.0,
            lambda: Complex64::new(0.0, 0.0),
            interval: (0.0, 1.0),
        };
        let lams = bad_lambdas(&p, 8);
        prop_assert_eq!(lams.len(), 9);
        let lam = lams[n as usize];
        let data = indicial(&p.with_lambda(lam), 8);
        prop_assert!(data.is_bad);
        prop_assert!(data.bad_orders.contains(&n));
        let val = psi1(&p, (n + 1) as usize, lam).norm();
        // Relative to the product of the surviving factor magnitudes.
        let scale: f64 = (0..=n)
            .map(|j| (j as f64 * a1 + bt0 + lam.re * bh0).abs().max(1.0))
            .product();
        prop_assert!(val <= 1e-9 * scale.max(1.0), "clearing polynomial value {val:.3e}");
    }
}
