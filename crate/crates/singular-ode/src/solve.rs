//! Guarded continuation of the analytic branch away from the singular
//! point: Taylor series inside a guard radius, adaptive integration
//! outside, with the handoff cross-checked before the main leg runs.

use crate::{
    series_solution, Normalization, SeriesSolution, SingularOdeError, SingularOdeProblem,
};
use num_complex::Complex64;
use numkit::interp::Hermite5;
use numkit::ode::{dopri5, OdeOptions, StepOutcome};

/// Solution on [t0, t_end] (or [t_end, t0]): the series region is
/// represented by samples of the Taylor branch, the rest by accepted
/// integrator steps. All samples carry value and first derivative.
#[derive(Debug, Clone)]
pub struct SingularSolve {
    pub ts: Vec<f64>,
    pub xs: Vec<Complex64>,
    pub dxs: Vec<Complex64>,
    /// Curvature at the samples, recorded while solving so the
    /// trajectory can be re-evaluated anywhere without the equation.
    pub ddxs: Vec<Complex64>,
    /// t0 of the problem this solve came from.
    pub t0: f64,
    /// Radius around t0 served by the series.
    pub guard: f64,
    /// Relative disagreement between series and integrator measured on
    /// the overlap leg before the main run was accepted.
    pub handoff_gap: f64,
    pub series: SeriesSolution,
    pub warning: Option<String>,
}

impl SingularSolve {
    /// (x, x') at the sample index i.
    pub fn jet(&self, i: usize) -> (f64, Complex64, Complex64) {
        (self.ts[i], self.xs[i], self.dxs[i])
    }

    /// (x, x') anywhere on the covered range: the series inside the
    /// guard, a quintic through the two bracketing samples (values,
    /// slopes, curvatures) outside. Slightly out-of-range t uses the
    /// nearest cell.
    pub fn eval(&self, t: f64) -> (Complex64, Complex64) {
        let (x, dx, _) = self.eval2(t);
        (x, dx)
    }

    /// (x, x', x'') anywhere on the covered range.
    pub fn eval2(&self, t: f64) -> (Complex64, Complex64, Complex64) {
        if (t - self.t0).abs() < self.guard * (1.0 - 1e-12) {
            return self.series.eval2(t - self.t0);
        }
        let i = self.locate(t);
        let part = |f: fn(Complex64) -> f64| {
            Hermite5 {
                z0: self.ts[i],
                z1: self.ts[i + 1],
                f0: f(self.xs[i]),
                d0: f(self.dxs[i]),
                s0: f(self.ddxs[i]),
                f1: f(self.xs[i + 1]),
                d1: f(self.dxs[i + 1]),
                s1: f(self.ddxs[i + 1]),
            }
            .eval_d2(t)
        };
        let (xr, dxr, ddxr) = part(|c| c.re);
        let (xi, dxi, ddxi) = part(|c| c.im);
        (Complex64::new(xr, xi), Complex64::new(dxr, dxi), Complex64::new(ddxr, ddxi))
    }

    /// Index of the cell [ts[i], ts[i+1]] holding t; samples run
    /// monotonically in either direction.
    fn locate(&self, t: f64) -> usize {
        let n = self.ts.len();
        debug_assert!(n >= 2);
        let dir = if self.ts[n - 1] >= self.ts[0] { 1.0 } else { -1.0 };
        let key = t * dir;
        let mut lo = 0usize;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.ts[mid] * dir <= key {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// Number of series-region samples emitted ahead of the integration leg.
const SERIES_SAMPLES: usize = 8;

/// Continue the analytic branch from the singular point t0 to t_end.
///
/// The series is trusted on a guard disk (given, or sized so its own
/// truncation tail sits two orders below `tol`), integration covers the
/// rest. Before the main leg runs, the series is re-derived on the
/// outer half of the guard by integrating from guard/2 to the guard
/// edge; a relative disagreement above `tol` aborts with
/// [`SingularOdeError::Handoff`] since it means the expansion data and
/// the evaluated coefficients describe different equations. A sign
/// change of the leading coefficient on the integration leg aborts with
/// [`SingularOdeError::InteriorZero`].
pub fn solve_from_singular(
    problem: &SingularOdeProblem,
    order: usize,
    guard: Option<f64>,
    t_end: f64,
    tol: f64,
    normalization: Normalization,
) -> Result<SingularSolve, SingularOdeError> {
    let t0 = problem.t0;
    let span = (t_end - t0).abs();
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let series = series_solution(problem, order, normalization)?;

    let guard = match guard {
        Some(g) => {
            if !(g > 0.0 && g < span) {
                return Err(SingularOdeError::BadGuard { guard: g, span });
            }
            g
        }
        None => {
            if span == 0.0 {
                return Err(SingularOdeError::BadGuard { guard: 0.0, span });
            }
            series.tail_radius(tol * 1e-2).clamp(span * 1e-6, span * 0.25)
        }
    };
    let edge = t0 + dir * guard;

    let rhs = make_rhs(problem);
    let opts = OdeOptions {
        rtol: (tol * 1e-2).max(1e-13),
        atol: 1e-14,
        h_max: span / 64.0,
        ..OdeOptions::default()
    };

    // Overlap leg: launch the integrator from half the guard radius with
    // series initial data and land it on the guard edge; the series must
    // agree there or the handoff is unsound.
    let (x_h, dx_h) = series.eval(dir * guard * 0.5);
    let y_half = pack(x_h, dx_h);
    let (overlap, _) = dopri5(&rhs, t0 + dir * guard * 0.5, &y_half, edge, &opts, |_| {
        StepOutcome::Continue
    })
    .map_err(|e| SingularOdeError::Ode(e.to_string()))?;
    let y_edge_run = &overlap.last().expect("integrator yields samples").y;
    let (x_run, dx_run) = unpack(y_edge_run);
    let (x_ser, dx_ser) = series.eval(dir * guard);
    let gap_x = (x_run - x_ser).norm() / (1.0 + x_ser.norm());
    let gap_dx = (dx_run - dx_ser).norm() / (1.0 + dx_ser.norm());
    let handoff_gap = gap_x.max(gap_dx);
    if handoff_gap > tol {
        return Err(SingularOdeError::Handoff { gap: handoff_gap, tol, guard });
    }

    // Main leg, watching for the leading coefficient changing sign.
    let a_edge = problem.a.eval(edge);
    let mut zero_hit: Option<f64> = None;
    let (run, stopped) = dopri5(
        &rhs,
        edge,
        &pack(x_ser, dx_ser),
        t_end,
        &opts,
        |s| {
            if problem.a.eval(s.t) * a_edge <= 0.0 && s.t != edge {
                zero_hit = Some(s.t);
                StepOutcome::Stop("leading coefficient changed sign".into())
            } else {
                StepOutcome::Continue
            }
        },
    )
    .map_err(|e| SingularOdeError::Ode(e.to_string()))?;
    if stopped.is_some() {
        return Err(SingularOdeError::InteriorZero { t: zero_hit.unwrap_or(t_end) });
    }

    let mut ts = Vec::with_capacity(SERIES_SAMPLES + run.len());
    let mut xs = Vec::with_capacity(ts.capacity());
    let mut dxs = Vec::with_capacity(ts.capacity());
    let mut ddxs = Vec::with_capacity(ts.capacity());
    for j in 0..SERIES_SAMPLES {
        let dt = dir * guard * (j as f64) / (SERIES_SAMPLES as f64);
        let (x, dx, ddx) = series.eval2(dt);
        ts.push(t0 + dt);
        xs.push(x);
        dxs.push(dx);
        ddxs.push(ddx);
    }
    for s in &run {
        let (x, dx) = unpack(&s.y);
        let a = problem.a.eval(s.t);
        ts.push(s.t);
        ddxs.push((problem.f_at(s.t) - problem.b_at(s.t) * dx - problem.d_at(s.t) * x) / a);
        xs.push(x);
        dxs.push(dx);
    }

    Ok(SingularSolve {
        ts,
        xs,
        dxs,
        ddxs,
        t0,
        guard,
        handoff_gap,
        warning: series.warning.clone(),
        series,
    })
}

/// Largest relative residual of A x'' + B x' + D x - f over the stored
/// solution, measured without consulting the trajectory's own flow
/// field: inside the guard the series jet supplies x'', outside each
/// pair of neighboring samples is bridged by a quintic fit through
/// their values, slopes, and the equation's curvature at the endpoints,
/// and the defect is read off at the cell midpoint. Data that does not
/// satisfy the equation cannot make the midpoint defect small, so the
/// check stays honest when the coefficients are wrong.
pub fn max_equation_residual(problem: &SingularOdeProblem, sol: &SingularSolve) -> f64 {
    let t0 = problem.t0;
    let inner = sol.guard * (1.0 - 1e-9);
    let mut worst = 0.0_f64;

    for (i, &t) in sol.ts.iter().enumerate() {
        if (t - t0).abs() < inner {
            let (x, dx, ddx) = sol.series.eval2(t - t0);
            worst = worst.max(residual_at(problem, t, x, dx, ddx));
        } else if i + 1 < sol.ts.len() {
            let (ta, tb) = (t, sol.ts[i + 1]);
            if ta == tb {
                continue;
            }
            let cell = |f: fn(Complex64) -> f64| {
                let dd = |t: f64, x: Complex64, dx: Complex64| {
                    let a = problem.a.eval(t);
                    (problem.f_at(t) - problem.b_at(t) * dx - problem.d_at(t) * x) / a
                };
                Hermite5 {
                    z0: ta,
                    z1: tb,
                    f0: f(sol.xs[i]),
                    d0: f(sol.dxs[i]),
                    s0: f(dd(ta, sol.xs[i], sol.dxs[i])),
                    f1: f(sol.xs[i + 1]),
                    d1: f(sol.dxs[i + 1]),
                    s1: f(dd(tb, sol.xs[i + 1], sol.dxs[i + 1])),
                }
            };
            let re = cell(|c| c.re);
            let im = cell(|c| c.im);
            let tm = 0.5 * (ta + tb);
            let (xr, dxr, ddxr) = re.eval_d2(tm);
            let (xi, dxi, ddxi) = im.eval_d2(tm);
            worst = worst.max(residual_at(
                problem,
                tm,
                Complex64::new(xr, xi),
                Complex64::new(dxr, dxi),
                Complex64::new(ddxr, ddxi),
            ));
        }
    }
    worst
}

fn residual_at(
    problem: &SingularOdeProblem,
    t: f64,
    x: Complex64,
    dx: Complex64,
    ddx: Complex64,
) -> f64 {
    let t1 = problem.a.eval(t) * ddx;
    let t2 = problem.b_at(t) * dx;
    let t3 = problem.d_at(t) * x;
    let t4 = problem.f_at(t);
    let scale = t1.norm().max(t2.norm()).max(t3.norm()).max(t4.norm()).max(1e-300);
    (t1 + t2 + t3 - t4).norm() / scale
}

fn make_rhs(problem: &SingularOdeProblem) -> impl Fn(f64, &[f64], &mut [f64]) + '_ {
    move |t, y, dy| {
        let x = Complex64::new(y[0], y[1]);
        let dx = Complex64::new(y[2], y[3]);
        let a = problem.a.eval(t);
        let ddx = (problem.f_at(t) - problem.b_at(t) * dx - problem.d_at(t) * x) / a;
        dy[0] = y[2];
        dy[1] = y[3];
        dy[2] = ddx.re;
        dy[3] = ddx.im;
    }
}

fn pack(x: Complex64, dx: Complex64) -> [f64; 4] {
    [x.re, x.im, dx.re, dx.im]
}

fn unpack(y: &[f64]) -> (Complex64, Complex64) {
    (Complex64::new(y[0], y[1]), Complex64::new(y[2], y[3]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{AnchoredFn, Poly};
    use std::sync::Arc;

    fn t_poly() -> Poly {
        Poly::new(0.0, vec![0.0, 1.0])
    }

    fn base_problem(b0: f64, d0: Option<f64>, f: Poly) -> SingularOdeProblem {
        SingularOdeProblem {
            a: Arc::new(t_poly()),
            b_tilde: Arc::new(Poly::constant(b0)),
            b_hat: Arc::new(Poly::constant(0.0)),
            d: d0.map(|v| Arc::new(Poly::constant(v)) as crate::CoeffRef).into_iter().collect(),
            f: vec![Arc::new(f)],
            t0: 0.0,
            lambda: Complex64::new(0.0, 0.0),
            interval: (0.0, 2.0),
        }
    }

    #[test]
    fn branch_past_a_half_integer_exponent_matches_closed_form() {
        // t x'' - x'/2 = t: the analytic branch through 0 is 1 + t^2
        // (x'' = 2, 2t - t = t); the discarded solution grows like
        // t^(3/2) and is not smooth. The series terminates, so guard
        // sizing and handoff are exercised with zero series error.
        let p = base_problem(-0.5, None, t_poly());
        let sol = solve_from_singular(&p, 16, None, 2.0, 1e-8, Normalization::ValueOne).unwrap();
        assert!(sol.handoff_gap <= 1e-8);
        let mut worst = 0.0_f64;
        let mut worst_d = 0.0_f64;
        for (i, &t) in sol.ts.iter().enumerate() {
            worst = worst.max((sol.xs[i] - Complex64::from(1.0 + t * t)).norm());
            worst_d = worst_d.max((sol.dxs[i] - Complex64::from(2.0 * t)).norm());
        }
        assert!(worst < 1e-9, "value error {worst:.3e}");
        assert!(worst_d < 1e-9, "slope error {worst_d:.3e}");
        assert_eq!(*sol.ts.last().unwrap(), 2.0);
    }

    /// Forcing with nonzero coefficients at every order, so the branch
    /// it drives has no accidental structure a wrong coefficient could
    /// hide behind.
    fn rich_forcing() -> Poly {
        Poly::new(0.0, (0..=10).map(|i| 2.0 / (i as f64 + 1.0)).collect())
    }

    #[test]
    fn residual_is_small_and_detects_doctored_coefficients() {
        // Generic non-terminating case: t x'' + (3/2) x' + x = f.
        let tol = 1e-8;
        let p = base_problem(1.5, Some(1.0), rich_forcing());
        let sol = solve_from_singular(&p, 20, None, 2.0, tol, Normalization::ValueOne).unwrap();
        let base = max_equation_residual(&p, &sol);
        assert!(base < 100.0 * tol, "residual {base:.3e}");

        // Shifting the drag coefficient must show up: the same stored
        // trajectory cannot satisfy the shifted equation.
        let mut doctored = p.clone();
        doctored.b_tilde = Arc::new(Poly::constant(1.5 + 1e-3));
        let shifted = max_equation_residual(&doctored, &sol);
        assert!(
            shifted > 1e3 * base.max(1e-12) && shifted > 1e-7,
            "doctored residual {shifted:.3e} vs base {base:.3e}"
        );
    }

    #[test]
    fn eval_interpolates_between_samples() {
        // On the closed-form fixture the evaluator must reproduce
        // 1 + t^2 at points that are not samples, in both the series
        // region and the integration region.
        let p = base_problem(-0.5, None, t_poly());
        let sol = solve_from_singular(&p, 16, None, 2.0, 1e-8, Normalization::ValueOne).unwrap();
        for &t in &[0.0, sol.guard * 0.3, sol.guard, 0.7371, 1.2345, 1.999] {
            let (x, dx, ddx) = sol.eval2(t);
            assert!((x - Complex64::from(1.0 + t * t)).norm() < 1e-9, "x({t})");
            assert!((dx - Complex64::from(2.0 * t)).norm() < 1e-9, "x'({t})");
            assert!((ddx - Complex64::from(2.0)).norm() < 1e-7, "x''({t})");
        }
    }

    #[test]
    fn backward_integration_works() {
        // Same equation reflected: solve toward negative t. With
        // x = 1 + t^2 the closed form is even, so it still applies to
        // t x'' - x'/2 = t on the left half-line.
        let p = base_problem(-0.5, None, t_poly());
        let sol =
            solve_from_singular(&p, 16, None, -1.5, 1e-8, Normalization::ValueOne).unwrap();
        let mut worst = 0.0_f64;
        for (i, &t) in sol.ts.iter().enumerate() {
            worst = worst.max((sol.xs[i] - Complex64::from(1.0 + t * t)).norm());
        }
        assert!(worst < 1e-9, "value error {worst:.3e}");
        assert_eq!(*sol.ts.last().unwrap(), -1.5);
    }

    #[test]
    fn jet_mismatch_is_caught_at_the_handoff() {
        // The expansion data claims B = 2 while the evaluated
        // coefficient is 5: the series and the integrator then describe
        // different equations, which the overlap leg must expose.
        let mut p = base_problem(2.0, None, t_poly());
        p.b_tilde = Arc::new(AnchoredFn { f: |_t| 5.0, anchor: 0.0, jet: vec![2.0; 24] });
        match solve_from_singular(&p, 16, None, 2.0, 1e-8, Normalization::ValueOne) {
            Err(SingularOdeError::Handoff { gap, .. }) => {
                assert!(gap > 1e-4, "gap {gap:.3e} should be far above tol")
            }
            other => panic!("expected a handoff failure, got {other:?}"),
        }
    }

    #[test]
    fn interior_zero_of_the_leading_coefficient_aborts() {
        // t(1 - t) x'' + x' = 1 has the analytic branch x = 1 + t at the
        // origin, smooth through t = 1; the solver must still refuse to
        // integrate across the second zero of A rather than hand back a
        // trajectory whose equation degenerated mid-range.
        let p = SingularOdeProblem {
            a: Arc::new(Poly::new(0.0, vec![0.0, 1.0, -1.0])),
            b_tilde: Arc::new(Poly::constant(1.0)),
            b_hat: Arc::new(Poly::constant(0.0)),
            d: vec![],
            f: vec![Arc::new(Poly::constant(1.0))],
            t0: 0.0,
            lambda: Complex64::new(0.0, 0.0),
            interval: (0.0, 2.0),
        };
        match solve_from_singular(&p, 12, Some(0.25), 2.0, 1e-8, Normalization::ValueOne) {
            Err(SingularOdeError::InteriorZero { t }) => {
                assert!((0.9..=2.0).contains(&t), "zero reported at t = {t}")
            }
            other => panic!("expected an interior zero abort, got {other:?}"),
        }
    }

    #[test]
    fn solution_moves_smoothly_with_the_parameter() {
        // B = 3/2 + l, D = 1, nontrivial forcing: difference quotients
        // of the endpoint value against l must scale linearly (halving
        // the increment halves the gap).
        let mut p = base_problem(1.5, Some(1.0), rich_forcing());
        p.b_hat = Arc::new(Poly::constant(1.0));
        p.lambda = Complex64::new(0.3, 0.1);
        let end = |pp: &SingularOdeProblem| {
            let s =
                solve_from_singular(pp, 20, Some(0.2), 2.0, 1e-9, Normalization::ValueOne)
                    .unwrap();
            *s.xs.last().unwrap()
        };
        let x0 = end(&p);
        let d1 = 1e-4;
        let g1 = (end(&p.with_lambda(p.lambda + d1)) - x0).norm();
        let g2 = (end(&p.with_lambda(p.lambda + d1 * 0.5)) - x0).norm();
        let ratio = g1 / g2;
        assert!(
            (1.6..=2.4).contains(&ratio),
            "gap ratio {ratio:.3} off the first-order value 2"
        );
    }

    #[test]
    fn explicit_guard_must_fit_the_span() {
        let p = base_problem(2.0, None, t_poly());
        for bad in [0.0, -0.1, 2.0, 3.0] {
            match solve_from_singular(&p, 10, Some(bad), 2.0, 1e-8, Normalization::ValueOne) {
                Err(SingularOdeError::BadGuard { .. }) => {}
                other => panic!("guard {bad} should be rejected, got {other:?}"),
            }
        }
    }

    #[test]
    fn vanishing_branch_solves_end_to_end() {
        // Resonant B = -3 with forcing t^4: only the branch vanishing to
        // order 4 is consistent; solve it and check the equation is
        // satisfied over the full range.
        let tol = 1e-8;
        let p = base_problem(-3.0, None, Poly::new(0.0, vec![0.0, 0.0, 0.0, 0.0, 1.0]));
        let sol =
            solve_from_singular(&p, 20, None, 1.5, tol, Normalization::VanishToOrder(4)).unwrap();
        assert!(sol.xs[0].norm() == 0.0);
        let r = max_equation_residual(&p, &sol);
        assert!(r < 100.0 * tol, "residual {r:.3e}");
    }
}
