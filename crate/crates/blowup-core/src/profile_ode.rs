//! The self-similar slope profile v(Z).
//!
//! v solves the autonomous first-order ODE
//!
//! ```text
//! Delta_Z(Z, v) dv/dZ = Delta_v(Z, v),
//! Delta_Z = Z [(1 - Z v)^2 - ell (v - Z)^2],
//! Delta_v = (1 - v^2) [beta ell (1 - v^2) Z - k v (1 - Z v)],
//! ```
//!
//! regular at the origin (v(0) = 0, v'(0) = beta ell/(k+1)) and crossing
//! the sonic point (Z1, v1) where both Delta's vanish. For generic beta
//! the two local solutions do not connect; shooting on beta matches the
//! branch that leaves the sonic point smoothly to the analytic branch at
//! the origin. Taylor anchors at both singular points are rebuilt from
//! the ODE itself by residual matching, so one code path serves the
//! origin (regular singular), the sonic point (removable 0/0), and
//! ordinary points (plain Taylor jets of the solution).

use crate::params::{beta_window, BetaWindow, ModelParams, ParamError};
use numkit::interp::Hermite5;
use numkit::ode::{dopri5, OdeOptions, StepOutcome};
use numkit::{fit, series};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("admissibility window for beta is empty at d = {d}, p = {p} (upper endpoint {hi:.6})")]
    EmptyWindow { d: u32, p: u32, hi: f64 },
    #[error("no sign change of the shooting mismatch over {scanned} scan points in ({lo:.6}, {hi:.6})")]
    NoAdmissibleBeta { scanned: usize, lo: f64, hi: f64 },
    #[error("near-singular recursion divisor at series order {order} (anchor Z = {at:.6})")]
    SeriesDivisor { order: usize, at: f64 },
    #[error("tangency quadratic at the sonic point has no real roots (discriminant {disc:.3e})")]
    ComplexSlopes { disc: f64 },
    #[error("trajectory hit the singular set away from the anchors at Z = {z:.6}")]
    SingularSet { z: f64 },
    #[error("integration failed: {0}")]
    Ode(String),
    #[error("profile invariant violated: {what}")]
    Invariant { what: String },
    #[error("numerical failure: {what}")]
    Numerical { what: String },
}

/// Z [(1 - Z v)^2 - ell (v - Z)^2].
pub fn delta_z(z: f64, v: f64, p: &ModelParams) -> f64 {
    let a = 1.0 - z * v;
    let b = v - z;
    z * (a * a - p.ell * b * b)
}

/// (1 - v^2) [beta ell (1 - v^2) Z - k v (1 - Z v)].
pub fn delta_v(z: f64, v: f64, p: &ModelParams) -> f64 {
    let w = 1.0 - v * v;
    w * (p.beta * p.ell * w * z - p.k * v * (1.0 - z * v))
}

/// (d/dZ, d/dv) of Delta_Z.
pub fn delta_z_partials(z: f64, v: f64, p: &ModelParams) -> (f64, f64) {
    let a = 1.0 - z * v;
    let b = v - z;
    let dz = a * a - p.ell * b * b + z * (-2.0 * v * a + 2.0 * p.ell * b);
    let dv = z * (-2.0 * z * a - 2.0 * p.ell * b);
    (dz, dv)
}

/// (d/dZ, d/dv) of Delta_v.
pub fn delta_v_partials(z: f64, v: f64, p: &ModelParams) -> (f64, f64) {
    let w = 1.0 - v * v;
    let inner = p.beta * p.ell * w * z - p.k * v * (1.0 - z * v);
    let dz = w * (p.beta * p.ell * w + p.k * v * v);
    let dv = -2.0 * v * inner + w * (-2.0 * p.beta * p.ell * v * z - p.k * (1.0 - 2.0 * z * v));
    (dz, dv)
}

/// v'' along a solution through (z, v) with slope vp, by differentiating
/// v' = Delta_v / Delta_Z.
pub fn v_second(z: f64, v: f64, vp: f64, p: &ModelParams) -> f64 {
    let dz = delta_z(z, v, p);
    let dv = delta_v(z, v, p);
    let (dzz, dzv) = delta_z_partials(z, v, p);
    let (dvz, dvv) = delta_v_partials(z, v, p);
    (dvz + dvv * vp) / dz - dv * (dzz + dzv * vp) / (dz * dz)
}

/// Sonic point data: the interior point where both Delta's vanish,
/// the two tangency slopes there, and which one the trial integration
/// selected.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SonicPoint {
    pub z1: f64,
    pub v1: f64,
    /// Roots of the tangency quadratic, ascending.
    pub slopes: [f64; 2],
    pub selected_slope: f64,
    pub selected_index: usize,
}

/// Closed-form sonic location: Z1 = k/(sqrt(ell) (k - beta(ell-1))),
/// v1 = beta sqrt(ell)/(k - beta ell).
pub fn sonic_location(p: &ModelParams) -> (f64, f64) {
    let sl = p.ell.sqrt();
    let z1 = p.k / (sl * (p.k - p.beta * (p.ell - 1.0)));
    let v1 = p.beta * sl / (p.k - p.beta * p.ell);
    (z1, v1)
}

/// Tangency slopes at the sonic point: roots of
/// a s^2 + b s + c = 0 with a = dDelta_Z/dv, b = dDelta_Z/dZ - dDelta_v/dv,
/// c = -dDelta_v/dZ, all evaluated at (Z1, v1) (l'Hopital on
/// v' = Delta_v/Delta_Z).
pub fn sonic_slopes(p: &ModelParams) -> Result<(f64, f64, [f64; 2]), ProfileError> {
    let (z1, v1) = sonic_location(p);
    let (dzz, dzv) = delta_z_partials(z1, v1, p);
    let (dvz, dvv) = delta_v_partials(z1, v1, p);
    let a = dzv;
    let b = dzz - dvv;
    let c = -dvz;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Err(ProfileError::ComplexSlopes { disc });
    }
    let sq = disc.sqrt();
    // Citardauq for the small root to avoid cancellation.
    let r1 = (-b - b.signum() * sq) / (2.0 * a);
    let r2 = c / (a * r1);
    let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
    Ok((z1, v1, [lo, hi]))
}

/// Taylor coefficients about z0 of the solution branch with prescribed
/// leading coefficients `head` (head[0] = v(z0), head[1] = slope if
/// given, ...). Works at ordinary points, at the origin, and at the
/// sonic point: when Delta_Z(z0, head[0]) vanishes the residual at order
/// j fixes coefficient j, otherwise the residual at order j-1 does.
///
/// Each solve divides by a factor that is affine in the order, computed
/// in closed form from the partials of the Deltas at the anchor:
/// j Delta_Z at ordinary points, and j (P + Q w1) + Q w1 - R at singular
/// ones (P, Q the Z- and v-partials of Delta_Z, R the v-partial of
/// Delta_v, w1 the prescribed slope). A vanishing divisor (resonant
/// order) is reported as an error.
pub fn ode_series(p: &ModelParams, z0: f64, head: &[f64], order: usize) -> Result<Vec<f64>, ProfileError> {
    assert!(!head.is_empty() && head.len() <= order + 1);
    let v0 = head[0];
    let scale0 = 1.0 + z0.abs() + v0.abs();
    let singular = delta_z(z0, v0, p).abs() <= 1e-9 * scale0 * scale0 * scale0;
    let (pp, qq) = delta_z_partials(z0, v0, p);
    let (_, rr) = delta_v_partials(z0, v0, p);
    if singular && head.len() < 2 && qq.abs() > 1e-9 * scale0 * scale0 {
        // The slope there satisfies a quadratic, not an affine equation.
        return Err(ProfileError::Numerical {
            what: format!("series at a singular anchor Z = {z0:.6} needs the slope prescribed"),
        });
    }
    let dz0 = delta_z(z0, v0, p);
    let w1 = if head.len() >= 2 { head[1] } else { 0.0 };
    let mut c = vec![0.0; order + 1];
    c[..head.len()].copy_from_slice(head);
    for j in head.len()..=order {
        let (target, alpha) = if singular {
            (j, j as f64 * (pp + qq * w1) + qq * w1 - rr)
        } else {
            (j - 1, j as f64 * dz0)
        };
        let alpha_scale = if singular { pp.abs() + (qq * w1).abs() + rr.abs() } else { dz0.abs() };
        if alpha.abs() <= 1e-9 * (1.0 + j as f64) * (1.0 + alpha_scale) {
            return Err(ProfileError::SeriesDivisor { order: j, at: z0 });
        }
        c[j] = 0.0;
        let r0 = residual_coeff(p, z0, &c, target);
        c[j] = -r0 / alpha;
    }
    Ok(c)
}

/// Coefficient of x^target in Delta_Z(z0+x, v(x)) v'(x) - Delta_v(z0+x, v(x))
/// for the polynomial v given by coefficients c.
fn residual_coeff(p: &ModelParams, z0: f64, c: &[f64], target: usize) -> f64 {
    let n = target + 2;
    let mut z = vec![0.0; n];
    z[0] = z0;
    if n > 1 {
        z[1] = 1.0;
    }
    let v: Vec<f64> = c.iter().cloned().chain(std::iter::repeat(0.0)).take(n).collect();
    let one = vec![1.0];
    let zv = series::mul(&z, &v, n);
    let omzv = series::sub(&one, &zv);
    let vmz = series::sub(&v, &z);
    let dz = series::mul(
        &z,
        &series::sub(&series::mul(&omzv, &omzv, n), &series::scale(&series::mul(&vmz, &vmz, n), p.ell)),
        n,
    );
    let omv2 = series::sub(&one, &series::mul(&v, &v, n));
    let dv = series::mul(
        &omv2,
        &series::sub(
            &series::scale(&series::mul(&omv2, &z, n), p.beta * p.ell),
            &series::scale(&series::mul(&v, &omzv, n), p.k),
        ),
        n,
    );
    let vp = series::derivative(&v);
    let r = series::sub(&series::mul(&dz, &vp, n), &dv);
    r[target]
}

/// Analytic-at-origin branch: v = c1 Z + c3 Z^3 + ..., c1 = beta ell/(k+1).
pub fn local_series_origin(p: &ModelParams, order: usize) -> Result<Vec<f64>, ProfileError> {
    ode_series(p, 0.0, &[0.0], order)
}

/// Smooth branch through the sonic point with the given slope;
/// coefficients in x = Z - Z1.
pub fn local_series_sonic(p: &ModelParams, z1: f64, v1: f64, slope: f64, order: usize) -> Result<Vec<f64>, ProfileError> {
    ode_series(p, z1, &[v1, slope], order)
}

/// Stop cause of a branch integration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StopCause {
    ReachedEnd,
    VReachedOne,
    VNonPositive,
    /// Delta_0 dropped below the relative floor: the trajectory is
    /// heading into the singular set (as a graph over Z it folds there).
    Delta0Floor,
    SingularSet,
    /// Step size underflowed before any guard fired; the last accepted
    /// sample tells which way the trajectory was escaping.
    Stalled,
}

/// One integrated branch of the profile ODE: (Z, v, v') samples at the
/// accepted steps; ascending or descending Z depending on direction.
#[derive(Debug, Clone)]
pub struct BranchRun {
    pub samples: Vec<(f64, f64, f64)>,
    pub cause: StopCause,
}

#[derive(Debug, Clone, Copy)]
pub struct BranchGuards {
    /// Stop when v <= 0 (used left of the sonic point).
    pub stop_v_nonpositive: bool,
    /// Stop when Delta_0 <= floor * Z (1 + Z^2). Used on trial shots so
    /// the fold at the singular set is reported instead of ground out
    /// by the step controller.
    pub delta0_floor: Option<f64>,
}

/// Integrate dv/dZ = Delta_v/Delta_Z from (z_start, v_start) to z_end
/// with adaptive steps. Always stops at |v| -> 1 and on singular-set
/// encounters; extra guards per `guards`. Step-size underflow is
/// reported as a stop (`Stalled`), not an error, with the samples
/// accepted so far.
pub fn integrate_branch(
    p: &ModelParams,
    z_start: f64,
    v_start: f64,
    z_end: f64,
    tol: f64,
    h_max: f64,
    guards: BranchGuards,
) -> Result<BranchRun, ProfileError> {
    let pc = *p;
    let rhs = move |z: f64, y: &[f64], dy: &mut [f64]| {
        dy[0] = delta_v(z, y[0], &pc) / delta_z(z, y[0], &pc);
    };
    let opts = OdeOptions { rtol: tol, atol: tol * 1e-2, h_init: None, h_max, max_steps: 400_000 };
    let mut cause = StopCause::ReachedEnd;
    let mut acc: Vec<(f64, f64, f64)> = Vec::new();
    let ctrl = |s: &numkit::ode::OdeSample| {
        let z = s.t;
        let v = s.y[0];
        acc.push((z, v, s.dy[0]));
        if v.abs() >= 1.0 - 1e-12 {
            cause = StopCause::VReachedOne;
            return StepOutcome::Stop("v reached 1".into());
        }
        if guards.stop_v_nonpositive && v <= 0.0 {
            cause = StopCause::VNonPositive;
            return StepOutcome::Stop("v nonpositive".into());
        }
        let d0 = delta_z(z, v, &pc);
        let zs = z.abs();
        let scale = zs * (1.0 + zs * zs);
        if let Some(floor) = guards.delta0_floor {
            if d0 <= floor * scale {
                cause = StopCause::Delta0Floor;
                return StepOutcome::Stop("Delta0 floor".into());
            }
        }
        if d0.abs() <= 1e-13 * scale {
            cause = StopCause::SingularSet;
            return StepOutcome::Stop("singular set".into());
        }
        StepOutcome::Continue
    };
    match dopri5(rhs, z_start, &[v_start], z_end, &opts, ctrl) {
        Ok(_) => {}
        Err(numkit::ode::OdeError::StepUnderflow { .. }) => cause = StopCause::Stalled,
        Err(e) => return Err(ProfileError::Ode(e.to_string())),
    }
    Ok(BranchRun { samples: acc, cause })
}

/// Hermite segment with serializable layout (numkit's Hermite5 plus serde).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Seg {
    pub z0: f64,
    pub z1: f64,
    pub f0: f64,
    pub d0: f64,
    pub s0: f64,
    pub f1: f64,
    pub d1: f64,
    pub s1: f64,
}

impl Seg {
    pub(crate) fn h5(&self) -> Hermite5 {
        Hermite5 { z0: self.z0, z1: self.z1, f0: self.f0, d0: self.d0, s0: self.s0, f1: self.f1, d1: self.d1, s1: self.s1 }
    }
}

/// Converged profile: found beta, sonic data, Taylor anchors, a dense
/// C^1 representation (quintic Hermite segments), and export samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileSolution {
    pub params: ModelParams,
    pub beta_found: f64,
    /// |extrapolated v(0+)| of the matched trajectory.
    pub shoot_residual: f64,
    pub sonic: SonicPoint,
    pub local_series_zero: Vec<f64>,
    /// Coefficients in (Z - Z1).
    pub local_series_sonic: Vec<f64>,
    pub guard_origin: f64,
    pub guard_sonic: f64,
    pub z_max: f64,
    pub grid: Vec<f64>,
    pub v_samples: Vec<f64>,
    pub v_prime_samples: Vec<f64>,
    pub segments: Vec<Seg>,
}

impl ProfileSolution {
    /// v at any Z in [0, z_max]: Taylor anchor inside the guard zones,
    /// quintic Hermite in between.
    pub fn v(&self, z: f64) -> f64 {
        if z <= self.guard_origin {
            return series::eval(&self.local_series_zero, z);
        }
        if (z - self.sonic.z1).abs() <= self.guard_sonic {
            return series::eval(&self.local_series_sonic, z - self.sonic.z1);
        }
        let i = locate_seg(&self.segments, z);
        self.segments[i].h5().eval_d(z).0
    }

    /// dv/dZ; from the Taylor anchors inside guards, else from the ODE
    /// with the interpolated v.
    pub fn v_prime(&self, z: f64) -> f64 {
        if z <= self.guard_origin {
            return series::eval_d(&self.local_series_zero, z).1;
        }
        if (z - self.sonic.z1).abs() <= self.guard_sonic {
            return series::eval_d(&self.local_series_sonic, z - self.sonic.z1).1;
        }
        let v = self.v(z);
        delta_v(z, v, &self.params) / delta_z(z, v, &self.params)
    }

    /// dv/dZ read off the dense representation alone (Taylor anchors
    /// inside the guards, Hermite slope elsewhere), never from the flow
    /// field. Residual diagnostics must use this route: a derivative
    /// recomputed from the equation under test would make the check
    /// circular and blind to parameter errors.
    pub fn v_prime_dense(&self, z: f64) -> f64 {
        if z <= self.guard_origin {
            return series::eval_d(&self.local_series_zero, z).1;
        }
        if (z - self.sonic.z1).abs() <= self.guard_sonic {
            return series::eval_d(&self.local_series_sonic, z - self.sonic.z1).1;
        }
        let i = locate_seg(&self.segments, z);
        self.segments[i].h5().eval_d(z).1
    }

    /// Derivatives v, v', ..., v^(m) at z, via a fresh Taylor jet of the
    /// solution through (z, v(z)) at ordinary points.
    pub fn v_jet(&self, z: f64, m: usize) -> Result<Vec<f64>, ProfileError> {
        if z <= self.guard_origin * 0.999 {
            return Ok(series::eval_jet(&self.local_series_zero, z, m));
        }
        if (z - self.sonic.z1).abs() <= self.guard_sonic * 0.999 {
            return Ok(series::eval_jet(&self.local_series_sonic, z - self.sonic.z1, m));
        }
        let v = self.v(z);
        let c = ode_series(&self.params, z, &[v], m)?;
        let mut fact = 1.0;
        Ok(c.into_iter()
            .enumerate()
            .map(|(j, cj)| {
                if j > 0 {
                    fact *= j as f64;
                }
                cj * fact
            })
            .collect())
    }

    /// Delta_0(Z) = Delta_Z(Z, v(Z)).
    pub fn delta0(&self, z: f64) -> f64 {
        delta_z(z, self.v(z), &self.params)
    }

    /// d/dZ Delta_0 at the sonic point (negative for the matched branch).
    pub fn delta0_slope_at_sonic(&self) -> f64 {
        let (dzz, dzv) = delta_z_partials(self.sonic.z1, self.sonic.v1, &self.params);
        dzz + dzv * self.sonic.selected_slope
    }
}

fn locate_seg(segs: &[Seg], z: f64) -> usize {
    let mut lo = 0usize;
    let mut hi = segs.len();
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if segs[mid].z0 <= z {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Invariant margins of a converged profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileReport {
    /// min over the grid (Z > 0) of (Z - v)/Z.
    pub margin_v_below_z: f64,
    /// min over the grid of 1 - Z v.
    pub margin_zv_below_one: f64,
    pub delta0_sign_changes: usize,
    pub delta0_slope_at_sonic: f64,
    /// max normalized ODE residual of the interpolant outside guards.
    pub max_ode_residual: f64,
    /// even-part contamination of v near the origin.
    pub parity_leakage_v: f64,
    pub v0_extrapolated: f64,
}

impl ProfileReport {
    pub fn all_pass(&self, residual_tol: f64) -> bool {
        self.margin_v_below_z > 0.0
            && self.margin_zv_below_one > 0.0
            && self.delta0_sign_changes == 1
            && self.delta0_slope_at_sonic < 0.0
            && self.max_ode_residual < residual_tol
            && self.parity_leakage_v < 1e-6
    }
}

/// Check the qualitative facts the construction relies on; called by
/// shoot_beta before returning and by the CLI verify path.
pub fn verify_profile(sol: &ProfileSolution) -> ProfileReport {
    let mut margin_v = f64::INFINITY;
    let mut margin_zv = f64::INFINITY;
    let mut signs = 0usize;
    let mut prev_sign = 0i8;
    for &z in &sol.grid {
        if z <= 0.0 {
            continue;
        }
        let v = sol.v(z);
        margin_v = margin_v.min((z - v) / z);
        margin_zv = margin_zv.min(1.0 - z * v);
        let d0 = sol.delta0(z);
        let s = if d0 > 0.0 {
            1i8
        } else if d0 < 0.0 {
            -1i8
        } else {
            0i8
        };
        if s != 0 {
            if prev_sign != 0 && s != prev_sign {
                signs += 1;
            }
            prev_sign = s;
        }
    }
    // Residual of the dense representation at segment midpoints,
    // measured against the interpolant's own slope (the stored Taylor
    // anchors and Hermite data are independent of the pointwise ratio
    // Delta_v/Delta_Z used here only on one side of the comparison).
    let mut max_res: f64 = 0.0;
    for seg in &sol.segments {
        let zm = 0.5 * (seg.z0 + seg.z1);
        let (v, vp) = seg.h5().eval_d(zm);
        let dz = delta_z(zm, v, &sol.params);
        let dv = delta_v(zm, v, &sol.params);
        let r = (dz * vp - dv).abs() / (dz.abs() * vp.abs() + dv.abs() + 1e-300);
        max_res = max_res.max(r);
    }
    // Parity: v is odd near the origin.
    let zf = 0.2 * sol.sonic.z1;
    let zs: Vec<f64> = (1..=40).map(|i| zf * i as f64 / 40.0).collect();
    let vs: Vec<f64> = zs.iter().map(|&z| sol.v(z)).collect();
    let leak = fit::parity_leakage(&zs, &vs, 7, false);
    // Free extrapolation to Z = 0: the constant term is NOT constrained,
    // so |a0| measures how well the profile actually vanishes there.
    let ze: Vec<f64> = (1..=30)
        .map(|i| sol.guard_origin * (1.0 + 3.0 * i as f64 / 30.0))
        .collect();
    let ve: Vec<f64> = ze.iter().map(|&z| sol.v(z)).collect();
    let v0 = fit::polyfit(&ze, &ve, 5).eval(0.0).abs();
    ProfileReport {
        margin_v_below_z: margin_v,
        margin_zv_below_one: margin_zv,
        delta0_sign_changes: signs,
        delta0_slope_at_sonic: sol.delta0_slope_at_sonic(),
        max_ode_residual: max_res,
        parity_leakage_v: leak,
        v0_extrapolated: v0,
    }
}

/// Barrier kind for [`barrier_residual`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Barrier {
    /// V(Z) = Z on (0, 1).
    Identity,
    /// V(Z) = 1/Z on (1, infinity).
    Reciprocal,
}

/// The barrier operator A[V] = -Delta_Z(Z, V) V' + Delta_v(Z, V)
/// evaluated by the general definition.
pub fn barrier_residual(kind: Barrier, z: f64, p: &ModelParams) -> f64 {
    match kind {
        Barrier::Identity => -delta_z(z, z, p) + delta_v(z, z, p),
        Barrier::Reciprocal => {
            let v = 1.0 / z;
            -delta_z(z, v, p) * (-1.0 / (z * z)) + delta_v(z, v, p)
        }
    }
}

/// Closed forms: A[Z] = (beta ell - k - 1) Z (1-Z^2)^2 and
/// A[1/Z] = (beta - 1) ell Z (1 - 1/Z^2)^2.
pub fn barrier_closed_form(kind: Barrier, z: f64, p: &ModelParams) -> f64 {
    match kind {
        Barrier::Identity => {
            let w = 1.0 - z * z;
            (p.beta * p.ell - p.k - 1.0) * z * w * w
        }
        Barrier::Reciprocal => {
            let w = 1.0 - 1.0 / (z * z);
            (p.beta - 1.0) * p.ell * z * w * w
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ShootOptions {
    /// Target for the branch mismatch at the matching radius.
    pub tol: f64,
    pub scan_points: usize,
    pub z_max: f64,
    /// Guard radii as a fraction of Z1.
    pub guard_frac: f64,
    /// Matching radius as a fraction of Z1. The mismatch is measured
    /// here, between the origin branch integrated rightward and the
    /// sonic branch integrated leftward; both legs run in their stable
    /// direction (the Z^-k deviation mode decays away from the origin,
    /// the fast sonic mode decays toward the sonic point), so the
    /// mismatch carries no amplification. Matching at the origin guard
    /// instead would amplify by (z_match/guard)^k and outrun the
    /// floating-point resolution of beta itself.
    pub match_frac: f64,
    pub series_order: usize,
    pub max_bisect: usize,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions {
            tol: 1e-8,
            scan_points: 64,
            z_max: 100.0,
            guard_frac: 1e-2,
            match_frac: 0.45,
            series_order: 14,
            max_bisect: 200,
        }
    }
}

/// Trial integration outcome for one shot at fixed beta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mismatch {
    /// Reached the origin guard; value is the extrapolated v(0+).
    Value(f64),
    /// Stopped early; sign surrogate for bracketing.
    Crash(f64),
}

impl Mismatch {
    pub fn sign_value(&self) -> f64 {
        match self {
            Mismatch::Value(m) => *m,
            Mismatch::Crash(s) => *s * f64::MAX / 2.0,
        }
    }
}

/// Sonic series with the order backed off below any resonant divisor
/// (the rejected tangency direction can have one at low order).
fn sonic_series_best(p: &ModelParams, z1: f64, v1: f64, slope: f64, order: usize) -> Result<Vec<f64>, ProfileError> {
    let mut ord = order;
    loop {
        match local_series_sonic(p, z1, v1, slope, ord) {
            Ok(c) => return Ok(c),
            Err(ProfileError::SeriesDivisor { order: bad, .. }) if bad > 3 => ord = bad - 1,
            Err(e) => return Err(e),
        }
    }
}

/// Sum a Taylor series to its smallest term (the branch series can have
/// a finite convergence radius, so blind Horner summation is wrong near
/// the radius). Returns (value, magnitude of the smallest term).
fn eval_to_smallest_term(c: &[f64], x: f64) -> (f64, f64) {
    let mut sum = c[0];
    let mut xj = 1.0;
    let mut best = f64::INFINITY;
    for &cj in &c[1..] {
        xj *= x;
        let t = cj * xj;
        if t.abs() > best {
            break;
        }
        sum += t;
        best = t.abs();
    }
    (sum, best)
}

/// Largest offset x <= g_max at which the series self-reports accuracy
/// `target` (by smallest-term size); halves down to a floor.
fn seed_offset(c: &[f64], g_max: f64, target: f64) -> Result<f64, ProfileError> {
    let mut x = g_max;
    for _ in 0..24 {
        let (_, err) = eval_to_smallest_term(c, -x);
        if err <= target {
            return Ok(x);
        }
        x *= 0.5;
    }
    Err(ProfileError::Numerical { what: format!("branch series unusable even at offset {x:.3e}") })
}

/// Shooting mismatch for one tangency root at fixed beta: integrate the
/// corresponding sonic branch leftward and the analytic origin branch
/// rightward, both to the matching radius, and compare. Sonic-side
/// trajectories that leave the strip are mapped to signed crash
/// surrogates: dropping through v = 0 or folding into the singular set
/// below v1 counts as undershoot, rising toward v = 1 or folding above
/// v1 as overshoot.
pub fn shoot_once(p: &ModelParams, root: usize, opts: &ShootOptions) -> Result<Mismatch, ProfileError> {
    let (z1, v1, slopes) = sonic_slopes(p)?;
    let z_match = opts.match_frac * z1;
    let ser = sonic_series_best(p, z1, v1, slopes[root], opts.series_order)?;
    let x_s = seed_offset(&ser, opts.guard_frac * z1, 1e-13 * (1.0 + v1.abs()))?;
    let (v_seed, _) = eval_to_smallest_term(&ser, -x_s);
    if !(0.0..1.0).contains(&v_seed) || delta_z(z1 - x_s, v_seed, p) <= 0.0 {
        return Err(ProfileError::Numerical { what: format!("seed outside the subsonic strip (v = {v_seed:.6})") });
    }
    let guards = BranchGuards { stop_v_nonpositive: true, delta0_floor: Some(1e-7) };
    let run = integrate_branch(p, z1 - x_s, v_seed, z_match, 1e-12, 0.02, guards)?;
    match run.cause {
        StopCause::ReachedEnd => {
            let (z_end, v_end, _) = *run.samples.last().unwrap();
            debug_assert!((z_end - z_match).abs() < 1e-9);
            Ok(Mismatch::Value(v_end - origin_branch_at(p, z_end, opts)?))
        }
        StopCause::VNonPositive => Ok(Mismatch::Crash(-1.0)),
        StopCause::VReachedOne => {
            let (_, v, _) = *run.samples.last().unwrap();
            Ok(Mismatch::Crash(if v > 0.0 { 1.0 } else { -1.0 }))
        }
        StopCause::Delta0Floor | StopCause::Stalled => {
            let (_, v, _) = *run.samples.last().unwrap();
            Ok(Mismatch::Crash(if v >= v1 { 1.0 } else { -1.0 }))
        }
        StopCause::SingularSet => {
            let (z, _, _) = *run.samples.last().unwrap();
            Err(ProfileError::SingularSet { z })
        }
    }
}

/// Value of the analytic origin branch at `z`, obtained by seeding its
/// local series at the origin guard and integrating rightward (the
/// direction in which the singular Z^-k deviation mode decays).
fn origin_branch_at(p: &ModelParams, z: f64, opts: &ShootOptions) -> Result<f64, ProfileError> {
    let (z1, _) = sonic_location(p);
    let g0 = opts.guard_frac * z1;
    let origin = local_series_origin(p, opts.series_order)?;
    if z <= g0 {
        return Ok(series::eval(&origin, z));
    }
    let guards = BranchGuards { stop_v_nonpositive: true, delta0_floor: Some(1e-9) };
    let run = integrate_branch(p, g0, series::eval(&origin, g0), z, 1e-12, 0.02, guards)?;
    if run.cause != StopCause::ReachedEnd {
        let (zc, vc, _) = *run.samples.last().unwrap();
        return Err(ProfileError::Numerical {
            what: format!("origin branch stopped early ({:?} at z = {zc:.6}, v = {vc:.6})", run.cause),
        });
    }
    Ok(run.samples.last().unwrap().1)
}

/// Shoot on beta inside `window` (defaults to the admissibility window)
/// until the sonic branch matches the analytic origin branch, then
/// assemble the dense profile and verify its invariants.
pub fn shoot_beta(
    d: u32,
    p_pow: u32,
    b: f64,
    t_blowup: f64,
    window: Option<BetaWindow>,
    opts: &ShootOptions,
) -> Result<ProfileSolution, ProfileError> {
    let win = match window {
        Some(w) => w,
        None => beta_window(d, p_pow)?,
    };
    if win.is_empty() {
        return Err(ProfileError::EmptyWindow { d, p: p_pow, hi: win.hi });
    }
    let base = crate::params::derive_params(d, p_pow, 0.5 * (win.lo + win.hi), b, t_blowup)?;

    let eval = |beta: f64, root: usize| -> Option<f64> {
        let pp = base.with_beta(beta).ok()?;
        shoot_once(&pp, root, opts).ok().map(|m| m.sign_value())
    };

    // Bracket scan strictly inside the window, both tangency roots:
    // uniform coverage plus a geometric prefix toward the lower
    // endpoint. Whichever root's mismatch changes sign carries the
    // connecting orbit; that is the trial-integration selection.
    let n = opts.scan_points;
    let mut betas: Vec<f64> = (0..n).map(|i| win.lo + (win.hi - win.lo) * (i as f64 + 0.5) / n as f64).collect();
    let mut dx = (win.hi - win.lo) * 0.5 / n as f64;
    while dx > 1e-9 * (win.hi - win.lo) {
        betas.push(win.lo + dx);
        dx *= 0.25;
    }
    betas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = betas.len();
    use rayon::prelude::*;
    let values: Vec<[Option<f64>; 2]> = betas.par_iter().map(|&b| [eval(b, 0), eval(b, 1)]).collect();

    // Candidate brackets: every adjacent sign change, either root. A
    // sign change can also come from the trajectory's fold flipping
    // sides of the sonic line without any connection in between, and a
    // converged match can still be a spurious branch whose supersonic
    // continuation folds back into the singular set. Each candidate is
    // therefore bisected to |m| <= tol and then assembled and verified;
    // candidates failing either stage are discarded.
    let mut candidates = Vec::new();
    for root in [0usize, 1] {
        for i in 0..n - 1 {
            if let (Some(a), Some(b)) = (values[i][root], values[i + 1][root]) {
                if a.signum() != b.signum() {
                    candidates.push((root, betas[i], betas[i + 1], a));
                }
            }
        }
    }
    if candidates.is_empty() {
        return Err(ProfileError::NoAdmissibleBeta { scanned: n, lo: win.lo, hi: win.hi });
    }

    let mut last_reject: Option<ProfileError> = None;
    let mut stalled_best: Option<(f64, f64)> = None;
    for (root, lo0, hi0, flo0) in candidates {
        let (mut lo, mut hi, mut flo) = (lo0, hi0, flo0);
        let mut best = (0.5 * (lo + hi), f64::INFINITY);
        for _ in 0..opts.max_bisect {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            let fm = match eval(mid, root) {
                Some(v) => v,
                None => {
                    // A failed evaluation inside the bracket: shrink toward lo.
                    hi = mid;
                    continue;
                }
            };
            if fm.abs() < best.1 {
                best = (mid, fm.abs());
            }
            if fm.abs() <= opts.tol {
                break;
            }
            if fm.signum() == flo.signum() {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        if best.1 <= opts.tol {
            match assemble_solution(&base.with_beta(best.0)?, root, best.1, opts) {
                Ok(sol) => return Ok(sol),
                Err(e) => {
                    last_reject = Some(e);
                    continue;
                }
            }
        }
        if stalled_best.is_none_or(|(_, r)| best.1 < r) {
            stalled_best = Some(best);
        }
    }
    if let Some(e) = last_reject {
        return Err(e);
    }
    let (beta_best, res_best) = stalled_best.unwrap();
    Err(ProfileError::Numerical {
        what: format!("shooting mismatch stalled at |m| = {res_best:.3e} (beta = {beta_best:.12})"),
    })
}

fn assemble_solution(p: &ModelParams, idx: usize, shoot_residual: f64, opts: &ShootOptions) -> Result<ProfileSolution, ProfileError> {
    let (z1, v1, slopes) = sonic_slopes(p)?;
    let slope = slopes[idx];
    let g0 = opts.guard_frac * z1;
    let order = opts.series_order.max(16);
    let sonic_full = sonic_series_best(p, z1, v1, slope, order)?;
    let origin_series = local_series_origin(p, order)?;

    // The branch series can have a finite convergence radius; shrink the
    // guard until the tail is at rounding level, then drop the unusable
    // tail so plain evaluation inside the guard is accurate.
    let g1 = seed_offset(&sonic_full, opts.guard_frac * z1, 1e-13 * (1.0 + v1.abs()))?;
    let mut cut = sonic_full.len() - 1;
    let mut best = f64::INFINITY;
    for (j, cj) in sonic_full.iter().enumerate().skip(1) {
        let t = (cj * g1.powi(j as i32)).abs();
        if t < best {
            best = t;
            cut = j;
        }
    }
    if cut < 6 {
        return Err(ProfileError::Numerical { what: format!("usable branch series order {cut} too low at the sonic point") });
    }
    let sonic_series: Vec<f64> = sonic_full[..=cut].to_vec();

    // Left of the sonic point the profile is assembled from both ends:
    // the sonic branch integrated down to the matching radius (stable
    // leftward over that range) and the origin branch integrated up to
    // it (the Z^-k deviation mode decays rightward). Joining at the
    // matching radius keeps the amplified mode out of both pieces; the
    // joint gap is the shooting residual.
    let z_match = opts.match_frac * z1;
    let (v_left, _) = series::eval_d(&sonic_series, -g1);
    let guards = BranchGuards { stop_v_nonpositive: false, delta0_floor: None };
    let left_outer = integrate_branch(p, z1 - g1, v_left, z_match, 1e-12, 0.02, guards)?;
    if left_outer.cause != StopCause::ReachedEnd {
        return Err(ProfileError::Numerical { what: format!("left branch stopped early: {:?}", left_outer.cause) });
    }
    let v_g0 = series::eval(&origin_series, g0);
    let left_inner = integrate_branch(p, g0, v_g0, z_match, 1e-12, 0.02, guards)?;
    if left_inner.cause != StopCause::ReachedEnd {
        return Err(ProfileError::Numerical { what: format!("inner branch stopped early: {:?}", left_inner.cause) });
    }
    let joint_gap = (left_outer.samples.last().unwrap().1 - left_inner.samples.last().unwrap().1).abs();
    let shoot_residual = shoot_residual.max(joint_gap);
    let (v_right, _) = series::eval_d(&sonic_series, g1);
    let right_mid = integrate_branch(p, z1 + g1, v_right, 4.0 * z1, 1e-12, 0.02, guards)?;
    if right_mid.cause != StopCause::ReachedEnd {
        let (z, v, _) = *right_mid.samples.last().unwrap();
        return Err(ProfileError::Numerical {
            what: format!(
                "right branch stopped early: {:?} at z = {z:.6}, v = {v:.6}, d0 = {:.3e}",
                right_mid.cause,
                delta_z(z, v, p)
            ),
        });
    }
    let (zr, vr, _) = *right_mid.samples.last().unwrap();
    let right_far = integrate_branch(p, zr, vr, opts.z_max, 1e-12, 0.1, guards)?;
    if right_far.cause != StopCause::ReachedEnd {
        return Err(ProfileError::Numerical { what: format!("far branch stopped early: {:?}", right_far.cause) });
    }

    let mut segs = Vec::new();
    push_segments(&mut segs, &left_inner.samples, p, false);
    push_segments(&mut segs, &left_outer.samples, p, true);
    push_segments(&mut segs, &right_mid.samples, p, false);
    push_segments(&mut segs, &right_far.samples, p, false);
    segs.sort_by(|a, b| a.z0.partial_cmp(&b.z0).unwrap());

    let sonic = SonicPoint { z1, v1, slopes, selected_slope: slope, selected_index: idx };
    let mut sol = ProfileSolution {
        params: *p,
        beta_found: p.beta,
        shoot_residual,
        sonic,
        local_series_zero: origin_series,
        local_series_sonic: sonic_series,
        guard_origin: g0,
        guard_sonic: g1,
        z_max: opts.z_max,
        grid: Vec::new(),
        v_samples: Vec::new(),
        v_prime_samples: Vec::new(),
        segments: segs,
    };
    let grid = export_grid(z1, g0, g1, opts.z_max);
    sol.v_samples = grid.iter().map(|&z| sol.v(z)).collect();
    sol.v_prime_samples = grid.iter().map(|&z| sol.v_prime(z)).collect();
    sol.grid = grid;

    let report = verify_profile(&sol);
    if !report.all_pass(1e-8) {
        return Err(ProfileError::Invariant { what: format!("{report:?}") });
    }
    Ok(sol)
}

fn push_segments(out: &mut Vec<Seg>, samples: &[(f64, f64, f64)], p: &ModelParams, descending: bool) {
    let mut pts: Vec<(f64, f64, f64)> = samples.to_vec();
    if descending {
        pts.reverse();
    }
    for w in pts.windows(2) {
        let (z0, f0, d0) = w[0];
        let (z1, f1, d1) = w[1];
        if z1 <= z0 {
            continue;
        }
        out.push(Seg {
            z0,
            z1,
            f0,
            d0,
            s0: v_second(z0, f0, d0, p),
            f1,
            d1,
            s1: v_second(z1, f1, d1, p),
        });
    }
}

fn export_grid(z1: f64, g0: f64, g1: f64, z_max: f64) -> Vec<f64> {
    let mut grid = Vec::new();
    let lin = |a: f64, b: f64, n: usize, grid: &mut Vec<f64>| {
        for i in 0..n {
            grid.push(a + (b - a) * i as f64 / n as f64);
        }
    };
    lin(0.0, g0, 16, &mut grid);
    lin(g0, z1 - g1, 2000, &mut grid);
    lin(z1 - g1, z1 + g1, 64, &mut grid);
    lin(z1 + g1, 4.0 * z1, 1000, &mut grid);
    // log-spaced tail out to z_max
    let n_tail = 600;
    let a = 4.0 * z1;
    for i in 0..=n_tail {
        grid.push(a * (z_max / a).powf(i as f64 / n_tail as f64));
    }
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    grid
}
