//! Leading-order amplitude and phase profiles built on top of the slope
//! profile v(Z), plus their spacetime assembly and residual checks.
//!
//! The phase profile is
//!   phi0_hat(Z) = exp((beta-1) I(Z)) / (beta - 1),
//!   I(Z) = integral_0^Z v(s)/(1 - s v(s)) ds,
//! and the amplitude profile is the closed form
//!   rho0_hat = (beta-1)^{2/(p-1)} phi0_hat^{2/(p-1)} (1-v^2)^{1/(p-1)}
//!              / (1-Zv)^{2/(p-1)}.
//! Both are smooth and even; the integrand is odd and stays regular
//! because 1 - Zv keeps a positive margin on the whole grid.

use numkit::ode::{dopri5, OdeOptions, StepOutcome};
use numkit::quad::gauss_legendre;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile_ode::{ProfileSolution, Seg};

#[derive(Debug, Error)]
pub enum FieldsError {
    #[error("1 - Z v is not positive at Z = {z:.6} (value {value:.3e})")]
    LightconeMargin { z: f64, value: f64 },
    #[error("spacetime point maps to Z = {z:.3e}, outside grid coverage [0, {z_max:.3e}]")]
    OutOfCoverage { z: f64, z_max: f64 },
    #[error("time {t} is not inside [0, T) with T = {t_blowup}")]
    BadTime { t: f64, t_blowup: f64 },
    #[error("phase integration failed: {0}")]
    Ode(String),
}

/// Leading-order profiles sampled on the profile grid, with a dense
/// quintic representation of phi0_hat for off-grid evaluation. The
/// amplitude and every derivative are closed forms in (phi0_hat, v, v'),
/// so only the phase profile carries its own segments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileFields {
    pub sol: ProfileSolution,
    pub phi0_hat: Vec<f64>,
    pub rho0_hat: Vec<f64>,
    pub phi0_hat_prime: Vec<f64>,
    /// Max relative gap between the quadrature route and the ODE route
    /// for phi0_hat over the grid; an honest accuracy bound.
    pub quadrature_error: f64,
    phi_segments: Vec<Seg>,
}

/// Spacetime values of the leading-order pair at one (t, r) point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpacetimePoint {
    pub phi0: f64,
    pub rho0: f64,
    pub phi0_t: f64,
    pub phi0_r: f64,
    pub rho0_t: f64,
    pub rho0_r: f64,
}

fn exponent_2_over_pm1(p: &crate::params::ModelParams) -> f64 {
    2.0 / (p.p as f64 - 1.0)
}

/// rho0_hat from phi0_hat and v by the closed form.
fn rho_hat_closed(p: &crate::params::ModelParams, z: f64, v: f64, phi: f64) -> f64 {
    let e2 = exponent_2_over_pm1(p);
    let bm1 = p.beta - 1.0;
    (bm1 * phi).powf(e2) * (1.0 - v * v).powf(0.5 * e2) / (1.0 - z * v).powf(e2)
}

impl ProfileFields {
    /// phi0_hat anywhere on [0, z_max].
    pub fn phi_hat(&self, z: f64) -> f64 {
        let segs = &self.phi_segments;
        let i = match segs.binary_search_by(|s| s.z1.partial_cmp(&z).unwrap()) {
            Ok(i) => (i + 1).min(segs.len() - 1),
            Err(i) => i.min(segs.len() - 1),
        };
        segs[i].h5().eval_d(z).0
    }

    /// phi0_hat'(Z) = (beta-1) phi0_hat v / (1 - Zv); exact in the
    /// interpolated values, no differencing.
    pub fn phi_hat_prime(&self, z: f64) -> f64 {
        let p = &self.sol.params;
        (p.beta - 1.0) * self.phi_hat(z) * self.sol.v(z) / (1.0 - z * self.sol.v(z))
    }

    pub fn rho_hat(&self, z: f64) -> f64 {
        rho_hat_closed(&self.sol.params, z, self.sol.v(z), self.phi_hat(z))
    }

    /// Logarithmic derivative of rho0_hat; closed form in v, v'.
    fn rho_hat_log_deriv(&self, z: f64) -> f64 {
        let p = &self.sol.params;
        let e2 = exponent_2_over_pm1(p);
        let v = self.sol.v(z);
        let vp = self.sol.v_prime(z);
        let a = 1.0 - z * v;
        let w = 1.0 - v * v;
        e2 * ((p.beta - 1.0) * v / a + (v + z * vp) / a - v * vp / w)
    }

    pub fn rho_hat_prime(&self, z: f64) -> f64 {
        self.rho_hat(z) * self.rho_hat_log_deriv(z)
    }

    /// Self-similar evaluation with analytic derivatives:
    ///   phi0 = (T-t)^{1-beta} phi0_hat(Z),  Z = r/(T-t),
    ///   rho0 = (T-t)^{-2 beta/(p-1)} rho0_hat(Z),
    ///   d_t phi0 = (T-t)^{-beta} ((beta-1) phi0_hat + Z phi0_hat'),
    ///   d_r phi0 = (T-t)^{-beta} phi0_hat', and likewise for rho0 with
    ///   the exponent 2 beta/(p-1).
    pub fn eval_spacetime(&self, t: f64, r: f64) -> Result<SpacetimePoint, FieldsError> {
        let p = &self.sol.params;
        let tt = p.t_blowup - t;
        if !(t >= 0.0 && tt > 0.0) {
            return Err(FieldsError::BadTime { t, t_blowup: p.t_blowup });
        }
        let z = r / tt;
        if !(0.0..=self.sol.z_max).contains(&z) {
            return Err(FieldsError::OutOfCoverage { z, z_max: self.sol.z_max });
        }
        let phi = self.phi_hat(z);
        let phip = self.phi_hat_prime(z);
        let rho = self.rho_hat(z);
        let rhop = rho * self.rho_hat_log_deriv(z);
        let bm1 = p.beta - 1.0;
        let e = 2.0 * p.beta / (p.p as f64 - 1.0);
        Ok(SpacetimePoint {
            phi0: tt.powf(1.0 - p.beta) * phi,
            rho0: tt.powf(-e) * rho,
            phi0_t: tt.powf(-p.beta) * (bm1 * phi + z * phip),
            phi0_r: tt.powf(-p.beta) * phip,
            rho0_t: tt.powf(-e - 1.0) * (e * rho + z * rhop),
            rho0_r: tt.powf(-e - 1.0) * rhop,
        })
    }
}

/// Build the leading-order profiles on the solution's grid. phi0_hat is
/// computed twice: cumulative Gauss-Legendre quadrature of the integrand
/// v/(1-sv) per grid cell, and direct integration of the equivalent ODE
/// phi' = (beta-1) phi v / (1-Zv); the max relative gap is stored as the
/// accuracy bound and the quadrature route is kept as canonical.
pub fn build_profiles(sol: &ProfileSolution) -> Result<ProfileFields, FieldsError> {
    let p = sol.params;
    let bm1 = p.beta - 1.0;
    let grid = &sol.grid;

    for (&z, &v) in grid.iter().zip(&sol.v_samples) {
        let a = 1.0 - z * v;
        if a <= 0.0 {
            return Err(FieldsError::LightconeMargin { z, value: a });
        }
    }

    // Route 1: cumulative quadrature of the odd integrand.
    let (xs, ws) = gauss_legendre(12);
    let mut integral = vec![0.0_f64; grid.len()];
    for i in 1..grid.len() {
        let (a, b) = (grid[i - 1], grid[i]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (&x, &w) in xs.iter().zip(&ws) {
            let s = mid + half * x;
            let v = sol.v(s);
            acc += w * v / (1.0 - s * v);
        }
        integral[i] = integral[i - 1] + half * acc;
    }
    let phi_quad: Vec<f64> = integral.iter().map(|&i| (bm1 * i).exp() / bm1).collect();

    // Route 2: the ODE, cell by cell so the nodes land exactly.
    let mut phi_ode = vec![0.0_f64; grid.len()];
    phi_ode[0] = 1.0 / bm1;
    let opts = OdeOptions { rtol: 1e-12, atol: 1e-300, h_init: None, h_max: f64::INFINITY, max_steps: 100_000 };
    for i in 1..grid.len() {
        let rhs = |z: f64, y: &[f64], dy: &mut [f64]| {
            let v = sol.v(z);
            dy[0] = bm1 * y[0] * v / (1.0 - z * v);
        };
        let (samples, _) = dopri5(rhs, grid[i - 1], &[phi_ode[i - 1]], grid[i], &opts, |_s| StepOutcome::Continue)
            .map_err(|e| FieldsError::Ode(e.to_string()))?;
        phi_ode[i] = samples.last().expect("dopri5 returns at least the initial sample").y[0];
    }

    let mut gap = 0.0_f64;
    for i in 0..grid.len() {
        gap = gap.max((phi_quad[i] - phi_ode[i]).abs() / phi_quad[i].abs());
    }

    // Dense representation: quintic Hermite per cell with analytic first
    // and second derivatives from the phase ODE.
    let deriv = |z: f64, phi: f64| -> (f64, f64) {
        let v = sol.v(z);
        let vp = sol.v_prime(z);
        let a = 1.0 - z * v;
        let d1 = bm1 * phi * v / a;
        let d2 = bm1 * (d1 * v / a + phi * vp / a + phi * v * (v + z * vp) / (a * a));
        (d1, d2)
    };
    let mut segs = Vec::with_capacity(grid.len() - 1);
    let mut prime = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let (d1, _) = deriv(grid[i], phi_quad[i]);
        prime.push(d1);
    }
    for i in 1..grid.len() {
        let (d0, s0) = deriv(grid[i - 1], phi_quad[i - 1]);
        let (d1, s1) = deriv(grid[i], phi_quad[i]);
        segs.push(Seg {
            z0: grid[i - 1],
            z1: grid[i],
            f0: phi_quad[i - 1],
            d0,
            s0,
            f1: phi_quad[i],
            d1,
            s1,
        });
    }

    let rho: Vec<f64> = grid
        .iter()
        .zip(&sol.v_samples)
        .zip(&phi_quad)
        .map(|((&z, &v), &phi)| rho_hat_closed(&p, z, v, phi))
        .collect();

    Ok(ProfileFields {
        sol: sol.clone(),
        phi0_hat: phi_quad,
        rho0_hat: rho,
        phi0_hat_prime: prime,
        quadrature_error: gap,
        phi_segments: segs,
    })
}

/// Residual norms of the radial leading-order system over `n` sample
/// points on (0, z_max]: r1 for the algebraic (eikonal) relation
///   rho0_hat^{p-1} = (beta-1)^2 phi0_hat^2 (1-v^2)/(1-Zv)^2,
/// r2 for the divergence equation in its reduced form
///   (beta l - v' - k v/Z) tphi0 = (v - Z) tphi0',
/// with tphi0 = phi0_hat^l (1-v^2)^{(l-1)/2} / (1-Zv)^l. Both are
/// normalized by the magnitudes of the terms entering them.
pub fn leading_order_residuals(fields: &ProfileFields, n: usize) -> (f64, f64) {
    let p = &fields.sol.params;
    let (mut r1, mut r2) = (0.0_f64, 0.0_f64);
    for i in 1..=n {
        let z = fields.sol.z_max * i as f64 / n as f64;
        let v = fields.sol.v(z);
        // The dense-representation slope, not the flow field: r2 checks
        // whether the stored trajectory satisfies the reduced divergence
        // equation, so the derivative must come from the data.
        let vp = fields.sol.v_prime_dense(z);
        let phi = fields.phi_hat(z);
        let rho = fields.rho_hat(z);
        let a = 1.0 - z * v;
        let w = 1.0 - v * v;

        let lhs = rho.powi(p.p as i32 - 1);
        let rhs = (p.beta - 1.0).powi(2) * phi * phi * w / (a * a);
        r1 = r1.max((lhs - rhs).abs() / (lhs.abs() + rhs.abs()));

        // tphi0'/tphi0 in closed form; the residual is divided by tphi0
        // so only the log-derivative enters.
        let log_tphi_prime = p.beta * p.ell * v / a + v * vp / w + p.ell * (z - v) * vp / (w * a);
        let t1 = p.beta * p.ell - vp - p.k * v / z;
        let t2 = (v - z) * log_tphi_prime;
        r2 = r2.max((t1 - t2).abs() / (t1.abs() + t2.abs() + 1.0));
    }
    (r1, r2)
}
