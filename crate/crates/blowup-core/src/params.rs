//! Model parameters for the radial defocusing wave equation with power
//! nonlinearity |u|^(p-1) u in d space dimensions.
//!
//! Derived quantities used everywhere downstream:
//!   k     = d - 1                (radial Laplacian weight)
//!   ell   = 1 + 4/(p-1)
//!   gamma = beta (ell - 1) + 2 = 4 beta/(p-1) + 2
//! The front ansatz is admissible iff beta > 1 and k > beta (ell + sqrt ell),
//! i.e. beta lies in the open window (1, k/(ell + sqrt ell)).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// k = 3 cutoff: exact algebraic constant (76 - 4 sqrt 154)/23,
/// which lies in (8/7, 7/6).
pub fn ell_star_3() -> f64 {
    (76.0 - 4.0 * 154.0_f64.sqrt()) / 23.0
}

/// k = 4 cutoff used by [`check_corollary_range`]. The sharp threshold
/// for k = 4 has no closed form; it lies strictly above 5/4, and every
/// ell <= 5/4 is known to be admissible. We therefore test ell against
/// this conservative bound (inclusively). Values in (5/4, sharp) are
/// rejected even though they are actually admissible.
pub const ELL1_K4_BOUND: f64 = 1.25;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("construction requires d >= 4 (got d = {d})")]
    DimensionTooLow { d: u32 },
    #[error("nonlinearity power must be an odd integer >= 3 (got p = {p})")]
    BadPower { p: u32 },
    #[error("{name} must be positive and finite (got {value})")]
    NonPositive { name: &'static str, value: f64 },
}

/// Full parameter pack for one run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ModelParams {
    pub d: u32,
    pub p: u32,
    pub k: f64,
    pub ell: f64,
    pub beta: f64,
    pub gamma: f64,
    pub b: f64,
    #[serde(rename = "T")]
    pub t_blowup: f64,
    pub admissible: bool,
}

/// Validate inputs and derive k, ell, gamma, admissibility.
pub fn derive_params(d: u32, p: u32, beta: f64, b: f64, t_blowup: f64) -> Result<ModelParams, ParamError> {
    if d < 4 {
        return Err(ParamError::DimensionTooLow { d });
    }
    if p < 3 || p.is_multiple_of(2) {
        return Err(ParamError::BadPower { p });
    }
    for (name, value) in [("beta", beta), ("b", b), ("T", t_blowup)] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(ParamError::NonPositive { name, value });
        }
    }
    let k = (d - 1) as f64;
    let ell = 1.0 + 4.0 / (p as f64 - 1.0);
    let gamma = beta * (ell - 1.0) + 2.0;
    let admissible = beta > 1.0 && k > beta * (ell + ell.sqrt());
    Ok(ModelParams { d, p, k, ell, beta, gamma, b, t_blowup, admissible })
}

impl ModelParams {
    /// Same parameter pack with a different beta (re-derives gamma and
    /// admissibility). Used by the shooting loop.
    pub fn with_beta(&self, beta: f64) -> Result<ModelParams, ParamError> {
        derive_params(self.d, self.p, beta, self.b, self.t_blowup)
    }
}

/// Open admissibility window for beta at fixed (d, p).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct BetaWindow {
    pub lo: f64,
    pub hi: f64,
}

impl BetaWindow {
    pub fn is_empty(&self) -> bool {
        // NaN endpoints count as empty.
        self.hi.partial_cmp(&self.lo) != Some(std::cmp::Ordering::Greater)
    }

    pub fn contains(&self, beta: f64) -> bool {
        beta > self.lo && beta < self.hi
    }
}

/// (1, k/(ell + sqrt ell)); empty (hi <= 1) when k <= ell + sqrt ell.
pub fn beta_window(d: u32, p: u32) -> Result<BetaWindow, ParamError> {
    if d < 4 {
        return Err(ParamError::DimensionTooLow { d });
    }
    if p < 3 || p.is_multiple_of(2) {
        return Err(ParamError::BadPower { p });
    }
    let k = (d - 1) as f64;
    let ell = 1.0 + 4.0 / (p as f64 - 1.0);
    Ok(BetaWindow { lo: 1.0, hi: k / (ell + ell.sqrt()) })
}

/// Whether (d, p) falls in the range covered by the sharp existence
/// statement for k = d - 1 in {3, 4}: k = 3 needs 1 < ell < ell_star_3,
/// k = 4 uses the conservative inclusive bound ell <= ELL1_K4_BOUND.
pub fn check_corollary_range(d: u32, p: u32) -> Result<bool, ParamError> {
    check_corollary_range_with(d, p, ELL1_K4_BOUND)
}

/// Same with an explicit k = 4 cutoff (must not exceed the sharp
/// threshold; the default is the proven-safe 5/4).
pub fn check_corollary_range_with(d: u32, p: u32, ell1_k4: f64) -> Result<bool, ParamError> {
    if d < 4 {
        return Err(ParamError::DimensionTooLow { d });
    }
    if p < 3 || p.is_multiple_of(2) {
        return Err(ParamError::BadPower { p });
    }
    let ell = 1.0 + 4.0 / (p as f64 - 1.0);
    Ok(match d - 1 {
        3 => 1.0 < ell && ell < ell_star_3(),
        4 => 1.0 < ell && ell <= ell1_k4,
        _ => false,
    })
}

/// Time-power ladder of the correction hierarchy. Order n carries
/// (T-t)^lambda_n on the phase and (T-t)^mu_n on the modulus.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExponentLadder {
    pub beta: f64,
    pub p: u32,
    pub gamma: f64,
    pub k: f64,
}

impl ExponentLadder {
    pub fn new(params: &ModelParams) -> Self {
        ExponentLadder { beta: params.beta, p: params.p, gamma: params.gamma, k: params.k }
    }

    /// lambda_n = (2n - 1)(beta - 1).
    pub fn lambda(&self, n: u32) -> f64 {
        (2.0 * n as f64 - 1.0) * (self.beta - 1.0)
    }

    /// mu_n = 2n (beta - 1) - 2 beta/(p - 1).
    pub fn mu(&self, n: u32) -> f64 {
        2.0 * n as f64 * (self.beta - 1.0) - 2.0 * self.beta / (self.p as f64 - 1.0)
    }

    /// Dual-forbidden exponent gamma - k - 2 (= beta(ell-1) - k); negative
    /// for admissible parameters.
    pub fn lambda0_star(&self) -> f64 {
        self.gamma - self.k - 2.0
    }
}
