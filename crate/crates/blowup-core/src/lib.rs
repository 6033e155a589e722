//! Self-similar blow-up profiles for the defocusing nonlinear wave
//! equation with an odd power nonlinearity in high dimensions.
//!
//! The construction factors the solution as amplitude times oscillatory
//! phase with a small parameter b; at leading order both reduce to a
//! single slope profile v(Z) of a planar ODE with a sonic point. This
//! crate holds the parameter bookkeeping ([`params`]), the profile
//! shooting machinery ([`profile_ode`]), and the leading-order amplitude
//! and phase fields built on top of the profile ([`profile_fields`]).

pub mod params;
pub mod profile_fields;
pub mod profile_ode;

pub use params::{derive_params, ModelParams, ParamError};
pub use profile_fields::{build_profiles, ProfileFields};
pub use profile_ode::{shoot_beta, ProfileSolution, ShootOptions};
