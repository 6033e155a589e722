//! Shared numerical kernels for the blow-up toolkit.
//!
//! Nothing in here knows about wave equations; this crate is the common
//! toolbox: truncated power series arithmetic (including real powers of a
//! series), an adaptive Dormand-Prince 5(4) stepper with stop predicates
//! and two-derivative dense samples, Gauss-Legendre quadrature with
//! runtime node generation, polynomial least squares / slope fits, local
//! polynomial and quintic Hermite interpolation, smooth cutoff functions,
//! and a tiny deterministic RNG for reproducible spot checks.

pub mod bump;
pub mod fit;
pub mod interp;
pub mod ode;
pub mod quad;
pub mod rng;
pub mod series;
