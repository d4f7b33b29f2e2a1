//! Simulation and numerical-optimization toolkit for two-time-scale
//! McKean-Vlasov systems with jumps.
//!
//! The slow component `X` and the fast component `Y` evolve as
//!
//! ```text
//! dX = b1(X, L_X, Y) dt + sqrt(eps) s1(X, L_X) dW + eps * int g(t, X, L_X, z) Ñ^{1/eps}(dz dt)
//! dY = b2(X, L_X, Y) dt / delta + s2(X, L_X, Y) dW / sqrt(delta)
//! ```
//!
//! where `L_X` is the time-marginal law of the slow component, approximated by
//! the empirical measure of an interacting particle ensemble.
//!
//! Modules:
//! - [`model`]: system definitions, builtin models, measures and W2.
//! - [`sde`]: reproducible particle Monte Carlo for the coupled and controlled systems.
//! - [`averaging`]: frozen fast process, averaged drift and the averaged ODE.
//! - [`variational`]: control costs, skeleton equation and rate-function optimization.
//! - [`experiments`]: rare-event estimation, importance sampling and reports.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod config;
pub mod error;
pub mod experiments;
pub mod model;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod variational;

pub use error::{Error, ErrorKind, Result};
