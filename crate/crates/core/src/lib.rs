//! Stationary non-causal random fields on ℤ^κ.
//!
//! A field solves `X_t = F((X_{t+s})_{s∈B}, ε_t)` for an i.i.d. innovation
//! field `ξ = (ε_t)`. This crate simulates the fixed point by Picard
//! iteration, builds finite-dependency truncations of it, evaluates
//! Lipschitz-separable statistics, computes the associated closed-form
//! concentration bounds and checks them by coupled Monte Carlo.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
mod error;
pub mod exec;
pub mod innovations;
pub mod lattice;
pub mod model;
pub mod montecarlo;
pub mod statistics;

pub use error::{Error, Result};
