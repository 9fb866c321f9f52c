//! Iterative procedures from summability theory and stochastic
//! approximation, with seeded simulation experiments.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditions;
pub mod error;
pub mod harness;
pub mod identification;
pub mod kernel;
pub mod lln;
pub mod monte_carlo;
pub mod numerics;
pub mod processes;
pub mod recursion;
pub mod regression;
pub mod sa;
pub mod summability;
pub mod trace;

pub use error::{Error, Result};
