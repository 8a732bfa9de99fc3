//! Eigenvalue flow of discrete Schrödinger operators `A − αV` on ℤ^d through a
//! point of a spectral gap, and its large-coupling asymptotics in terms of the
//! integrated density of states of the periodic background.

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod asymptotics;
pub mod birman_schwinger;
pub mod bloch;
#[cfg(feature = "cli")]
pub mod commands;
pub mod config;
pub mod domain;
pub mod dos;
pub mod eigencount;
pub mod error;
pub mod ldlt;
pub mod model;
pub mod operator;
mod par;
pub mod plot;

pub use error::{Error, Result};
