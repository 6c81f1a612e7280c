//! Numerical toolkit for the lifespan of small solutions to 2-D quasilinear
//! wave systems with distinct propagation speeds.
//!
//! The crate is organised around the pipeline
//! coefficients → null-condition checks → radiation field → blow-up constant
//! `H` → predicted lifespan, with an explicit finite-difference simulator to
//! measure lifespans empirically and a set of linear reference solvers used as
//! oracles.

// NaN must fail every positivity check, hence `!(x > 0.0)`
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod io;
pub mod jet;
pub mod lifespan;
pub mod nullform;
pub mod quadrature;
pub mod radiation;
pub mod simulator;
pub mod waveops;

pub use error::{Error, Result};
