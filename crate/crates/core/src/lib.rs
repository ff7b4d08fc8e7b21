//! Simulation and regression Monte Carlo for forward–backward systems with
//! delay: segment-valued state, BSDE solvers, control and pricing layers.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod bsde;
pub mod control;
pub mod error;
pub mod kolmogorov;
mod linalg;
pub mod malliavin;
pub mod noise;
mod par;
pub mod pricing;
pub mod quadvar;
pub mod sdde;
pub mod segment;
pub mod stats;

pub use error::{Error, Result};
