//! Simulation and analysis of differentially private gradient-tracking
//! distributed optimization.

// Parameter checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bounds;
pub mod engine;
pub mod error;
pub mod harness;
pub mod objectives;
pub mod privacy;
pub mod randomness;
pub mod topology;

pub use error::{Error, Result};
