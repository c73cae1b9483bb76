//! Simulation and analysis of a PD-controlled two-link walker.

// `!(x > lim)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
mod error;
pub mod experiment;
pub mod hybrid;
pub mod hzd;
pub mod integrate;
pub mod linalg;
pub mod model;
pub mod outputs;
pub mod transforms;
pub mod verify;

pub use error::{Error, Result};
