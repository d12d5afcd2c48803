// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allowlist;
pub mod beamform;
pub mod channel;
pub mod cli;
pub mod codebook;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod linalg;
pub mod saturation;
pub mod stochastic;
pub mod validate;

pub use error::{Error, Result};
