//! Numerical laboratory for the 1-D stochastic wave equation driven by noise
//! that is white in time and fractional in space.

// `!(x > 0.0)` is used on purpose so NaN is rejected along with the bound.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chaos;
pub mod error;
pub mod kernels;
pub mod noise;
pub mod norms;
pub mod params;
pub mod quadrature;
pub mod scalar;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
pub use params::{ExactParamSet, ParamSet};
