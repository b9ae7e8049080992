#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimates;
pub mod continuum;
pub mod fit;
pub mod fracderiv;
pub mod grid;
pub mod potential;
pub mod quadrature;
pub mod spaces;
pub mod spectral;
pub mod subordinator;

pub use error::{Error, Result};
