//! Measurement of a spin-½ by a Curie–Weiss magnet coupled to a bath:
//! collective dynamics on the magnetization grid, dephasing of the
//! off-diagonal blocks, and registration of the diagonal ones.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bath;
pub mod cli;
pub mod dephasing;
pub mod error;
pub mod measurement;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod registration;

pub use error::{Error, Result};
