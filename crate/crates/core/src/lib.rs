// negated comparisons below are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assemble;
pub mod bundle;
pub mod calc3;
pub mod error;
pub mod flowline;
pub mod framekit;
pub mod riccati;
pub mod scenario;

pub use error::{Error, Result};
