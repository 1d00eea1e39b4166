#![no_std]
// `!(x > 0.0)` forms are used so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod eval;
pub mod geom;
pub mod mscg;
pub mod ncm;
pub mod sampling;
pub mod scale_balance;
pub mod scenegen;
pub mod spatial;

pub use error::{Error, Result};
