// Range checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod bench;
pub mod error;
pub mod io;
pub mod model;
pub mod ndcore;
pub mod synthgen;
pub mod theory;

pub use error::{Error, Result};
