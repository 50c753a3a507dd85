// Validators use `!(x > 0.0)` so that NaN is rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channels;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod matio;
pub mod mu_opt;
pub mod report;
pub mod sdp;
pub mod su_opt;
pub mod system;

pub use error::{Error, Result};
