// `!(x >= 0.0)` style checks are meant to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod components;
pub mod error;
pub mod linalg;
pub mod lqg;
pub mod noise;
pub mod optimizer;
pub mod oracles;
pub mod scenario;
pub mod slh;
pub mod statespace;

pub use error::{Error, Result};
