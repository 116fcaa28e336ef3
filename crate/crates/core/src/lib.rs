// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod conv;
pub mod drift;
pub mod duhamel;
pub mod error;
pub mod error_analysis;
pub mod euler;
pub mod experiment;
pub mod kernel1d;
mod par;
pub mod proxy_kernel;
pub mod quadrature;
pub mod rng;
pub mod stable_noise;
pub mod stats;

pub use error::{Error, Result};
