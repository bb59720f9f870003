//! Simulation of pure-jump SDEs driven by an infinite-activity Poisson random
//! measure, comparing small-jump truncation against replacing the small jumps
//! by a drift plus a Gaussian term.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod coeffs;
pub mod error;
pub mod experiments;
pub mod generators;
pub mod measures;
pub mod quadrature;
pub mod registry;
pub mod sampling;
pub mod schemes;
pub mod stats;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
