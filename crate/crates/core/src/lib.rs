//! Option pricing under the stochastic volatility Jacobi model with
//! polynomial expansions and optimal quantization.

pub mod error;
pub mod error_lab;
pub mod hermite;
pub mod model;
pub mod par;
pub mod pricing;
pub mod quadrature;
pub mod quantizer;
pub mod rmq;
pub mod special;

pub use error::{Error, Result};
pub use model::{GaussianWeight, SvjParams};
