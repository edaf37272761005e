//! Rate-distortion-perception tradeoffs for Gaussian sources under limited
//! common randomness.
//!
//! The crate computes the minimal achievable mean squared error of a Gaussian
//! source coded at rate `R` bits with `C` bits of common randomness, subject
//! to a squared-Wasserstein realism budget `P`:
//!
//! - [`scalar`]: closed-form tradeoff, threshold curves, and limit regimes
//!   for the scalar source.
//! - [`vector`]: rate allocation across parallel components (block-descent
//!   solver plus an exhaustive grid oracle).
//! - [`transport`]: Gaussian and empirical quadratic transport costs, and
//!   the interpolation construction that trades distortion for realism.
//! - [`sim`]: a Monte Carlo coding testbed (random codebooks, likelihood
//!   encoding, soft-covering diagnostics) that checks the theory end to end.
//! - [`cli`]: the `wrdp` command-line tool.
//!
//! Rates are in bits. `C = +inf` and `P = +inf` are valid inputs and are
//! handled analytically, never by large-number substitution.

pub mod cli;
pub mod error;
pub mod scalar;
pub mod sim;
pub mod threads;
pub mod transport;
pub mod types;
pub mod vector;

pub use error::{Error, Result};
pub use types::{
    DiagGaussianSource, GaussianCoupling, GaussianScalarSource, RateAllocation, TradeoffPoint,
    TradeoffQuery,
};
