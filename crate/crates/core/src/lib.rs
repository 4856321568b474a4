//! Factorized variational autoencoder for grouped (multi-aspect) data.
//!
//! Each group of an observation gets its own encoder, producing a Gaussian
//! expert over a shared latent code, and its own decoder. Experts from the
//! groups that happen to be observed are multiplied with the prior, so the
//! model trains and predicts with arbitrary groups missing. A group-lasso
//! penalty on the stacked latent-to-group matrices, applied through its
//! proximal map, zeroes whole group/latent links and makes the learned
//! dependency structure readable.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod math;
pub mod model;
pub mod optim;
pub mod sparsity;
pub mod trainer;

pub use error::{Error, Result};
