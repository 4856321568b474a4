//! Tensors, seeded randomness and diagonal-Gaussian algebra.

pub mod gaussian;
pub mod rng;
pub mod tensor;

pub use gaussian::{entropy, kl_to_standard_normal, poe_fuse, reparam_sample, DiagGaussian};
pub use rng::SeededRng;
pub use tensor::Tensor;
