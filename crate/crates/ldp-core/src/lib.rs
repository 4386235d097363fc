//! Local differential privacy toolkit: baseline LDP mechanisms, a variational
//! Laplace mechanism built on a small dense-network autodiff engine, DP-Adam
//! with Renyi accounting, noise-aware classification, and analytic accuracy
//! bounds with Monte Carlo verification.
//!
//! The crate is `no_std` (with `alloc`) so the algorithmic core stays free of
//! IO concerns; file formats, preprocessing and the experiment CLI live in the
//! companion `ldp-cli` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod classifier;
pub mod dp_optim;
pub mod error;
pub mod math;
pub mod mechanisms;
pub mod net;
pub mod rng;
pub mod tensor;
pub mod vlm;

pub use error::{CoreError, Result};
pub use rng::RandomnessSource;
pub use tensor::Tensor;
