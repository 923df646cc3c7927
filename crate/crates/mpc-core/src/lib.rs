//! Core numerics for evidential classification under a learned
//! hyperparameter controller.
//!
//! The crate is `no_std` (with `alloc`) and fully deterministic: every
//! stochastic operation takes an explicit seeded generator. IO, file
//! formats and the command-line harness live in the companion `mpc-cli`
//! crate.
//!
//! Layout:
//! - [`tensor`], [`nn`], [`optim`], [`special`]: the dense numerical kernel
//! - [`evidential`]: Dirichlet evidence, closed-form KL, the configurable loss
//! - [`metrics`]: ACC / ECE / MUE / RACC and the prediction-record dump format
//! - [`policy`]: state features, two-headed policy network, REINFORCE
//! - [`trainer`]: the two-timescale training loop
//! - [`datagen`]: seeded synthetic datasets and the IDX byte parser
//! - [`regret`]: projected online gradient descent with regret measurement

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod datagen;
pub mod error;
pub mod evidential;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod policy;
pub mod regret;
pub mod rng;
pub mod special;
pub mod tensor;
pub mod trainer;

pub use error::CoreError;
pub use tensor::Tensor2;
