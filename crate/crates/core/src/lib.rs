//! Meta-learned recurrent updates for likelihood-free inference.
//!
//! A recurrent updater is trained across many simulated inference problems
//! to move a diagonal Gaussian proposal over simulator parameters toward the
//! parameters that generated a set of observations, using only forward
//! simulations. The crate bundles the pieces it needs:
//!
//! - [`tape`], [`tensor`], [`gradcheck`]: reverse-mode autodiff on dense `f64` tensors
//! - [`rng`], [`dist`]: counter-based random streams and samplers
//! - [`nn`]: dense layers, GRU cell, set encoder, the recurrent updater
//! - [`proposal`]: the Gaussian proposal, its log-density and score
//! - [`simulators`]: Poisson, linear regression, multivariate and Weinberg simulators
//! - [`meta`]: rollouts, losses, Adam, meta-training and checkpoints
//! - [`harness`]: evaluation, reports and the CLI

pub mod dist;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod meta;
pub mod nn;
pub mod par;
pub mod proposal;
pub mod rng;
pub mod simulators;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::RandomSource;
pub use tape::{Activation, Tape, Var};
pub use tensor::Tensor;
