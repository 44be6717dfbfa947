//! Multi-agent controllers with a learned continuous communication channel.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: dense tensors, tape-based reverse-mode differentiation,
//!   a splitmix random source, a power-iteration eigensolver and the binary
//!   checkpoint format.
//! * [`model`]: the communicating controller and its three baselines.
//! * [`envs`]: lever pulling, traffic junction and combat environments.
//! * [`training`]: rollouts, REINFORCE with a learned baseline, supervised
//!   cross-entropy, optimizers, curricula and evaluation.
//! * [`analysis`]: hidden/communication vector logs, PCA, heatmaps and the
//!   two-car probe.

pub mod analysis;
pub mod envs;
pub mod error;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
