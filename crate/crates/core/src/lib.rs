//! Continual learning with meta-experience replay.
//!
//! This crate holds the pure algorithmic core: a small dense network with exact
//! gradients, non-stationary task streams, replay memories, every learner
//! (MER variants, experience replay, EWC, GEM and the simple baselines), the
//! evaluation-matrix metrics, and a low-dimensional continual RL harness.
//!
//! It is `no_std` and only needs `alloc`. File formats, the CLI and parallel
//! seed sweeps live in the companion `mer-lab` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod learners;
pub mod metrics;
pub mod nn;
pub mod protocol;
pub mod replay;
pub mod rl;
pub mod rng;
pub mod streams;

pub use error::{Error, Result};
pub use nn::{GradResult, NetworkSpec, ParamVector};
pub use streams::{Example, StreamKind, StreamSpec, TaskStream};
