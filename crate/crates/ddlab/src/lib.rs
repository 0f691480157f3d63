//! A capacity-sweep laboratory for advantage actor-critic agents on the
//! FrozenLake gridworld: deterministic multi-seed training sweeps with
//! per-episode policy-entropy telemetry, cross-run confidence intervals,
//! descent/re-ascent phase reports, and SVG curve plots.
//!
//! The network, its gradients, and the optimizer are implemented by hand in
//! 64-bit arithmetic so that runs are reproducible to the byte and gradients
//! are checkable against finite differences.

pub mod agent;
pub mod analysis;
pub mod cli;
pub mod csvio;
pub mod error;
pub mod gridworld;
pub mod neural;
pub mod plot;
pub mod sweep;

pub use error::{Error, Result};
