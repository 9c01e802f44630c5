//! Learning observation and action correspondences between pairs of control
//! domains from unpaired, independently collected trajectories, and using the
//! learned maps for zero-fine-tuning policy transfer.
//!
//! The crate is organized around the training pipeline:
//!
//! - [`nn`] — dense network engine (MLPs, reverse-mode tape, Adam, losses)
//! - [`envs`] — deterministic toy dynamical systems with analytic controllers
//! - [`data`] — trajectory collection, batching, and the dataset file format
//! - [`forward`] — the frozen forward dynamics model of the target domain
//! - [`align`] — translation networks, objectives, and the alternating trainer
//! - [`transfer`] — policy transfer, state-estimation scoring, baselines
//! - [`config`] / [`runner`] — experiment driver behind the `cyclealign` binary

pub mod align;
mod bytes;
pub mod config;
pub mod data;
pub mod envs;
pub mod error;
pub mod forward;
pub mod nn;
pub mod plot;
pub mod rng;
pub mod runner;
pub mod transfer;

pub use error::{Error, Result};
