//! Quantum discord detection for two-qubit states.
//!
//! The pipeline labels random two-qubit states as discordant or not, extracts
//! features with convolution kernels that act as local observables, and
//! classifies them with a fully connected head. The [`circuit`] module maps
//! trained kernels to single-qubit rotations so that the same features can be
//! read out as `sigma_z x sigma_z` expectation values.

mod codec;
pub mod circuit;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod features;
pub mod network;
pub mod qmath;
pub mod states;
pub mod tolerances;

pub use error::{Error, Result};
