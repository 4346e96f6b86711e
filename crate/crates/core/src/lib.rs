//! Numeric core of the Neuroscore toolkit.
//!
//! Everything here is pure computation over in-memory values and builds
//! without the standard library (an allocator is required). File formats,
//! configuration loading and the command-line front end live in the
//! `neuroscore` companion crate.
//!
//! - [`eeg`]: epoch containers and the preprocessing chain.
//! - [`beamformer`]: LDA beamformer fitting, source reconstruction and
//!   Neuroscore.
//! - [`metrics`]: Inception Score, kernel MMD and Fréchet distance.
//! - [`net`]: the surrogate network and its two-stage training.
//! - [`simulator`]: synthetic EEG with planted P300 ground truth.
//! - [`analysis`]: convergence curves and correlation statistics.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod linalg;
pub mod eeg;
pub mod beamformer;
pub mod metrics;
pub mod simulator;
pub mod net;
pub mod analysis;

pub use error::{Error, Result};
