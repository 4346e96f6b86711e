//! File formats, run configuration, reports and the `neuroscore` command
//! line built on `neuroscore-core`.
//!
//! - [`epb`]: EPB1 epoch bundles.
//! - [`snm`]: SNM1 surrogate-model blobs.
//! - [`csv_io`]: feature, P300, loss and ranking tables.
//! - [`config`]: the JSON run configuration.
//! - [`report`]: score tables and SVG plots.
//! - [`parallel`]: the `NEUROSCORE_THREADS` pool.
//! - [`cli`]: subcommands and exit codes.

pub mod cli;
pub mod config;
pub mod csv_io;
pub mod epb;
pub mod error;
pub mod parallel;
pub mod report;
pub mod snm;

pub use error::{Error, Result};
