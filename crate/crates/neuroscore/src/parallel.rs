//! Thread pool sized by `NEUROSCORE_THREADS` and the parallel drivers built
//! on it. Results never depend on the thread count.

use std::env;

use neuroscore_core::net::{ablation_shuffle, AblationConfig, AblationResult, Real, TrialDataset};
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const THREADS_VAR: &str = "NEUROSCORE_THREADS";

/// Worker count from `NEUROSCORE_THREADS`, or every available core when the
/// variable is unset.
pub fn thread_count() -> Result<usize> {
    match env::var(THREADS_VAR) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!("{THREADS_VAR} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn pool() -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count()?)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Every shuffle of an ablation on the pool, in shuffle order.
pub fn run_ablation<T: Real>(data: &TrialDataset, cfg: &AblationConfig) -> Result<AblationResult> {
    let outcomes = pool()?.install(|| {
        (0..cfg.shuffles)
            .into_par_iter()
            .map(|s| ablation_shuffle::<T>(data, cfg, s))
            .collect::<std::result::Result<Vec<_>, _>>()
    })?;
    Ok(AblationResult { outcomes })
}
