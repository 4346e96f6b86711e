//! The JSON run configuration.
//!
//! Every section is optional and falls back to its defaults; unknown keys
//! are rejected. Seeds the file leaves out are derived from the top-level
//! `seed`, so a loaded configuration always carries every seed explicitly.

use std::fs;
use std::path::Path;

use neuroscore_core::beamformer::BeamformerOptions;
use neuroscore_core::eeg::PreprocessConfig;
use neuroscore_core::metrics::MmdEstimator;
use neuroscore_core::net::{SurrogateConfig, TrainConfig, TrainMode};
use neuroscore_core::simulator::{sub_rng, SimConfig};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

mod purpose {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const ABLATION: u64 = 3;
    pub const CONVERGENCE: u64 = 4;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSettings {
    pub shuffles: usize,
    pub modes: Vec<TrainMode>,
    pub seed: u64,
}

impl Default for AblationSettings {
    fn default() -> Self {
        AblationSettings {
            shuffles: 20,
            modes: vec![TrainMode::WithEeg, TrainMode::RandomEeg],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSettings {
    /// Subsample sizes; the default grid when absent.
    pub sizes: Option<Vec<usize>>,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        ConvergenceSettings {
            sizes: None,
            repeats: neuroscore_core::analysis::DEFAULT_REPEATS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSettings {
    /// Gaussian kernel bandwidth; the median pairwise distance when absent.
    pub mmd_bandwidth: Option<f64>,
    pub mmd_estimator: MmdEstimator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Preprocessing applied to bundles before scoring; none when absent.
    pub preprocess: Option<PreprocessConfig>,
    pub simulation: SimConfig,
    pub beamformer: BeamformerOptions,
    pub training: TrainConfig,
    pub surrogate: SurrogateConfig,
    pub init_seed: u64,
    pub ablation: AblationSettings,
    pub convergence: ConvergenceSettings,
    pub metrics: MetricSettings,
}

impl Default for RunConfig {
    /// Section defaults with every seed 0; [`RunConfig::parse`] derives the
    /// seeds a file leaves out.
    fn default() -> Self {
        RunConfig {
            seed: 0,
            preprocess: None,
            simulation: SimConfig::default(),
            beamformer: BeamformerOptions::default(),
            training: TrainConfig::default(),
            surrogate: SurrogateConfig::default(),
            init_seed: 0,
            ablation: AblationSettings::default(),
            convergence: ConvergenceSettings::default(),
            metrics: MetricSettings::default(),
        }
    }
}

/// A seed derived from the top-level seed for one purpose.
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    sub_rng(seed, purpose).next_u64()
}

impl RunConfig {
    /// Parses a configuration, applying `seed_override` to the top-level
    /// seed before the absent seeds are derived from it.
    pub fn parse(text: &str, seed_override: Option<u64>) -> Result<Self> {
        let raw: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
        if !raw.is_object() {
            return Err(Error::Config("configuration must be a JSON object".into()));
        }
        let mut cfg: RunConfig = serde_json::from_value(raw.clone()).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(seed) = seed_override {
            cfg.seed = seed;
        }
        let seed = cfg.seed;
        let given = |pointer: &str| raw.pointer(pointer).is_some();
        if !given("/simulation/seed") {
            cfg.simulation.seed = seed;
        }
        if !given("/init_seed") {
            cfg.init_seed = derive_seed(seed, purpose::INIT);
        }
        if !given("/training/shuffle_seed") {
            cfg.training.shuffle_seed = derive_seed(seed, purpose::SHUFFLE);
        }
        if !given("/ablation/seed") {
            cfg.ablation.seed = derive_seed(seed, purpose::ABLATION);
        }
        if !given("/convergence/seed") {
            cfg.convergence.seed = derive_seed(seed, purpose::CONVERGENCE);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, seed_override).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Loads `path`, or materialises the defaults when no file is given.
    pub fn resolve(path: Option<&Path>, seed_override: Option<u64>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p, seed_override),
            None => Self::parse("{}", seed_override),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.simulation.validate()?;
        self.training.validate()?;
        if self.convergence.repeats == 0 {
            return Err(Error::Config("convergence.repeats must be ≥ 1".into()));
        }
        if self.ablation.shuffles < 2 {
            return Err(Error::Config("ablation.shuffles must be ≥ 2".into()));
        }
        if self.ablation.modes.is_empty() {
            return Err(Error::Config("ablation.modes must not be empty".into()));
        }
        if let Some(bw) = self.metrics.mmd_bandwidth {
            if !(bw > 0.0 && bw.is_finite()) {
                return Err(Error::Config("metrics.mmd_bandwidth must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absent_seeds_follow_the_top_level_seed() {
        let a = RunConfig::parse(r#"{"seed": 5}"#, None).unwrap();
        let b = RunConfig::parse("{}", Some(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.simulation.seed, 5);
        assert_ne!(a.init_seed, RunConfig::parse("{}", Some(6)).unwrap().init_seed);
        let pinned = RunConfig::parse(r#"{"init_seed": 9, "simulation": {"seed": 1}}"#, Some(5)).unwrap();
        assert_eq!((pinned.init_seed, pinned.simulation.seed), (9, 1));
    }

    #[test]
    fn materialised_config_reloads_identically() {
        let a = RunConfig::parse(r#"{"seed": 3, "training": {"epochs": 2}}"#, None).unwrap();
        assert_eq!(RunConfig::parse(&a.to_json(), None).unwrap(), a);
    }

    #[test]
    fn unknown_keys_are_named() {
        for text in [r#"{"sed": 1}"#, r#"{"training": {"epoch": 1}}"#, r#"{"simulation": {"chanels": 4}}"#] {
            let msg = RunConfig::parse(text, None).unwrap_err().to_string();
            assert!(msg.contains("unknown field"), "{msg}");
            let key = text.split('"').rev().nth(1).unwrap();
            assert!(msg.contains(key), "{msg} should name {key}");
        }
    }

    #[test]
    fn malformed_json_is_a_config_error() {
        assert!(matches!(RunConfig::parse("{", None), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("[]", None), Err(Error::Config(_))));
    }
}
