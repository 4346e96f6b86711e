//! Synthetic multichannel EEG with a planted P300 and paired stimulus
//! features.
//!
//! Target trial `i` of a category is `p · a_i · g(t) + noise`, where `p` is a
//! unit spatial pattern, `a_i` a per-trial amplitude drawn from the
//! category's Gaussian truncated at zero, and `g` a Gaussian bump centred on
//! the configured latency. Standard trials carry noise only. Noise is white
//! (or pink) Gaussian mixed across channels by a fixed matrix whose rows have
//! unit norm, so every channel's noise standard deviation is `noise_scale`.
//!
//! Every random draw comes from a ChaCha stream derived from `seed` and a
//! fixed purpose or trial index, so output does not depend on generation
//! order.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::eeg::{Condition, EegEpochSet};
use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};

mod stream {
    pub const PATTERN: u64 = 1;
    pub const MIXING: u64 = 2;
    pub const AMPLITUDES: u64 = 3;
    pub const FEATURE_AXIS: u64 = 4;
    pub const FEATURE_NOISE: u64 = 5;
    pub const TARGET_BASE: u64 = 1 << 20;
    pub const STANDARD_BASE: u64 = 1 << 40;
}

/// A ChaCha8 generator for one purpose of one seed.
pub fn sub_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One target category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategorySpec {
    pub label: String,
    pub amplitude_mean: f64,
    pub amplitude_std: f64,
    pub trial_count: usize,
}

impl CategorySpec {
    pub fn new(label: &str, amplitude_mean: f64, amplitude_std: f64, trial_count: usize) -> Self {
        CategorySpec {
            label: label.into(),
            amplitude_mean,
            amplitude_std,
            trial_count,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseColor {
    #[default]
    White,
    Pink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub channels: usize,
    pub sample_rate: f64,
    pub epoch_span: (f64, f64),
    pub categories: Vec<CategorySpec>,
    pub standard_trial_count: usize,
    pub p300_latency: f64,
    /// Standard deviation of the Gaussian bump, seconds.
    pub p300_temporal_width: f64,
    /// Unit spatial pattern; drawn from the seed when absent.
    pub spatial_pattern: Option<Vec<f64>>,
    /// Channel mixing of the noise; drawn from the seed when absent.
    pub noise_mixing: Option<Matrix>,
    pub noise_scale: f64,
    pub noise_color: NoiseColor,
    pub feature_dim: usize,
    pub feature_noise_scale: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            channels: 32,
            sample_rate: 250.0,
            epoch_span: (0.0, 1.0),
            categories: vec![
                CategorySpec::new("DCGAN", 1.0, 0.2, 200),
                CategorySpec::new("BEGAN", 2.0, 0.2, 200),
                CategorySpec::new("PROGAN", 3.0, 0.2, 200),
            ],
            standard_trial_count: 3000,
            p300_latency: 0.5,
            p300_temporal_width: 0.06,
            spatial_pattern: None,
            noise_mixing: None,
            noise_scale: 0.05,
            noise_color: NoiseColor::White,
            feature_dim: 1024,
            feature_noise_scale: 0.1,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// Samples per epoch.
    pub fn n_times(&self) -> usize {
        libm::floor((self.epoch_span.1 - self.epoch_span.0) * self.sample_rate + 1e-9) as usize
    }

    pub fn n_targets(&self) -> usize {
        self.categories.iter().map(|c| c.trial_count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.channels == 0 {
            return bad("channels must be ≥ 1".into());
        }
        if !(self.sample_rate > 0.0) {
            return bad("sample_rate must be positive".into());
        }
        if self.n_times() == 0 {
            return bad("epoch span holds no samples".into());
        }
        if self.categories.is_empty() {
            return bad("at least one category is required".into());
        }
        for c in &self.categories {
            if c.trial_count == 0 {
                return bad(alloc::format!("category {} has no trials", c.label));
            }
            if !(c.amplitude_std >= 0.0) || !c.amplitude_mean.is_finite() {
                return bad(alloc::format!("category {} has invalid amplitude parameters", c.label));
            }
            if c.amplitude_std == 0.0 && c.amplitude_mean < 0.0 {
                return bad(alloc::format!(
                    "category {} has a negative fixed amplitude",
                    c.label
                ));
            }
        }
        if self.standard_trial_count == 0 {
            return bad("standard_trial_count must be ≥ 1".into());
        }
        let (lo, hi) = self.epoch_span;
        if !(self.p300_latency >= lo && self.p300_latency <= hi) {
            return bad(alloc::format!(
                "p300_latency {} s outside epoch span [{lo}, {hi}] s",
                self.p300_latency
            ));
        }
        if !(self.p300_temporal_width > 0.0) {
            return bad("p300_temporal_width must be positive".into());
        }
        if !(self.noise_scale >= 0.0) || !(self.feature_noise_scale >= 0.0) {
            return bad("noise scales must be ≥ 0".into());
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be ≥ 1".into());
        }
        if let Some(p) = &self.spatial_pattern {
            if p.len() != self.channels {
                return Err(Error::dim("spatial_pattern", self.channels, p.len()));
            }
            if !(norm(p) > 0.0) {
                return bad("spatial_pattern must be nonzero".into());
            }
        }
        if let Some(m) = &self.noise_mixing {
            if m.rows() != self.channels || m.cols() != self.channels {
                return Err(Error::dim("noise_mixing", self.channels, m.rows()));
            }
        }
        Ok(())
    }

    /// The unit spatial pattern in use.
    pub fn resolved_pattern(&self) -> Vec<f64> {
        match &self.spatial_pattern {
            Some(p) => {
                let n = norm(p);
                p.iter().map(|v| v / n).collect()
            }
            None => unit_vector(&mut sub_rng(self.seed, stream::PATTERN), self.channels),
        }
    }

    /// Noise mixing matrix in use.
    pub fn resolved_mixing(&self) -> Matrix {
        match &self.noise_mixing {
            Some(m) => m.clone(),
            None => {
                let c = self.channels;
                let mut rng = sub_rng(self.seed, stream::MIXING);
                let mut m = Matrix::identity(c);
                let s = 1.0 / libm::sqrt(c as f64);
                for v in m.as_mut_slice() {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    *v += g * s;
                }
                for i in 0..c {
                    let n = norm(m.row(i));
                    m.row_mut(i).iter_mut().for_each(|v| *v /= n);
                }
                m
            }
        }
    }

    /// Temporal template `g(t)` on the epoch grid.
    pub fn template(&self) -> Vec<f64> {
        let w2 = 2.0 * self.p300_temporal_width * self.p300_temporal_width;
        (0..self.n_times())
            .map(|j| {
                let t = self.epoch_span.0 + j as f64 / self.sample_rate - self.p300_latency;
                libm::exp(-t * t / w2)
            })
            .collect()
    }
}

fn unit_vector<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let l = norm(&v);
        if l > 1e-12 {
            return v.into_iter().map(|x| x / l).collect();
        }
    }
}

/// Per-category Gaussian amplitudes truncated at zero (by rejection).
pub fn draw_amplitudes(config: &SimConfig) -> Result<(Vec<f64>, Vec<String>)> {
    let mut rng = sub_rng(config.seed, stream::AMPLITUDES);
    let mut amps = Vec::with_capacity(config.n_targets());
    let mut labels = Vec::with_capacity(config.n_targets());
    for cat in &config.categories {
        let dist = Normal::new(cat.amplitude_mean, cat.amplitude_std)
            .map_err(|e| Error::InvalidConfig(alloc::format!("category {}: {e}", cat.label)))?;
        for _ in 0..cat.trial_count {
            let mut a = dist.sample(&mut rng);
            let mut tries = 0;
            while a < 0.0 {
                tries += 1;
                if tries > 10_000 {
                    return Err(Error::InvalidConfig(alloc::format!(
                        "category {} amplitude distribution has almost no mass above zero",
                        cat.label
                    )));
                }
                a = dist.sample(&mut rng);
            }
            amps.push(a);
            labels.push(cat.label.clone());
        }
    }
    Ok((amps, labels))
}

/// Pink-noise shaping by three AR(1) stages plus a white term, normalised to
/// unit stationary variance.
struct PinkShaper {
    state: [f64; 3],
}

impl PinkShaper {
    const POLES: [f64; 3] = [0.99765, 0.96300, 0.57000];
    const GAINS: [f64; 3] = [0.0990460, 0.2965164, 1.0526913];
    const WHITE: f64 = 0.1848;

    /// Starts the three stages at a draw from their joint stationary law.
    fn stationary<R: Rng>(rng: &mut R) -> Self {
        let mut cov = [[0.0; 3]; 3];
        for (i, row) in cov.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = Self::GAINS[i] * Self::GAINS[j] / (1.0 - Self::POLES[i] * Self::POLES[j]);
            }
        }
        let mut l = [[0.0; 3]; 3];
        for j in 0..3 {
            let d = cov[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
            l[j][j] = libm::sqrt(d.max(0.0));
            for i in (j + 1)..3 {
                let s = cov[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
                l[i][j] = if l[j][j] > 0.0 { s / l[j][j] } else { 0.0 };
            }
        }
        let z: [f64; 3] = core::array::from_fn(|_| StandardNormal.sample(rng));
        let state = core::array::from_fn(|i| (0..=i).map(|k| l[i][k] * z[k]).sum());
        PinkShaper { state }
    }

    fn stationary_std() -> f64 {
        let mut var = Self::WHITE * Self::WHITE;
        for i in 0..3 {
            // white-term cross covariance with each AR stage
            var += 2.0 * Self::WHITE * Self::GAINS[i];
            for j in 0..3 {
                var += Self::GAINS[i] * Self::GAINS[j] / (1.0 - Self::POLES[i] * Self::POLES[j]);
            }
        }
        libm::sqrt(var)
    }

    fn next(&mut self, w: f64) -> f64 {
        let mut out = Self::WHITE * w;
        for i in 0..3 {
            self.state[i] = Self::POLES[i] * self.state[i] + Self::GAINS[i] * w;
            out += self.state[i];
        }
        out
    }
}

/// Writes `noise_scale · M · e(t)` into a `C × T` trial buffer.
fn add_noise(buf: &mut [f64], mixing: &Matrix, config: &SimConfig, rng: &mut ChaCha8Rng) {
    if config.noise_scale == 0.0 {
        return;
    }
    let (c, t) = (config.channels, config.n_times());
    let mut white = vec![0.0; c * t];
    match config.noise_color {
        NoiseColor::White => white.iter_mut().for_each(|v| *v = StandardNormal.sample(rng)),
        NoiseColor::Pink => {
            let norm = 1.0 / PinkShaper::stationary_std();
            for ch in white.chunks_exact_mut(t) {
                let mut shaper = PinkShaper::stationary(rng);
                ch.iter_mut()
                    .for_each(|v| *v = shaper.next(StandardNormal.sample(rng)) * norm);
            }
        }
    }
    for out_ch in 0..c {
        let row = &mut buf[out_ch * t..(out_ch + 1) * t];
        for in_ch in 0..c {
            let m = mixing[(out_ch, in_ch)] * config.noise_scale;
            if m == 0.0 {
                continue;
            }
            crate::linalg::axpy(m, &white[in_ch * t..(in_ch + 1) * t], row);
        }
    }
}

/// Simulated recording plus ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub target: EegEpochSet,
    pub standard: EegEpochSet,
    pub planted_amplitudes: Vec<f64>,
    pub image_features: Matrix,
    /// Unit spatial pattern that was planted.
    pub spatial_pattern: Vec<f64>,
    pub config: SimConfig,
}

/// Generates target and standard epochs, planted amplitudes and features.
pub fn simulate(config: &SimConfig) -> Result<SimOutput> {
    config.validate()?;
    let (c, t) = (config.channels, config.n_times());
    let pattern = config.resolved_pattern();
    let mixing = config.resolved_mixing();
    let template = config.template();
    let (amplitudes, labels) = draw_amplitudes(config)?;

    let n = amplitudes.len();
    let mut target = Vec::with_capacity(n * c * t);
    let mut buf = vec![0.0; c * t];
    for (i, &a) in amplitudes.iter().enumerate() {
        buf.iter_mut().for_each(|v| *v = 0.0);
        for (ch, &pc) in pattern.iter().enumerate() {
            let row = &mut buf[ch * t..(ch + 1) * t];
            for (v, g) in row.iter_mut().zip(&template) {
                *v = pc * a * g;
            }
        }
        add_noise(&mut buf, &mixing, config, &mut sub_rng(config.seed, stream::TARGET_BASE + i as u64));
        target.extend_from_slice(&buf);
    }

    let m = config.standard_trial_count;
    let mut standard = Vec::with_capacity(m * c * t);
    for j in 0..m {
        buf.iter_mut().for_each(|v| *v = 0.0);
        add_noise(&mut buf, &mixing, config, &mut sub_rng(config.seed, stream::STANDARD_BASE + j as u64));
        standard.extend_from_slice(&buf);
    }

    let channel_labels = EegEpochSet::default_channel_labels(c);
    let target = EegEpochSet::new(
        target,
        n,
        c,
        t,
        config.sample_rate,
        config.epoch_span.0,
        channel_labels.clone(),
        Condition::Target,
        Some(labels),
    )?;
    let standard = EegEpochSet::new(
        standard,
        m,
        c,
        t,
        config.sample_rate,
        config.epoch_span.0,
        channel_labels,
        Condition::Standard,
        None,
    )?;
    let image_features = make_features(&amplitudes, config)?;
    Ok(SimOutput {
        target,
        standard,
        planted_amplitudes: amplitudes,
        image_features,
        spatial_pattern: pattern,
        config: config.clone(),
    })
}

/// `f_i = u · a_i + ε_i` with `u` a seeded unit vector and
/// `ε_i ~ N(0, feature_noise_scale² I)`.
pub fn make_features(planted_amplitudes: &[f64], config: &SimConfig) -> Result<Matrix> {
    if config.feature_dim == 0 {
        return Err(Error::InvalidConfig("feature_dim must be ≥ 1".into()));
    }
    let d = config.feature_dim;
    let axis = unit_vector(&mut sub_rng(config.seed, stream::FEATURE_AXIS), d);
    let mut rng = sub_rng(config.seed, stream::FEATURE_NOISE);
    let mut out = Matrix::zeros(planted_amplitudes.len(), d);
    for (i, &a) in planted_amplitudes.iter().enumerate() {
        for (v, u) in out.row_mut(i).iter_mut().zip(&axis) {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v = u * a + config.feature_noise_scale * e;
        }
    }
    Ok(out)
}

/// The unit axis along which [`make_features`] encodes amplitude.
pub fn feature_axis(config: &SimConfig) -> Vec<f64> {
    unit_vector(&mut sub_rng(config.seed, stream::FEATURE_AXIS), config.feature_dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig {
            channels: 4,
            categories: vec![CategorySpec::new("only", 2.0, 0.0, 3)],
            standard_trial_count: 2,
            feature_dim: 6,
            ..SimConfig::default()
        }
    }

    #[test]
    fn noiseless_trials_are_closed_form() {
        let cfg = SimConfig {
            noise_scale: 0.0,
            ..small()
        };
        let out = simulate(&cfg).unwrap();
        let g = cfg.template();
        let p = &out.spatial_pattern;
        for i in 0..3 {
            for c in 0..4 {
                for (j, gj) in g.iter().enumerate() {
                    assert_eq!(out.target.at(i, c, j), p[c] * 2.0 * gj);
                }
            }
        }
        assert!(out.standard.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_same_output() {
        let a = simulate(&small()).unwrap();
        let b = simulate(&small()).unwrap();
        assert_eq!(a, b);
        let c = simulate(&SimConfig { seed: 9, ..small() }).unwrap();
        assert_ne!(a.target, c.target);
    }

    #[test]
    fn mixing_rows_are_unit_norm() {
        let m = small().resolved_mixing();
        for i in 0..4 {
            assert!((norm(m.row(i)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn features_noiseless_are_collinear() {
        let cfg = SimConfig {
            feature_noise_scale: 0.0,
            ..small()
        };
        let amps = [0.5, 2.0, 3.5];
        let f = make_features(&amps, &cfg).unwrap();
        let u = feature_axis(&cfg);
        for (i, &a) in amps.iter().enumerate() {
            let row = f.row(i);
            assert!((norm(row) - a).abs() < 1e-12);
            let cos = crate::linalg::dot(row, &u) / norm(row);
            assert!((cos - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_amplitude_features_are_pure_noise() {
        let cfg = small();
        let f = make_features(&[0.0; 50], &cfg).unwrap();
        let u = feature_axis(&cfg);
        let mean_proj: f64 = (0..50).map(|i| crate::linalg::dot(f.row(i), &u)).sum::<f64>() / 50.0;
        // projection of N(0, 0.1²) noise: mean has std 0.1/√50
        assert!(mean_proj.abs() < 4.0 * 0.1 / 50f64.sqrt());
    }

    #[test]
    fn amplitudes_are_nonnegative() {
        let cfg = SimConfig {
            categories: vec![CategorySpec::new("low", 0.1, 1.0, 500)],
            ..small()
        };
        let (a, _) = draw_amplitudes(&cfg).unwrap();
        assert!(a.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn pink_noise_has_configured_scale() {
        let cfg = SimConfig {
            noise_color: NoiseColor::Pink,
            channels: 2,
            standard_trial_count: 200,
            noise_mixing: Some(Matrix::identity(2)),
            noise_scale: 1.0,
            ..small()
        };
        let out = simulate(&cfg).unwrap();
        let d = out.standard.data();
        let var = d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64;
        assert!((var.sqrt() - 1.0).abs() < 0.15, "std {}", var.sqrt());
    }

    #[test]
    fn invalid_configs_fail() {
        let mut cfg = small();
        cfg.p300_latency = 2.0;
        assert!(simulate(&cfg).is_err());
        let mut cfg = small();
        cfg.noise_scale = -1.0;
        assert!(simulate(&cfg).is_err());
        let mut cfg = small();
        cfg.spatial_pattern = Some(vec![1.0; 3]);
        assert!(simulate(&cfg).is_err());
    }
}
