//! Epoch containers and the preprocessing chain applied before beamforming:
//! common average reference, zero-phase Butterworth band-pass, decimation and
//! peak-to-peak trial rejection.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which stimulus class an epoch set was recorded for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Standard,
    Target,
}

/// A stack of `trials × channels × timepoints` samples in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct EegEpochSet {
    data: Vec<f64>,
    n_trials: usize,
    n_channels: usize,
    n_times: usize,
    sample_rate: f64,
    t0: f64,
    channel_labels: Vec<String>,
    condition: Condition,
    category_labels: Option<Vec<String>>,
}

impl EegEpochSet {
    /// Builds an epoch set from a trial-major buffer (trial, then channel,
    /// then time).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        data: Vec<f64>,
        n_trials: usize,
        n_channels: usize,
        n_times: usize,
        sample_rate: f64,
        t0: f64,
        channel_labels: Vec<String>,
        condition: Condition,
        category_labels: Option<Vec<String>>,
    ) -> Result<Self> {
        if n_trials == 0 || n_channels == 0 || n_times == 0 {
            return Err(Error::InvalidInput(alloc::format!(
                "epoch set needs at least one trial, channel and sample (got {n_trials}×{n_channels}×{n_times})"
            )));
        }
        if data.len() != n_trials * n_channels * n_times {
            return Err(Error::dim(
                "epoch buffer",
                n_trials * n_channels * n_times,
                data.len(),
            ));
        }
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidInput("t0 must be finite".into()));
        }
        if channel_labels.len() != n_channels {
            return Err(Error::dim("channel labels", n_channels, channel_labels.len()));
        }
        if let Some(labels) = &category_labels {
            if labels.len() != n_trials {
                return Err(Error::dim("category labels", n_trials, labels.len()));
            }
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(alloc::format!("epoch sample {pos}")));
        }
        Ok(EegEpochSet {
            data,
            n_trials,
            n_channels,
            n_times,
            sample_rate,
            t0,
            channel_labels,
            condition,
            category_labels,
        })
    }

    /// Default channel labels `ch0, ch1, ...`.
    pub fn default_channel_labels(n: usize) -> Vec<String> {
        (0..n).map(|c| alloc::format!("ch{c}")).collect()
    }

    pub fn n_trials(&self) -> usize {
        self.n_trials
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn channel_labels(&self) -> &[String] {
        &self.channel_labels
    }

    pub fn category_labels(&self) -> Option<&[String]> {
        self.category_labels.as_deref()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Time in seconds of sample index `j`.
    pub fn time_of(&self, j: usize) -> f64 {
        self.t0 + j as f64 / self.sample_rate
    }

    /// Time of the last sample.
    pub fn t_end(&self) -> f64 {
        self.time_of(self.n_times - 1)
    }

    /// Sample indices whose times fall inside `[lo, hi]`.
    pub fn indices_in(&self, lo: f64, hi: f64) -> core::ops::Range<usize> {
        let eps = 1e-9;
        let start = libm::ceil((lo - self.t0) * self.sample_rate - eps).max(0.0) as usize;
        let end = (libm::floor((hi - self.t0) * self.sample_rate + eps) + 1.0).max(0.0) as usize;
        let end = end.min(self.n_times);
        start.min(end)..end
    }

    /// One trial as a `channels × times` row-major slice.
    pub fn trial(&self, i: usize) -> &[f64] {
        let len = self.n_channels * self.n_times;
        &self.data[i * len..(i + 1) * len]
    }

    /// One channel of one trial.
    pub fn channel(&self, trial: usize, channel: usize) -> &[f64] {
        let start = (trial * self.n_channels + channel) * self.n_times;
        &self.data[start..start + self.n_times]
    }

    /// Sample at (trial, channel, time).
    pub fn at(&self, trial: usize, channel: usize, time: usize) -> f64 {
        self.data[(trial * self.n_channels + channel) * self.n_times + time]
    }

    /// Returns a copy with a new data buffer of the same shape.
    fn with_data(&self, data: Vec<f64>) -> Self {
        EegEpochSet {
            data,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        EegEpochSet {
            data: Vec::new(),
            n_trials: self.n_trials,
            n_channels: self.n_channels,
            n_times: self.n_times,
            sample_rate: self.sample_rate,
            t0: self.t0,
            channel_labels: self.channel_labels.clone(),
            condition: self.condition,
            category_labels: self.category_labels.clone(),
        }
    }

    /// Multiplies every sample by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        self.with_data(self.data.iter().map(|v| v * factor).collect())
    }

    /// Keeps the trials at `indices`, in the given order.
    pub fn select_trials(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidInput("selection is empty".into()));
        }
        let len = self.n_channels * self.n_times;
        let mut data = Vec::with_capacity(indices.len() * len);
        for &i in indices {
            if i >= self.n_trials {
                return Err(Error::InvalidInput(alloc::format!(
                    "trial index {i} out of range for {} trials",
                    self.n_trials
                )));
            }
            data.extend_from_slice(self.trial(i));
        }
        let labels = self
            .category_labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i].clone()).collect());
        Ok(EegEpochSet {
            data,
            n_trials: indices.len(),
            category_labels: labels,
            ..self.clone_meta()
        })
    }

    /// Restricts every trial to the samples whose times lie in `[start, end]`.
    pub fn crop(&self, start: f64, end: f64) -> Result<Self> {
        let range = self.indices_in(start, end);
        if range.is_empty() {
            return Err(Error::InvalidConfig(alloc::format!(
                "window [{start}, {end}] s lies outside the epoch span [{}, {}] s",
                self.t0,
                self.t_end()
            )));
        }
        let new_t = range.len();
        let mut data = Vec::with_capacity(self.n_trials * self.n_channels * new_t);
        for tr in 0..self.n_trials {
            for ch in 0..self.n_channels {
                data.extend_from_slice(&self.channel(tr, ch)[range.clone()]);
            }
        }
        let t0 = self.time_of(range.start);
        Ok(EegEpochSet {
            data,
            n_times: new_t,
            t0,
            ..self.clone_meta()
        })
    }
}

/// Parameters of the preprocessing chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub band_lo: f64,
    pub band_hi: f64,
    /// Order of each Butterworth prototype (high-pass and low-pass).
    pub filter_order: usize,
    pub decimation_factor: usize,
    /// Peak-to-peak rejection threshold in microvolts.
    pub p2p_threshold: f64,
    pub epoch_window: (f64, f64),
    /// Subtract the pre-stimulus mean from each channel.
    pub baseline_correction: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            band_lo: 0.5,
            band_hi: 20.0,
            filter_order: 4,
            decimation_factor: 4,
            p2p_threshold: 100.0,
            epoch_window: (0.0, 1.0),
            baseline_correction: false,
        }
    }
}

impl PreprocessConfig {
    /// Defaults with the decimation factor chosen to land near 250 Hz.
    pub fn for_sample_rate(sample_rate: f64) -> Self {
        let factor = libm::round(sample_rate / 250.0).max(1.0) as usize;
        PreprocessConfig {
            decimation_factor: factor,
            ..Self::default()
        }
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        if self.filter_order == 0 || self.filter_order % 2 != 0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "filter_order must be a positive even number, got {}",
                self.filter_order
            )));
        }
        if self.decimation_factor == 0 {
            return Err(Error::InvalidConfig("decimation_factor must be ≥ 1".into()));
        }
        let nyquist_out = sample_rate / self.decimation_factor as f64 / 2.0;
        if !(self.band_lo > 0.0 && self.band_lo < self.band_hi && self.band_hi < nyquist_out) {
            return Err(Error::InvalidConfig(alloc::format!(
                "band [{}, {}] Hz must satisfy 0 < lo < hi < {nyquist_out} Hz",
                self.band_lo,
                self.band_hi
            )));
        }
        if !(self.p2p_threshold >= 0.0) {
            return Err(Error::InvalidConfig("p2p_threshold must be ≥ 0".into()));
        }
        if !(self.epoch_window.0 < self.epoch_window.1) {
            return Err(Error::InvalidConfig("epoch_window start must precede end".into()));
        }
        Ok(())
    }
}

/// Channel sums within this multiple of `C·ε·Σ|x|` are rounding noise.
const CAR_ROUNDING_FLOOR: f64 = 2.0;

/// Mean over channels of sample `j`, or 0 when the sum is rounding noise.
fn channel_mean(trial: &[f64], c: usize, t: usize, j: usize) -> f64 {
    let (mut sum, mut abs) = (0.0, 0.0);
    for ch in 0..c {
        let v = trial[ch * t + j];
        sum += v;
        abs += libm::fabs(v);
    }
    if libm::fabs(sum) <= CAR_ROUNDING_FLOOR * c as f64 * f64::EPSILON * abs {
        0.0
    } else {
        sum / c as f64
    }
}

/// Subtracts the instantaneous channel mean from every channel.
///
/// The subtraction is repeated until the remaining mean is rounding noise,
/// so a referenced set passes through unchanged.
pub fn common_average_reference(epochs: &EegEpochSet) -> EegEpochSet {
    let (c, t) = (epochs.n_channels, epochs.n_times);
    let mut data = epochs.data.clone();
    for trial in data.chunks_exact_mut(c * t) {
        for j in 0..t {
            for _ in 0..4 {
                let m = channel_mean(trial, c, t, j);
                if m == 0.0 {
                    break;
                }
                for ch in 0..c {
                    trial[ch * t + j] -= m;
                }
            }
        }
    }
    epochs.with_data(data)
}

/// One second-order section, `b0 + b1 z⁻¹ + b2 z⁻²` over `1 + a1 z⁻¹ + a2 z⁻²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Transposed direct form II state that holds a constant input `x` at
    /// steady state.
    fn steady_state(&self, x: f64) -> [f64; 2] {
        let y = self.dc_gain() * x;
        let z2 = self.b[2] * x - self.a[1] * y;
        let z1 = self.b[1] * x - self.a[0] * y + z2;
        [z1, z2]
    }

    fn run(&self, signal: &mut [f64], mut z: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        for v in signal.iter_mut() {
            let x = *v;
            let y = b0 * x + z[0];
            z[0] = b1 * x - a1 * y + z[1];
            z[1] = b2 * x - a2 * y;
            *v = y;
        }
    }

    /// Complex frequency response magnitude at normalized angular frequency `omega`.
    pub fn magnitude(&self, omega: f64) -> f64 {
        let (c1, s1) = (libm::cos(omega), -libm::sin(omega));
        let (c2, s2) = (libm::cos(2.0 * omega), -libm::sin(2.0 * omega));
        let num = (
            self.b[0] + self.b[1] * c1 + self.b[2] * c2,
            self.b[1] * s1 + self.b[2] * s2,
        );
        let den = (1.0 + self.a[0] * c1 + self.a[1] * c2, self.a[0] * s1 + self.a[1] * s2);
        let n2 = num.0 * num.0 + num.1 * num.1;
        let d2 = den.0 * den.0 + den.1 * den.1;
        libm::sqrt(n2 / d2)
    }
}

/// Butterworth band-pass built as a high-pass cascade followed by a
/// low-pass cascade, each of `order` poles, via the bilinear transform.
#[derive(Debug, Clone, PartialEq)]
pub struct BandpassFilter {
    sections: Vec<Biquad>,
    settle: usize,
}

impl BandpassFilter {
    pub fn design(band_lo: f64, band_hi: f64, order: usize, sample_rate: f64) -> Result<Self> {
        if order == 0 || order % 2 != 0 {
            return Err(Error::InvalidConfig("filter order must be even and ≥ 2".into()));
        }
        let nyq = sample_rate / 2.0;
        if !(band_lo > 0.0 && band_lo < band_hi && band_hi < nyq) {
            return Err(Error::InvalidConfig(alloc::format!(
                "band [{band_lo}, {band_hi}] Hz invalid for sample rate {sample_rate} Hz"
            )));
        }
        let mut sections = Vec::with_capacity(order);
        for q in butterworth_qs(order) {
            sections.push(highpass_section(band_lo, q, sample_rate));
        }
        for q in butterworth_qs(order) {
            sections.push(lowpass_section(band_hi, q, sample_rate));
        }
        let settle = libm::ceil(sample_rate / band_lo) as usize;
        Ok(BandpassFilter { sections, settle })
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Cascade magnitude response at `freq` Hz (single pass).
    pub fn magnitude(&self, freq: f64, sample_rate: f64) -> f64 {
        let omega = 2.0 * PI * freq / sample_rate;
        self.sections.iter().map(|s| s.magnitude(omega)).product()
    }

    /// Runs every section in turn, each started at the steady state for a
    /// constant input equal to the mean of the first `lead` samples.
    fn run_cascade(&self, signal: &mut [f64], lead: usize) {
        let lead = lead.clamp(1, signal.len());
        let mut level = signal[..lead].iter().sum::<f64>() / lead as f64;
        for s in &self.sections {
            let z = s.steady_state(level);
            s.run(signal, z);
            level *= s.dc_gain();
        }
    }

    /// Forward-backward filtering with mirror reflection padding at both edges
    /// and steady-state initial conditions matched to the padded lead-in.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = self.settle.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for k in (1..=pad).rev() {
            ext.push(x[k]);
        }
        ext.extend_from_slice(x);
        for k in 1..=pad {
            ext.push(x[n - 1 - k]);
        }
        self.run_cascade(&mut ext, pad);
        ext.reverse();
        self.run_cascade(&mut ext, pad);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

/// Q factors of the conjugate pole pairs of an even-order Butterworth prototype.
fn butterworth_qs(order: usize) -> impl Iterator<Item = f64> {
    (0..order / 2).map(move |k| {
        let theta = PI * (2 * k + 1) as f64 / (2 * order) as f64;
        1.0 / (2.0 * libm::sin(theta))
    })
}

fn lowpass_section(fc: f64, q: f64, fs: f64) -> Biquad {
    let k = libm::tan(PI * fc / fs);
    let norm = 1.0 / (1.0 + k / q + k * k);
    let b0 = k * k * norm;
    Biquad {
        b: [b0, 2.0 * b0, b0],
        a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
    }
}

fn highpass_section(fc: f64, q: f64, fs: f64) -> Biquad {
    let k = libm::tan(PI * fc / fs);
    let norm = 1.0 / (1.0 + k / q + k * k);
    Biquad {
        b: [norm, -2.0 * norm, norm],
        a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
    }
}

/// Zero-phase band-pass of every channel of every trial.
pub fn bandpass_filter(epochs: &EegEpochSet, cfg: &PreprocessConfig) -> Result<EegEpochSet> {
    let filter = BandpassFilter::design(cfg.band_lo, cfg.band_hi, cfg.filter_order, epochs.sample_rate)?;
    let t = epochs.n_times;
    let mut data = Vec::with_capacity(epochs.data.len());
    for ch in epochs.data.chunks_exact(t) {
        data.extend(filter.filtfilt(ch));
    }
    Ok(epochs.with_data(data))
}

/// Keeps every `factor`-th sample.
pub fn decimate(epochs: &EegEpochSet, factor: usize) -> Result<EegEpochSet> {
    if factor == 0 {
        return Err(Error::InvalidConfig("decimation factor must be ≥ 1".into()));
    }
    let t_out = epochs.n_times / factor;
    if t_out == 0 {
        return Err(Error::InvalidConfig(alloc::format!(
            "decimation factor {factor} exceeds epoch length {}",
            epochs.n_times
        )));
    }
    let mut data = Vec::with_capacity(epochs.n_trials * epochs.n_channels * t_out);
    for ch in epochs.data.chunks_exact(epochs.n_times) {
        data.extend((0..t_out).map(|j| ch[j * factor]));
    }
    Ok(EegEpochSet {
        data,
        n_times: t_out,
        sample_rate: epochs.sample_rate / factor as f64,
        ..epochs.clone_meta()
    })
}

/// Largest per-channel peak-to-peak swing of one trial.
pub fn peak_to_peak(epochs: &EegEpochSet, trial: usize) -> f64 {
    (0..epochs.n_channels)
        .map(|c| {
            let ch = epochs.channel(trial, c);
            let (lo, hi) = ch
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// Drops every trial whose peak-to-peak swing on any channel exceeds
/// `threshold`. Returns the survivors and the rejected indices.
pub fn reject_trials(epochs: &EegEpochSet, threshold: f64) -> Result<(EegEpochSet, Vec<usize>)> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidConfig("rejection threshold must be ≥ 0".into()));
    }
    let (keep, rejected): (Vec<usize>, Vec<usize>) =
        (0..epochs.n_trials).partition(|&i| peak_to_peak(epochs, i) <= threshold);
    if keep.is_empty() {
        return Err(Error::AllTrialsRejected(epochs.n_trials));
    }
    Ok((epochs.select_trials(&keep)?, rejected))
}

/// Subtracts the mean of the pre-stimulus samples (`t < 0`) from each channel.
pub fn baseline_correct(epochs: &EegEpochSet) -> Result<EegEpochSet> {
    let pre: Vec<usize> = (0..epochs.n_times).filter(|&j| epochs.time_of(j) < 0.0).collect();
    if pre.is_empty() {
        return Err(Error::InvalidConfig(
            "baseline correction needs pre-stimulus samples (t0 < 0)".into(),
        ));
    }
    let mut data = epochs.data.clone();
    for ch in data.chunks_exact_mut(epochs.n_times) {
        let m = pre.iter().map(|&j| ch[j]).sum::<f64>() / pre.len() as f64;
        ch.iter_mut().for_each(|v| *v -= m);
    }
    Ok(epochs.with_data(data))
}

/// Result of the full chain.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub epochs: EegEpochSet,
    pub rejected: Vec<usize>,
}

/// CAR → band-pass → optional baseline → crop to the epoch window →
/// decimate → peak-to-peak rejection.
pub fn preprocess(epochs: &EegEpochSet, cfg: &PreprocessConfig) -> Result<Preprocessed> {
    cfg.validate(epochs.sample_rate)?;
    let mut x = common_average_reference(epochs);
    x = bandpass_filter(&x, cfg)?;
    if cfg.baseline_correction {
        x = baseline_correct(&x)?;
    }
    let (ws, we) = cfg.epoch_window;
    if ws > x.t0 + 1e-9 || we < x.t_end() - 1e-9 {
        x = x.crop(ws, we)?;
    }
    x = decimate(&x, cfg.decimation_factor)?;
    let (epochs, rejected) = reject_trials(&x, cfg.p2p_threshold)?;
    Ok(Preprocessed { epochs, rejected })
}
