//! LDA beamformer: spatial filters that pass a known scalp pattern with unit
//! gain while minimising output variance, and the Neuroscore built on them.
//!
//! For a pattern `p` and covariance `Σ` the filter is
//! `w = Σ⁻¹p / (pᵀΣ⁻¹p)`, the minimiser of `wᵀΣw` subject to `wᵀp = 1`.
//! [`fit_filter`] scans candidate latencies, taking `p` as the
//! target-minus-standard mean at each one, and keeps the latency whose
//! filter has the smallest output variance. [`neuroscore`] then projects every
//! target trial through that filter and reads the peak inside a ±100 ms
//! window around the chosen latency.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::eeg::EegEpochSet;
use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};

/// Relative pivot floor used when factoring the regularised covariance.
const PIVOT_TOL: f64 = 1e-12;

/// Half-width of the amplitude window around the optimal latency.
pub const P300_HALF_WIDTH: f64 = 0.1;

/// A fitted beamformer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialFilter {
    pub w: Vec<f64>,
    pub p: Vec<f64>,
    pub sigma: Matrix,
    pub t_optimal: f64,
    pub p300_window: (f64, f64),
    pub j_cost: f64,
}

impl SpatialFilter {
    /// `wᵀp`, which is 1 for a correctly solved filter.
    pub fn gain(&self) -> f64 {
        dot(&self.w, &self.p)
    }
}

/// Something the pipeline adjusted or skipped without failing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// The amplitude window ran past the epoch and was clamped.
    WindowClamped {
        requested: (f64, f64),
        clamped: (f64, f64),
    },
    /// A requested category had no surviving trials.
    CategoryMissing { category: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamformerOptions {
    /// Ridge shrinkage, scaled by `trace(Σ)/C`.
    pub lambda: f64,
    /// Latency search window in seconds.
    pub search: (f64, f64),
    /// Remove each trial's per-channel time mean before the outer products.
    pub center: bool,
}

impl Default for BeamformerOptions {
    fn default() -> Self {
        BeamformerOptions {
            lambda: 1e-6,
            search: (0.4, 0.6),
            center: false,
        }
    }
}

fn check_compatible(target: &EegEpochSet, standard: &EegEpochSet) -> Result<()> {
    if target.n_channels() != standard.n_channels() {
        return Err(Error::dim("channel count", target.n_channels(), standard.n_channels()));
    }
    if target.n_times() != standard.n_times() {
        return Err(Error::dim("timepoints", target.n_times(), standard.n_times()));
    }
    if target.sample_rate() != standard.sample_rate() || target.t0() != standard.t0() {
        return Err(Error::InvalidInput(alloc::format!(
            "target ({} Hz, t0 {} s) and standard ({} Hz, t0 {} s) epochs are on different time grids",
            target.sample_rate(),
            target.t0(),
            standard.sample_rate(),
            standard.t0()
        )));
    }
    Ok(())
}

/// Accumulates `(1/N) Σ X_i X_iᵀ` into `acc`.
fn add_mean_outer(acc: &mut Matrix, epochs: &EegEpochSet, center: bool) {
    let (c, t) = (epochs.n_channels(), epochs.n_times());
    let n = epochs.n_trials() as f64;
    let mut buf = vec![0.0; c * t];
    let mut local = Matrix::zeros(c, c);
    for i in 0..epochs.n_trials() {
        buf.copy_from_slice(epochs.trial(i));
        if center {
            for ch in buf.chunks_exact_mut(t) {
                let m = ch.iter().sum::<f64>() / t as f64;
                ch.iter_mut().for_each(|v| *v -= m);
            }
        }
        for a in 0..c {
            let ra = &buf[a * t..(a + 1) * t];
            for b in a..c {
                local[(a, b)] += dot(ra, &buf[b * t..(b + 1) * t]);
            }
        }
    }
    for a in 0..c {
        for b in a..c {
            let v = local[(a, b)] / n;
            acc[(a, b)] += v;
            if a != b {
                acc[(b, a)] += v;
            }
        }
    }
}

/// `Σ = (1/N) Σ X_i X_iᵀ + (1/M) Σ K_i K_iᵀ` over target and standard trials.
pub fn estimate_covariance(
    target: &EegEpochSet,
    standard: &EegEpochSet,
    center: bool,
) -> Result<Matrix> {
    if target.n_channels() != standard.n_channels() {
        return Err(Error::dim("channel count", target.n_channels(), standard.n_channels()));
    }
    let c = target.n_channels();
    let mut sigma = Matrix::zeros(c, c);
    add_mean_outer(&mut sigma, target, center);
    add_mean_outer(&mut sigma, standard, center);
    Ok(sigma)
}

/// `Σ + λ·(trace(Σ)/C)·I`.
pub fn regularize(sigma: &Matrix, lambda: f64) -> Matrix {
    let c = sigma.rows();
    let mut reg = sigma.clone();
    if lambda != 0.0 && c > 0 {
        let ridge = lambda * sigma.trace() / c as f64;
        for i in 0..c {
            reg[(i, i)] += ridge;
        }
    }
    reg
}

/// Factored regularised covariance, reused across many patterns.
#[derive(Debug, Clone)]
pub struct BeamformerSolver {
    sigma_reg: Matrix,
    chol: Cholesky,
}

impl BeamformerSolver {
    pub fn new(sigma: &Matrix, lambda: f64) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::dim("covariance (square)", sigma.rows(), sigma.cols()));
        }
        if !(lambda >= 0.0) {
            return Err(Error::InvalidConfig("shrinkage λ must be ≥ 0".into()));
        }
        let sigma_reg = regularize(sigma, lambda);
        let chol = Cholesky::factor(&sigma_reg, PIVOT_TOL).map_err(|e| match e {
            Error::Singular(msg) => Error::Singular(alloc::format!(
                "regularised covariance is not invertible ({msg}); use a nonzero shrinkage λ"
            )),
            other => other,
        })?;
        Ok(BeamformerSolver { sigma_reg, chol })
    }

    pub fn sigma_reg(&self) -> &Matrix {
        &self.sigma_reg
    }

    /// Returns `w` and the cost `wᵀΣ_reg w` for pattern `p`.
    pub fn solve(&self, p: &[f64]) -> Result<(Vec<f64>, f64)> {
        if p.len() != self.sigma_reg.rows() {
            return Err(Error::dim("spatial pattern", self.sigma_reg.rows(), p.len()));
        }
        let sinv_p = self.chol.solve(p)?;
        let denom = dot(p, &sinv_p);
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(Error::InvalidInput(
                "spatial pattern is zero or degenerate (pᵀΣ⁻¹p ≤ 0)".into(),
            ));
        }
        let w: Vec<f64> = sinv_p.iter().map(|v| v / denom).collect();
        let j = self.sigma_reg.quadratic_form(&w)?;
        Ok((w, j))
    }
}

/// Closed-form beamformer weights `Σ_reg⁻¹p (pᵀΣ_reg⁻¹p)⁻¹`.
pub fn solve_beamformer(sigma: &Matrix, p: &[f64], lambda: f64) -> Result<Vec<f64>> {
    BeamformerSolver::new(sigma, lambda)?.solve(p).map(|(w, _)| w)
}

/// Projects every trial through `w`; row `i` of the result is `wᵀX_i`.
pub fn reconstruct_source(w: &[f64], epochs: &EegEpochSet) -> Result<Matrix> {
    if w.len() != epochs.n_channels() {
        return Err(Error::dim("beamformer weights", epochs.n_channels(), w.len()));
    }
    let t = epochs.n_times();
    let mut out = Matrix::zeros(epochs.n_trials(), t);
    for i in 0..epochs.n_trials() {
        let row = out.row_mut(i);
        for (c, &wc) in w.iter().enumerate() {
            crate::linalg::axpy(wc, epochs.channel(i, c), row);
        }
    }
    Ok(out)
}

/// Mean over trials of one time column, per channel.
fn mean_column(epochs: &EegEpochSet, j: usize) -> Vec<f64> {
    let n = epochs.n_trials() as f64;
    (0..epochs.n_channels())
        .map(|c| (0..epochs.n_trials()).map(|i| epochs.at(i, c, j)).sum::<f64>() / n)
        .collect()
}

/// Target-minus-standard mean topography at sample `j`.
pub fn spatial_pattern(target: &EegEpochSet, standard: &EegEpochSet, j: usize) -> Vec<f64> {
    mean_column(target, j)
        .into_iter()
        .zip(mean_column(standard, j))
        .map(|(a, b)| a - b)
        .collect()
}

/// A filter together with anything adjusted while fitting it.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedFilter {
    pub filter: SpatialFilter,
    pub warnings: Vec<Warning>,
}

/// Scans every sample inside `opts.search` and keeps the latency whose
/// filter has the lowest output variance. Ties go to the earliest sample.
pub fn fit_filter(
    target: &EegEpochSet,
    standard: &EegEpochSet,
    opts: &BeamformerOptions,
) -> Result<FittedFilter> {
    check_compatible(target, standard)?;
    let (lo, hi) = opts.search;
    if !(lo <= hi) {
        return Err(Error::InvalidConfig(alloc::format!(
            "search window [{lo}, {hi}] s is empty"
        )));
    }
    let grid = target.indices_in(lo, hi);
    if grid.is_empty() {
        return Err(Error::InvalidConfig(alloc::format!(
            "search window [{lo}, {hi}] s lies outside the epoch span [{}, {}] s",
            target.t0(),
            target.t_end()
        )));
    }
    let sigma = estimate_covariance(target, standard, opts.center)?;
    let solver = BeamformerSolver::new(&sigma, opts.lambda)?;

    let mut best: Option<(usize, Vec<f64>, Vec<f64>, f64)> = None;
    for j in grid {
        let p = spatial_pattern(target, standard, j);
        if p.iter().all(|&v| v == 0.0) {
            continue;
        }
        let (w, cost) = solver.solve(&p)?;
        if best.as_ref().map_or(true, |b| cost < b.3) {
            best = Some((j, w, p, cost));
        }
    }
    let (j_opt, w, p, j_cost) = best.ok_or_else(|| {
        Error::InvalidInput("target and standard means coincide over the whole search window".into())
    })?;

    let t_optimal = target.time_of(j_opt);
    let requested = (t_optimal - P300_HALF_WIDTH, t_optimal + P300_HALF_WIDTH);
    let clamped = (requested.0.max(target.t0()), requested.1.min(target.t_end()));
    let mut warnings = Vec::new();
    if clamped != requested {
        warnings.push(Warning::WindowClamped { requested, clamped });
    }
    Ok(FittedFilter {
        filter: SpatialFilter {
            w,
            p,
            sigma,
            t_optimal,
            p300_window: clamped,
            j_cost,
        },
        warnings,
    })
}

/// Neuroscore of one category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub neuroscore: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuroscoreResult {
    /// Peak source amplitude of every target trial.
    pub amplitudes: Vec<f64>,
    /// Category of every target trial.
    pub categories: Vec<String>,
    pub per_category: BTreeMap<String, CategoryScore>,
    pub global_mean: f64,
    pub filter: SpatialFilter,
    pub warnings: Vec<Warning>,
}

/// Per-trial peak of `sources` inside the filter's amplitude window.
pub fn peak_amplitudes(sources: &Matrix, epochs: &EegEpochSet, window: (f64, f64)) -> Vec<f64> {
    let range = epochs.indices_in(window.0, window.1);
    (0..sources.rows())
        .map(|i| sources.row(i)[range.clone()].iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// Means of `values` grouped by `labels`, in label order.
pub fn group_means(values: &[f64], labels: &[String]) -> BTreeMap<String, CategoryScore> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (v, l) in values.iter().zip(labels) {
        let e = sums.entry(l.clone()).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(k, (s, n))| {
            (
                k,
                CategoryScore {
                    neuroscore: s / n as f64,
                    count: n,
                },
            )
        })
        .collect()
}

/// Fits one filter on all target trials against the standards, then
/// scores every target trial and averages per category.
///
/// `expected` lists categories that should appear; any with no trials is
/// reported as a [`Warning::CategoryMissing`].
pub fn neuroscore(
    target: &EegEpochSet,
    standard: &EegEpochSet,
    opts: &BeamformerOptions,
    expected: &[String],
) -> Result<NeuroscoreResult> {
    let categories = target
        .category_labels()
        .ok_or_else(|| Error::InvalidInput("target epochs carry no category labels".into()))?
        .to_vec();
    let FittedFilter {
        filter,
        mut warnings,
    } = fit_filter(target, standard, opts)?;
    let sources = reconstruct_source(&filter.w, target)?;
    let amplitudes = peak_amplitudes(&sources, target, filter.p300_window);
    if let Some(bad) = amplitudes.iter().position(|a| !a.is_finite()) {
        return Err(Error::NonFinite(alloc::format!("amplitude of trial {bad}")));
    }
    let per_category = group_means(&amplitudes, &categories);
    for cat in expected {
        if !per_category.contains_key(cat) {
            warnings.push(Warning::CategoryMissing {
                category: cat.clone(),
            });
        }
    }
    let global_mean = amplitudes.iter().sum::<f64>() / amplitudes.len() as f64;
    Ok(NeuroscoreResult {
        amplitudes,
        categories,
        per_category,
        global_mean,
        filter,
        warnings,
    })
}

/// Source segments over `window`, linearly resampled to `dim` evenly
/// spaced points starting at `window.0` with step `(window.1 - window.0) / dim`.
///
/// At 250 Hz with the 400–600 ms window and 50 points every point falls on
/// a sample exactly.
pub fn source_segments(
    sources: &Matrix,
    epochs: &EegEpochSet,
    window: (f64, f64),
    dim: usize,
) -> Result<Matrix> {
    if dim == 0 {
        return Err(Error::InvalidConfig("segment length must be ≥ 1".into()));
    }
    if window.0 < epochs.t0() - 1e-9 || window.1 > epochs.t_end() + 1e-9 || !(window.0 < window.1) {
        return Err(Error::InvalidConfig(alloc::format!(
            "segment window [{}, {}] s outside epoch span [{}, {}] s",
            window.0,
            window.1,
            epochs.t0(),
            epochs.t_end()
        )));
    }
    let t = sources.cols();
    let step = (window.1 - window.0) / dim as f64;
    let mut out = Matrix::zeros(sources.rows(), dim);
    for k in 0..dim {
        let pos = (window.0 + k as f64 * step - epochs.t0()) * epochs.sample_rate();
        let nearest = libm::round(pos);
        let (i0, frac) = if (pos - nearest).abs() < 1e-9 {
            (nearest as usize, 0.0)
        } else {
            (libm::floor(pos) as usize, pos - libm::floor(pos))
        };
        let i0 = i0.min(t - 1);
        let i1 = (i0 + 1).min(t - 1);
        for r in 0..sources.rows() {
            let row = sources.row(r);
            out[(r, k)] = if frac == 0.0 {
                row[i0]
            } else {
                row[i0] * (1.0 - frac) + row[i1] * frac
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eeg::Condition;
    use alloc::string::ToString;

    fn set(data: Vec<f64>, n: usize, c: usize, t: usize, cond: Condition) -> EegEpochSet {
        EegEpochSet::new(
            data,
            n,
            c,
            t,
            250.0,
            0.0,
            EegEpochSet::default_channel_labels(c),
            cond,
            None,
        )
        .unwrap()
    }

    #[test]
    fn covariance_of_zeros_is_zero() {
        let x = set(vec![0.0; 12], 2, 2, 3, Condition::Target);
        let k = set(vec![0.0; 6], 1, 2, 3, Condition::Standard);
        let s = estimate_covariance(&x, &k, false).unwrap();
        assert!(s.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn covariance_scalar_example() {
        let x = set(vec![1.0, 2.0], 1, 1, 2, Condition::Target);
        let k = set(vec![0.0, 0.0], 1, 1, 2, Condition::Standard);
        assert_eq!(estimate_covariance(&x, &k, false).unwrap()[(0, 0)], 5.0);
    }

    #[test]
    fn covariance_invariant_to_duplicated_targets() {
        let base = vec![1.0, -2.0, 0.5, 3.0, 0.25, -1.0];
        let x = set(base.clone(), 1, 2, 3, Condition::Target);
        let mut doubled = base.clone();
        doubled.extend_from_slice(&base);
        let x2 = set(doubled, 2, 2, 3, Condition::Target);
        let k = set(vec![0.5, 0.0, -0.5, 1.0, 1.0, 0.0], 1, 2, 3, Condition::Standard);
        let a = estimate_covariance(&x, &k, false).unwrap();
        let b = estimate_covariance(&x2, &k, false).unwrap();
        for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn covariance_rejects_channel_mismatch() {
        let x = set(vec![0.0; 6], 1, 2, 3, Condition::Target);
        let k = set(vec![0.0; 9], 1, 3, 3, Condition::Standard);
        assert!(matches!(
            estimate_covariance(&x, &k, false),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn identity_covariance_selects_pattern() {
        let w = solve_beamformer(&Matrix::identity(3), &[1.0, 0.0, 0.0], 0.0).unwrap();
        assert_eq!(w, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn scaled_identity_gives_same_weights() {
        let p = [0.3, -1.2, 0.7];
        let w1 = solve_beamformer(&Matrix::identity(3), &p, 0.0).unwrap();
        let mut s = Matrix::identity(3);
        s.scale(17.5);
        let w2 = solve_beamformer(&s, &p, 0.0).unwrap();
        for (a, b) in w1.iter().zip(&w2) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_covariance_needs_shrinkage() {
        let s = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let err = solve_beamformer(&s, &[1.0, 0.0], 0.0).unwrap_err();
        assert!(matches!(err, Error::Singular(ref m) if m.contains("λ")));
        let w = solve_beamformer(&s, &[1.0, 0.0], 1e-3).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_pattern_is_rejected() {
        assert!(solve_beamformer(&Matrix::identity(2), &[0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn reconstruct_selector_and_zero() {
        let data: Vec<f64> = (0..12).map(f64::from).collect();
        let x = set(data, 2, 2, 3, Condition::Target);
        let s = reconstruct_source(&[1.0, 0.0], &x).unwrap();
        assert_eq!(s.row(0), x.channel(0, 0));
        assert_eq!(s.row(1), x.channel(1, 0));
        let z = reconstruct_source(&[0.0, 0.0], &x).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
        assert!(reconstruct_source(&[1.0], &x).is_err());
    }

    #[test]
    fn reconstruct_matches_naive_loop() {
        let data: Vec<f64> = (0..15).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let x = set(data, 1, 3, 5, Condition::Target);
        let w = [0.25, -1.5, 2.0];
        let s = reconstruct_source(&w, &x).unwrap();
        for t in 0..5 {
            let mut acc = 0.0;
            for c in 0..3 {
                acc += w[c] * x.at(0, c, t);
            }
            assert!((s[(0, t)] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn search_window_outside_epoch_is_config_error() {
        let x = set(vec![1.0; 2 * 10], 1, 2, 10, Condition::Target);
        let k = set(vec![0.0; 2 * 10], 1, 2, 10, Condition::Standard);
        let err = fit_filter(&x, &k, &BeamformerOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn window_is_clamped_with_warning() {
        // Epoch ends at 476 ms, so no latency in the search window fits ±100 ms.
        let (c, t) = (2, 120);
        let mut x = vec![0.0; c * t];
        for j in 0..t {
            x[j] = 1.0 + j as f64 * 0.01;
            x[t + j] = if j % 2 == 0 { 0.5 } else { -0.5 };
        }
        let xs = set(x, 1, c, t, Condition::Target);
        let k = set(vec![0.0; c * t], 1, c, t, Condition::Standard);
        let fit = fit_filter(&xs, &k, &BeamformerOptions::default()).unwrap();
        assert!(fit.filter.p300_window.1 <= xs.t_end() + 1e-12);
        assert!(matches!(fit.warnings[0], Warning::WindowClamped { .. }));
    }

    #[test]
    fn group_means_and_missing_category() {
        let vals = [1.0, 3.0, 5.0];
        let labels = ["a".to_string(), "b".to_string(), "a".to_string()];
        let g = group_means(&vals, &labels);
        assert_eq!(g["a"].neuroscore, 3.0);
        assert_eq!(g["a"].count, 2);
        assert_eq!(g["b"].count, 1);
    }
}
