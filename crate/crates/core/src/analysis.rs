//! Statistics over Neuroscore outputs: subsample convergence, correlation
//! with exact t-distribution p-values, paired t-tests and the per-category
//! score table.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::mean_std;
use crate::simulator::sub_rng;

/// Subsample sizes used when none are given: 2, 5, 10, 20, 40, 80, 160 and
/// `n`, restricted to at most `n`.
pub fn default_sizes(n: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = [2, 5, 10, 20, 40, 80, 160].into_iter().filter(|&s| s <= n).collect();
    if n >= 1 && sizes.last() != Some(&n) {
        sizes.push(n);
    }
    sizes
}

pub const DEFAULT_REPEATS: usize = 200;

/// Mean and spread of subsample means as the subsample grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub sample_sizes: Vec<usize>,
    pub means: Vec<f64>,
    /// Sample standard deviation of the subsample means over repeats.
    pub stds: Vec<f64>,
    pub repeats: usize,
    pub seed: u64,
}

/// For every size, draws `repeats` subsamples without replacement and
/// records the mean and standard deviation of their means. Repeat `r` of
/// size index `k` uses its own random stream.
pub fn convergence_curve(amplitudes: &[f64], sizes: &[usize], repeats: usize, seed: u64) -> Result<ConvergenceCurve> {
    let n = amplitudes.len();
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be ≥ 1".into()));
    }
    if let Some(&bad) = sizes.iter().find(|&&s| s == 0 || s > n) {
        return Err(Error::InvalidConfig(format!("subsample size {bad} outside 1..={n}")));
    }
    let mut means = Vec::with_capacity(sizes.len());
    let mut stds = Vec::with_capacity(sizes.len());
    let mut sub = Vec::with_capacity(repeats);
    for (k, &size) in sizes.iter().enumerate() {
        sub.clear();
        for r in 0..repeats {
            let mut rng = sub_rng(seed, ((k as u64) << 32) | r as u64);
            let pick = rand::seq::index::sample(&mut rng, n, size);
            sub.push(pick.iter().map(|i| amplitudes[i]).sum::<f64>() / size as f64);
        }
        let (m, s) = mean_std(&sub);
        means.push(m);
        stds.push(s);
    }
    Ok(ConvergenceCurve { sample_sizes: sizes.to_vec(), means, stds, repeats, seed })
}

/// A correlation coefficient with its two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub p: f64,
    pub n: usize,
}

/// Sample Pearson correlation; `p` from `t = r·√((n−2)/(1−r²))` against a
/// t distribution with `n − 2` degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::dim("correlation inputs", x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("correlation needs at least 3 points, got {n}")));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::InvalidInput("correlation is undefined for a constant input".into()));
    }
    let r = (sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if 1.0 - r * r <= 0.0 {
        0.0
    } else {
        let t = r * libm::sqrt(df / (1.0 - r * r));
        student_t_two_sided(t, df)
    };
    Ok(Correlation { r, p, n })
}

/// Spearman rank correlation: Pearson on average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::dim("correlation inputs", x.len(), y.len()));
    }
    pearson(&ranks(x), &ranks(y))
}

/// 1-based ranks with ties sharing their average rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = alloc::vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// Mean difference below zero.
    Less,
    /// Mean difference above zero.
    Greater,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub mean_diff: f64,
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Paired t-test on `a[i] − b[i]`.
pub fn paired_t_test(a: &[f64], b: &[f64], alternative: Alternative) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::dim("paired samples", a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("paired t-test needs at least 2 pairs, got {n}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, sd) = mean_std(&d);
    let df = (n - 1) as f64;
    let t = if sd > 0.0 {
        mean / (sd / libm::sqrt(n as f64))
    } else if mean == 0.0 {
        0.0
    } else {
        mean.signum() * f64::INFINITY
    };
    let p = match alternative {
        Alternative::Less => student_t_cdf(t, df),
        Alternative::Greater => student_t_cdf(-t, df),
        Alternative::TwoSided => student_t_two_sided(t, df),
    };
    Ok(TTest { mean_diff: mean, t, df, p })
}

/// `P(T ≤ t)` for Student's t with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5)
}

/// `I_x(a, b)` by the continued fraction of Lentz's method.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * libm::log(x) + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// One category's scores side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScoreRow {
    pub category: String,
    pub neuroscore: f64,
    pub synthetic_neuroscore: Option<f64>,
    pub be_accuracy: Option<f64>,
    pub is: Option<f64>,
    pub mmd: Option<f64>,
    pub fid: Option<f64>,
}

impl CategoryScoreRow {
    pub fn new(category: impl Into<String>, neuroscore: f64) -> Self {
        CategoryScoreRow {
            category: category.into(),
            neuroscore,
            synthetic_neuroscore: None,
            be_accuracy: None,
            is: None,
            mmd: None,
            fid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScoreTable {
    rows: Vec<CategoryScoreRow>,
}

impl CategoryScoreTable {
    pub fn new(rows: Vec<CategoryScoreRow>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in &rows {
            if !seen.insert(r.category.as_str()) {
                return Err(Error::InvalidInput(format!("category {:?} appears twice", r.category)));
            }
        }
        Ok(CategoryScoreTable { rows })
    }

    pub fn rows(&self) -> &[CategoryScoreRow] {
        &self.rows
    }
}
