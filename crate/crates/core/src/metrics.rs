//! Conventional GAN evaluation metrics on feature and probability matrices.
//!
//! The embedder and classifier are outside this module: callers hand in
//! feature vectors (for MMD and FID) or class-probability rows (for IS).

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, Matrix};

/// Where a feature set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Real,
    Generated,
}

/// `M × D` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    features: Matrix,
    source: Source,
}

impl FeatureSet {
    pub fn new(features: Matrix, source: Source) -> Result<Self> {
        if features.rows() == 0 || features.cols() == 0 {
            return Err(Error::InvalidInput("feature set is empty".into()));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("feature matrix".into()));
        }
        Ok(FeatureSet { features, source })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

/// Row-stochastic `M × K` class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbSet {
    probs: Matrix,
}

impl ProbSet {
    pub const ROW_SUM_TOL: f64 = 1e-9;

    pub fn new(probs: Matrix) -> Result<Self> {
        if probs.rows() == 0 || probs.cols() == 0 {
            return Err(Error::InvalidInput("probability matrix is empty".into()));
        }
        for i in 0..probs.rows() {
            let row = probs.row(i);
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidInput(alloc::format!(
                    "row {i} has a negative or non-finite probability"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > Self::ROW_SUM_TOL {
                return Err(Error::InvalidInput(alloc::format!("row {i} sums to {s}, not 1")));
            }
        }
        Ok(ProbSet { probs })
    }

    pub fn probs(&self) -> &Matrix {
        &self.probs
    }
}

/// Mean and covariance of a feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianStats {
    pub mu: Vec<f64>,
    pub covariance: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Gaussian { bandwidth: f64 },
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::InvalidConfig(alloc::format!(
                "kernel bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(KernelSpec::Gaussian { bandwidth })
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Gaussian { bandwidth } => {
                let d2 = sq_dist(x, y);
                libm::exp(-d2 / (2.0 * bandwidth * bandwidth))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmdEstimator {
    Biased,
    #[default]
    Unbiased,
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `exp(E_x[KL(p(y|x) ‖ p(y))])` with `p(y)` the column mean of the batch.
pub fn inception_score(probs: &ProbSet) -> f64 {
    let p = probs.probs();
    let (m, k) = (p.rows(), p.cols());
    let marginal: Vec<f64> = (0..k)
        .map(|j| (0..m).map(|i| p[(i, j)]).sum::<f64>() / m as f64)
        .collect();
    let mut kl_sum = 0.0;
    for i in 0..m {
        for (j, &q) in marginal.iter().enumerate() {
            let pij = p[(i, j)];
            if pij > 0.0 {
                kl_sum += pij * libm::log(pij / q);
            }
        }
    }
    libm::exp(kl_sum / m as f64)
}

/// Sum of `k(a_i, b_j)` over all pairs, optionally skipping `i == j`.
fn kernel_sum(a: &Matrix, b: &Matrix, kernel: &KernelSpec, skip_diag: bool) -> f64 {
    let mut total = 0.0;
    for i in 0..a.rows() {
        let ai = a.row(i);
        let mut row_sum = 0.0;
        for j in 0..b.rows() {
            if skip_diag && i == j {
                continue;
            }
            row_sum += kernel.eval(ai, b.row(j));
        }
        total += row_sum;
    }
    total
}

/// Squared kernel maximum mean discrepancy between two feature sets.
pub fn mmd2(xr: &FeatureSet, xg: &FeatureSet, kernel: &KernelSpec, estimator: MmdEstimator) -> Result<f64> {
    if xr.dim() != xg.dim() {
        return Err(Error::dim("feature dimension", xr.dim(), xg.dim()));
    }
    let (m, n) = (xr.len() as f64, xg.len() as f64);
    let (a, b) = (xr.features(), xg.features());
    let cross = kernel_sum(a, b, kernel, false) / (m * n);
    match estimator {
        MmdEstimator::Biased => {
            let rr = kernel_sum(a, a, kernel, false) / (m * m);
            let gg = kernel_sum(b, b, kernel, false) / (n * n);
            Ok(rr + gg - 2.0 * cross)
        }
        MmdEstimator::Unbiased => {
            if xr.len() < 2 || xg.len() < 2 {
                return Err(Error::InvalidInput(
                    "unbiased MMD needs at least two samples per set".into(),
                ));
            }
            let rr = kernel_sum(a, a, kernel, true) / (m * (m - 1.0));
            let gg = kernel_sum(b, b, kernel, true) / (n * (n - 1.0));
            Ok(rr + gg - 2.0 * cross)
        }
    }
}

/// Median pairwise Euclidean distance over the pooled set, ignoring zero
/// distances; falls back to 1 when no positive distance exists.
pub fn median_heuristic_bandwidth(xr: &FeatureSet, xg: &FeatureSet) -> f64 {
    let rows: Vec<&[f64]> = (0..xr.len())
        .map(|i| xr.features().row(i))
        .chain((0..xg.len()).map(|i| xg.features().row(i)))
        .collect();
    let mut dists = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            let d = libm::sqrt(sq_dist(rows[i], rows[j]));
            if d > 0.0 {
                dists.push(d);
            }
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let n = dists.len();
    let med = if n % 2 == 1 {
        dists[n / 2]
    } else {
        0.5 * (dists[n / 2 - 1] + dists[n / 2])
    };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// Sample mean and unbiased sample covariance.
pub fn gaussian_stats(features: &FeatureSet) -> Result<GaussianStats> {
    let x = features.features();
    let (m, d) = (x.rows(), x.cols());
    if m < 2 {
        return Err(Error::InvalidInput(alloc::format!(
            "covariance needs at least two samples, got {m}"
        )));
    }
    let mut mu = alloc::vec![0.0; d];
    for i in 0..m {
        crate::linalg::axpy(1.0, x.row(i), &mut mu);
    }
    mu.iter_mut().for_each(|v| *v /= m as f64);
    let mut cov = Matrix::zeros(d, d);
    let mut centered = alloc::vec![0.0; d];
    for i in 0..m {
        for (c, (xi, mi)) in centered.iter_mut().zip(x.row(i).iter().zip(&mu)) {
            *c = xi - mi;
        }
        for a in 0..d {
            let ca = centered[a];
            if ca == 0.0 {
                continue;
            }
            let row = cov.row_mut(a);
            for b in a..d {
                row[b] += ca * centered[b];
            }
        }
    }
    let denom = (m - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok(GaussianStats { mu, covariance: cov })
}

/// Symmetric tolerance for [`matrix_sqrt_psd`] inputs.
pub const SQRT_SYMMETRY_TOL: f64 = 1e-8;

/// Principal square root of a symmetric PSD matrix, clamping negative
/// eigenvalues to zero.
pub fn matrix_sqrt_psd(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::dim("matrix square root (square)", a.rows(), a.cols()));
    }
    let scale = a.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let asym = a.max_asymmetry();
    if asym > SQRT_SYMMETRY_TOL * scale {
        return Err(Error::InvalidInput(alloc::format!(
            "matrix is not symmetric (max |a_ij - a_ji| = {asym:.3e})"
        )));
    }
    let mut sym = a.clone();
    sym.symmetrize();
    let (vals, vecs) = symmetric_eigen(&sym)?;
    let n = a.rows();
    let roots: Vec<f64> = vals.iter().map(|&v| libm::sqrt(v.max(0.0))).collect();
    let mut out = Matrix::zeros(n, n);
    for k in 0..n {
        let r = roots[k];
        if r == 0.0 {
            continue;
        }
        for i in 0..n {
            let vik = vecs[(i, k)] * r;
            if vik == 0.0 {
                continue;
            }
            let row = out.row_mut(i);
            for j in 0..n {
                row[j] += vik * vecs[(j, k)];
            }
        }
    }
    out.symmetrize();
    Ok(out)
}

/// Fréchet distance between two Gaussians, with the cross term taken as
/// `Tr sqrt(Σr^½ Σg Σr^½)` so it is symmetric by construction.
pub fn fid(real: &GaussianStats, gen: &GaussianStats) -> Result<f64> {
    let d = real.mu.len();
    if gen.mu.len() != d || real.covariance.rows() != d || gen.covariance.rows() != d {
        return Err(Error::dim("feature dimension", d, gen.mu.len()));
    }
    let mean_term: f64 = real.mu.iter().zip(&gen.mu).map(|(a, b)| (a - b) * (a - b)).sum();
    let (first, second) = if fid_order(real, gen) {
        (real, gen)
    } else {
        (gen, real)
    };
    let root = matrix_sqrt_psd(&first.covariance)?;
    let mut inner = root.matmul(&second.covariance)?.matmul(&root)?;
    inner.symmetrize();
    let cross = matrix_sqrt_psd(&inner)?.trace();
    let total = mean_term + real.covariance.trace() + gen.covariance.trace() - 2.0 * cross;
    Ok(total.max(0.0))
}

/// Deterministic operand order so `fid(a, b)` and `fid(b, a)` evaluate the
/// same floating-point expression.
fn fid_order(a: &GaussianStats, b: &GaussianStats) -> bool {
    let key = |s: &GaussianStats| {
        s.mu.iter()
            .chain(s.covariance.as_slice())
            .map(|v| v.to_bits())
            .collect::<Vec<u64>>()
    };
    key(a) <= key(b)
}
