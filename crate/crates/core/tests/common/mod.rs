#![allow(dead_code)]

use neuroscore_core::linalg::Matrix;
use neuroscore_core::simulator::{CategorySpec, SimConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// `AAᵀ/c + shift·I` for a standard normal `A`.
pub fn random_spd(rng: &mut ChaCha8Rng, c: usize, shift: f64) -> Matrix {
    let a = normal_vec(rng, c * c);
    let mut s = Matrix::zeros(c, c);
    for i in 0..c {
        for j in 0..c {
            let v: f64 = (0..c).map(|k| a[i * c + k] * a[j * c + k]).sum();
            s[(i, j)] = v / c as f64 + if i == j { shift } else { 0.0 };
        }
    }
    s
}

/// Dense Gaussian elimination with partial pivoting on `a x = b`.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for k in col..n {
                a[r][k] -= f * a[col][k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Minimiser of `wᵀΣw` subject to `wᵀp = 1` from the stationarity system
/// `[2Σ p; pᵀ 0][w; μ] = [0; 1]`.
pub fn lagrangian_beamformer(sigma: &Matrix, p: &[f64]) -> Vec<f64> {
    let c = p.len();
    let mut a = vec![vec![0.0; c + 1]; c + 1];
    for i in 0..c {
        for j in 0..c {
            a[i][j] = 2.0 * sigma[(i, j)];
        }
        a[i][c] = p[i];
        a[c][i] = p[i];
    }
    let mut b = vec![0.0; c + 1];
    b[c] = 1.0;
    let mut x = gauss_solve(a, b);
    x.truncate(c);
    x
}

pub fn pearson_naive(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    sxy / (sxx * syy).sqrt()
}

/// A reduced simulation: 16 channels, `per_category` trials per category.
pub fn small_sim(seed: u64, per_category: usize) -> SimConfig {
    SimConfig {
        channels: 16,
        categories: vec![
            CategorySpec::new("DCGAN", 1.0, 0.2, per_category),
            CategorySpec::new("BEGAN", 2.0, 0.2, per_category),
            CategorySpec::new("PROGAN", 3.0, 0.2, per_category),
        ],
        standard_trial_count: 5 * per_category,
        feature_dim: 64,
        seed,
        ..SimConfig::default()
    }
}
