mod common;

use common::{normal_vec, rng};
use neuroscore_core::linalg::Matrix;
use neuroscore_core::metrics::{
    fid, gaussian_stats, inception_score, matrix_sqrt_psd, median_heuristic_bandwidth, mmd2, FeatureSet, GaussianStats,
    KernelSpec, MmdEstimator, ProbSet, Source,
};
use proptest::prelude::*;

fn features(seed: u64, m: usize, d: usize, shift: f64) -> FeatureSet {
    let data = normal_vec(&mut rng(seed), m * d).into_iter().map(|v| v + shift).collect();
    FeatureSet::new(Matrix::from_vec(m, d, data).unwrap(), Source::Real).unwrap()
}

fn diag_stats(mu: &[f64], var: &[f64]) -> GaussianStats {
    let mut cov = Matrix::zeros(var.len(), var.len());
    for (i, v) in var.iter().enumerate() {
        cov[(i, i)] = *v;
    }
    GaussianStats { mu: mu.to_vec(), covariance: cov }
}

fn brute_mmd2(a: &Matrix, b: &Matrix, bw: f64, unbiased: bool) -> f64 {
    let k = |x: &[f64], y: &[f64]| {
        let d2: f64 = x.iter().zip(y).map(|(u, v)| (u - v).powi(2)).sum();
        (-d2 / (2.0 * bw * bw)).exp()
    };
    let within = |m: &Matrix| {
        let mut s = 0.0;
        for i in 0..m.rows() {
            for j in 0..m.rows() {
                if !(unbiased && i == j) {
                    s += k(m.row(i), m.row(j));
                }
            }
        }
        let n = m.rows() as f64;
        s / if unbiased { n * (n - 1.0) } else { n * n }
    };
    let mut cross = 0.0;
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            cross += k(a.row(i), b.row(j));
        }
    }
    within(a) + within(b) - 2.0 * cross / (a.rows() * b.rows()) as f64
}

#[test]
fn fid_of_a_set_with_itself_is_zero() {
    let s = gaussian_stats(&features(1, 200, 8, 0.0)).unwrap();
    assert!(fid(&s, &s).unwrap().abs() < 1e-8);
}

#[test]
fn one_dimensional_fid() {
    let v = fid(&diag_stats(&[0.0], &[1.0]), &diag_stats(&[1.0], &[4.0])).unwrap();
    assert!((v - 2.0).abs() < 1e-10, "{v}");
}

#[test]
fn diagonal_fid_separates_per_axis() {
    let (ma, va): ([f64; 4], [f64; 4]) = ([0.5, -1.0, 2.0, 0.0], [1.0, 0.25, 9.0, 2.0]);
    let (mb, vb): ([f64; 4], [f64; 4]) = ([0.0, 1.0, 2.5, -3.0], [4.0, 1.0, 1.0, 0.5]);
    let expected: f64 = (0..4).map(|i| (ma[i] - mb[i]).powi(2) + (va[i].sqrt() - vb[i].sqrt()).powi(2)).sum();
    let v = fid(&diag_stats(&ma, &va), &diag_stats(&mb, &vb)).unwrap();
    assert!((v - expected).abs() < 1e-10, "{v} vs {expected}");
}

#[test]
fn biased_mmd_of_identical_sets_is_zero() {
    let x = features(2, 40, 5, 0.0);
    let k = KernelSpec::gaussian(1.3).unwrap();
    assert!(mmd2(&x, &x, &k, MmdEstimator::Biased).unwrap().abs() < 1e-12);
}

#[test]
fn mmd_matches_brute_force() {
    let (a, b) = (features(3, 10, 3, 0.0), features(4, 12, 3, 0.7));
    let bw = 0.9;
    let k = KernelSpec::gaussian(bw).unwrap();
    for (est, unbiased) in [(MmdEstimator::Biased, false), (MmdEstimator::Unbiased, true)] {
        let got = mmd2(&a, &b, &k, est).unwrap();
        let want = brute_mmd2(a.features(), b.features(), bw, unbiased);
        assert!((got - want).abs() < 1e-10, "{est:?}: {got} vs {want}");
    }
}

#[test]
fn unbiased_mmd_centres_on_zero_where_biased_does_not() {
    let k = KernelSpec::gaussian(1.0).unwrap();
    let (mut unb, mut bia) = (Vec::new(), Vec::new());
    for s in 0..200u64 {
        let (a, b) = (features(2 * s + 1000, 15, 2, 0.0), features(2 * s + 1001, 15, 2, 0.0));
        unb.push(mmd2(&a, &b, &k, MmdEstimator::Unbiased).unwrap());
        bia.push(mmd2(&a, &b, &k, MmdEstimator::Biased).unwrap());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let se = |v: &[f64]| {
        let m = mean(v);
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64 / v.len() as f64).sqrt()
    };
    assert!(mean(&unb).abs() < 4.0 * se(&unb), "unbiased mean {} se {}", mean(&unb), se(&unb));
    assert!(mean(&bia) > 10.0 * se(&bia), "biased mean {} se {}", mean(&bia), se(&bia));
}

#[test]
fn inception_score_extremes() {
    let k = 5;
    let uniform = ProbSet::new(Matrix::from_vec(7, k, vec![1.0 / k as f64; 7 * k]).unwrap()).unwrap();
    assert!((inception_score(&uniform) - 1.0).abs() < 1e-12);
    let mut one_hot = Matrix::zeros(k, k);
    for i in 0..k {
        one_hot[(i, i)] = 1.0;
    }
    let masses = ProbSet::new(one_hot).unwrap();
    assert!((inception_score(&masses) - k as f64).abs() < 1e-6);
}

#[test]
fn square_root_reconstructs_its_input() {
    let mut r = rng(11);
    let a = common::random_spd(&mut r, 12, 0.0);
    let root = matrix_sqrt_psd(&a).unwrap();
    assert!(root.max_asymmetry() == 0.0);
    let back = root.matmul(&root).unwrap();
    for (x, y) in back.as_slice().iter().zip(a.as_slice()) {
        assert!((x - y).abs() < 1e-8);
    }
}

#[test]
fn median_bandwidth_matches_sorted_pairwise_distances() {
    let (a, b) = (features(5, 12, 3, 0.0), features(6, 8, 3, 1.0));
    let rows: Vec<&[f64]> =
        (0..12).map(|i| a.features().row(i)).chain((0..8).map(|i| b.features().row(i))).collect();
    let mut d = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(rows[i].iter().zip(rows[j]).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let want = if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) };
    assert_eq!(median_heuristic_bandwidth(&a, &b), want);
}

fn prob_rows() -> impl Strategy<Value = Matrix> {
    (1usize..12, 2usize..8).prop_flat_map(|(m, k)| {
        prop::collection::vec(0.0..1.0f64, m * k).prop_map(move |raw| {
            let mut p = Matrix::from_vec(m, k, raw).unwrap();
            for i in 0..m {
                let row = p.row_mut(i);
                let s: f64 = row.iter().sum::<f64>() + 1e-12;
                let floor = 1e-12 / k as f64;
                row.iter_mut().for_each(|v| *v = (*v + floor) / s);
            }
            p
        })
    })
}

fn permuted_rows(m: &Matrix, seed: u64) -> Matrix {
    let mut idx: Vec<usize> = (0..m.rows()).collect();
    let mut r = rng(seed);
    rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut r);
    Matrix::from_rows(&idx.iter().map(|&i| m.row(i).to_vec()).collect::<Vec<_>>()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fid_is_symmetric(seeds in any::<(u64, u64)>(), d in 1usize..7, shift in -2.0..2.0f64) {
        let a = gaussian_stats(&features(seeds.0, 30, d, 0.0)).unwrap();
        let b = gaussian_stats(&features(seeds.1, 25, d, shift)).unwrap();
        let (ab, ba) = (fid(&a, &b).unwrap(), fid(&b, &a).unwrap());
        prop_assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0));
        prop_assert!(ab >= 0.0);
    }

    #[test]
    fn mmd_ignores_row_order(seeds in any::<(u64, u64, u64)>(), bw in 0.2..5.0f64) {
        let (a, b) = (features(seeds.0, 9, 3, 0.0), features(seeds.1, 7, 3, 0.5));
        let pa = FeatureSet::new(permuted_rows(a.features(), seeds.2), Source::Real).unwrap();
        let pb = FeatureSet::new(permuted_rows(b.features(), !seeds.2), Source::Generated).unwrap();
        let k = KernelSpec::gaussian(bw).unwrap();
        for est in [MmdEstimator::Biased, MmdEstimator::Unbiased] {
            let (x, y) = (mmd2(&a, &b, &k, est).unwrap(), mmd2(&pa, &pb, &k, est).unwrap());
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!(mmd2(&a, &b, &k, MmdEstimator::Biased).unwrap() >= -1e-15);
    }

    #[test]
    fn inception_score_is_bounded_and_order_free(p in prob_rows(), seed in any::<u64>()) {
        let k = p.cols() as f64;
        let is = inception_score(&ProbSet::new(p.clone()).unwrap());
        prop_assert!((1.0 - 1e-9..=k + 1e-9).contains(&is), "IS {is} outside [1, {k}]");
        let shuffled = inception_score(&ProbSet::new(permuted_rows(&p, seed)).unwrap());
        prop_assert!((is - shuffled).abs() < 1e-10);
    }

    #[test]
    fn square_root_is_symmetric_psd(seed in any::<u64>(), c in 1usize..10) {
        let a = common::random_spd(&mut rng(seed), c, 0.0);
        let root = matrix_sqrt_psd(&a).unwrap();
        prop_assert_eq!(root.max_asymmetry(), 0.0);
        let back = root.matmul(&root).unwrap();
        for (x, y) in back.as_slice().iter().zip(a.as_slice()) {
            prop_assert!((x - y).abs() < 1e-8);
        }
    }
}
