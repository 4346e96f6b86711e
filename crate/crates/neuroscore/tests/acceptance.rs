use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::OnceLock;
use std::time::Instant;

use neuroscore::{epb, parallel, snm};
use neuroscore_core::analysis::{convergence_curve, pearson};
use neuroscore_core::beamformer::{fit_filter, neuroscore, BeamformerOptions, BeamformerSolver, NeuroscoreResult};
use neuroscore_core::eeg::{Condition, EegEpochSet};
use neuroscore_core::linalg::{dot, mean_std, Matrix};
use neuroscore_core::metrics::{
    fid, gaussian_stats, inception_score, mmd2, FeatureSet, GaussianStats, KernelSpec, MmdEstimator, ProbSet, Source,
};
use neuroscore_core::net::{
    gradient_check, predict_synthetic_neuroscore, stratified_split, train, AblationConfig, Embedder, GradCheckOptions,
    SurrogateConfig, SurrogateModel, TrainConfig, TrainMode, TrialDataset,
};
use neuroscore_core::simulator::{simulate, sub_rng, SimConfig, SimOutput};
use proptest::prelude::*;
use proptest::test_runner::{RngAlgorithm, TestRng, TestRunner};
use rand::Rng;
use sha2::{Digest, Sha256};

type Check = std::result::Result<String, String>;

fn uniform(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `AAᵀ/c + shift·I` for a uniform random `A`.
fn random_spd(rng: &mut impl Rng, c: usize, shift: f64) -> Matrix {
    let a = uniform(rng, c * c);
    let mut s = Matrix::zeros(c, c);
    for i in 0..c {
        for j in 0..c {
            let v: f64 = (0..c).map(|k| a[i * c + k] * a[j * c + k]).sum();
            s[(i, j)] = v / c as f64 + if i == j { shift } else { 0.0 };
        }
    }
    s
}

fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
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

/// Stationary point of `wᵀΣw − μ(wᵀp − 1)` from `[2Σ p; pᵀ 0][w; μ] = [0; 1]`.
fn lagrangian_beamformer(sigma: &Matrix, p: &[f64]) -> Vec<f64> {
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

fn runner(cases: u32) -> TestRunner {
    let config = ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(cases) };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Default simulation, its Neuroscore and the seconds both took.
fn default_sim() -> &'static (SimOutput, NeuroscoreResult, f64) {
    static CELL: OnceLock<(SimOutput, NeuroscoreResult, f64)> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let sim = simulate(&SimConfig::default()).unwrap();
        let result = neuroscore(&sim.target, &sim.standard, &BeamformerOptions::default(), &[]).unwrap();
        (sim, result, start.elapsed().as_secs_f64())
    })
}

/// The standard dataset: default simulation with 500 trials per category.
fn standard_dataset() -> &'static (SimOutput, TrialDataset) {
    static CELL: OnceLock<(SimOutput, TrialDataset)> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut cfg = SimConfig::default();
        cfg.categories.iter_mut().for_each(|c| c.trial_count = 500);
        let sim = simulate(&cfg).unwrap();
        let result = neuroscore(&sim.target, &sim.standard, &BeamformerOptions::default(), &[]).unwrap();
        let data = TrialDataset::from_eeg(sim.image_features.clone(), &sim.target, &result, 50).unwrap();
        (sim, data)
    })
}

fn beamformer_oracle() -> Check {
    let start = Instant::now();
    let mut rng = sub_rng(1, 0);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let c = 2 + k % 15;
        let sigma = random_spd(&mut rng, c, 0.5);
        let p = uniform(&mut rng, c);
        let (w, _) = BeamformerSolver::new(&sigma, 0.0).unwrap().solve(&p).unwrap();
        for (a, b) in w.iter().zip(lagrangian_beamformer(&sigma, &p)) {
            worst = worst.max((a - b).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst < 1e-8 && secs < 5.0, format!("max componentwise error {worst:.1e} in {secs:.2} s"))
}

fn constraint_invariant() -> Check {
    let mut worst: f64 = 0.0;
    let mut filters = 0usize;
    let mut runner = runner(2000);
    let strategy = (2usize..=32, any::<u64>(), prop_oneof![Just(0.0), 1e-8..1.0f64], 1e-3..10.0f64);
    let gains = std::cell::RefCell::new(Vec::new());
    runner
        .run(&strategy, |(c, seed, lambda, shift)| {
            let mut rng = sub_rng(seed, 2);
            let sigma = random_spd(&mut rng, c, shift);
            let p = uniform(&mut rng, c);
            let (w, _) = BeamformerSolver::new(&sigma, lambda).unwrap().solve(&p).unwrap();
            gains.borrow_mut().push(dot(&w, &p));
            Ok(())
        })
        .map_err(|e| format!("property run failed: {e}"))?;
    for g in gains.into_inner() {
        worst = worst.max((g - 1.0).abs());
        filters += 1;
    }
    for seed in 0..10u64 {
        let cfg = SimConfig {
            channels: 8 + 2 * seed as usize,
            noise_scale: [0.0, 0.01, 0.05, 0.2, 1.0][seed as usize % 5],
            standard_trial_count: 300,
            feature_dim: 4,
            seed,
            ..SimConfig::default()
        };
        let mut cfg = cfg;
        cfg.categories.iter_mut().for_each(|c| c.trial_count = 40);
        let sim = simulate(&cfg).unwrap();
        for center in [false, true] {
            let opts = BeamformerOptions { lambda: 1e-3, center, ..BeamformerOptions::default() };
            let f = fit_filter(&sim.target, &sim.standard, &opts).unwrap().filter;
            worst = worst.max((f.gain() - 1.0).abs());
            filters += 1;
        }
    }
    let (_, result, _) = default_sim();
    worst = worst.max((result.filter.gain() - 1.0).abs());
    filters += 1;
    ensure(worst <= 1e-9, format!("max |wᵀp − 1| = {worst:.1e} over {filters} filters"))
}

fn simulator_round_trip() -> Check {
    let (_, result, secs) = default_sim();
    let secs = *secs;
    let latency_err = (result.filter.t_optimal - 0.5).abs();
    let s = |c: &str| result.per_category[c].neuroscore;
    let base = s("DCGAN");
    let worst = [("BEGAN", 2.0), ("PROGAN", 3.0)]
        .iter()
        .map(|&(c, r)| (s(c) / base - r).abs() / r)
        .fold(0.0f64, f64::max);
    ensure(
        latency_err <= 0.012 + 1e-9 && worst < 0.05 && secs < 30.0,
        format!(
            "t_optimal {:.0} ms, ratios 1 : {:.3} : {:.3} (worst {:.2}%), {secs:.1} s",
            result.filter.t_optimal * 1e3,
            s("BEGAN") / base,
            s("PROGAN") / base,
            100.0 * worst
        ),
    )
}

fn metric_closed_forms() -> Check {
    let mut rng = sub_rng(4, 0);
    let set = |rng: &mut _, m: usize, d: usize, shift: f64| {
        let data: Vec<f64> = uniform(rng, m * d).into_iter().map(|v| v + shift).collect();
        FeatureSet::new(Matrix::from_vec(m, d, data).unwrap(), Source::Real).unwrap()
    };
    let a = set(&mut rng, 300, 6, 0.0);
    let sa = gaussian_stats(&a).unwrap();
    let self_fid = fid(&sa, &sa).unwrap();
    let one = |mu: f64, var: f64| GaussianStats { mu: vec![mu], covariance: Matrix::from_vec(1, 1, vec![var]).unwrap() };
    let fid_1d = fid(&one(0.0, 1.0), &one(1.0, 4.0)).unwrap();
    let k = KernelSpec::gaussian(0.8).unwrap();
    let self_mmd = mmd2(&a, &a, &k, MmdEstimator::Biased).unwrap();
    let mut brute_err: f64 = 0.0;
    for _ in 0..20 {
        let (x, y) = (set(&mut rng, 10, 3, 0.0), set(&mut rng, 12, 3, 0.5));
        let kern = |u: &[f64], v: &[f64]| {
            (-u.iter().zip(v).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / (2.0 * 0.8 * 0.8)).exp()
        };
        let mean_k = |p: &Matrix, q: &Matrix| {
            let mut s = 0.0;
            for i in 0..p.rows() {
                for j in 0..q.rows() {
                    s += kern(p.row(i), q.row(j));
                }
            }
            s / (p.rows() * q.rows()) as f64
        };
        let (xf, yf) = (x.features(), y.features());
        let brute = mean_k(xf, xf) + mean_k(yf, yf) - 2.0 * mean_k(xf, yf);
        brute_err = brute_err.max((mmd2(&x, &y, &k, MmdEstimator::Biased).unwrap() - brute).abs());
    }
    let kk = 7;
    let uniform_is = inception_score(&ProbSet::new(Matrix::from_vec(9, kk, vec![1.0 / kk as f64; 9 * kk]).unwrap()).unwrap());
    let mut masses = Matrix::zeros(3 * kk, kk);
    for i in 0..3 * kk {
        masses[(i, i % kk)] = 1.0;
    }
    let mass_is = inception_score(&ProbSet::new(masses).unwrap());
    ensure(
        self_fid.abs() < 1e-8
            && (fid_1d - 2.0).abs() < 1e-10
            && self_mmd.abs() < 1e-12
            && brute_err < 1e-10
            && (uniform_is - 1.0).abs() < 1e-6
            && (mass_is - kk as f64).abs() < 1e-6,
        format!(
            "fid(a,a) {self_fid:.1e}, 1-D fid {fid_1d:.12}, mmd²(a,a) {self_mmd:.1e}, brute-force gap {brute_err:.1e}, IS {uniform_is:.9} / {mass_is:.9}"
        ),
    )
}

fn gradient_correctness() -> Check {
    let start = Instant::now();
    let mut rng = sub_rng(5, 0);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for k in 0..20u64 {
        let input = rng.random_range(1..24);
        let t1: Vec<usize> = (0..rng.random_range(1..4)).map(|_| rng.random_range(1..16)).collect();
        let p300 = *t1.last().unwrap();
        let mut t2: Vec<usize> = (0..rng.random_range(0..2)).map(|_| rng.random_range(1..8)).collect();
        t2.push(1);
        let embedder = if k % 4 == 3 {
            Embedder::RandomProjection { seed: k, raw_dim: rng.random_range(1..30) }
        } else {
            Embedder::Identity
        };
        let config = SurrogateConfig {
            embedder,
            input_dim: input,
            theta1_layers: t1,
            p300_dim: p300,
            theta2_layers: t2,
            ..SurrogateConfig::shallow(input)
        };
        let raw = config.raw_input_dim();
        let model = SurrogateModel::<f64>::new(config, k).unwrap();
        let n = rng.random_range(1..=8);
        let batch = TrialDataset::new(
            Matrix::from_vec(n, raw, uniform(&mut rng, n * raw)).unwrap(),
            Some(Matrix::from_vec(n, p300, uniform(&mut rng, n * p300)).unwrap()),
            uniform(&mut rng, n),
            (0..n).map(|i| format!("c{}", i % 3)).collect(),
        )
        .unwrap();
        let report = gradient_check(&model, &batch, &GradCheckOptions { seed: k, ..GradCheckOptions::default() }).unwrap();
        worst = worst.max(report.max_rel_error);
        checked += report.checked;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        worst < 1e-4 && checked > 0 && secs < 60.0,
        format!("max relative error {worst:.1e} over {checked} parameters, {secs:.1} s"),
    )
}

fn ablation_ordering() -> Check {
    let start = Instant::now();
    let (_, data) = standard_dataset();
    let cfg = AblationConfig {
        model: SurrogateConfig::shallow(data.images().cols()),
        ..AblationConfig::default()
    };
    let result = parallel::run_ablation::<f32>(data, &cfg).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let (with, random) = (result.errors(TrainMode::WithEeg), result.errors(TrainMode::RandomEeg));
    let test = result.compare(TrainMode::WithEeg, TrainMode::RandomEeg).map_err(|e| e.to_string())?;
    let (mw, sw) = mean_std(&with);
    let (mr, sr) = mean_std(&random);
    ensure(
        with.len() == 20 && mw < mr && test.p < 0.05 && secs < 600.0,
        format!(
            "with_eeg {mw:.3} (±{sw:.3}) vs random_eeg {mr:.3} (±{sr:.3}) over {} shuffles, one-sided p = {:.4}, {secs:.0} s",
            with.len(),
            test.p
        ),
    )
}

fn convergence_behavior() -> Check {
    let start = Instant::now();
    let (_, result, _) = default_sim();
    let sizes = [2, 5, 10, 20, 40];
    let mut worst: f64 = 0.0;
    let mut halving = true;
    for (k, category) in ["DCGAN", "BEGAN", "PROGAN"].iter().enumerate() {
        let amps: Vec<f64> = result
            .amplitudes
            .iter()
            .zip(&result.categories)
            .filter(|(_, c)| c == category)
            .map(|(a, _)| *a)
            .collect();
        let (_, sigma) = mean_std(&amps);
        let curve = convergence_curve(&amps, &sizes, 200, k as u64).unwrap();
        for (&n, &s) in sizes.iter().zip(&curve.stds) {
            worst = worst.max((s / (sigma / (n as f64).sqrt()) - 1.0).abs());
        }
        halving &= curve.stds[3] < 0.5 * curve.stds[0];
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        worst < 0.2 && halving && secs < 60.0,
        format!("worst deviation from σ/√n {:.1}%, std(20) < std(2)/2: {halving}, {secs:.1} s", 100.0 * worst),
    )
}

fn correlation_machinery() -> Check {
    let (x, y) = ([1.0, 2.0, 3.0, 4.0, 5.0], [2.0, 4.0, 5.0, 4.0, 5.0]);
    let c = pearson(&x, &y).map_err(|e| e.to_string())?;
    let (mx, my) = (3.0, 4.0);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let r = sxy / (sxx * syy).sqrt();
    let t = r * (3.0 / (1.0 - r * r)).sqrt();
    let theta = (t / 3f64.sqrt()).atan();
    let p = 1.0 - 2.0 / std::f64::consts::PI * (theta + theta.sin() * theta.cos());

    let (sim, data) = standard_dataset();
    let (train_idx, test_idx) =
        stratified_split(data.categories(), (2, 1), &mut sub_rng(8, 0)).map_err(|e| e.to_string())?;
    let (train_set, test_set) = (data.subset(&train_idx).unwrap(), data.subset(&test_idx).unwrap());
    let mut model = SurrogateModel::<f32>::new(SurrogateConfig::shallow(data.images().cols()), 8).unwrap();
    train(&mut model, &train_set, &TrainConfig { shuffle_seed: 8, ..TrainConfig::default() }).map_err(|e| e.to_string())?;
    let synth = predict_synthetic_neuroscore(&model, test_set.images(), test_set.categories(), &[]).unwrap();
    let planted: BTreeMap<&str, f64> =
        sim.config.categories.iter().map(|c| (c.label.as_str(), c.amplitude_mean)).collect();
    let scores: Vec<f64> = synth.scores.values().copied().collect();
    let means: Vec<f64> = synth.scores.keys().map(|k| planted[k.as_str()]).collect();
    let r_sim = pearson(&scores, &means).map_err(|e| e.to_string())?.r;
    ensure(
        (c.r - r).abs() < 1e-10 && (c.p - p).abs() < 1e-6 && r_sim > 0.9,
        format!(
            "r {:.12} (oracle {r:.12}), p {:.9} (oracle {p:.9}), synthetic vs planted r = {r_sim:.4}",
            c.r, c.p
        ),
    )
}

const PIPELINE_CONFIG: &str = r#"{
  "seed": 11,
  "simulation": {
    "channels": 12,
    "categories": [
      {"label": "DCGAN", "amplitude_mean": 1.0, "amplitude_std": 0.2, "trial_count": 45},
      {"label": "BEGAN", "amplitude_mean": 2.0, "amplitude_std": 0.2, "trial_count": 45},
      {"label": "PROGAN", "amplitude_mean": 3.0, "amplitude_std": 0.2, "trial_count": 45}
    ],
    "standard_trial_count": 225,
    "feature_dim": 32
  },
  "training": {"epochs": 5, "batch_size": 32},
  "ablation": {"shuffles": 3},
  "convergence": {"repeats": 30}
}"#;

fn run_pipeline(dir: &Path, threads: &str) -> std::result::Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    let config = dir.join("config.json");
    fs::write(&config, PIPELINE_CONFIG).map_err(|e| e.to_string())?;
    let f = |name: &str| dir.join(name).to_str().unwrap().to_string();
    let steps: Vec<Vec<String>> = vec![
        vec!["simulate".into(), "--out".into(), f("sim")],
        vec![
            "neuroscore".into(),
            f("sim/target.epb"),
            f("sim/standard.epb"),
            "--out".into(),
            f("scores.json"),
            "--p300-out".into(),
            f("p300.csv"),
        ],
        vec![
            "train".into(),
            "--features".into(),
            f("sim/features.csv"),
            "--p300".into(),
            f("p300.csv"),
            "--out".into(),
            f("model.snm"),
            "--losses".into(),
            f("losses.csv"),
        ],
        vec!["predict".into(), "--model".into(), f("model.snm"), "--features".into(), f("sim/features.csv"), "--out".into(), f("pred.json")],
        vec![
            "evaluate".into(),
            "--predicted".into(),
            f("pred.json"),
            "--truth".into(),
            f("scores.json"),
            "--report".into(),
            f("report"),
            "--out".into(),
            f("eval.json"),
        ],
        vec!["rank".into(), "--model".into(), f("model.snm"), "--features".into(), f("sim/features.csv"), "--out".into(), f("ranking")],
        vec!["converge".into(), "--p300".into(), f("p300.csv"), "--out".into(), f("convergence")],
        vec![
            "metrics".into(),
            "--real".into(),
            f("sim/features.csv"),
            "--generated".into(),
            f("sim/features.csv"),
            "--out".into(),
            f("metrics.json"),
        ],
        vec![
            "ablate".into(),
            "--features".into(),
            f("sim/features.csv"),
            "--target".into(),
            f("sim/target.epb"),
            "--standard".into(),
            f("sim/standard.epb"),
            "--out".into(),
            f("ablation.json"),
        ],
    ];
    for step in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_neuroscore"))
            .env("NEUROSCORE_THREADS", threads)
            .arg("--config")
            .arg(&config)
            .args(&step)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("`{}` failed: {}", step[0], String::from_utf8_lossy(&out.stderr).trim()));
        }
    }
    Ok(())
}

fn hashes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let digest = Sha256::digest(fs::read(&path).unwrap()).to_vec();
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), digest);
            }
        }
    }
    out
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_pipeline(&a, "1")?;
    run_pipeline(&b, "2")?;
    let (ha, hb) = (hashes(&a), hashes(&b));
    let differing: Vec<String> = ha
        .iter()
        .filter(|(k, v)| hb.get(*k) != Some(v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    ensure(
        differing.is_empty() && ha.len() == hb.len() && ha.contains_key(Path::new("model.snm")),
        if differing.is_empty() {
            format!("{} output files bit-identical across two runs", ha.len())
        } else {
            format!("files differ: {}", differing.join(", "))
        },
    )
}

fn epoch_set() -> impl Strategy<Value = EegEpochSet> {
    (1usize..4, 1usize..8, 1usize..32, any::<bool>(), any::<bool>()).prop_flat_map(|(n, c, t, target, labelled)| {
        (
            prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), n * c * t),
            1.0f32..4096.0,
            -2.0f32..2.0,
            prop::collection::vec("[A-Za-z0-9 ,\"é_-]{1,8}", c),
            prop::collection::vec("[A-Za-z0-9 ,\"é_-]{1,8}", n),
        )
            .prop_filter_map("valid bundle", move |(data, fs, t0, channels, cats)| {
                EegEpochSet::new(
                    data.into_iter().map(f64::from).collect(),
                    n,
                    c,
                    t,
                    f64::from(fs),
                    f64::from(t0),
                    channels,
                    if target { Condition::Target } else { Condition::Standard },
                    labelled.then_some(cats),
                )
                .ok()
            })
    })
}

fn surrogate() -> impl Strategy<Value = SurrogateModel<f32>> {
    (
        1usize..16,
        prop::collection::vec(1usize..12, 1..4),
        prop::collection::vec(1usize..6, 0..3),
        prop::option::of((any::<u64>(), 1usize..20)),
        any::<u64>(),
    )
        .prop_map(|(input, t1, mut t2, projection, seed)| {
            t2.push(1);
            let config = SurrogateConfig {
                embedder: projection.map_or(Embedder::External, |(s, raw)| Embedder::RandomProjection { seed: s, raw_dim: raw }),
                input_dim: input,
                p300_dim: *t1.last().unwrap(),
                theta1_layers: t1,
                theta2_layers: t2,
                ..SurrogateConfig::shallow(input)
            };
            SurrogateModel::new(config, seed).unwrap()
        })
}

fn format_round_trip() -> Check {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (bundle, blob) = (tmp.path().join("x.epb"), tmp.path().join("x.snm"));
    let mut runner = runner(1000);
    runner
        .run(&epoch_set(), |e| {
            epb::write(&bundle, &e).unwrap();
            prop_assert_eq!(epb::read(&bundle).unwrap(), e);
            Ok(())
        })
        .map_err(|e| format!("EPB1: {e}"))?;
    runner
        .run(&surrogate(), |m| {
            snm::write(&blob, &m).unwrap();
            prop_assert_eq!(snm::read(&blob).unwrap(), m);
            Ok(())
        })
        .map_err(|e| format!("SNM1: {e}"))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, format!("1000 EPB1 and 1000 SNM1 instances identical after write and read, {secs:.2} s"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("beamformer oracle equivalence", beamformer_oracle),
        ("unit-gain constraint", constraint_invariant),
        ("simulator round trip", simulator_round_trip),
        ("metric closed forms", metric_closed_forms),
        ("gradient correctness", gradient_correctness),
        ("ablation ordering", ablation_ordering),
        ("convergence behaviour", convergence_behavior),
        ("correlation machinery", correlation_machinery),
        ("pipeline determinism", determinism),
        ("format round trip", format_round_trip),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {:>2} {name}: {detail}", i + 1);
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
