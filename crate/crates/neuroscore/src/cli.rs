//! Command-line front end.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use neuroscore_core::analysis::{
    convergence_curve, default_sizes, pearson, CategoryScoreRow, CategoryScoreTable, Correlation, TTest,
};
use neuroscore_core::beamformer::{neuroscore, reconstruct_source, source_segments, NeuroscoreResult};
use neuroscore_core::eeg::{preprocess, EegEpochSet, PreprocessConfig};
use neuroscore_core::linalg::Matrix;
use neuroscore_core::metrics::{
    fid, gaussian_stats, inception_score, median_heuristic_bandwidth, mmd2, FeatureSet, KernelSpec, MmdEstimator,
    ProbSet, Source,
};
use neuroscore_core::net::{
    evaluation_error, predict_synthetic_neuroscore, rank_images, train, AblationConfig, Embedder, SurrogateConfig,
    SurrogateModel, SyntheticNeuroscore, TrainConfig, TrainMode, TrialDataset, P300_SIGNAL_WINDOW,
};
use neuroscore_core::simulator::simulate;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::csv_io::{self, P300Table};
use crate::error::{Error, Result};
use crate::report::{self, Plot};
use crate::{epb, parallel, snm};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  invalid configuration, arguments or mismatched dimensions
  3  unreadable, unwritable or malformed file
  4  numerical failure (singular covariance, non-finite values)

Environment:
  NEUROSCORE_THREADS  maximum worker threads (default: all cores)";

#[derive(Debug, Parser)]
#[command(name = "neuroscore", version, about = "EEG-derived scoring of generated images", after_help = EXIT_CODES)]
pub struct Cli {
    /// Top-level seed; every seed the configuration leaves out is derived from it.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,

    /// JSON run configuration; defaults are used for everything it omits.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate target and standard epochs with planted P300 amplitudes.
    #[command(after_help = EXIT_CODES)]
    Simulate {
        /// Directory for target.epb, standard.epb, features.csv and truth.json.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },

    /// Beamform target epochs against standards and score each category.
    #[command(after_help = EXIT_CODES)]
    Neuroscore {
        /// Target-condition epoch bundle.
        target: PathBuf,
        /// Standard-condition epoch bundle.
        standard: PathBuf,
        #[command(flatten)]
        beam: BeamArgs,
        /// Also write the result JSON here.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Write single-trial amplitudes and source waveforms as CSV.
        #[arg(long, value_name = "FILE")]
        p300_out: Option<PathBuf>,
    },

    /// Train the surrogate network on stimulus features and EEG responses.
    #[command(after_help = EXIT_CODES)]
    Train {
        /// Stimulus feature CSV, one row per target trial.
        #[arg(long, value_name = "FILE")]
        features: PathBuf,
        #[command(flatten)]
        eeg: EegArgs,
        /// Training mode.
        #[arg(long, value_enum, default_value_t = ModeArg::WithEeg)]
        mode: ModeArg,
        /// Output model blob (SNM1).
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Output per-epoch loss CSV.
        #[arg(long, value_name = "FILE")]
        losses: PathBuf,
    },

    /// Predict the synthetic Neuroscore of every category in a feature file.
    #[command(after_help = EXIT_CODES)]
    Predict {
        /// Trained model blob (SNM1).
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// Feature CSV with a category column.
        #[arg(long, value_name = "FILE")]
        features: PathBuf,
        /// Also write the prediction JSON here.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },

    /// Inception score, MMD² and FID of a generated set.
    #[command(after_help = EXIT_CODES)]
    Metrics {
        /// Real-image feature CSV.
        #[arg(long, value_name = "FILE", requires = "generated")]
        real: Option<PathBuf>,
        /// Generated-image feature CSV.
        #[arg(long, value_name = "FILE", requires = "real")]
        generated: Option<PathBuf>,
        /// Classifier probabilities of the generated images, one row per image.
        #[arg(long, value_name = "FILE")]
        probs: Option<PathBuf>,
        /// MMD estimator (overrides the configuration).
        #[arg(long, value_enum)]
        estimator: Option<EstimatorArg>,
        /// Gaussian kernel bandwidth (overrides the configuration).
        #[arg(long, value_name = "F64")]
        bandwidth: Option<f64>,
        /// Also write the metrics JSON here.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },

    /// Neuroscore convergence as trials are subsampled, per category.
    #[command(after_help = EXIT_CODES)]
    Converge {
        #[command(flatten)]
        eeg: EegArgs,
        /// Comma-separated subsample sizes (default 2,5,10,20,40,80,160,N).
        #[arg(long, value_delimiter = ',', value_name = "N,...")]
        sizes: Option<Vec<usize>>,
        /// Subsamples per size.
        #[arg(long, value_name = "N")]
        repeats: Option<usize>,
        /// Output directory for scores.csv and one CSV and SVG per category.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },

    /// Rank images by predicted P300 amplitude.
    #[command(after_help = EXIT_CODES)]
    Rank {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_name = "FILE")]
        features: PathBuf,
        /// Output directory for ranking.csv and ranking.svg.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },

    /// Compare predicted synthetic Neuroscores with EEG or planted scores.
    #[command(after_help = EXIT_CODES)]
    Evaluate {
        /// Output of `predict`.
        #[arg(long, value_name = "FILE")]
        predicted: PathBuf,
        /// Output of `neuroscore`, or the truth.json written by `simulate`.
        #[arg(long, value_name = "FILE")]
        truth: PathBuf,
        /// Also write scores.csv and a score scatter plot into this directory.
        #[arg(long, value_name = "DIR")]
        report: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },

    /// Repeated train/test comparison of training modes.
    #[command(after_help = EXIT_CODES)]
    Ablate {
        #[arg(long, value_name = "FILE")]
        features: PathBuf,
        #[command(flatten)]
        eeg: EegArgs,
        /// Number of shuffles (overrides the configuration).
        #[arg(long, value_name = "N")]
        shuffles: Option<usize>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

/// Beamformer settings that override the configuration.
#[derive(Debug, Clone, Default, Args)]
pub struct BeamArgs {
    /// Ridge shrinkage relative to trace(Σ)/C.
    #[arg(long, value_name = "F64")]
    pub lambda: Option<f64>,
    /// Start of the latency search window, seconds.
    #[arg(long, value_name = "SECONDS")]
    pub search_lo: Option<f64>,
    /// End of the latency search window, seconds.
    #[arg(long, value_name = "SECONDS")]
    pub search_hi: Option<f64>,
    /// Run the preprocessing chain (configured, or defaults for the bundle's sample rate) first.
    #[arg(long)]
    pub preprocess: bool,
}

/// Single-trial EEG responses: a P300 CSV, or bundles to beamform.
#[derive(Debug, Clone, Default, Args)]
pub struct EegArgs {
    /// P300 CSV written by `neuroscore --p300-out`.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["target", "standard"])]
    pub p300: Option<PathBuf>,
    /// Target-condition epoch bundle.
    #[arg(long, value_name = "FILE", requires = "standard")]
    pub target: Option<PathBuf>,
    /// Standard-condition epoch bundle.
    #[arg(long, value_name = "FILE", requires = "target")]
    pub standard: Option<PathBuf>,
    #[command(flatten)]
    pub beam: BeamArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    WithEeg,
    WithoutEeg,
    RandomEeg,
}

impl From<ModeArg> for TrainMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::WithEeg => TrainMode::WithEeg,
            ModeArg::WithoutEeg => TrainMode::WithoutEeg,
            ModeArg::RandomEeg => TrainMode::RandomEeg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Biased,
    Unbiased,
}

impl From<EstimatorArg> for MmdEstimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Biased => MmdEstimator::Biased,
            EstimatorArg::Unbiased => MmdEstimator::Unbiased,
        }
    }
}

/// Parses the process arguments, runs the command and maps failures to the
/// documented exit codes.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("neuroscore: error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::resolve(cli.config.as_deref(), cli.seed)?;
    match &cli.command {
        Command::Simulate { out } => cmd_simulate(&cfg, out),
        Command::Neuroscore { target, standard, beam, out, p300_out } => {
            let scored = score_bundles(&cfg, target, standard, beam)?;
            let text = to_json(&scored.result);
            if let Some(path) = p300_out {
                csv_io::write_p300(path, &scored.p300_table(cfg.surrogate.p300_dim)?)?;
            }
            emit_json(&text, out.as_deref())
        }
        Command::Train { features, eeg, mode, out, losses } => cmd_train(&cfg, features, eeg, (*mode).into(), out, losses),
        Command::Predict { model, features, out } => {
            let model = snm::read(model)?;
            let table = csv_io::read_features(features)?;
            let categories = table
                .categories
                .ok_or_else(|| Error::Config(format!("{}: no category column", features.display())))?;
            let pred = predict_synthetic_neuroscore(&model, &table.features, &categories, &[])?;
            emit_json(&to_json(&pred), out.as_deref())
        }
        Command::Metrics { real, generated, probs, estimator, bandwidth, out } => {
            let estimator = estimator.map_or(cfg.metrics.mmd_estimator, Into::into);
            let bandwidth = bandwidth.or(cfg.metrics.mmd_bandwidth);
            let report = cmd_metrics(real.as_deref(), generated.as_deref(), probs.as_deref(), estimator, bandwidth)?;
            emit_json(&to_json(&report), out.as_deref())
        }
        Command::Converge { eeg, sizes, repeats, out } => cmd_converge(&cfg, eeg, sizes.as_deref(), *repeats, out),
        Command::Rank { model, features, out } => cmd_rank(model, features, out),
        Command::Evaluate { predicted, truth, report, out } => {
            let value = cmd_evaluate(predicted, truth, report.as_deref())?;
            emit_json(&to_json(&value), out.as_deref())
        }
        Command::Ablate { features, eeg, shuffles, out } => {
            let value = cmd_ablate(&cfg, features, eeg, *shuffles)?;
            emit_json(&to_json(&value), out.as_deref())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("result serialises");
    s.push('\n');
    s
}

fn emit_json(text: &str, out: Option<&Path>) -> Result<()> {
    if let Some(path) = out {
        fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    print!("{text}");
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let sim = simulate(&cfg.simulation)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    epb::write(&out.join("target.epb"), &sim.target)?;
    epb::write(&out.join("standard.epb"), &sim.standard)?;
    let categories = sim.target.category_labels().expect("simulated targets are labelled");
    csv_io::write_features(&out.join("features.csv"), &sim.image_features, Some(categories))?;
    let means: BTreeMap<&str, f64> =
        cfg.simulation.categories.iter().map(|c| (c.label.as_str(), c.amplitude_mean)).collect();
    let truth = json!({
        "planted_amplitudes": sim.planted_amplitudes,
        "categories": categories,
        "category_means": means,
        "spatial_pattern": sim.spatial_pattern,
        "config": cfg,
    });
    write_file(&out.join("truth.json"), &to_json(&truth))
}

/// A scored target bundle and the trials that survived preprocessing.
struct Scored {
    result: NeuroscoreResult,
    target: EegEpochSet,
    kept: Vec<usize>,
}

impl Scored {
    fn p300_table(&self, p300_dim: usize) -> Result<P300Table> {
        let sources = reconstruct_source(&self.result.filter.w, &self.target)?;
        let signals = source_segments(&sources, &self.target, P300_SIGNAL_WINDOW, p300_dim)?;
        Ok(P300Table {
            trials: self.kept.clone(),
            amplitudes: self.result.amplitudes.clone(),
            categories: self.result.categories.clone(),
            signals: Some(signals),
        })
    }
}

fn score_bundles(cfg: &RunConfig, target: &Path, standard: &Path, beam: &BeamArgs) -> Result<Scored> {
    let (mut t, mut s) = (epb::read(target)?, epb::read(standard)?);
    if t.n_channels() != s.n_channels() {
        return Err(Error::Config(format!(
            "dimension mismatch: target has {} channels, standard has {}",
            t.n_channels(),
            s.n_channels()
        )));
    }
    if t.sample_rate() != s.sample_rate() {
        return Err(Error::Config(format!(
            "target sampled at {} Hz, standard at {} Hz",
            t.sample_rate(),
            s.sample_rate()
        )));
    }
    let mut kept: Vec<usize> = (0..t.n_trials()).collect();
    if beam.preprocess {
        let pre = cfg.preprocess.clone().unwrap_or_else(|| PreprocessConfig::for_sample_rate(t.sample_rate()));
        let pt = preprocess(&t, &pre)?;
        kept.retain(|i| pt.rejected.binary_search(i).is_err());
        t = pt.epochs;
        s = preprocess(&s, &pre)?.epochs;
    }
    let mut opts = cfg.beamformer.clone();
    if let Some(l) = beam.lambda {
        opts.lambda = l;
    }
    if let Some(lo) = beam.search_lo {
        opts.search.0 = lo;
    }
    if let Some(hi) = beam.search_hi {
        opts.search.1 = hi;
    }
    let result = neuroscore(&t, &s, &opts, &[])?;
    Ok(Scored { result, target: t, kept })
}

fn p300_from(cfg: &RunConfig, eeg: &EegArgs) -> Result<P300Table> {
    match (&eeg.p300, &eeg.target, &eeg.standard) {
        (Some(p), None, None) => csv_io::read_p300(p),
        (None, Some(t), Some(s)) => score_bundles(cfg, t, s, &eeg.beam)?.p300_table(cfg.surrogate.p300_dim),
        _ => Err(Error::Config("give either --p300, or both --target and --standard".into())),
    }
}

/// Pairs feature rows with the P300 table by trial index.
fn dataset(features: &Path, p300: P300Table) -> Result<TrialDataset> {
    let table = csv_io::read_features(features)?;
    let n = table.features.rows();
    if let Some(&bad) = p300.trials.iter().find(|&&t| t >= n) {
        return Err(Error::Config(format!("P300 trial {bad} has no row in {} ({n} rows)", features.display())));
    }
    if let Some(cats) = &table.categories {
        if let Some(i) = p300.trials.iter().zip(&p300.categories).position(|(&t, c)| &cats[t] != c) {
            return Err(Error::Config(format!(
                "trial {} is {:?} in the EEG responses but {:?} in {}",
                p300.trials[i],
                p300.categories[i],
                cats[p300.trials[i]],
                features.display()
            )));
        }
    }
    let d = table.features.cols();
    let mut images = Vec::with_capacity(p300.trials.len() * d);
    for &t in &p300.trials {
        images.extend_from_slice(table.features.row(t));
    }
    let images = Matrix::from_vec(p300.trials.len(), d, images)?;
    Ok(TrialDataset::new(images, p300.signals, p300.amplitudes, p300.categories)?)
}

/// The configured network with its input width matched to `width`.
fn surrogate_for(cfg: &RunConfig, width: usize) -> Result<SurrogateConfig> {
    let mut s = cfg.surrogate.clone();
    match s.embedder {
        Embedder::Identity | Embedder::External => s.input_dim = width,
        Embedder::RandomProjection { raw_dim, .. } if raw_dim != width => {
            return Err(Error::Config(format!(
                "random projection expects {raw_dim} features, the feature file has {width}"
            )))
        }
        Embedder::RandomProjection { .. } => {}
    }
    s.validate()?;
    Ok(s)
}

fn check_signals(data: &TrialDataset, surrogate: &SurrogateConfig, mode: TrainMode) -> Result<()> {
    if mode == TrainMode::WithoutEeg {
        return Ok(());
    }
    match data.p300_signals() {
        None => Err(Error::Config(format!(
            "mode {} needs P300 waveforms (s0, s1, ... columns)",
            mode.name()
        ))),
        Some(s) if s.cols() != surrogate.p300_dim => Err(Error::Config(format!(
            "dimension mismatch: P300 waveforms have {} points, the network predicts {}",
            s.cols(),
            surrogate.p300_dim
        ))),
        Some(_) => Ok(()),
    }
}

fn cmd_train(cfg: &RunConfig, features: &Path, eeg: &EegArgs, mode: TrainMode, out: &Path, losses: &Path) -> Result<()> {
    let mut p300 = p300_from(cfg, eeg)?;
    if mode == TrainMode::WithoutEeg {
        p300.signals = None;
    }
    let data = dataset(features, p300)?;
    let surrogate = surrogate_for(cfg, data.images().cols())?;
    check_signals(&data, &surrogate, mode)?;
    let mut model = SurrogateModel::<f32>::new(surrogate, cfg.init_seed)?;
    let tc = TrainConfig { mode, ..cfg.training.clone() };
    let history = train(&mut model, &data, &tc)?;
    snm::write(out, &model)?;
    csv_io::write_losses(losses, &history)
}

#[derive(Debug, Serialize)]
struct MetricsReport {
    inception_score: Option<f64>,
    inverse_inception_score: Option<f64>,
    mmd2: Option<f64>,
    mmd_estimator: Option<MmdEstimator>,
    mmd_bandwidth: Option<f64>,
    fid: Option<f64>,
}

fn cmd_metrics(
    real: Option<&Path>,
    generated: Option<&Path>,
    probs: Option<&Path>,
    estimator: MmdEstimator,
    bandwidth: Option<f64>,
) -> Result<MetricsReport> {
    let mut report = MetricsReport {
        inception_score: None,
        inverse_inception_score: None,
        mmd2: None,
        mmd_estimator: None,
        mmd_bandwidth: None,
        fid: None,
    };
    if real.is_none() && probs.is_none() {
        return Err(Error::Config("give --real and --generated, --probs, or both".into()));
    }
    if let Some(p) = probs {
        let set = ProbSet::new(csv_io::read_features(p)?.features)?;
        let is = inception_score(&set);
        report.inception_score = Some(is);
        report.inverse_inception_score = Some(1.0 / is);
    }
    if let (Some(r), Some(g)) = (real, generated) {
        let xr = FeatureSet::new(csv_io::read_features(r)?.features, Source::Real)?;
        let xg = FeatureSet::new(csv_io::read_features(g)?.features, Source::Generated)?;
        let bw = bandwidth.unwrap_or_else(|| median_heuristic_bandwidth(&xr, &xg));
        report.mmd2 = Some(mmd2(&xr, &xg, &KernelSpec::gaussian(bw)?, estimator)?);
        report.mmd_estimator = Some(estimator);
        report.mmd_bandwidth = Some(bw);
        report.fid = Some(fid(&gaussian_stats(&xr)?, &gaussian_stats(&xg)?)?);
    }
    Ok(report)
}

/// A category label made safe for use in a file name.
fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn by_category(amplitudes: &[f64], categories: &[String]) -> BTreeMap<String, Vec<f64>> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (a, c) in amplitudes.iter().zip(categories) {
        groups.entry(c.clone()).or_default().push(*a);
    }
    groups
}

fn cmd_converge(cfg: &RunConfig, eeg: &EegArgs, sizes: Option<&[usize]>, repeats: Option<usize>, out: &Path) -> Result<()> {
    let p300 = p300_from(cfg, eeg)?;
    let repeats = repeats.unwrap_or(cfg.convergence.repeats);
    let mut rows = Vec::new();
    let mut plots = Vec::new();
    for (category, amps) in by_category(&p300.amplitudes, &p300.categories) {
        let grid = match sizes.map(<[usize]>::to_vec).or_else(|| cfg.convergence.sizes.clone()) {
            Some(g) => g,
            None => default_sizes(amps.len()),
        };
        let curve = convergence_curve(&amps, &grid, repeats, cfg.convergence.seed)?;
        rows.push(CategoryScoreRow::new(category.clone(), amps.iter().sum::<f64>() / amps.len() as f64));
        plots.push(Plot::Convergence { name: format!("convergence_{}", file_stem(&category)), curve });
    }
    let table = CategoryScoreTable::new(rows)?;
    report::emit_report(Some(&table), &plots, out)?;
    Ok(())
}

fn cmd_rank(model: &Path, features: &Path, out: &Path) -> Result<()> {
    let model = snm::read(model)?;
    let table = csv_io::read_features(features)?;
    let ranking = rank_images(&model, &table.features)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    csv_io::write_ranking(&out.join("ranking.csv"), &ranking, table.categories.as_deref())?;
    let points: Vec<(String, f64, f64)> =
        ranking.iter().enumerate().map(|(r, &(_, s))| (String::new(), (r + 1) as f64, s)).collect();
    write_file(&out.join("ranking.svg"), &report::scatter_svg("rank", "predicted amplitude", &points))
}

/// Per-category reference scores from a `neuroscore` result or a
/// simulation manifest.
fn truth_scores(path: &Path) -> Result<BTreeMap<String, f64>> {
    let value = read_json(path)?;
    if let Some(per) = value.get("per_category") {
        let per: BTreeMap<String, neuroscore_core::beamformer::CategoryScore> =
            serde_json::from_value(per.clone()).map_err(|e| Error::format(path, e.to_string()))?;
        Ok(per.into_iter().map(|(k, v)| (k, v.neuroscore)).collect())
    } else if let Some(means) = value.get("category_means") {
        serde_json::from_value(means.clone()).map_err(|e| Error::format(path, e.to_string()))
    } else {
        Err(Error::format(path, "expected a per_category or category_means object"))
    }
}

#[derive(Debug, Serialize)]
struct Evaluation {
    evaluation_error: f64,
    categories: usize,
    /// Correlation of predicted and reference scores; absent below three
    /// categories or for constant scores.
    pearson: Option<Correlation>,
}

fn cmd_evaluate(predicted: &Path, truth: &Path, report_dir: Option<&Path>) -> Result<Evaluation> {
    let pred: SyntheticNeuroscore =
        serde_json::from_value(read_json(predicted)?).map_err(|e| Error::format(predicted, e.to_string()))?;
    let truth = truth_scores(truth)?;
    let err = evaluation_error(&pred.scores, &truth)?;
    let (p, t): (Vec<f64>, Vec<f64>) = pred.scores.values().copied().zip(truth.values().copied()).unzip();
    let corr = pearson(&t, &p).ok();
    if let Some(dir) = report_dir {
        let rows = truth
            .iter()
            .map(|(c, &n)| CategoryScoreRow { synthetic_neuroscore: Some(pred.scores[c]), ..CategoryScoreRow::new(c.clone(), n) })
            .collect();
        let plot = Plot::Scatter {
            name: "synthetic_vs_neuroscore".into(),
            x_label: "neuroscore".into(),
            y_label: "synthetic_neuroscore".into(),
            points: truth.iter().map(|(c, &n)| (c.clone(), n, pred.scores[c])).collect(),
        };
        report::emit_report(Some(&CategoryScoreTable::new(rows)?), &[plot], dir)?;
    }
    Ok(Evaluation { evaluation_error: err, categories: truth.len(), pearson: corr })
}

#[derive(Debug, Serialize)]
struct AblationReport {
    shuffles: Vec<BTreeMap<TrainMode, f64>>,
    mean_error: BTreeMap<TrainMode, f64>,
    std_error: BTreeMap<TrainMode, f64>,
    /// One-sided paired test that with-EEG training has the lower error.
    with_eeg_vs_random_eeg: Option<TTest>,
}

fn cmd_ablate(cfg: &RunConfig, features: &Path, eeg: &EegArgs, shuffles: Option<usize>) -> Result<AblationReport> {
    let data = dataset(features, p300_from(cfg, eeg)?)?;
    let model = surrogate_for(cfg, data.images().cols())?;
    let modes = cfg.ablation.modes.clone();
    for &m in &modes {
        check_signals(&data, &model, m)?;
    }
    let ablation = AblationConfig {
        shuffles: shuffles.unwrap_or(cfg.ablation.shuffles),
        modes: modes.clone(),
        seed: cfg.ablation.seed,
        train: cfg.training.clone(),
        model,
    };
    if ablation.shuffles < 2 {
        return Err(Error::Config("an ablation needs at least 2 shuffles".into()));
    }
    let result = parallel::run_ablation::<f32>(&data, &ablation)?;
    let mut mean_error = BTreeMap::new();
    let mut std_error = BTreeMap::new();
    for &m in &modes {
        let (mean, std) = neuroscore_core::linalg::mean_std(&result.errors(m));
        mean_error.insert(m, mean);
        std_error.insert(m, std);
    }
    let comparison = if modes.contains(&TrainMode::WithEeg) && modes.contains(&TrainMode::RandomEeg) {
        Some(result.compare(TrainMode::WithEeg, TrainMode::RandomEeg)?)
    } else {
        None
    };
    Ok(AblationReport {
        shuffles: result.outcomes.into_iter().map(|o| o.errors).collect(),
        mean_error,
        std_error,
        with_eeg_vs_random_eeg: comparison,
    })
}
