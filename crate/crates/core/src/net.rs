//! Surrogate network that predicts the P300 from stimulus features.
//!
//! A frozen embedder maps a stimulus to `input_dim` features. The θ₁ stack of
//! fully connected layers maps them to a `p300_dim` source waveform and the
//! θ₂ stack maps that waveform to a scalar amplitude. Hidden layers use
//! rectifiers; both heads are linear.
//!
//! Two-stage training fits θ₁ against single-trial source waveforms
//! (loss₁), then freezes it and fits θ₂ against single-trial amplitudes
//! (loss₂). The without-EEG baseline trains both stacks jointly on loss₂.
//! All optimisation uses Adam on shuffled mini-batches.

use alloc::borrow::Cow;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis::{paired_t_test, Alternative, TTest};
use crate::beamformer::{group_means, reconstruct_source, source_segments, NeuroscoreResult};
use crate::eeg::EegEpochSet;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::simulator::sub_rng;

mod stream {
    pub const INIT: u64 = 1;
    pub const PROJECTION: u64 = 2;
    pub const STAGE1: u64 = 3;
    pub const STAGE2: u64 = 4;
    pub const END_TO_END: u64 = 5;
    pub const PERMUTATION: u64 = 6;
    pub const GRAD_CHECK: u64 = 7;
    pub const SHUFFLE_BASE: u64 = 1 << 32;
}

/// Source window used for the stage-1 targets, in seconds.
pub const P300_SIGNAL_WINDOW: (f64, f64) = (0.4, 0.6);

/// Rows per chunk when predicting large image sets.
const PREDICT_CHUNK: usize = 512;

/// Floor of the denominator in the gradient-check error.
const GRAD_CHECK_FLOOR: f64 = 1.0;

/// Floating-point type the network computes in.
pub trait Real: Float + Default + Debug + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    /// `c ← a·b + beta·c` with `c` row-major.
    fn gemm(a: View<'_, Self>, b: View<'_, Self>, beta: Self, c: &mut [Self]);
}

/// A strided read-only matrix view.
#[derive(Debug, Clone, Copy)]
pub struct View<'a, T> {
    data: &'a [T],
    rows: usize,
    cols: usize,
    row_stride: usize,
    col_stride: usize,
}

impl<'a, T> View<'a, T> {
    /// `data` as a row-major `rows × cols` matrix.
    pub fn row_major(data: &'a [T], rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols, "view size");
        View { data, rows, cols, row_stride: cols, col_stride: 1 }
    }

    /// The transpose of row-major `rows × cols` data.
    pub fn transposed(data: &'a [T], rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols, "view size");
        View { data, rows: cols, cols: rows, row_stride: 1, col_stride: cols }
    }

    fn in_bounds(&self) -> bool {
        self.rows == 0
            || self.cols == 0
            || (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride < self.data.len()
    }
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            fn from_f64(v: f64) -> Self {
                v as $t
            }

            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(a: View<'_, Self>, b: View<'_, Self>, beta: Self, c: &mut [Self]) {
                let (m, k, n) = (a.rows, a.cols, b.cols);
                assert_eq!(b.rows, k, "gemm inner dimension");
                assert_eq!(c.len(), m * n, "gemm output size");
                assert!(a.in_bounds() && b.in_bounds(), "gemm view out of bounds");
                if m == 0 || n == 0 {
                    return;
                }
                if k == 0 {
                    c.iter_mut().for_each(|v| *v *= beta);
                    return;
                }
                // SAFETY: every index the kernel touches is inside the views
                // (checked above) or inside `c`, which is exactly m × n.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.data.as_ptr(),
                        a.row_stride as isize,
                        a.col_stride as isize,
                        b.data.as_ptr(),
                        b.row_stride as isize,
                        b.col_stride as isize,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// How raw stimulus vectors become network inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Embedder {
    /// Inputs are used as given.
    Identity,
    /// Fixed Gaussian projection from `raw_dim` inputs, regenerated from `seed`.
    RandomProjection { seed: u64, raw_dim: usize },
    /// Inputs were embedded elsewhere and arrive as a feature file.
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    #[default]
    Relu,
}

/// Network geometry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub embedder: Embedder,
    /// Width entering θ₁.
    pub input_dim: usize,
    /// θ₁ layer widths; the last equals `p300_dim`.
    pub theta1_layers: Vec<usize>,
    pub p300_dim: usize,
    /// θ₂ layer widths; the last is 1.
    pub theta2_layers: Vec<usize>,
    pub nonlinearity: Nonlinearity,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig::shallow(1024)
    }
}

impl SurrogateConfig {
    /// The shallow head: `input_dim → 512 → 50 → 1`.
    pub fn shallow(input_dim: usize) -> Self {
        SurrogateConfig {
            embedder: Embedder::Identity,
            input_dim,
            theta1_layers: vec![512, 50],
            p300_dim: 50,
            theta2_layers: vec![1],
            nonlinearity: Nonlinearity::Relu,
        }
    }

    /// Length of the vectors fed to [`SurrogateModel::forward`].
    pub fn raw_input_dim(&self) -> usize {
        match self.embedder {
            Embedder::RandomProjection { raw_dim, .. } => raw_dim,
            Embedder::Identity | Embedder::External => self.input_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.p300_dim == 0 {
            return Err(Error::InvalidConfig("input_dim and p300_dim must be ≥ 1".into()));
        }
        if let Embedder::RandomProjection { raw_dim: 0, .. } = self.embedder {
            return Err(Error::InvalidConfig("random projection raw_dim must be ≥ 1".into()));
        }
        for (name, layers) in [("theta1_layers", &self.theta1_layers), ("theta2_layers", &self.theta2_layers)] {
            if layers.is_empty() || layers.contains(&0) {
                return Err(Error::InvalidConfig(format!("{name} must be non-empty with widths ≥ 1")));
            }
        }
        if self.theta1_layers.last() != Some(&self.p300_dim) {
            return Err(Error::InvalidConfig(format!(
                "theta1_layers must end at p300_dim = {}, found {:?}",
                self.p300_dim, self.theta1_layers
            )));
        }
        if self.theta2_layers.last() != Some(&1) {
            return Err(Error::InvalidConfig(format!(
                "theta2_layers must end at width 1, found {:?}",
                self.theta2_layers
            )));
        }
        Ok(())
    }

    fn theta1_shapes(&self) -> Vec<(usize, usize)> {
        shapes(self.input_dim, &self.theta1_layers)
    }

    fn theta2_shapes(&self) -> Vec<(usize, usize)> {
        shapes(self.p300_dim, &self.theta2_layers)
    }
}

fn shapes(input: usize, widths: &[usize]) -> Vec<(usize, usize)> {
    let mut prev = input;
    widths
        .iter()
        .map(|&w| {
            let s = (prev, w);
            prev = w;
            s
        })
        .collect()
}

/// A fully connected layer storing weights `inputs × outputs` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    inputs: usize,
    outputs: usize,
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense { inputs, outputs, weights: vec![T::zero(); inputs * outputs], bias: vec![T::zero(); outputs] }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    /// Weight `(i, j)` connects input `i` to output `j`.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn forward(&self, x: &[T], n: usize, relu: bool) -> Vec<T> {
        let mut out = Vec::with_capacity(n * self.outputs);
        for _ in 0..n {
            out.extend_from_slice(&self.bias);
        }
        T::gemm(
            View::row_major(x, n, self.inputs),
            View::row_major(&self.weights, self.inputs, self.outputs),
            T::one(),
            &mut out,
        );
        if relu {
            out.iter_mut().for_each(|v| {
                if !(*v > T::zero()) {
                    *v = T::zero();
                }
            });
        }
        out
    }
}

/// Gradient of one [`Dense`] layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Outputs of every layer of a stack for a batch.
fn stack_forward<T: Real>(layers: &[Dense<T>], x: &[T], n: usize) -> Vec<Vec<T>> {
    let mut outs: Vec<Vec<T>> = Vec::with_capacity(layers.len());
    for (l, layer) in layers.iter().enumerate() {
        let y = {
            let input = if l == 0 { x } else { &outs[l - 1] };
            layer.forward(input, n, l + 1 < layers.len())
        };
        outs.push(y);
    }
    outs
}

fn stack_output<T: Real>(layers: &[Dense<T>], x: &[T], n: usize) -> Vec<T> {
    stack_forward(layers, x, n).pop().unwrap_or_default()
}

/// Backpropagates `delta` (gradient at the stack output) through `layers`.
fn stack_backward<T: Real>(
    layers: &[Dense<T>],
    x: &[T],
    n: usize,
    outs: &[Vec<T>],
    mut delta: Vec<T>,
    input_grad: bool,
) -> (Vec<DenseGrad<T>>, Option<Vec<T>>) {
    let mut grads = Vec::with_capacity(layers.len());
    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let (i, o) = (layer.inputs, layer.outputs);
        if l + 1 < layers.len() {
            for (d, &y) in delta.iter_mut().zip(&outs[l]) {
                if !(y > T::zero()) {
                    *d = T::zero();
                }
            }
        }
        let input = if l == 0 { x } else { &outs[l - 1] };
        let mut gw = vec![T::zero(); i * o];
        T::gemm(View::transposed(input, n, i), View::row_major(&delta, n, o), T::zero(), &mut gw);
        let mut gb = vec![T::zero(); o];
        for row in delta.chunks_exact(o) {
            for (g, &d) in gb.iter_mut().zip(row) {
                *g = *g + d;
            }
        }
        if l > 0 || input_grad {
            let mut dx = vec![T::zero(); n * i];
            T::gemm(View::row_major(&delta, n, o), View::transposed(&layer.weights, i, o), T::zero(), &mut dx);
            delta = dx;
        }
        grads.push(DenseGrad { weights: gw, bias: gb });
    }
    grads.reverse();
    (grads, if input_grad { Some(delta) } else { None })
}

/// Mean over rows of the squared error, and its gradient w.r.t. `pred`.
fn squared_error<T: Real>(pred: &[T], target: &[T], n: usize) -> (f64, Vec<T>) {
    let scale = 2.0 / n as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = p.as_f64() - t.as_f64();
            loss += d * d;
            T::from_f64(scale * d)
        })
        .collect();
    (loss / n as f64, grad)
}

/// The surrogate: embedder plus the θ₁ and θ₂ stacks.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel<T = f32> {
    config: SurrogateConfig,
    init_seed: u64,
    theta1: Vec<Dense<T>>,
    theta2: Vec<Dense<T>>,
    projection: Option<Vec<T>>,
}

impl<T: Real> SurrogateModel<T> {
    /// Weights and biases drawn uniformly from `±1/√fan_in`.
    pub fn new(config: SurrogateConfig, init_seed: u64) -> Result<Self> {
        let mut model = SurrogateModel::zeroed(config)?;
        model.init_seed = init_seed;
        let mut rng = sub_rng(init_seed, stream::INIT);
        for layer in model.theta1.iter_mut().chain(model.theta2.iter_mut()) {
            let bound = 1.0 / libm::sqrt(layer.inputs as f64);
            for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *v = T::from_f64(rng.random_range(-bound..bound));
            }
        }
        Ok(model)
    }

    /// All parameters zero.
    pub fn zeroed(config: SurrogateConfig) -> Result<Self> {
        config.validate()?;
        let theta1 = config.theta1_shapes().into_iter().map(|(i, o)| Dense::zeros(i, o)).collect();
        let theta2 = config.theta2_shapes().into_iter().map(|(i, o)| Dense::zeros(i, o)).collect();
        let projection = match config.embedder {
            Embedder::RandomProjection { seed, raw_dim } => {
                let mut rng = sub_rng(seed, stream::PROJECTION);
                let s = 1.0 / libm::sqrt(raw_dim as f64);
                Some(
                    (0..raw_dim * config.input_dim)
                        .map(|_| {
                            let g: f64 = StandardNormal.sample(&mut rng);
                            T::from_f64(g * s)
                        })
                        .collect(),
                )
            }
            Embedder::Identity | Embedder::External => None,
        };
        Ok(SurrogateModel { config, init_seed: 0, theta1, theta2, projection })
    }

    /// Rebuilds a model from flattened parameter groups as returned by
    /// [`theta1_parameters`](Self::theta1_parameters) and
    /// [`theta2_parameters`](Self::theta2_parameters).
    pub fn from_parameters(config: SurrogateConfig, init_seed: u64, theta1: &[T], theta2: &[T]) -> Result<Self> {
        let mut model = SurrogateModel::zeroed(config)?;
        model.init_seed = init_seed;
        unflatten(&mut model.theta1, theta1, "theta1 parameters")?;
        unflatten(&mut model.theta2, theta2, "theta2 parameters")?;
        if !model.is_finite() {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(model)
    }

    pub fn config(&self) -> &SurrogateConfig {
        &self.config
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn theta1(&self) -> &[Dense<T>] {
        &self.theta1
    }

    pub fn theta2(&self) -> &[Dense<T>] {
        &self.theta2
    }

    pub fn theta1_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.theta1
    }

    pub fn theta2_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.theta2
    }

    /// θ₁ flattened layer by layer, weights before biases.
    pub fn theta1_parameters(&self) -> Vec<T> {
        flatten(&self.theta1)
    }

    /// θ₂ flattened layer by layer, weights before biases.
    pub fn theta2_parameters(&self) -> Vec<T> {
        flatten(&self.theta2)
    }

    pub fn parameter_count(&self) -> usize {
        self.theta1.iter().chain(&self.theta2).map(Dense::param_count).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.theta1
            .iter()
            .chain(&self.theta2)
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// The same model in another precision.
    pub fn cast<U: Real>(&self) -> SurrogateModel<U> {
        let conv = |layers: &[Dense<T>]| -> Vec<Dense<U>> {
            layers
                .iter()
                .map(|l| Dense {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    weights: l.weights.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                    bias: l.bias.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                })
                .collect()
        };
        SurrogateModel {
            config: self.config.clone(),
            init_seed: self.init_seed,
            theta1: conv(&self.theta1),
            theta2: conv(&self.theta2),
            projection: self.projection.as_ref().map(|p| p.iter().map(|v| U::from_f64(v.as_f64())).collect()),
        }
    }

    fn embed<'a>(&self, x: &'a [T], n: usize) -> Cow<'a, [T]> {
        match &self.projection {
            None => Cow::Borrowed(x),
            Some(r) => {
                let raw = self.config.raw_input_dim();
                let mut out = vec![T::zero(); n * self.config.input_dim];
                T::gemm(View::row_major(x, n, raw), View::row_major(r, raw, self.config.input_dim), T::zero(), &mut out);
                Cow::Owned(out)
            }
        }
    }

    fn embed_images(&self, images: &Matrix) -> Result<Vec<T>> {
        if images.cols() != self.config.raw_input_dim() {
            return Err(Error::dim("surrogate input width", self.config.raw_input_dim(), images.cols()));
        }
        let x: Vec<T> = images.as_slice().iter().map(|&v| T::from_f64(v)).collect();
        Ok(self.embed(&x, images.rows()).into_owned())
    }

    /// Predicted source waveform and amplitude for one stimulus.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let m = Matrix::from_vec(1, x.len(), x.to_vec())?;
        let (s, y) = self.forward_batch(&m)?;
        Ok((s.into_vec(), y[0]))
    }

    /// Row-wise [`forward`](Self::forward) over a batch of stimuli.
    pub fn forward_batch(&self, images: &Matrix) -> Result<(Matrix, Vec<f64>)> {
        let n = images.rows();
        let x = self.embed_images(images)?;
        let s = stack_output(&self.theta1, &x, n);
        let y = stack_output(&self.theta2, &s, n);
        let s = Matrix::from_vec(n, self.config.p300_dim, s.iter().map(|v| v.as_f64()).collect())?;
        Ok((s, y.iter().map(|v| v.as_f64()).collect()))
    }

    /// Predicted amplitude of every row of `images`.
    pub fn predict(&self, images: &Matrix) -> Result<Vec<f64>> {
        if images.cols() != self.config.raw_input_dim() {
            return Err(Error::dim("surrogate input width", self.config.raw_input_dim(), images.cols()));
        }
        let width = images.cols();
        let mut out = Vec::with_capacity(images.rows());
        for chunk in images.as_slice().chunks(PREDICT_CHUNK * width.max(1)) {
            let n = if width == 0 { 0 } else { chunk.len() / width };
            let x: Vec<T> = chunk.iter().map(|&v| T::from_f64(v)).collect();
            let x = self.embed(&x, n);
            let s = stack_output(&self.theta1, &x, n);
            out.extend(stack_output(&self.theta2, &s, n).iter().map(|v| v.as_f64()));
        }
        Ok(out)
    }
}

fn flatten<T: Real>(layers: &[Dense<T>]) -> Vec<T> {
    let mut out = Vec::with_capacity(layers.iter().map(Dense::param_count).sum());
    for l in layers {
        out.extend_from_slice(&l.weights);
        out.extend_from_slice(&l.bias);
    }
    out
}

fn unflatten<T: Real>(layers: &mut [Dense<T>], params: &[T], what: &'static str) -> Result<()> {
    let expected: usize = layers.iter().map(Dense::param_count).sum();
    if params.len() != expected {
        return Err(Error::dim(what, expected, params.len()));
    }
    let mut rest = params;
    for l in layers {
        let (w, r) = rest.split_at(l.weights.len());
        let (b, r) = r.split_at(l.bias.len());
        l.weights.copy_from_slice(w);
        l.bias.copy_from_slice(b);
        rest = r;
    }
    Ok(())
}

/// Loss₁: mean over rows of the squared Euclidean distance.
pub fn loss1(s_pred: &Matrix, s_true: &Matrix) -> Result<f64> {
    if s_pred.rows() != s_true.rows() {
        return Err(Error::dim("loss1 rows", s_true.rows(), s_pred.rows()));
    }
    if s_pred.cols() != s_true.cols() {
        return Err(Error::dim("loss1 columns", s_true.cols(), s_pred.cols()));
    }
    if s_pred.rows() == 0 {
        return Err(Error::InvalidInput("loss of an empty batch".into()));
    }
    Ok(squared_error(s_pred.as_slice(), s_true.as_slice(), s_pred.rows()).0)
}

/// Loss₂: mean squared error.
pub fn loss2(y_pred: &[f64], y_true: &[f64]) -> Result<f64> {
    if y_pred.len() != y_true.len() {
        return Err(Error::dim("loss2 length", y_true.len(), y_pred.len()));
    }
    if y_pred.is_empty() {
        return Err(Error::InvalidInput("loss of an empty batch".into()));
    }
    Ok(squared_error(y_pred, y_true, y_pred.len()).0)
}

/// Stimuli paired with their single-trial EEG responses.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    images: Matrix,
    p300_signals: Option<Matrix>,
    amplitudes: Vec<f64>,
    categories: Vec<String>,
}

impl TrialDataset {
    pub fn new(
        images: Matrix,
        p300_signals: Option<Matrix>,
        amplitudes: Vec<f64>,
        categories: Vec<String>,
    ) -> Result<Self> {
        let n = images.rows();
        if amplitudes.len() != n {
            return Err(Error::dim("dataset amplitudes", n, amplitudes.len()));
        }
        if categories.len() != n {
            return Err(Error::dim("dataset categories", n, categories.len()));
        }
        if let Some(s) = &p300_signals {
            if s.rows() != n {
                return Err(Error::dim("dataset p300 signals", n, s.rows()));
            }
            if !s.is_finite() {
                return Err(Error::NonFinite("dataset p300 signals".into()));
            }
        }
        if !images.is_finite() || amplitudes.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset images or amplitudes".into()));
        }
        Ok(TrialDataset { images, p300_signals, amplitudes, categories })
    }

    /// Pairs `images` with the beamformed responses of `target`: the source
    /// over [`P300_SIGNAL_WINDOW`] resampled to `p300_dim` points and the
    /// peak amplitudes of `result`.
    pub fn from_eeg(images: Matrix, target: &EegEpochSet, result: &NeuroscoreResult, p300_dim: usize) -> Result<Self> {
        if result.amplitudes.len() != target.n_trials() {
            return Err(Error::dim("neuroscore trials", target.n_trials(), result.amplitudes.len()));
        }
        let sources = reconstruct_source(&result.filter.w, target)?;
        let signals = source_segments(&sources, target, P300_SIGNAL_WINDOW, p300_dim)?;
        TrialDataset::new(images, Some(signals), result.amplitudes.clone(), result.categories.clone())
    }

    pub fn len(&self) -> usize {
        self.images.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn images(&self) -> &Matrix {
        &self.images
    }

    pub fn p300_signals(&self) -> Option<&Matrix> {
        self.p300_signals.as_ref()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    /// The same rows without stage-1 targets.
    pub fn without_signals(&self) -> Self {
        TrialDataset { p300_signals: None, ..self.clone() }
    }

    /// Rows `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let n = self.len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidInput(format!("row {bad} out of range for {n} trials")));
        }
        let rows = |m: &Matrix| {
            let mut data = Vec::with_capacity(indices.len() * m.cols());
            for &i in indices {
                data.extend_from_slice(m.row(i));
            }
            Matrix::from_vec(indices.len(), m.cols(), data)
        };
        Ok(TrialDataset {
            images: rows(&self.images)?,
            p300_signals: self.p300_signals.as_ref().map(rows).transpose()?,
            amplitudes: indices.iter().map(|&i| self.amplitudes[i]).collect(),
            categories: indices.iter().map(|&i| self.categories[i].clone()).collect(),
        })
    }
}

/// Which kind of EEG supervision a training run receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Two stages with each stimulus's own EEG response.
    WithEeg,
    /// θ₁ and θ₂ trained jointly on amplitudes alone.
    WithoutEeg,
    /// Two stages with EEG responses shuffled within each category.
    RandomEeg,
}

impl TrainMode {
    pub const ALL: [TrainMode; 3] = [TrainMode::WithEeg, TrainMode::WithoutEeg, TrainMode::RandomEeg];

    pub fn name(self) -> &'static str {
        match self {
            TrainMode::WithEeg => "with_eeg",
            TrainMode::WithoutEeg => "without_eeg",
            TrainMode::RandomEeg => "random_eeg",
        }
    }
}

/// Adam moment constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Epochs per stage.
    pub epochs: usize,
    pub optimizer: AdamConfig,
    pub shuffle_seed: u64,
    /// Train and test shares of a split, e.g. `(2, 1)`.
    pub train_test_split: (usize, usize),
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::WithEeg,
            learning_rate: 1e-3,
            batch_size: 256,
            epochs: 20,
            optimizer: AdamConfig::default(),
            shuffle_seed: 0,
            train_test_split: (2, 1),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be ≥ 1".into()));
        }
        let AdamConfig { beta1, beta2, epsilon } = self.optimizer;
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0) {
            return Err(Error::InvalidConfig(
                "optimizer needs beta1, beta2 in [0, 1) and epsilon > 0".into(),
            ));
        }
        if self.train_test_split.0 == 0 || self.train_test_split.1 == 0 {
            return Err(Error::InvalidConfig("train_test_split shares must be ≥ 1".into()));
        }
        Ok(())
    }
}

struct Moments<T> {
    m: Vec<T>,
    v: Vec<T>,
}

struct Adam<T> {
    cfg: AdamConfig,
    lr: f64,
    step: i32,
    moments: Vec<(Moments<T>, Moments<T>)>,
}

impl<T: Real> Adam<T> {
    fn new(layers: &[Dense<T>], lr: f64, cfg: AdamConfig) -> Self {
        let zeros = |n| Moments { m: vec![T::zero(); n], v: vec![T::zero(); n] };
        Adam {
            cfg,
            lr,
            step: 0,
            moments: layers.iter().map(|l| (zeros(l.weights.len()), zeros(l.bias.len()))).collect(),
        }
    }

    fn update(&mut self, layers: &mut [Dense<T>], grads: &[DenseGrad<T>]) {
        self.step += 1;
        let bc1 = 1.0 - libm::pow(self.cfg.beta1, self.step as f64);
        let bc2 = 1.0 - libm::pow(self.cfg.beta2, self.step as f64);
        let step_size = T::from_f64(self.lr / bc1);
        let inv_bc2 = T::from_f64(1.0 / bc2);
        let (b1, b2) = (T::from_f64(self.cfg.beta1), T::from_f64(self.cfg.beta2));
        let (c1, c2) = (T::one() - b1, T::one() - b2);
        let eps = T::from_f64(self.cfg.epsilon);
        let apply = |p: &mut [T], g: &[T], mo: &mut Moments<T>| {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(mo.m.iter_mut()).zip(mo.v.iter_mut()) {
                *m = b1 * *m + c1 * g;
                *v = b2 * *v + c2 * g * g;
                *p = *p - step_size * *m / ((*v * inv_bc2).sqrt() + eps);
            }
        };
        for ((layer, grad), (mw, mb)) in layers.iter_mut().zip(grads).zip(self.moments.iter_mut()) {
            apply(&mut layer.weights, &grad.weights, mw);
            apply(&mut layer.bias, &grad.bias, mb);
        }
    }
}

fn gather<T: Copy>(src: &[T], width: usize, rows: &[usize], out: &mut Vec<T>) {
    out.clear();
    for &r in rows {
        out.extend_from_slice(&src[r * width..(r + 1) * width]);
    }
}

fn check_loss(loss: f64, stage: &str, epoch: usize, batch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!(
            "{stage} loss became {loss} at epoch {epoch}, batch {batch}; lower the learning rate"
        )))
    }
}

fn check_dataset<T: Real>(model: &SurrogateModel<T>, data: &TrialDataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if data.images.cols() != model.config.raw_input_dim() {
        return Err(Error::dim("training image width", model.config.raw_input_dim(), data.images.cols()));
    }
    Ok(())
}

fn to_real<T: Real>(values: &[f64]) -> Vec<T> {
    values.iter().map(|&v| T::from_f64(v)).collect()
}

/// Maps every row to a row of the same category, a uniform random
/// permutation within each category.
pub fn within_category_permutation<R: Rng + ?Sized>(categories: &[String], rng: &mut R) -> Vec<usize> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in categories.iter().enumerate() {
        groups.entry(c.as_str()).or_default().push(i);
    }
    let mut perm: Vec<usize> = (0..categories.len()).collect();
    for members in groups.values() {
        let mut shuffled = members.clone();
        shuffled.shuffle(rng);
        for (&i, &j) in members.iter().zip(&shuffled) {
            perm[i] = j;
        }
    }
    perm
}

/// Stage 1: fits θ₁ to loss₁. Returns the mean training loss of every epoch.
///
/// In `random_eeg` mode the targets are permuted within category once,
/// from `shuffle_seed`, before training. On error the model is unchanged.
pub fn train_stage1<T: Real>(model: &mut SurrogateModel<T>, data: &TrialDataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_dataset(model, data)?;
    if cfg.mode == TrainMode::WithoutEeg {
        return Err(Error::InvalidConfig("stage 1 needs EEG targets; without_eeg trains end to end".into()));
    }
    let signals = data
        .p300_signals
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("stage 1 needs p300 signals".into()))?;
    let p = model.config.p300_dim;
    if signals.cols() != p {
        return Err(Error::dim("p300 signal length", p, signals.cols()));
    }
    let n = data.len();
    let d = model.config.input_dim;
    let x = model.embed_images(&data.images)?;
    let perm = match cfg.mode {
        TrainMode::RandomEeg => {
            within_category_permutation(&data.categories, &mut sub_rng(cfg.shuffle_seed, stream::PERMUTATION))
        }
        _ => (0..n).collect(),
    };
    let mut targets = Vec::with_capacity(n * p);
    for &j in &perm {
        targets.extend(signals.row(j).iter().map(|&v| T::from_f64(v)));
    }

    let mut theta1 = model.theta1.clone();
    let mut adam = Adam::new(&theta1, cfg.learning_rate, cfg.optimizer);
    let mut rng = sub_rng(cfg.shuffle_seed, stream::STAGE1);
    let mut order: Vec<usize> = (0..n).collect();
    let (mut xb, mut tb) = (Vec::new(), Vec::new());
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, rows) in order.chunks(cfg.batch_size).enumerate() {
            let m = rows.len();
            gather(&x, d, rows, &mut xb);
            gather(&targets, p, rows, &mut tb);
            let outs = stack_forward(&theta1, &xb, m);
            let (loss, delta) = squared_error(outs.last().map_or(&[][..], |v| v), &tb, m);
            check_loss(loss, "stage-1", epoch, b)?;
            total += loss * m as f64;
            let (grads, _) = stack_backward(&theta1, &xb, m, &outs, delta, false);
            adam.update(&mut theta1, &grads);
        }
        history.push(total / n as f64);
    }
    model.theta1 = theta1;
    Ok(history)
}

/// Stage 2: fits θ₂ to loss₂ on the outputs of the frozen θ₁.
pub fn train_stage2<T: Real>(model: &mut SurrogateModel<T>, data: &TrialDataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_dataset(model, data)?;
    let n = data.len();
    let p = model.config.p300_dim;
    let x = model.embed_images(&data.images)?;
    let s = stack_output(&model.theta1, &x, n);
    drop(x);
    let y: Vec<T> = to_real(&data.amplitudes);

    let mut theta2 = model.theta2.clone();
    let mut adam = Adam::new(&theta2, cfg.learning_rate, cfg.optimizer);
    let mut rng = sub_rng(cfg.shuffle_seed, stream::STAGE2);
    let mut order: Vec<usize> = (0..n).collect();
    let (mut sb, mut yb) = (Vec::new(), Vec::new());
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, rows) in order.chunks(cfg.batch_size).enumerate() {
            let m = rows.len();
            gather(&s, p, rows, &mut sb);
            gather(&y, 1, rows, &mut yb);
            let outs = stack_forward(&theta2, &sb, m);
            let (loss, delta) = squared_error(outs.last().map_or(&[][..], |v| v), &yb, m);
            check_loss(loss, "stage-2", epoch, b)?;
            total += loss * m as f64;
            let (grads, _) = stack_backward(&theta2, &sb, m, &outs, delta, false);
            adam.update(&mut theta2, &grads);
        }
        history.push(total / n as f64);
    }
    model.theta2 = theta2;
    Ok(history)
}

/// The without-EEG baseline: θ₁ and θ₂ trained jointly on loss₂. Any p300
/// signals in `data` are ignored.
pub fn train_end_to_end<T: Real>(
    model: &mut SurrogateModel<T>,
    data: &TrialDataset,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_dataset(model, data)?;
    if cfg.mode != TrainMode::WithoutEeg {
        return Err(Error::InvalidConfig(format!(
            "end-to-end training is the without_eeg mode, got {}",
            cfg.mode.name()
        )));
    }
    let n = data.len();
    let d = model.config.input_dim;
    let x = model.embed_images(&data.images)?;
    let y: Vec<T> = to_real(&data.amplitudes);

    let mut theta1 = model.theta1.clone();
    let mut theta2 = model.theta2.clone();
    let mut adam1 = Adam::new(&theta1, cfg.learning_rate, cfg.optimizer);
    let mut adam2 = Adam::new(&theta2, cfg.learning_rate, cfg.optimizer);
    let mut rng = sub_rng(cfg.shuffle_seed, stream::END_TO_END);
    let mut order: Vec<usize> = (0..n).collect();
    let (mut xb, mut yb) = (Vec::new(), Vec::new());
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, rows) in order.chunks(cfg.batch_size).enumerate() {
            let m = rows.len();
            gather(&x, d, rows, &mut xb);
            gather(&y, 1, rows, &mut yb);
            let outs1 = stack_forward(&theta1, &xb, m);
            let s = outs1.last().map_or(&[][..], |v| v);
            let outs2 = stack_forward(&theta2, s, m);
            let (loss, delta) = squared_error(outs2.last().map_or(&[][..], |v| v), &yb, m);
            check_loss(loss, "end-to-end", epoch, b)?;
            total += loss * m as f64;
            let (grads2, ds) = stack_backward(&theta2, s, m, &outs2, delta, true);
            let (grads1, _) = stack_backward(&theta1, &xb, m, &outs1, ds.unwrap_or_default(), false);
            adam1.update(&mut theta1, &grads1);
            adam2.update(&mut theta2, &grads2);
        }
        history.push(total / n as f64);
    }
    model.theta1 = theta1;
    model.theta2 = theta2;
    Ok(history)
}

/// Per-epoch losses of a full training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub stage1: Vec<f64>,
    pub stage2: Vec<f64>,
}

/// Trains according to `cfg.mode`: both stages for the EEG modes, end to
/// end for `without_eeg` (its losses are reported as stage 2).
pub fn train<T: Real>(model: &mut SurrogateModel<T>, data: &TrialDataset, cfg: &TrainConfig) -> Result<TrainHistory> {
    match cfg.mode {
        TrainMode::WithEeg | TrainMode::RandomEeg => {
            let mut trial = model.clone();
            let stage1 = train_stage1(&mut trial, data, cfg)?;
            let stage2 = train_stage2(&mut trial, data, cfg)?;
            *model = trial;
            Ok(TrainHistory { stage1, stage2 })
        }
        TrainMode::WithoutEeg => Ok(TrainHistory { stage1: Vec::new(), stage2: train_end_to_end(model, data, cfg)? }),
    }
}

/// Loss values and analytic gradients at the current parameters: loss₁
/// w.r.t. θ₁, and loss₂ w.r.t. θ₂ with θ₂ fed the θ₁ output.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients<T> {
    pub loss1: f64,
    pub loss2: f64,
    pub theta1: Vec<DenseGrad<T>>,
    pub theta2: Vec<DenseGrad<T>>,
}

pub fn loss_gradients<T: Real>(model: &SurrogateModel<T>, batch: &TrialDataset) -> Result<LossGradients<T>> {
    check_dataset(model, batch)?;
    let signals = batch
        .p300_signals
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("gradients of loss1 need p300 signals".into()))?;
    if signals.cols() != model.config.p300_dim {
        return Err(Error::dim("p300 signal length", model.config.p300_dim, signals.cols()));
    }
    let n = batch.len();
    let x = model.embed_images(&batch.images)?;
    let s_true: Vec<T> = to_real(signals.as_slice());
    let y_true: Vec<T> = to_real(&batch.amplitudes);
    let outs1 = stack_forward(&model.theta1, &x, n);
    let s = outs1.last().cloned().unwrap_or_default();
    let (loss1, d1) = squared_error(&s, &s_true, n);
    let (theta1, _) = stack_backward(&model.theta1, &x, n, &outs1, d1, false);
    let outs2 = stack_forward(&model.theta2, &s, n);
    let (loss2, d2) = squared_error(outs2.last().map_or(&[][..], |v| v), &y_true, n);
    let (theta2, _) = stack_backward(&model.theta2, &s, n, &outs2, d2, false);
    Ok(LossGradients { loss1, loss2, theta1, theta2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub epsilon: f64,
    /// Parameters probed per group; groups at most this large are probed fully.
    pub max_params: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { epsilon: 1e-5, max_params: 200, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// Worst `|analytic − numeric| / max(|analytic|, |numeric|, 1)`.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Probes skipped because a rectifier changed state inside the step.
    pub skipped_kinks: usize,
}

/// Compares analytic gradients (loss₁ w.r.t. θ₁, loss₂ w.r.t. θ₂) against
/// central finite differences in double precision. Meant for small batches.
pub fn gradient_check<T: Real>(
    model: &SurrogateModel<T>,
    batch: &TrialDataset,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if !(opts.epsilon > 0.0) {
        return Err(Error::InvalidConfig("gradient check epsilon must be > 0".into()));
    }
    let mut m = model.cast::<f64>();
    let grads = loss_gradients(&m, batch)?;
    let n = batch.len();
    let x = m.embed_images(&batch.images)?.to_vec();
    let s_true = batch.p300_signals.as_ref().map(|s| s.as_slice().to_vec()).unwrap_or_default();
    let s = stack_output(&m.theta1, &x, n);
    let mut rng = sub_rng(opts.seed, stream::GRAD_CHECK);
    let mut report = GradCheckReport { max_rel_error: 0.0, checked: 0, skipped_kinks: 0 };
    probe(&mut m.theta1, &grads.theta1, &x, &s_true, n, opts, &mut rng, &mut report);
    probe(&mut m.theta2, &grads.theta2, &s, &batch.amplitudes, n, opts, &mut rng, &mut report);
    Ok(report)
}

/// Loss of a stack and the on/off state of every hidden rectifier.
fn loss_and_mask(layers: &[Dense<f64>], x: &[f64], target: &[f64], n: usize) -> (f64, Vec<bool>) {
    let outs = stack_forward(layers, x, n);
    let mask = outs[..outs.len() - 1].iter().flatten().map(|&v| v > 0.0).collect();
    (squared_error(outs.last().map_or(&[][..], |v| v), target, n).0, mask)
}

#[allow(clippy::too_many_arguments)]
fn probe(
    layers: &mut [Dense<f64>],
    grads: &[DenseGrad<f64>],
    x: &[f64],
    target: &[f64],
    n: usize,
    opts: &GradCheckOptions,
    rng: &mut impl RngCore,
    report: &mut GradCheckReport,
) {
    let total: usize = layers.iter().map(Dense::param_count).sum();
    let picks: Vec<usize> = if total <= opts.max_params {
        (0..total).collect()
    } else {
        let mut v = rand::seq::index::sample(rng, total, opts.max_params).into_vec();
        v.sort_unstable();
        v
    };
    let (_, base_mask) = loss_and_mask(layers, x, target, n);
    for flat in picks {
        let (l, is_bias, k) = locate(layers, flat);
        let analytic = if is_bias { grads[l].bias[k] } else { grads[l].weights[k] };
        let original = get_param(layers, l, is_bias, k);
        set_param(layers, l, is_bias, k, original + opts.epsilon);
        let (lp, mp) = loss_and_mask(layers, x, target, n);
        set_param(layers, l, is_bias, k, original - opts.epsilon);
        let (lm, mm) = loss_and_mask(layers, x, target, n);
        set_param(layers, l, is_bias, k, original);
        if mp != base_mask || mm != base_mask {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * opts.epsilon);
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        report.max_rel_error = report.max_rel_error.max(err);
        report.checked += 1;
    }
}

fn locate(layers: &[Dense<f64>], mut flat: usize) -> (usize, bool, usize) {
    for (l, layer) in layers.iter().enumerate() {
        if flat < layer.weights.len() {
            return (l, false, flat);
        }
        flat -= layer.weights.len();
        if flat < layer.bias.len() {
            return (l, true, flat);
        }
        flat -= layer.bias.len();
    }
    unreachable!("parameter index beyond the stack")
}

fn get_param(layers: &[Dense<f64>], l: usize, is_bias: bool, k: usize) -> f64 {
    if is_bias {
        layers[l].bias[k]
    } else {
        layers[l].weights[k]
    }
}

fn set_param(layers: &mut [Dense<f64>], l: usize, is_bias: bool, k: usize, v: f64) {
    if is_bias {
        layers[l].bias[k] = v;
    } else {
        layers[l].weights[k] = v;
    }
}

/// Mean predicted amplitude per category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticNeuroscore {
    pub scores: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, usize>,
    /// Expected categories without any image.
    pub missing: Vec<String>,
}

/// Synthetic Neuroscore: the mean model output over each category's images.
/// Categories in `expected` with no image are omitted and listed as missing.
pub fn predict_synthetic_neuroscore<T: Real>(
    model: &SurrogateModel<T>,
    images: &Matrix,
    categories: &[String],
    expected: &[String],
) -> Result<SyntheticNeuroscore> {
    if categories.len() != images.rows() {
        return Err(Error::dim("image categories", images.rows(), categories.len()));
    }
    let preds = model.predict(images)?;
    let groups = group_means(&preds, categories);
    let missing = expected.iter().filter(|c| !groups.contains_key(*c)).cloned().collect();
    Ok(SyntheticNeuroscore {
        scores: groups.iter().map(|(k, v)| (k.clone(), v.neuroscore)).collect(),
        counts: groups.iter().map(|(k, v)| (k.clone(), v.count)).collect(),
        missing,
    })
}

/// `(index, predicted amplitude)` sorted by descending prediction; ties keep
/// input order.
pub fn rank_images<T: Real>(model: &SurrogateModel<T>, images: &Matrix) -> Result<Vec<(usize, f64)>> {
    let mut ranked: Vec<(usize, f64)> = model.predict(images)?.into_iter().enumerate().collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(core::cmp::Ordering::Equal));
    Ok(ranked)
}

/// `Σ |pred − truth|` over categories; both maps must cover the same ones.
pub fn evaluation_error(pred: &BTreeMap<String, f64>, truth: &BTreeMap<String, f64>) -> Result<f64> {
    if pred.len() != truth.len() || pred.keys().zip(truth.keys()).any(|(a, b)| a != b) {
        let only = |a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>| {
            a.keys().filter(|k| !b.contains_key(*k)).cloned().collect::<Vec<_>>()
        };
        return Err(Error::CategoryMismatch(format!(
            "only predicted: {:?}; only true: {:?}",
            only(pred, truth),
            only(truth, pred)
        )));
    }
    Ok(pred.values().zip(truth.values()).map(|(p, t)| (p - t).abs()).sum())
}

/// Splits rows into train and test sets in the ratio `split` separately
/// within each category, so every category with at least two rows appears
/// in both. Both index lists are ascending.
pub fn stratified_split<R: Rng + ?Sized>(
    categories: &[String],
    split: (usize, usize),
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if split.0 == 0 || split.1 == 0 {
        return Err(Error::InvalidConfig("train_test_split shares must be ≥ 1".into()));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in categories.iter().enumerate() {
        groups.entry(c.as_str()).or_default().push(i);
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    let parts = split.0 + split.1;
    for members in groups.values_mut() {
        members.shuffle(rng);
        let len = members.len();
        let mut n_train = (len * split.0 + parts / 2) / parts;
        if len >= 2 {
            n_train = n_train.clamp(1, len - 1);
        }
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// A repeated train/test comparison of training modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub shuffles: usize,
    pub modes: Vec<TrainMode>,
    /// Seeds every split, initialisation and batch order.
    pub seed: u64,
    pub train: TrainConfig,
    pub model: SurrogateConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            shuffles: 20,
            modes: vec![TrainMode::WithEeg, TrainMode::RandomEeg],
            seed: 0,
            train: TrainConfig::default(),
            model: SurrogateConfig::default(),
        }
    }
}

/// Evaluation errors of every mode on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffleOutcome {
    pub shuffle: usize,
    pub errors: BTreeMap<TrainMode, f64>,
}

/// Runs shuffle `shuffle` of an ablation: one stratified split, then every
/// mode trained from the same initial parameters and batch seed and scored
/// by [`evaluation_error`] against the test set's EEG Neuroscore.
pub fn ablation_shuffle<T: Real>(data: &TrialDataset, cfg: &AblationConfig, shuffle: usize) -> Result<ShuffleOutcome> {
    let mut rng = sub_rng(cfg.seed, stream::SHUFFLE_BASE + shuffle as u64);
    let (train_idx, test_idx) = stratified_split(&data.categories, cfg.train.train_test_split, &mut rng)?;
    let init_seed = rng.next_u64();
    let shuffle_seed = rng.next_u64();
    let train_set = data.subset(&train_idx)?;
    let test_set = data.subset(&test_idx)?.without_signals();
    let truth: BTreeMap<String, f64> = group_means(&test_set.amplitudes, &test_set.categories)
        .into_iter()
        .map(|(k, v)| (k, v.neuroscore))
        .collect();
    let mut errors = BTreeMap::new();
    for &mode in &cfg.modes {
        let mut model = SurrogateModel::<T>::new(cfg.model.clone(), init_seed)?;
        let tc = TrainConfig { mode, shuffle_seed, ..cfg.train.clone() };
        train(&mut model, &train_set, &tc)?;
        let pred = predict_synthetic_neuroscore(&model, &test_set.images, &test_set.categories, &[])?;
        errors.insert(mode, evaluation_error(&pred.scores, &truth)?);
    }
    Ok(ShuffleOutcome { shuffle, errors })
}

/// All shuffles of an ablation, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub outcomes: Vec<ShuffleOutcome>,
}

impl AblationResult {
    /// Per-shuffle errors of `mode`.
    pub fn errors(&self, mode: TrainMode) -> Vec<f64> {
        self.outcomes.iter().filter_map(|o| o.errors.get(&mode).copied()).collect()
    }

    /// Paired one-sided test that `better` has lower error than `worse`.
    pub fn compare(&self, better: TrainMode, worse: TrainMode) -> Result<TTest> {
        paired_t_test(&self.errors(better), &self.errors(worse), Alternative::Less)
    }
}

pub fn run_ablation<T: Real>(data: &TrialDataset, cfg: &AblationConfig) -> Result<AblationResult> {
    let outcomes = (0..cfg.shuffles).map(|s| ablation_shuffle::<T>(data, cfg, s)).collect::<Result<_>>()?;
    Ok(AblationResult { outcomes })
}
