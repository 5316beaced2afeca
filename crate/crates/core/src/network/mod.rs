//! Dense feedforward networks trained by backpropagation.
//!
//! Layer `l` holds `W` with shape `neurons(l) x neurons(l-1)` and a bias of
//! length `neurons(l)`; its output is `g(W h + b)`. Inputs pass through a
//! per-feature z-score ([`Standardizer`]) fitted on the training rows before
//! reaching the first layer. Regression outputs are mapped back through an
//! affine target scale, so the network itself works on unit-scale values while
//! losses and predictions stay in target units.

mod optim;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::losses::Loss;
use crate::numerics::{axpy, dot, Matrix, Vector};

pub use optim::Optimizer;
pub use train::{train, train_with_observer, EpochReport};

pub const DEFAULT_INIT_STDDEV: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub neurons: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(neurons: usize, activation: Activation) -> Self {
        Self { neurons, activation }
    }
}

/// Stop when the held-out loss has not improved by more than `min_delta`
/// for `patience` consecutive epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_delta: f64,
    pub validation_fraction: f64,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        Self {
            patience: 10,
            min_delta: 0.0,
            validation_fraction: 0.1,
        }
    }
}

fn default_init_stddev() -> f64 {
    DEFAULT_INIT_STDDEV
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_dim: usize,
    /// Hidden layers followed by the output layer.
    pub layers: Vec<LayerSpec>,
    pub loss: Loss,
    pub optimizer: Optimizer,
    pub batch_size: usize,
    /// Epochs run at each learning rate of the schedule.
    pub epochs: usize,
    pub learn_rate_schedule: Vec<f64>,
    #[serde(default)]
    pub early_stopping: Option<EarlyStopping>,
    pub seed: u64,
    #[serde(default = "default_init_stddev")]
    pub init_stddev: f64,
    #[serde(default = "default_true")]
    pub standardize_features: bool,
    /// Fit an output scale `mean + scale * net(x)` to the targets. Ignored for cross-entropy.
    #[serde(default = "default_true")]
    pub standardize_targets: bool,
}

impl NetworkConfig {
    /// `hidden` layers of `activation`, then an identity output layer of `output_dim`.
    pub fn regression(input_dim: usize, hidden: &[usize], activation: Activation, output_dim: usize) -> Self {
        let mut layers: Vec<LayerSpec> = hidden.iter().map(|&n| LayerSpec::new(n, activation)).collect();
        layers.push(LayerSpec::new(output_dim, Activation::Identity));
        Self {
            input_dim,
            layers,
            loss: Loss::LogCosh,
            optimizer: Optimizer::adam(),
            batch_size: 32,
            epochs: 100,
            learn_rate_schedule: vec![1e-3],
            early_stopping: None,
            seed: 0,
            init_stddev: DEFAULT_INIT_STDDEV,
            standardize_features: true,
            standardize_targets: true,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.neurons)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.input_dim == 0 {
            return bad("input_dim must be at least 1".into());
        }
        if self.layers.is_empty() {
            return bad("at least one layer is required".into());
        }
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            if l.neurons == 0 {
                return bad(format!("layer {i} has no neurons"));
            }
            l.activation.validate()?;
            if matches!(l.activation, Activation::Softmax) && i != last {
                return Err(Error::Unsupported("softmax is only supported on the output layer".into()));
            }
        }
        let softmax_out = matches!(self.layers[last].activation, Activation::Softmax);
        let ce = matches!(self.loss, Loss::CrossEntropy);
        if softmax_out != ce {
            return Err(Error::Unsupported(
                "softmax output and cross-entropy loss must be used together".into(),
            ));
        }
        self.loss.validate()?;
        self.optimizer.validate()?;
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.learn_rate_schedule.is_empty() {
            return bad("learn_rate_schedule must not be empty".into());
        }
        if let Some(lr) = self.learn_rate_schedule.iter().find(|lr| !(**lr > 0.0 && lr.is_finite())) {
            return bad(format!("learning rates must be positive, got {lr}"));
        }
        if let Some(es) = &self.early_stopping {
            if !(es.validation_fraction > 0.0 && es.validation_fraction < 1.0) {
                return bad(format!("validation_fraction must lie in (0, 1), got {}", es.validation_fraction));
            }
            if es.patience == 0 {
                return bad("early stopping patience must be at least 1".into());
            }
            if es.min_delta.is_nan() || es.min_delta < 0.0 {
                return bad("early stopping min_delta must be nonnegative".into());
            }
        }
        if !(self.init_stddev >= 0.0 && self.init_stddev.is_finite()) {
            return bad("init_stddev must be nonnegative".into());
        }
        Ok(())
    }

    pub(crate) fn scales_targets(&self) -> bool {
        self.standardize_targets && !matches!(self.loss, Loss::CrossEntropy)
    }

    pub(crate) fn fan_in(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.layers[layer - 1].neurons
        }
    }
}

/// Per-feature z-score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation of each column; constant columns get scale 1.
    pub fn fit(rows: &[f64], dim: usize) -> Self {
        let n = (rows.len() / dim.max(1)) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows.chunks_exact(dim) {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows.chunks_exact(dim) {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 * m.abs().max(1.0) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply_in_place(&self, x: &mut [f64]) {
        let dim = self.mean.len();
        for r in x.chunks_exact_mut(dim) {
            for ((v, m), s) in r.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
    }
}

/// Gradients with the same shapes as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vector>,
}

impl Gradients {
    pub(crate) fn zeros_like(model: &TrainedModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            biases: model.biases.iter().map(|b| Vector::zeros(b.len())).collect(),
        }
    }

    pub(crate) fn clear(&mut self) {
        for w in &mut self.weights {
            w.data_mut().fill(0.0);
        }
        for b in &mut self.biases {
            b.fill(0.0);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainedModel {
    pub config: NetworkConfig,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vector>,
    pub standardizer: Option<Standardizer>,
    /// Output mapping `mean + scale * y`, fitted on the training targets.
    #[serde(default)]
    pub target_scaler: Option<Standardizer>,
    /// Mean per-sample training loss of each epoch.
    pub loss_trace: Vec<f64>,
    /// Mean per-sample held-out loss of each epoch (early stopping only).
    #[serde(default)]
    pub validation_trace: Vec<f64>,
    /// Number of epochs run when early stopping fired.
    pub stopped_epoch: Option<usize>,
}

/// Per-layer buffers for a batch of `rows` samples.
pub(crate) struct Workspace {
    rows: usize,
    z: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
    /// Predictions in target units.
    out: Vec<f64>,
    out_grad: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(config: &NetworkConfig, rows: usize) -> Self {
        let mk = || config.layers.iter().map(|l| vec![0.0; rows * l.neurons]).collect::<Vec<_>>();
        Self {
            rows,
            z: mk(),
            a: mk(),
            delta: mk(),
            out: vec![0.0; rows * config.output_dim()],
            out_grad: vec![0.0; config.output_dim()],
        }
    }
}

impl TrainedModel {
    /// Builds a model from explicit parameters, without input standardization.
    pub fn from_parameters(config: NetworkConfig, weights: Vec<Matrix>, biases: Vec<Vector>) -> Result<Self> {
        let m = Self {
            config,
            weights,
            biases,
            standardizer: None,
            target_scaler: None,
            loss_trace: Vec::new(),
            validation_trace: Vec::new(),
            stopped_epoch: None,
        };
        m.validate()?;
        Ok(m)
    }

    /// Untrained model with normally initialized weights and zero biases.
    pub fn initialize(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = crate::numerics::Rng::new(config.seed);
        Self::initialize_with(config, &mut rng)
    }

    pub(crate) fn initialize_with(config: NetworkConfig, rng: &mut crate::numerics::Rng) -> Result<Self> {
        let mut weights = Vec::with_capacity(config.layers.len());
        let mut biases = Vec::with_capacity(config.layers.len());
        for (l, spec) in config.layers.iter().enumerate() {
            let n_in = config.fan_in(l);
            let w = crate::numerics::normal_sample(rng, 0.0, config.init_stddev, spec.neurons * n_in)?;
            weights.push(Matrix::new(spec.neurons, n_in, w.into_inner())?);
            biases.push(Vector::zeros(spec.neurons));
        }
        Self::from_parameters(config, weights, biases)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let cfg = &self.config;
        if self.weights.len() != cfg.layers.len() || self.biases.len() != cfg.layers.len() {
            return Err(Error::InvalidConfig(format!(
                "{} layers configured but {} weight matrices and {} bias vectors stored",
                cfg.layers.len(),
                self.weights.len(),
                self.biases.len()
            )));
        }
        for (l, spec) in cfg.layers.iter().enumerate() {
            let w = &self.weights[l];
            if w.rows() != spec.neurons || w.cols() != cfg.fan_in(l) {
                return Err(Error::ShapeMismatch {
                    op: "layer weights",
                    left_rows: w.rows(),
                    left_cols: w.cols(),
                    right_rows: spec.neurons,
                    right_cols: cfg.fan_in(l),
                });
            }
            if self.biases[l].len() != spec.neurons {
                return Err(Error::LengthMismatch {
                    op: "layer bias",
                    left: self.biases[l].len(),
                    right: spec.neurons,
                });
            }
            if w.data().iter().chain(self.biases[l].iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("model parameters"));
            }
        }
        if let Some(s) = &self.standardizer {
            if s.mean.len() != cfg.input_dim || s.scale.len() != cfg.input_dim {
                return Err(Error::InvalidConfig("standardizer width differs from input_dim".into()));
            }
            if s.scale.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidConfig("standardizer scales must be positive".into()));
            }
        }
        if let Some(s) = &self.target_scaler {
            if s.mean.len() != self.output_dim() || s.scale.len() != self.output_dim() {
                return Err(Error::InvalidConfig("target scaler width differs from output size".into()));
            }
            if s.scale.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidConfig("target scales must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    fn prepare_inputs(&self, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        if let Some(s) = &self.standardizer {
            s.apply_in_place(&mut v);
        }
        v
    }

    /// Forward pass over `ws.rows` standardized inputs stored row-major in `x`.
    pub(crate) fn forward_batch(&self, x: &[f64], ws: &mut Workspace) {
        let rows = ws.rows;
        for (l, spec) in self.config.layers.iter().enumerate() {
            let n_in = self.config.fan_in(l);
            let n_out = spec.neurons;
            let w = &self.weights[l];
            let b = &self.biases[l];
            let (before, rest) = ws.a.split_at_mut(l);
            let input: &[f64] = if l == 0 { x } else { &before[l - 1] };
            let z = &mut ws.z[l];
            for s in 0..rows {
                let inp = &input[s * n_in..(s + 1) * n_in];
                let zr = &mut z[s * n_out..(s + 1) * n_out];
                for (o, zo) in zr.iter_mut().enumerate() {
                    *zo = b[o] + dot(w.row(o), inp);
                }
            }
            let a = &mut rest[0];
            a[..rows * n_out].copy_from_slice(&z[..rows * n_out]);
            for s in 0..rows {
                spec.activation.apply_in_place(&mut a[s * n_out..(s + 1) * n_out]);
            }
        }
        let last = self.config.layers.len() - 1;
        let n_out = self.output_dim();
        let raw = &ws.a[last][..rows * n_out];
        let out = &mut ws.out[..rows * n_out];
        match &self.target_scaler {
            Some(t) => {
                for (o, r) in out.chunks_exact_mut(n_out).zip(raw.chunks_exact(n_out)) {
                    for (((oi, ri), m), sc) in o.iter_mut().zip(r).zip(&t.mean).zip(&t.scale) {
                        *oi = m + sc * ri;
                    }
                }
            }
            None => out.copy_from_slice(raw),
        }
    }

    /// Backward pass after [`Self::forward_batch`]. Adds `scale * dJ/dθ` of every
    /// sample into `grads` and returns the summed per-sample loss.
    pub(crate) fn backward_batch(&self, x: &[f64], y: &[f64], ws: &mut Workspace, grads: &mut Gradients, scale: f64) -> f64 {
        let rows = ws.rows;
        let last = self.config.layers.len() - 1;
        let n_out = self.output_dim();
        let loss = self.config.loss;
        let out_act = self.config.layers[last].activation;
        let mut total = 0.0;

        for s in 0..rows {
            let yt = &y[s * n_out..(s + 1) * n_out];
            let pred = &ws.out[s * n_out..(s + 1) * n_out];
            let raw = &ws.a[last][s * n_out..(s + 1) * n_out];
            total += loss.value_unchecked(yt, pred);
            let d = &mut ws.delta[last][s * n_out..(s + 1) * n_out];
            if matches!(out_act, Activation::Softmax) {
                // softmax Jacobian folded into cross-entropy
                let tsum: f64 = yt.iter().sum();
                for ((di, p), t) in d.iter_mut().zip(pred).zip(yt) {
                    *di = p * tsum - t;
                }
            } else {
                loss.gradient_into(yt, pred, &mut ws.out_grad);
                if let Some(t) = &self.target_scaler {
                    for (g, sc) in ws.out_grad.iter_mut().zip(&t.scale) {
                        *g *= sc;
                    }
                }
                let zr = &ws.z[last][s * n_out..(s + 1) * n_out];
                for (((di, g), z), a) in d.iter_mut().zip(&ws.out_grad).zip(zr).zip(raw) {
                    *di = g * out_act.derivative_scalar(*z, Some(*a));
                }
            }
        }

        for l in (0..=last).rev() {
            let n_in = self.config.fan_in(l);
            let n_o = self.config.layers[l].neurons;
            let input: &[f64] = if l == 0 { x } else { &ws.a[l - 1] };
            let delta = &ws.delta[l];
            let gw = grads.weights[l].data_mut();
            let gb = &mut grads.biases[l];
            for s in 0..rows {
                let inp = &input[s * n_in..(s + 1) * n_in];
                let dr = &delta[s * n_o..(s + 1) * n_o];
                for (o, &d) in dr.iter().enumerate() {
                    if d != 0.0 {
                        axpy(scale * d, inp, &mut gw[o * n_in..(o + 1) * n_in]);
                    }
                    gb[o] += scale * d;
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.weights[l];
            let prev_act = self.config.layers[l - 1].activation;
            let (lower, upper) = ws.delta.split_at_mut(l);
            let prev = &mut lower[l - 1];
            let delta = &upper[0];
            for s in 0..rows {
                let pr = &mut prev[s * n_in..(s + 1) * n_in];
                pr.fill(0.0);
                for (o, &d) in delta[s * n_o..(s + 1) * n_o].iter().enumerate() {
                    if d != 0.0 {
                        axpy(d, w.row(o), pr);
                    }
                }
                let zr = &ws.z[l - 1][s * n_in..(s + 1) * n_in];
                let ar = &ws.a[l - 1][s * n_in..(s + 1) * n_in];
                for ((p, z), a) in pr.iter_mut().zip(zr).zip(ar) {
                    *p *= prev_act.derivative_scalar(*z, Some(*a));
                }
            }
        }
        total
    }

    /// Network output for one input (standardization applied first).
    pub fn forward(&self, x: &[f64]) -> Result<Vector> {
        if x.len() != self.input_dim() {
            return Err(Error::LengthMismatch {
                op: "forward",
                left: x.len(),
                right: self.input_dim(),
            });
        }
        let inp = self.prepare_inputs(x);
        let mut ws = Workspace::new(&self.config, 1);
        self.forward_batch(&inp, &mut ws);
        Vector::new(ws.out)
    }

    /// Gradient of `loss(y, forward(x))` with respect to every weight and bias.
    pub fn backward(&self, x: &[f64], y: &[f64]) -> Result<Gradients> {
        if x.len() != self.input_dim() {
            return Err(Error::LengthMismatch {
                op: "backward input",
                left: x.len(),
                right: self.input_dim(),
            });
        }
        if y.len() != self.output_dim() {
            return Err(Error::LengthMismatch {
                op: "backward target",
                left: y.len(),
                right: self.output_dim(),
            });
        }
        let inp = self.prepare_inputs(x);
        let mut ws = Workspace::new(&self.config, 1);
        self.forward_batch(&inp, &mut ws);
        // validates the cross-entropy probability precondition
        self.config.loss.value(y, &ws.out)?;
        let mut grads = Gradients::zeros_like(self);
        self.backward_batch(&inp, y, &mut ws, &mut grads, 1.0);
        Ok(grads)
    }

    /// Per-sample loss of one example.
    pub fn sample_loss(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let out = self.forward(x)?;
        self.config.loss.value(y, &out)
    }

    /// Row `i` of the result is `forward(xs.row(i))`.
    pub fn predict_batch(&self, xs: &Matrix) -> Result<Matrix> {
        if xs.cols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                op: "predict_batch",
                left_rows: xs.rows(),
                left_cols: xs.cols(),
                right_rows: xs.rows(),
                right_cols: self.input_dim(),
            });
        }
        let n_out = self.output_dim();
        let mut out = Vec::with_capacity(xs.rows() * n_out);
        const CHUNK: usize = 256;
        let mut ws = Workspace::new(&self.config, CHUNK);
        let mut start = 0;
        while start < xs.rows() {
            let rows = CHUNK.min(xs.rows() - start);
            let inp = self.prepare_inputs(&xs.data()[start * xs.cols()..(start + rows) * xs.cols()]);
            ws.rows = rows;
            self.forward_batch(&inp, &mut ws);
            out.extend_from_slice(&ws.out[..rows * n_out]);
            start += rows;
        }
        Matrix::new(xs.rows(), n_out, out)
    }

    /// Mean per-sample loss over a dataset.
    pub fn mean_loss(&self, features: &Matrix, targets: &Matrix) -> Result<f64> {
        if features.rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        let pred = self.predict_batch(features)?;
        let mut total = 0.0;
        for (p, y) in pred.iter_rows().zip(targets.iter_rows()) {
            total += self.config.loss.value(y, p)?;
        }
        Ok(total / features.rows() as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: TrainedModel = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
