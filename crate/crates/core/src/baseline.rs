//! Parameter-matched tiny 1-D CNN classifiers.
//!
//! | variant | layers | params |
//! |---|---|---|
//! | cnn1 | conv k8 +b, tanh, conv k1, global mean, affine | 9+1+2 = 12 |
//! | cnn2 | conv k4 +b, tanh, conv k4 +b, global mean, affine | 5+5+2 = 12 |
//! | cnn3 | conv k8 +b, tanh, mean-pool 29, affine | 9+30 = 39 |
//! | cnn4 | conv k4 +b, tanh, conv k4 +b, tanh, mean-pool 28, affine | 5+5+29 = 39 |
//! | cnn5 | conv k16 +b, tanh, mean-pool 21, affine | 17+22 = 39 |
//! | cnn6 | conv 1→2 k8 +b, tanh, mean-pool 10, affine | 18+21 = 39 |
//!
//! Convolutions are valid with stride 1. Mean pooling splits the length into
//! contiguous, nearly equal bins. The affine map produces one logit and the
//! output is its sigmoid. Inputs are standardized per feature with statistics
//! fit on the training split.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FeatureRecord;
use crate::error::{Error, Result};
use crate::train::{accuracy, bce_loss, epoch_batches, require_sets, sgd_step, Architecture, TrainReport, PROB_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CnnVariant {
    Cnn1,
    Cnn2,
    Cnn3,
    Cnn4,
    Cnn5,
    Cnn6,
}

impl CnnVariant {
    pub const ALL: [CnnVariant; 6] =
        [CnnVariant::Cnn1, CnnVariant::Cnn2, CnnVariant::Cnn3, CnnVariant::Cnn4, CnnVariant::Cnn5, CnnVariant::Cnn6];

    pub fn name(self) -> &'static str {
        match self {
            CnnVariant::Cnn1 => "cnn1",
            CnnVariant::Cnn2 => "cnn2",
            CnnVariant::Cnn3 => "cnn3",
            CnnVariant::Cnn4 => "cnn4",
            CnnVariant::Cnn5 => "cnn5",
            CnnVariant::Cnn6 => "cnn6",
        }
    }

    pub fn param_budget(self) -> usize {
        match self {
            CnnVariant::Cnn1 | CnnVariant::Cnn2 => 12,
            _ => 39,
        }
    }

    fn layers(self) -> Vec<Layer> {
        use Layer::*;
        let conv = |in_ch, out_ch, k, bias| Conv { in_ch, out_ch, k, bias };
        match self {
            CnnVariant::Cnn1 => vec![conv(1, 1, 8, true), Tanh, conv(1, 1, 1, false), MeanPool { bins: 1 }, Affine],
            CnnVariant::Cnn2 => vec![conv(1, 1, 4, true), Tanh, conv(1, 1, 4, true), MeanPool { bins: 1 }, Affine],
            CnnVariant::Cnn3 => vec![conv(1, 1, 8, true), Tanh, MeanPool { bins: 29 }, Affine],
            CnnVariant::Cnn4 => {
                vec![conv(1, 1, 4, true), Tanh, conv(1, 1, 4, true), Tanh, MeanPool { bins: 28 }, Affine]
            }
            CnnVariant::Cnn5 => vec![conv(1, 1, 16, true), Tanh, MeanPool { bins: 21 }, Affine],
            CnnVariant::Cnn6 => vec![conv(1, 2, 8, true), Tanh, MeanPool { bins: 10 }, Affine],
        }
    }
}

impl fmt::Display for CnnVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CnnVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CnnVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown baseline variant `{s}` (cnn1..cnn6)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layer {
    Conv { in_ch: usize, out_ch: usize, k: usize, bias: bool },
    Tanh,
    MeanPool { bins: usize },
    /// Flattened input to one logit, with bias.
    Affine,
}

/// `(channels, length)` of an activation.
type Shape = (usize, usize);

impl Layer {
    fn n_params(&self, input: Shape) -> usize {
        match *self {
            Layer::Conv { in_ch, out_ch, k, bias } => out_ch * in_ch * k + if bias { out_ch } else { 0 },
            Layer::Affine => input.0 * input.1 + 1,
            _ => 0,
        }
    }

    fn output(&self, input: Shape) -> Result<Shape> {
        Ok(match *self {
            Layer::Conv { in_ch, out_ch, k, .. } => {
                if input.0 != in_ch || input.1 < k {
                    return Err(Error::invalid(format!("conv k{k} cannot take shape {input:?}")));
                }
                (out_ch, input.1 - k + 1)
            }
            Layer::Tanh => input,
            Layer::MeanPool { bins } => {
                if input.1 < bins {
                    return Err(Error::invalid(format!("cannot pool length {} into {bins} bins", input.1)));
                }
                (input.0, bins)
            }
            Layer::Affine => (1, 1),
        })
    }
}

fn bin_edges(len: usize, bins: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..bins).map(move |b| (b * len / bins, (b + 1) * len / bins))
}

/// A built network: layer list, per-layer shapes and parameter offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyCnn {
    pub variant: CnnVariant,
    layers: Vec<Layer>,
    shapes: Vec<Shape>,
    offsets: Vec<usize>,
    n_params: usize,
}

pub fn build_tiny_cnn(variant: CnnVariant, input_len: usize) -> Result<TinyCnn> {
    let layers = variant.layers();
    let mut shapes = vec![(1, input_len)];
    let mut offsets = Vec::with_capacity(layers.len());
    let mut n_params = 0;
    for layer in &layers {
        let input = *shapes.last().expect("nonempty");
        offsets.push(n_params);
        n_params += layer.n_params(input);
        shapes.push(layer.output(input)?);
    }
    if n_params != variant.param_budget() {
        return Err(Error::invalid(format!("{variant} has {n_params} parameters, budget {}", variant.param_budget())));
    }
    Ok(TinyCnn { variant, layers, shapes, offsets, n_params })
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl TinyCnn {
    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn input_len(&self) -> usize {
        self.shapes[0].1
    }

    fn check(&self, params: &[f64], x: &[f64]) -> Result<()> {
        if params.len() != self.n_params {
            return Err(Error::invalid(format!("{} takes {} parameters, got {}", self.variant, self.n_params, params.len())));
        }
        if x.len() != self.input_len() {
            return Err(Error::invalid(format!("{} takes {} features, got {}", self.variant, self.input_len(), x.len())));
        }
        Ok(())
    }

    /// Activations entering each layer, plus the final logit.
    fn forward(&self, params: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        for (li, layer) in self.layers.iter().enumerate() {
            let input = &acts[li];
            let (in_ch, in_len) = self.shapes[li];
            let (out_ch, out_len) = self.shapes[li + 1];
            let w = &params[self.offsets[li]..];
            let out = match *layer {
                Layer::Conv { k, bias, .. } => {
                    let mut out = vec![0.0; out_ch * out_len];
                    for o in 0..out_ch {
                        let b = if bias { w[out_ch * in_ch * k + o] } else { 0.0 };
                        for t in 0..out_len {
                            let mut s = b;
                            for c in 0..in_ch {
                                let kern = &w[(o * in_ch + c) * k..][..k];
                                let xs = &input[c * in_len + t..][..k];
                                s += kern.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
                            }
                            out[o * out_len + t] = s;
                        }
                    }
                    out
                }
                Layer::Tanh => input.iter().map(|v| v.tanh()).collect(),
                Layer::MeanPool { bins } => {
                    let mut out = Vec::with_capacity(in_ch * bins);
                    for c in 0..in_ch {
                        for (lo, hi) in bin_edges(in_len, bins) {
                            out.push(input[c * in_len + lo..c * in_len + hi].iter().sum::<f64>() / (hi - lo) as f64);
                        }
                    }
                    out
                }
                Layer::Affine => {
                    let n = input.len();
                    vec![w[..n].iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + w[n]]
                }
            };
            acts.push(out);
        }
        acts
    }

    pub fn predict(&self, params: &[f64], x: &[f64]) -> Result<f64> {
        self.check(params, x)?;
        Ok(sigmoid(self.forward(params, x).last().expect("logit")[0]))
    }

    /// Gradient of `dL/dlogit · logit` with respect to the parameters.
    fn backward(&self, params: &[f64], acts: &[Vec<f64>], dlogit: f64) -> Vec<f64> {
        let mut grad = vec![0.0; self.n_params];
        let mut delta = vec![dlogit];
        for li in (0..self.layers.len()).rev() {
            let input = &acts[li];
            let (in_ch, in_len) = self.shapes[li];
            let (out_ch, out_len) = self.shapes[li + 1];
            let off = self.offsets[li];
            let w = &params[off..];
            let mut d_in = vec![0.0; in_ch * in_len];
            match self.layers[li] {
                Layer::Conv { k, bias, .. } => {
                    for o in 0..out_ch {
                        for t in 0..out_len {
                            let d = delta[o * out_len + t];
                            if bias {
                                grad[off + out_ch * in_ch * k + o] += d;
                            }
                            for c in 0..in_ch {
                                let base = (o * in_ch + c) * k;
                                for j in 0..k {
                                    grad[off + base + j] += d * input[c * in_len + t + j];
                                    d_in[c * in_len + t + j] += d * w[base + j];
                                }
                            }
                        }
                    }
                }
                Layer::Tanh => {
                    let out = &acts[li + 1];
                    for i in 0..d_in.len() {
                        d_in[i] = delta[i] * (1.0 - out[i] * out[i]);
                    }
                }
                Layer::MeanPool { bins } => {
                    for c in 0..in_ch {
                        for (b, (lo, hi)) in bin_edges(in_len, bins).enumerate() {
                            let share = delta[c * bins + b] / (hi - lo) as f64;
                            d_in[c * in_len + lo..c * in_len + hi].iter_mut().for_each(|v| *v = share);
                        }
                    }
                }
                Layer::Affine => {
                    let n = input.len();
                    for i in 0..n {
                        grad[off + i] += delta[0] * input[i];
                        d_in[i] = delta[0] * w[i];
                    }
                    grad[off + n] += delta[0];
                }
            }
            delta = d_in;
        }
        grad
    }

    /// Output probability and its gradient of the single-sample loss for label `y`.
    pub fn loss_gradient(&self, params: &[f64], x: &[f64], y: u8) -> Result<(f64, Vec<f64>)> {
        self.check(params, x)?;
        let acts = self.forward(params, x);
        let p = sigmoid(acts.last().expect("logit")[0]);
        let dlogit = if (PROB_EPS..=1.0 - PROB_EPS).contains(&p) { p - f64::from(y) } else { 0.0 };
        Ok((p, self.backward(params, &acts, dlogit)))
    }

    /// Uniform on `±1/√fan_in` per layer.
    pub fn init_params(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut params = Vec::with_capacity(self.n_params);
        for (li, layer) in self.layers.iter().enumerate() {
            let fan_in = match *layer {
                Layer::Conv { in_ch, k, .. } => in_ch * k,
                Layer::Affine => self.shapes[li].0 * self.shapes[li].1,
                _ => continue,
            };
            let bound = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..layer.n_params(self.shapes[li]) {
                params.push(rng.gen_range(-bound..bound));
            }
        }
        params
    }
}

/// Per-feature standardization fit on one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(records: &[FeatureRecord]) -> Result<Self> {
        let Some(first) = records.first() else {
            return Err(Error::invalid("cannot fit standardization on an empty set"));
        };
        let dim = first.features.len();
        let n = records.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in records {
            if r.features.len() != dim {
                return Err(Error::Schema(format!("expected {dim} features, got {}", r.features.len())));
            }
            mean.iter_mut().zip(&r.features).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; dim];
        for r in records {
            var.iter_mut().zip(r.features.iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m).powi(2) / n);
        }
        let scale = var.into_iter().map(|v| if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 }).collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| (v - m) * s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub variant: CnnVariant,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl BaselineConfig {
    pub fn new(variant: CnnVariant) -> Self {
        Self { variant, learning_rate: 0.05, epochs: 200, batch_size: 32, seed: 0 }
    }
}

/// Mini-batch gradient descent with the same loss, batching and report schema
/// as the quantum trainer.
pub fn train_baseline(config: &BaselineConfig, train_set: &[FeatureRecord], test_set: &[FeatureRecord]) -> Result<TrainReport> {
    let start = Instant::now();
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) || config.batch_size == 0 {
        return Err(Error::invalid("learning rate must be positive and batch size at least 1"));
    }
    require_sets(train_set, test_set)?;
    let std = Standardizer::fit(train_set)?;
    let xs: Vec<Vec<f64>> = train_set.iter().map(|r| std.apply(&r.features)).collect();
    let xt: Vec<Vec<f64>> = test_set.iter().map(|r| std.apply(&r.features)).collect();
    let ys: Vec<u8> = train_set.iter().map(|r| r.label).collect();
    let yt: Vec<u8> = test_set.iter().map(|r| r.label).collect();
    let net = build_tiny_cnn(config.variant, xs[0].len())?;

    let predict_all = |params: &[f64], xs: &[Vec<f64>]| -> Result<Vec<f64>> {
        xs.par_iter().map(|x| net.predict(params, x)).collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = net.init_params(&mut rng);
    let mut losses = vec![bce_loss(&predict_all(&params, &xs)?, &ys)?];
    for _ in 0..config.epochs {
        for batch in epoch_batches(xs.len(), config.batch_size, &mut rng) {
            let grads = batch
                .par_iter()
                .map(|&i| Ok(net.loss_gradient(&params, &xs[i], ys[i])?.1))
                .collect::<Result<Vec<Vec<f64>>>>()?;
            let mut grad = vec![0.0; params.len()];
            for g in &grads {
                grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
            grad.iter_mut().for_each(|g| *g /= batch.len() as f64);
            params = sgd_step(&params, &grad, config.learning_rate)?;
        }
        losses.push(bce_loss(&predict_all(&params, &xs)?, &ys)?);
    }
    Ok(TrainReport {
        config: serde_json::to_value(config)?,
        architecture: Architecture {
            family: "cnn".into(),
            name: config.variant.name().into(),
            param_count: net.n_params(),
        },
        losses,
        train_acc: accuracy(&predict_all(&params, &xs)?, &ys),
        test_acc: accuracy(&predict_all(&params, &xt)?, &yt),
        final_params: params,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
