//! Readout, binary cross-entropy, shift-rule gradients and mini-batch
//! gradient descent for QCNN classifiers.
//!
//! The model output is the probability of reading `|1>` on the readout qubit.
//! A parameter slot may feed several gates, so its derivative is the sum of
//! per-occurrence derivatives. Rotations and U3 angles use the two-term
//! `±π/2` rule; controlled rotations use the four-term rule
//!
//! `f' = d₊[f(θ+π/2) − f(θ−π/2)] − d₋[f(θ+3π/2) − f(θ−3π/2)]`,
//! `d± = (√2 ± 1) / (4√2)`.
//!
//! The state just before every parameterised gate is cached during the
//! forward pass, so each shifted evaluation only runs the rest of the circuit.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{build_qcnn, init_params, AnsatzSpec, Qcnn};
use crate::circuit::{GateKind, Instruction, Program, Register, StateVector, Step};
use crate::data::{FeatureRecord, Preprocessor};
use crate::encoding::EncodingSpec;
use crate::entropy::draw_rng;
use crate::error::{Error, Result};
use crate::noise::{NoiseModel, NoiseSpec};

/// Probability clipping in the loss.
pub const PROB_EPS: f64 = 1e-12;
/// Step of the central finite-difference gradient.
pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    ParameterShift,
    FiniteDifference,
}

impl std::str::FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parameter-shift" | "shift" => Ok(GradientMode::ParameterShift),
            "finite-difference" | "fd" => Ok(GradientMode::FiniteDifference),
            _ => Err(Error::invalid(format!("unknown gradient mode `{s}` (parameter-shift|finite-difference)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub encoding: EncodingSpec,
    pub ansatz: AnsatzSpec,
    pub noise: Option<NoiseSpec>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub gradient_mode: GradientMode,
    /// Shift whole slots by `±π/2` with the two-term rule, controlled
    /// rotations included. Inexact; kept for replication studies.
    #[serde(default)]
    pub two_term_only: bool,
}

impl TrainConfig {
    /// Defaults: lr 0.05, 200 epochs, batch 32, seed 0, parameter shift, no noise.
    pub fn new(encoding: EncodingSpec, ansatz: AnsatzSpec) -> Self {
        Self {
            encoding,
            ansatz,
            noise: None,
            learning_rate: 0.05,
            epochs: 200,
            batch_size: 32,
            seed: 0,
            gradient_mode: GradientMode::ParameterShift,
            two_term_only: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.encoding.n_qubits != self.ansatz.n_qubits {
            return Err(Error::invalid(format!(
                "encoding uses {} qubits but the ansatz has {}",
                self.encoding.n_qubits, self.ansatz.n_qubits
            )));
        }
        AnsatzSpec::new(self.ansatz.conv_id, self.ansatz.pooling, self.ansatz.n_qubits)?;
        if let Some(n) = &self.noise {
            n.validate()?;
        }
        Ok(())
    }
}

/// A QCNN classifier ready to evaluate: circuit, encoding and noise model.
#[derive(Debug, Clone)]
pub struct Model {
    pub qcnn: Qcnn,
    pub encoding: EncodingSpec,
    pub noise: Option<NoiseModel>,
    mode: GradientMode,
    two_term_only: bool,
}

impl Model {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let qcnn = build_qcnn(&config.ansatz)?;
        let noise = config.noise.map(|n| NoiseModel::for_ansatz(n, &config.ansatz)).transpose()?;
        Ok(Self {
            qcnn,
            encoding: config.encoding,
            noise,
            mode: config.gradient_mode,
            two_term_only: config.two_term_only,
        })
    }

    pub fn n_params(&self) -> usize {
        self.qcnn.n_params()
    }

    pub fn program(&self) -> Program<'_> {
        Program::new(&self.qcnn.circuit)
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::invalid(format!("model takes {} parameters, got {}", self.n_params(), params.len())));
        }
        Ok(())
    }

    fn readout(&self, reg: &Register) -> f64 {
        reg.prob_one(self.qcnn.readout).clamp(0.0, 1.0)
    }

    /// `p₁` on the readout qubit for an encoded input.
    pub fn predict_state(&self, program: &Program<'_>, params: &[f64], input: &StateVector) -> Result<f64> {
        self.check_params(params)?;
        let reg = program.run(params, input.clone(), self.noise.as_ref())?;
        Ok(self.readout(&reg))
    }

    pub fn predict(&self, params: &[f64], x: &[f64]) -> Result<f64> {
        self.predict_state(&self.program(), params, &self.encoding.encode(x)?)
    }

    /// `p₁` and `∂p₁/∂θ` for one encoded input.
    pub fn prob_and_gradient(&self, program: &Program<'_>, params: &[f64], input: &StateVector) -> Result<(f64, Vec<f64>)> {
        self.check_params(params)?;
        let noise = self.noise.as_ref();
        let full = |p: &[f64]| -> Result<f64> { Ok(self.readout(&program.run(p, input.clone(), noise)?)) };
        let whole_slot = |step: f64, scale: f64| -> Result<Vec<f64>> {
            let mut shifted = params.to_vec();
            (0..params.len())
                .map(|j| {
                    shifted[j] = params[j] + step;
                    let plus = full(&shifted)?;
                    shifted[j] = params[j] - step;
                    let minus = full(&shifted)?;
                    shifted[j] = params[j];
                    Ok((plus - minus) * scale)
                })
                .collect()
        };
        match (self.mode, self.two_term_only) {
            (GradientMode::FiniteDifference, _) => {
                let p = full(params)?;
                Ok((p, whole_slot(FD_STEP, 0.5 / FD_STEP)?))
            }
            (GradientMode::ParameterShift, true) => {
                let p = full(params)?;
                Ok((p, whole_slot(std::f64::consts::FRAC_PI_2, 0.5)?))
            }
            (GradientMode::ParameterShift, false) => self.shift_gradient(program, params, input),
        }
    }

    fn shift_gradient(&self, program: &Program<'_>, params: &[f64], input: &StateVector) -> Result<(f64, Vec<f64>)> {
        let circuit = &self.qcnn.circuit;
        let noise = self.noise.as_ref();
        let steps = program.resolve(params)?;
        let ins = circuit.instructions();
        let parameterised = |i: usize| matches!(&ins[i], Instruction::Gate(g) if g.slots().next().is_some());

        let mut reg = program.start(input.clone())?;
        let mut snapshots: Vec<Option<Register>> = vec![None; steps.len()];
        for (i, step) in steps.iter().enumerate() {
            if parameterised(i) {
                snapshots[i] = Some(reg.clone());
            }
            program.step(&mut reg, i, step, noise);
        }
        let p = self.readout(&reg);

        let shifted = |i: usize, k: usize, delta: f64| -> f64 {
            let mut reg = snapshots[i].clone().expect("snapshot of a parameterised gate");
            let Step::Gate(mut g) = steps[i].clone() else { unreachable!("parameterised instruction is a gate") };
            g.angles[k] += delta;
            program.step(&mut reg, i, &Step::Gate(g), noise);
            program.run_steps(&mut reg, &steps, i + 1..steps.len(), noise);
            self.readout(&reg)
        };

        let half_pi = std::f64::consts::FRAC_PI_2;
        let sqrt2 = std::f64::consts::SQRT_2;
        let d_plus = (sqrt2 + 1.0) / (4.0 * sqrt2);
        let d_minus = (sqrt2 - 1.0) / (4.0 * sqrt2);
        let grad = circuit
            .slot_occurrences()
            .iter()
            .map(|occ| {
                occ.iter()
                    .map(|&(i, k)| {
                        let Instruction::Gate(g) = &ins[i] else { unreachable!("slot bound to a gate") };
                        let two = shifted(i, k, half_pi) - shifted(i, k, -half_pi);
                        match g.kind {
                            GateKind::Crx | GateKind::Crz => {
                                let far = shifted(i, k, 3.0 * half_pi) - shifted(i, k, -3.0 * half_pi);
                                d_plus * two - d_minus * far
                            }
                            _ => 0.5 * two,
                        }
                    })
                    .sum()
            })
            .collect();
        Ok((p, grad))
    }

    /// Mean loss and its gradient over `batch` of encoded inputs.
    pub fn batch_gradient(&self, params: &[f64], batch: &[(&StateVector, u8)]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::invalid("gradient needs a nonempty batch"));
        }
        let program = self.program();
        let per_sample = batch
            .par_iter()
            .map(|(state, y)| {
                let (p, dp) = self.prob_and_gradient(&program, params, state)?;
                let dl = dloss_dprob(p, *y);
                Ok((sample_loss(p, *y), dp.into_iter().map(|d| d * dl).collect::<Vec<f64>>()))
            })
            .collect::<Result<Vec<(f64, Vec<f64>)>>>()?;
        let m = batch.len() as f64;
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        for (l, g) in &per_sample {
            loss += l;
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
        grad.iter_mut().for_each(|g| *g /= m);
        Ok((loss / m, grad))
    }

    /// Readout probabilities for encoded inputs, in order.
    pub fn predict_all(&self, params: &[f64], states: &[StateVector]) -> Result<Vec<f64>> {
        let program = self.program();
        states.par_iter().map(|s| self.predict_state(&program, params, s)).collect()
    }

    pub fn encode_all(&self, data: &[FeatureRecord]) -> Result<Vec<StateVector>> {
        data.iter().map(|r| self.encoding.encode(&r.features)).collect()
    }
}

fn clip(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn sample_loss(p: f64, y: u8) -> f64 {
    let p = clip(p);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Derivative of one sample's loss with respect to `p`; zero where `p` is clipped.
fn dloss_dprob(p: f64, y: u8) -> f64 {
    if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
        return 0.0;
    }
    if y == 1 {
        -1.0 / p
    } else {
        1.0 / (1.0 - p)
    }
}

fn check_labels(labels: &[u8]) -> Result<()> {
    match labels.iter().position(|&y| y > 1) {
        Some(i) => Err(Error::invalid(format!("label {} at index {i} is not 0 or 1", labels[i]))),
        None => Ok(()),
    }
}

/// Mean binary cross-entropy with probabilities clipped to `[ε, 1−ε]`.
pub fn bce_loss(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::invalid(format!(
            "loss needs equal nonempty lengths, got {} probabilities and {} labels",
            probs.len(),
            labels.len()
        )));
    }
    check_labels(labels)?;
    Ok(probs.iter().zip(labels).map(|(&p, &y)| sample_loss(p, y)).sum::<f64>() / probs.len() as f64)
}

/// `θ − η g`.
pub fn sgd_step(params: &[f64], grad: &[f64], lr: f64) -> Result<Vec<f64>> {
    if params.len() != grad.len() {
        return Err(Error::invalid(format!("{} parameters but {} gradient entries", params.len(), grad.len())));
    }
    Ok(params.iter().zip(grad).map(|(p, g)| p - lr * g).collect())
}

/// Readout probability for an encoder-ready feature vector.
pub fn predict_prob(config: &TrainConfig, params: &[f64], x: &[f64]) -> Result<f64> {
    Model::new(config)?.predict(params, x)
}

/// Gradient of the mean batch loss. Features must be encoder-ready.
pub fn gradient(config: &TrainConfig, params: &[f64], batch: &[FeatureRecord]) -> Result<Vec<f64>> {
    let model = Model::new(config)?;
    check_labels(&batch.iter().map(|r| r.label).collect::<Vec<_>>())?;
    let states = model.encode_all(batch)?;
    let pairs: Vec<(&StateVector, u8)> = states.iter().zip(batch.iter().map(|r| r.label)).collect();
    Ok(model.batch_gradient(params, &pairs)?.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub probs: Vec<f64>,
}

/// Accuracy under `p ≥ 0.5 → 1`.
pub fn accuracy(probs: &[f64], labels: &[u8]) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    let correct = probs.iter().zip(labels).filter(|(&p, &y)| u8::from(p >= 0.5) == y).count();
    correct as f64 / probs.len() as f64
}

/// Accuracy and per-sample probabilities. Features must be encoder-ready.
pub fn evaluate(config: &TrainConfig, params: &[f64], data: &[FeatureRecord]) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty set"));
    }
    let model = Model::new(config)?;
    let probs = model.predict_all(params, &model.encode_all(data)?)?;
    let labels: Vec<u8> = data.iter().map(|r| r.label).collect();
    Ok(Evaluation { accuracy: accuracy(&probs, &labels), probs })
}

/// What was trained: a QCNN ansatz or a classical network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub family: String,
    pub name: String,
    pub param_count: usize,
}

/// Shared report schema for quantum and classical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: serde_json::Value,
    pub architecture: Architecture,
    /// `losses[0]` is the training loss before the first update, then one entry per epoch.
    pub losses: Vec<f64>,
    pub final_params: Vec<f64>,
    pub train_acc: f64,
    pub test_acc: f64,
    pub wall_time_s: f64,
}

impl TrainReport {
    /// JSON with `wall_time_s` zeroed, for reproducibility comparisons.
    pub fn canonical_json(&self) -> Result<String> {
        let mut r = self.clone();
        r.wall_time_s = 0.0;
        Ok(serde_json::to_string_pretty(&r)?)
    }
}

/// Seeded shuffled mini-batches of `0..n`.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

pub(crate) fn require_sets(train: &[FeatureRecord], test: &[FeatureRecord]) -> Result<()> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid("training and test sets must both be nonempty"));
    }
    check_labels(&train.iter().chain(test).map(|r| r.label).collect::<Vec<_>>())
}

/// Mini-batch gradient descent on raw features; preprocessing for the
/// encoding is fit on `train_set` and applied to both sets.
pub fn train(config: &TrainConfig, train_set: &[FeatureRecord], test_set: &[FeatureRecord]) -> Result<TrainReport> {
    let start = Instant::now();
    require_sets(train_set, test_set)?;
    let model = Model::new(config)?;
    let pre = Preprocessor::fit(train_set, &config.encoding)?;
    let train_states = model.encode_all(&pre.apply(train_set)?)?;
    let test_states = model.encode_all(&pre.apply(test_set)?)?;
    let train_labels: Vec<u8> = train_set.iter().map(|r| r.label).collect();
    let test_labels: Vec<u8> = test_set.iter().map(|r| r.label).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = init_params(model.n_params(), &mut rng);
    let mut losses = vec![bce_loss(&model.predict_all(&params, &train_states)?, &train_labels)?];
    for _ in 0..config.epochs {
        for batch in epoch_batches(train_states.len(), config.batch_size, &mut rng) {
            let pairs: Vec<(&StateVector, u8)> = batch.iter().map(|&i| (&train_states[i], train_labels[i])).collect();
            let (_, grad) = model.batch_gradient(&params, &pairs)?;
            params = sgd_step(&params, &grad, config.learning_rate)?;
        }
        losses.push(bce_loss(&model.predict_all(&params, &train_states)?, &train_labels)?);
    }
    let train_acc = accuracy(&model.predict_all(&params, &train_states)?, &train_labels);
    let test_acc = accuracy(&model.predict_all(&params, &test_states)?, &test_labels);
    Ok(TrainReport {
        config: serde_json::to_value(config)?,
        architecture: Architecture {
            family: "qcnn".into(),
            name: config.ansatz.name(),
            param_count: model.n_params(),
        },
        losses,
        final_params: params,
        train_acc,
        test_acc,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Writes one row per sample with the label and, for every qubit still active
/// after `layer` (1-based), its Bloch `z` and `p1`. Features must be encoder-ready.
pub fn export_intermediate_states(
    config: &TrainConfig,
    params: &[f64],
    data: &[FeatureRecord],
    layer: usize,
    path: &Path,
) -> Result<()> {
    let model = Model::new(config)?;
    model.check_params(params)?;
    if layer == 0 || layer > model.qcnn.n_layers() {
        return Err(Error::invalid(format!("layer {layer} outside 1..={}", model.qcnn.n_layers())));
    }
    let end = model.qcnn.layer_ends[layer - 1];
    let qubits = model.qcnn.active_after(layer);
    let program = model.program();
    let rows = data
        .par_iter()
        .map(|r| {
            let reg = program.run_until(params, model.encoding.encode(&r.features)?, model.noise.as_ref(), end)?;
            Ok(qubits.iter().map(|&q| reg.prob_one(q)).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = String::from("label");
    for q in &qubits {
        header.push_str(&format!(",q{q}_z,q{q}_p1"));
    }
    writeln!(f, "{header}")?;
    for (r, probs) in data.iter().zip(rows) {
        let mut line = r.label.to_string();
        for p in probs {
            line.push_str(&format!(",{:?},{:?}", 1.0 - 2.0 * p, p));
        }
        writeln!(f, "{line}")?;
    }
    f.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceProbe {
    pub variances: Vec<f64>,
    pub min: f64,
    pub median: f64,
}

/// Per-slot variance of `∂p₁/∂θ_k` over random parameter draws, for one fixed
/// seeded amplitude-encoded input.
pub fn gradient_variance_probe(spec: &AnsatzSpec, n_draws: usize, seed: u64) -> Result<VarianceProbe> {
    if n_draws < 2 {
        return Err(Error::invalid("variance needs at least 2 draws"));
    }
    let encoding = EncodingSpec::new(crate::encoding::EncodingKind::Amplitude, spec.n_qubits);
    let model = Model::new(&TrainConfig::new(encoding, *spec))?;
    let mut rng = draw_rng(seed, u64::MAX);
    let x: Vec<f64> = (0..encoding.max_features())
        .map(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng))
        .collect();
    let input = encoding.encode(&x)?;
    let program = model.program();
    let grads = (0..n_draws as u64)
        .into_par_iter()
        .map(|i| {
            let params = init_params(model.n_params(), &mut draw_rng(seed, i));
            Ok(model.prob_and_gradient(&program, &params, &input)?.1)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let n = n_draws as f64;
    let variances: Vec<f64> = (0..model.n_params())
        .map(|k| {
            let mean = grads.iter().map(|g| g[k]).sum::<f64>() / n;
            grads.iter().map(|g| (g[k] - mean).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .collect();
    let mut sorted = variances.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len().is_multiple_of(2) { 0.5 * (sorted[mid - 1] + sorted[mid]) } else { sorted[mid] };
    Ok(VarianceProbe { min: sorted[0], median, variances })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{Angle, CircuitBuilder, GateOp};
    use crate::encoding::EncodingKind;
    use crate::noise::NoiseKind;

    fn amp_config(name: &str) -> TrainConfig {
        TrainConfig::new(EncodingSpec::new(EncodingKind::Amplitude, 8), AnsatzSpec::parse(name, 8).unwrap())
    }

    fn random_batch(n: usize, seed: u64) -> Vec<FeatureRecord> {
        crate::data::synthesize_gaussians(256, n.div_ceil(2), 8.0, seed).unwrap().into_iter().take(n).collect()
    }

    fn random_params(n: usize, seed: u64) -> Vec<f64> {
        init_params(n, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn bce_examples() {
        assert!((bce_loss(&[0.5], &[1]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_loss(&[1.0 - 1e-12], &[1]).unwrap() < 1e-11);
        let expected = -0.5 * (0.9f64.ln() + 0.8f64.ln());
        assert!((bce_loss(&[0.9, 0.2], &[1, 0]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.1643).abs() < 1e-4);
        assert!(bce_loss(&[0.0, 1.0], &[1, 0]).unwrap().is_finite());
        assert!(bce_loss(&[0.5], &[1, 0]).is_err());
        assert!(bce_loss(&[], &[]).is_err());
        assert!(bce_loss(&[0.5], &[2]).is_err());
    }

    #[test]
    fn sgd_examples() {
        assert_eq!(sgd_step(&[1.0, 2.0], &[0.0, 0.0], 0.3).unwrap(), vec![1.0, 2.0]);
        assert!((sgd_step(&[1.0], &[2.0], 0.1).unwrap()[0] - 0.8).abs() < 1e-15);
        let twice = sgd_step(&sgd_step(&[1.0], &[0.5], 0.1).unwrap(), &[0.5], 0.1).unwrap();
        let once = sgd_step(&[1.0], &[1.0], 0.1).unwrap();
        assert!((twice[0] - once[0]).abs() < 1e-15);
        assert!(sgd_step(&[1.0], &[1.0, 2.0], 0.1).is_err());
    }

    #[test]
    fn zero_params_on_first_basis_state_read_zero() {
        let mut x = vec![0.0; 256];
        x[0] = 1.0;
        let cfg = amp_config("a1-nopool");
        let n = build_qcnn(&cfg.ansatz).unwrap().n_params();
        assert!(predict_prob(&cfg, &vec![0.0; n], &x).unwrap().abs() < 1e-15);
    }

    #[test]
    fn zero_noise_matches_noiseless_prediction() {
        let mut cfg = amp_config("a3-nopool");
        let data = random_batch(3, 1);
        let params = random_params(12, 2);
        let clean: Vec<f64> = data.iter().map(|r| predict_prob(&cfg, &params, &r.features).unwrap()).collect();
        for kind in NoiseKind::ALL {
            cfg.noise = Some(NoiseSpec::new(kind, 0.0).unwrap());
            for (r, c) in data.iter().zip(&clean) {
                let p = predict_prob(&cfg, &params, &r.features).unwrap();
                assert!((p - c).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn single_qubit_shift_rule_matches_analytic_derivative() {
        // p1 = sin²(θ/2) for Ry(θ)|0>, so dp/dθ = sin(θ)/2.
        let mut b = CircuitBuilder::new(1);
        let s = b.alloc_params(1);
        b.gate(GateOp::single(GateKind::Ry, 0, vec![Angle::Slot(s)]).unwrap()).unwrap();
        let circuit = b.build().unwrap();
        let program = Program::new(&circuit);
        let cfg = amp_config("a1-nopool");
        let mut model = Model::new(&cfg).unwrap();
        model.qcnn.circuit = circuit.clone();
        model.qcnn.readout = 0;
        let theta = 0.7;
        let (p, g) = model.shift_gradient(&program, &[theta], &StateVector::zero(1)).unwrap();
        assert!((p - (theta / 2.0).sin().powi(2)).abs() < 1e-15);
        assert!((g[0] - theta.sin() / 2.0).abs() < 1e-14);
    }

    #[test]
    fn gradient_vanishes_at_stationary_point() {
        // Ry(θ)|0> on one sample of each class: the mean loss is stationary at θ = π/2.
        let mut b = CircuitBuilder::new(1);
        let s = b.alloc_params(1);
        b.gate(GateOp::single(GateKind::Ry, 0, vec![Angle::Slot(s)]).unwrap()).unwrap();
        let circuit = b.build().unwrap();
        let cfg = amp_config("a1-nopool");
        let mut model = Model::new(&cfg).unwrap();
        model.qcnn.circuit = circuit;
        model.qcnn.readout = 0;
        let zero = StateVector::zero(1);
        let (_, g) = model.batch_gradient(&[std::f64::consts::FRAC_PI_2], &[(&zero, 0), (&zero, 1)]).unwrap();
        assert!(g[0].abs() < 1e-8, "{}", g[0]);
        let (_, g) = model.batch_gradient(&[1.0], &[(&zero, 0), (&zero, 1)]).unwrap();
        assert!(g[0].abs() > 1e-3);
    }

    #[test]
    fn shift_rule_matches_finite_differences_on_a3() {
        let cfg = amp_config("a3-nopool");
        let batch = random_batch(4, 3);
        let params = random_params(12, 4);
        let shift = gradient(&cfg, &params, &batch).unwrap();
        let fd_cfg = TrainConfig { gradient_mode: GradientMode::FiniteDifference, ..cfg };
        let fd = gradient(&fd_cfg, &params, &batch).unwrap();
        for (a, b) in shift.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn four_term_rule_is_needed_for_controlled_rotations() {
        let cfg = amp_config("a1-pool");
        let batch = random_batch(2, 5);
        let params = random_params(12, 6);
        let exact = gradient(&TrainConfig { gradient_mode: GradientMode::FiniteDifference, ..cfg.clone() }, &params, &batch).unwrap();
        let shift = gradient(&cfg, &params, &batch).unwrap();
        let two_term = gradient(&TrainConfig { two_term_only: true, ..cfg }, &params, &batch).unwrap();
        let err = |g: &[f64]| g.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err(&shift) < 1e-5);
        assert!(err(&two_term) > 1e-3, "two-term rule unexpectedly exact: {}", err(&two_term));
    }

    #[test]
    fn noisy_gradient_matches_finite_differences() {
        for (name, kind) in [("a3-nopool", NoiseKind::Depolarizing), ("a2-pool", NoiseKind::AmplitudeDamping)] {
            let mut cfg = amp_config(name);
            cfg.noise = Some(NoiseSpec::new(kind, 0.05).unwrap());
            let n = build_qcnn(&cfg.ansatz).unwrap().n_params();
            let batch = random_batch(2, 7);
            let params = random_params(n, 8);
            let shift = gradient(&cfg, &params, &batch).unwrap();
            let fd = gradient(&TrainConfig { gradient_mode: GradientMode::FiniteDifference, ..cfg }, &params, &batch).unwrap();
            for (a, b) in shift.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-5, "{name}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn gradient_rejects_empty_batch_and_bad_lengths() {
        let cfg = amp_config("a3-nopool");
        assert!(gradient(&cfg, &random_params(12, 0), &[]).is_err());
        assert!(gradient(&cfg, &random_params(11, 0), &random_batch(2, 0)).is_err());
    }

    #[test]
    fn evaluate_tie_rule_and_order_invariance() {
        assert_eq!(accuracy(&[0.5, 0.5, 0.5, 0.5], &[1, 0, 1, 1]), 0.75);
        assert_eq!(accuracy(&[0.0, 1.0], &[0, 1]), 1.0);
        let cfg = amp_config("a3-nopool");
        let data = random_batch(6, 9);
        let params = random_params(12, 1);
        let a = evaluate(&cfg, &params, &data).unwrap();
        let mut rev = data.clone();
        rev.reverse();
        let b = evaluate(&cfg, &params, &rev).unwrap();
        assert_eq!(a.accuracy, b.accuracy);
        assert!(a.probs.iter().all(|p| (0.0..=1.0).contains(p)));
        assert!(evaluate(&cfg, &params, &[]).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = amp_config("a3-nopool");
        cfg.learning_rate = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = amp_config("a3-nopool");
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = amp_config("a3-nopool");
        cfg.encoding.n_qubits = 10;
        assert!(cfg.validate().is_err());
        let json = serde_json::to_string(&amp_config("a3-nopool")).unwrap();
        assert_eq!(serde_json::from_str::<TrainConfig>(&json).unwrap(), amp_config("a3-nopool"));
    }

    #[test]
    fn zero_epochs_reports_initial_state() {
        let mut cfg = amp_config("a3-nopool");
        cfg.epochs = 0;
        let data = random_batch(8, 2);
        let r = train(&cfg, &data[..6], &data[6..]).unwrap();
        assert_eq!(r.losses.len(), 1);
        assert_eq!(r.final_params, random_params(12, cfg.seed));
        assert!((0.0..=1.0).contains(&r.train_acc));
        assert_eq!(r.architecture.param_count, 12);
    }

    #[test]
    fn training_rejects_invalid_labels_and_empty_sets() {
        let cfg = amp_config("a3-nopool");
        let mut data = random_batch(4, 2);
        assert!(train(&cfg, &data[..2], &[]).is_err());
        data[0].label = 3;
        assert!(train(&cfg, &data[..2], &data[2..]).is_err());
    }

    #[test]
    fn short_training_reduces_loss() {
        let mut cfg = amp_config("a3-nopool");
        cfg.epochs = 5;
        cfg.batch_size = 8;
        let data = random_batch(40, 11);
        let r = train(&cfg, &data[..32], &data[32..]).unwrap();
        assert_eq!(r.losses.len(), 6);
        assert!(r.losses.iter().all(|l| l.is_finite()));
        assert!(r.losses[5] < r.losses[0], "{:?}", r.losses);
    }

    #[test]
    fn intermediate_states_follow_the_discard_schedule() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = amp_config("a3-pool");
        let params = random_params(18, 3);
        let data = random_batch(5, 4);
        for (layer, qubits) in [(1, vec![0, 2, 4, 6]), (2, vec![0, 4]), (3, vec![4])] {
            let path = dir.path().join(format!("l{layer}.csv"));
            export_intermediate_states(&cfg, &params, &data, layer, &path).unwrap();
            let text = std::fs::read_to_string(&path).unwrap();
            let lines: Vec<&str> = text.lines().collect();
            assert_eq!(lines.len(), 6);
            let expected: String =
                std::iter::once("label".to_string()).chain(qubits.iter().map(|q| format!("q{q}_z,q{q}_p1"))).collect::<Vec<_>>().join(",");
            assert_eq!(lines[0], expected);
            assert!(lines[1..].iter().all(|l| l.split(',').count() == 1 + 2 * qubits.len()));
        }
        assert!(export_intermediate_states(&cfg, &params, &data, 4, &dir.path().join("x.csv")).is_err());
        assert!(export_intermediate_states(&cfg, &params, &data, 0, &dir.path().join("x.csv")).is_err());
    }

    #[test]
    fn variance_probe_is_deterministic_and_nonnegative() {
        let spec = AnsatzSpec::parse("a1-nopool", 8).unwrap();
        let a = gradient_variance_probe(&spec, 20, 1).unwrap();
        assert_eq!(a, gradient_variance_probe(&spec, 20, 1).unwrap());
        assert!(a.variances.iter().all(|v| *v >= 0.0));
        assert!(a.min <= a.median);
        assert!(gradient_variance_probe(&spec, 1, 1).is_err());
    }

    #[test]
    fn variance_probe_baseline_for_conv1() {
        let spec = AnsatzSpec::parse("a1-nopool", 8).unwrap();
        let probe = gradient_variance_probe(&spec, 200, 0).unwrap();
        assert!(probe.median > 1e-6, "{probe:?}");
    }
}
