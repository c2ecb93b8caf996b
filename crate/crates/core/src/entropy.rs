//! Von Neumann entropy of single-qubit marginals and the Monte-Carlo studies
//! built on it.
//!
//! Every draw gets its own RNG stream derived from the root seed and the draw
//! index, so results do not depend on how draws are spread over threads.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{build_conv_unit, build_qcnn, init_params, AnsatzSpec, Qcnn};
use crate::circuit::{run_statevector, Program, StateVector};
use crate::error::{Error, Result};
use crate::num::{eig_hermitian_2x2, ComplexMatrix};

const EIGEN_CLAMP: f64 = 1e-12;

/// `−Σ λ log₂ λ` of a 2x2 density matrix, in bits.
pub fn von_neumann_entropy(rho: &ComplexMatrix) -> Result<f64> {
    let tr = rho.trace();
    if rho.rows() != 2 || rho.cols() != 2 || (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
        return Err(Error::invalid("entropy needs a unit-trace 2x2 density matrix"));
    }
    let spectrum = eig_hermitian_2x2(rho)?;
    if spectrum.eigenvalues.iter().any(|&l| !(-1e-9..=1.0 + 1e-9).contains(&l)) {
        return Err(Error::invalid("density matrix has eigenvalues outside [0, 1]"));
    }
    Ok(spectrum
        .eigenvalues
        .iter()
        .map(|&l| l.clamp(0.0, 1.0))
        .filter(|&l| l > EIGEN_CLAMP)
        .map(|l| -l * l.log2())
        .sum())
}

/// RNG for draw `index` under `seed`.
pub fn draw_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropySummary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropySample {
    pub id: String,
    pub values: Vec<f64>,
}

impl EntropySample {
    pub fn summary(&self) -> EntropySummary {
        let n = self.values.len();
        if n == 0 {
            return EntropySummary { n, mean: 0.0, std: 0.0, min: 0.0, max: 0.0 };
        }
        let mean = self.values.iter().sum::<f64>() / n as f64;
        let var = self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        EntropySummary { n, mean, std: var.sqrt(), min, max }
    }

    /// Counts over `bins` equal-width bins on `[0, 1]`; out-of-range values
    /// land in the nearest end bin.
    pub fn histogram(&self, bins: usize) -> Result<Vec<(f64, f64, usize)>> {
        if bins < 2 {
            return Err(Error::invalid("histogram needs at least 2 bins"));
        }
        let mut counts = vec![0usize; bins];
        for &v in &self.values {
            let b = ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Ok(counts
            .into_iter()
            .enumerate()
            .map(|(i, c)| (i as f64 / bins as f64, (i + 1) as f64 / bins as f64, c))
            .collect())
    }
}

/// Entropy of qubit `a` after running conv unit `conv_id` with `params` on `|00>`.
pub fn conv_unit_entropy(conv_id: u8, params: &[f64]) -> Result<f64> {
    let c = build_conv_unit(conv_id)?;
    let out = run_statevector(&c, params, &StateVector::zero(2))?;
    von_neumann_entropy(&out.reduced(&[0])?)
}

pub fn conv_unit_entropy_sample(conv_id: u8, n_samples: usize, seed: u64) -> Result<EntropySample> {
    let circuit = build_conv_unit(conv_id)?;
    let values = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let params = init_params(circuit.n_params(), &mut draw_rng(seed, i));
            let out = run_statevector(&circuit, &params, &StateVector::zero(2))?;
            von_neumann_entropy(&out.reduced(&[0])?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(EntropySample { id: format!("conv{conv_id}"), values })
}

/// Readout-qubit entropy after each layer of `qcnn` run noiselessly from `|0...0>`.
pub fn layerwise_entropies(qcnn: &Qcnn, params: &[f64]) -> Result<Vec<f64>> {
    let program = Program::new(&qcnn.circuit);
    let steps = program.resolve(params)?;
    let mut reg = program.start(StateVector::zero(qcnn.circuit.n_qubits()))?;
    let mut start = 0;
    let mut out = Vec::with_capacity(qcnn.n_layers());
    for &end in &qcnn.layer_ends {
        program.run_steps(&mut reg, &steps, start..end, None);
        out.push(von_neumann_entropy(&reg.marginal(qcnn.readout)?)?);
        start = end;
    }
    Ok(out)
}

/// One sample per layer, ids `"{ansatz}-layer{k}"`.
pub fn qcnn_layerwise_entropy_sample(spec: &AnsatzSpec, n_samples: usize, seed: u64) -> Result<Vec<EntropySample>> {
    let qcnn = build_qcnn(spec)?;
    let draws = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let params = init_params(qcnn.n_params(), &mut draw_rng(seed, i));
            layerwise_entropies(&qcnn, &params)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok((0..qcnn.n_layers())
        .map(|layer| EntropySample {
            id: format!("{}-layer{}", spec.name(), layer + 1),
            values: draws.iter().map(|d| d[layer]).collect(),
        })
        .collect())
}

/// Writes `bin_lo,bin_hi,count` rows.
pub fn export_histogram(sample: &EntropySample, bins: usize, path: &Path) -> Result<()> {
    let hist = sample.histogram(bins)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "bin_lo,bin_hi,count")?;
    for (lo, hi, count) in hist {
        writeln!(f, "{lo},{hi},{count}")?;
    }
    f.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub id: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

impl From<&EntropySample> for SummaryRecord {
    fn from(s: &EntropySample) -> Self {
        let sum = s.summary();
        Self { id: s.id.clone(), n: sum.n, mean: sum.mean, std: sum.std }
    }
}
