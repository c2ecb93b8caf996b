//! Classical vector → quantum state encodings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::circuit::{rx, ry, Mat2, StateVector};
use crate::error::{Error, Result};
use crate::num::{kron_vec, C64, ONE, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodingKind {
    Amplitude,
    Angle,
    DenseAngle,
}

impl EncodingKind {
    pub fn name(self) -> &'static str {
        match self {
            EncodingKind::Amplitude => "amplitude",
            EncodingKind::Angle => "angle",
            EncodingKind::DenseAngle => "dense-angle",
        }
    }
}

impl fmt::Display for EncodingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EncodingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "amplitude" => Ok(EncodingKind::Amplitude),
            "angle" => Ok(EncodingKind::Angle),
            "dense-angle" | "dense" => Ok(EncodingKind::DenseAngle),
            _ => Err(Error::invalid(format!("unknown encoding `{s}` (amplitude|angle|dense-angle)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub kind: EncodingKind,
    pub n_qubits: usize,
}

impl EncodingSpec {
    pub fn new(kind: EncodingKind, n_qubits: usize) -> Self {
        Self { kind, n_qubits }
    }

    /// Largest feature dimension the encoding accepts.
    pub fn max_features(&self) -> usize {
        match self.kind {
            EncodingKind::Amplitude => 1 << self.n_qubits,
            EncodingKind::Angle => self.n_qubits,
            EncodingKind::DenseAngle => 2 * self.n_qubits,
        }
    }

    pub fn accepts_dim(&self, dim: usize) -> bool {
        match self.kind {
            EncodingKind::Amplitude => dim >= 1 && dim <= self.max_features(),
            _ => dim == self.max_features(),
        }
    }

    pub fn encode(&self, x: &[f64]) -> Result<StateVector> {
        if !self.accepts_dim(x.len()) {
            return Err(Error::invalid(format!(
                "{} encoding on {} qubits cannot take {} features",
                self.kind,
                self.n_qubits,
                x.len()
            )));
        }
        match self.kind {
            EncodingKind::Amplitude => amplitude_encode(x, self.n_qubits),
            EncodingKind::Angle => angle_encode(x),
            EncodingKind::DenseAngle => dense_angle_encode(x),
        }
    }
}

/// Qubits needed to amplitude-encode `dim` features.
pub fn amplitude_qubits(dim: usize) -> usize {
    dim.max(1).next_power_of_two().trailing_zeros() as usize
}

/// `x / ‖x‖₂`, zero-padded to `2^n` amplitudes.
pub fn amplitude_encode(x: &[f64], n_qubits: usize) -> Result<StateVector> {
    let dim = 1usize << n_qubits;
    if x.len() > dim {
        return Err(Error::invalid(format!("{} features do not fit in {n_qubits} qubits", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite feature value"));
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::invalid("cannot amplitude-encode an all-zero vector"));
    }
    let mut amps = vec![ZERO; dim];
    for (a, v) in amps.iter_mut().zip(x) {
        *a = C64::new(v / norm, 0.0);
    }
    Ok(StateVector::from_amplitudes_unchecked(n_qubits, amps))
}

fn apply_to_zero(m: &Mat2) -> [C64; 2] {
    [m[0][0], m[1][0]]
}

fn product_state(factors: impl Iterator<Item = [C64; 2]>) -> Result<StateVector> {
    let mut amps = vec![ONE];
    let mut n = 0;
    for f in factors {
        amps = kron_vec(&amps, &f);
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("cannot encode an empty vector"));
    }
    Ok(StateVector::from_amplitudes_unchecked(n, amps))
}

/// `⊗_i Ry(x_i)|0>`, one qubit per feature; each `x_i` must lie in `[0, π)`.
pub fn angle_encode(x: &[f64]) -> Result<StateVector> {
    if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| !(0.0..std::f64::consts::PI).contains(*v)) {
        return Err(Error::invalid(format!("angle feature {i} = {v} outside [0, π)")));
    }
    product_state(x.iter().map(|&v| apply_to_zero(&ry(v))))
}

/// Two features per qubit: qubit `j` gets `Ry(x[N/2 + j]) Rx(x[j]) |0>`.
pub fn dense_angle_encode(x: &[f64]) -> Result<StateVector> {
    if !x.len().is_multiple_of(2) {
        return Err(Error::invalid(format!("dense angle encoding needs an even length, got {}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite feature value"));
    }
    let half = x.len() / 2;
    product_state((0..half).map(|j| {
        let after_x = apply_to_zero(&rx(x[j]));
        let m = ry(x[half + j]);
        [m[0][0] * after_x[0] + m[0][1] * after_x[1], m[1][0] * after_x[0] + m[1][1] * after_x[1]]
    }))
}
