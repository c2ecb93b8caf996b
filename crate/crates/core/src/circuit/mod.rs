//! Parameterised circuit representation with statevector and density-matrix
//! execution.
//!
//! A [`Circuit`] is an ordered list of [`Instruction`]s: gates whose angles
//! are either fixed or bound to a parameter slot, noise points tagged with the
//! layer they follow, and discard markers. Several gates may share a slot;
//! that is how weight sharing inside a convolution layer is expressed.

mod exec;
mod gates;
mod state;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use exec::{run_density, run_statevector, Program, Register};
pub use gates::{gate_matrix, hadamard, pauli_x, rx, ry, rz, u3, Angle, GateKind, GateOp};
pub use state::{DensityMatrix, Mat2, StateVector, NORM_TOL};

pub(crate) use exec::Step;

/// Which layer a noise point follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerTag {
    Conv(usize),
    Pool(usize),
}

impl fmt::Display for LayerTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerTag::Conv(k) => write!(f, "conv-layer-{k}"),
            LayerTag::Pool(k) => write!(f, "pool-layer-{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Instruction {
    Gate(GateOp),
    Noise(LayerTag),
    Discard(usize),
}

/// An immutable, validated circuit. Build one with [`CircuitBuilder`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    n_qubits: usize,
    n_params: usize,
    instructions: Vec<Instruction>,
}

impl Circuit {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn gates(&self) -> impl Iterator<Item = &GateOp> {
        self.instructions.iter().filter_map(|i| match i {
            Instruction::Gate(g) => Some(g),
            _ => None,
        })
    }

    /// Qubits not yet discarded before instruction position `upto`.
    pub fn active_qubits(&self, upto: usize) -> Vec<usize> {
        let mut active = vec![true; self.n_qubits];
        for ins in &self.instructions[..upto.min(self.instructions.len())] {
            if let Instruction::Discard(q) = ins {
                active[*q] = false;
            }
        }
        (0..self.n_qubits).filter(|&q| active[q]).collect()
    }

    /// Noise points in program order.
    pub fn noise_markers(&self) -> Vec<(usize, LayerTag)> {
        self.instructions
            .iter()
            .enumerate()
            .filter_map(|(i, ins)| match ins {
                Instruction::Noise(tag) => Some((i, *tag)),
                _ => None,
            })
            .collect()
    }

    /// For each parameter slot, the `(instruction index, angle index)` pairs bound to it.
    pub fn slot_occurrences(&self) -> Vec<Vec<(usize, usize)>> {
        let mut occ = vec![Vec::new(); self.n_params];
        for (i, ins) in self.instructions.iter().enumerate() {
            if let Instruction::Gate(g) = ins {
                for (k, a) in g.angles.iter().enumerate() {
                    if let Angle::Slot(s) = a {
                        occ[*s].push((i, k));
                    }
                }
            }
        }
        occ
    }

    /// Line-per-instruction text dump for debugging and golden tests.
    pub fn dump(&self) -> String {
        let mut out = format!("circuit qubits={} params={}\n", self.n_qubits, self.n_params);
        for ins in &self.instructions {
            match ins {
                Instruction::Gate(g) => {
                    out.push_str(g.kind.name());
                    if let Some(c) = g.control {
                        out.push_str(&format!(" c{c}"));
                    }
                    for t in &g.targets {
                        out.push_str(&format!(" q{t}"));
                    }
                    for a in &g.angles {
                        match a {
                            Angle::Fixed(v) => out.push_str(&format!(" {v}")),
                            Angle::Slot(s) => out.push_str(&format!(" p{s}")),
                        }
                    }
                }
                Instruction::Noise(tag) => out.push_str(&format!("noise {tag}")),
                Instruction::Discard(q) => out.push_str(&format!("discard q{q}")),
            }
            out.push('\n');
        }
        out
    }
}

/// Incremental circuit construction with discard-safety checks.
#[derive(Debug, Clone)]
pub struct CircuitBuilder {
    n_qubits: usize,
    n_params: usize,
    discarded: Vec<bool>,
    instructions: Vec<Instruction>,
}

impl CircuitBuilder {
    pub fn new(n_qubits: usize) -> Self {
        Self { n_qubits, n_params: 0, discarded: vec![false; n_qubits], instructions: Vec::new() }
    }

    /// Reserves `count` fresh parameter slots and returns the first index.
    pub fn alloc_params(&mut self, count: usize) -> usize {
        let first = self.n_params;
        self.n_params += count;
        first
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Instructions pushed so far.
    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn is_discarded(&self, qubit: usize) -> bool {
        self.discarded.get(qubit).copied().unwrap_or(false)
    }

    pub fn gate(&mut self, op: GateOp) -> Result<&mut Self> {
        op.validate()?;
        for q in op.qubits() {
            if q >= self.n_qubits {
                return Err(Error::invalid(format!("qubit {q} out of range for {} qubits", self.n_qubits)));
            }
            if self.discarded[q] {
                return Err(Error::invalid(format!("gate {} touches discarded qubit {q}", op.kind)));
            }
        }
        self.instructions.push(Instruction::Gate(op));
        Ok(self)
    }

    pub fn noise(&mut self, tag: LayerTag) -> &mut Self {
        self.instructions.push(Instruction::Noise(tag));
        self
    }

    pub fn discard(&mut self, qubit: usize) -> Result<&mut Self> {
        if qubit >= self.n_qubits {
            return Err(Error::invalid(format!("qubit {qubit} out of range")));
        }
        if self.discarded[qubit] {
            return Err(Error::invalid(format!("qubit {qubit} already discarded")));
        }
        self.discarded[qubit] = true;
        self.instructions.push(Instruction::Discard(qubit));
        Ok(self)
    }

    pub fn build(self) -> Result<Circuit> {
        let mut used = vec![false; self.n_params];
        for ins in &self.instructions {
            if let Instruction::Gate(g) = ins {
                for s in g.slots() {
                    if s >= self.n_params {
                        return Err(Error::invalid(format!("slot {s} >= n_params {}", self.n_params)));
                    }
                    used[s] = true;
                }
            }
        }
        if let Some(s) = used.iter().position(|u| !u) {
            return Err(Error::invalid(format!("parameter slot {s} is never used")));
        }
        Ok(Circuit { n_qubits: self.n_qubits, n_params: self.n_params, instructions: self.instructions })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discard_safety_is_enforced() {
        let mut b = CircuitBuilder::new(2);
        b.discard(1).unwrap();
        assert!(b.gate(GateOp::controlled(GateKind::Cnot, 0, 1, vec![]).unwrap()).is_err());
        assert!(b.discard(1).is_err());
        assert!(b.gate(GateOp::single(GateKind::H, 0, vec![]).unwrap()).is_ok());
    }

    #[test]
    fn unused_or_out_of_range_slots_are_rejected() {
        let mut b = CircuitBuilder::new(1);
        b.alloc_params(2);
        b.gate(GateOp::single(GateKind::Ry, 0, vec![Angle::Slot(0)]).unwrap()).unwrap();
        assert!(b.clone().build().is_err());
        b.gate(GateOp::single(GateKind::Ry, 0, vec![Angle::Slot(1)]).unwrap()).unwrap();
        assert!(b.clone().build().is_ok());
        b.gate(GateOp::single(GateKind::Ry, 0, vec![Angle::Slot(2)]).unwrap()).unwrap();
        assert!(b.build().is_err());
    }

    #[test]
    fn active_qubits_follow_discards() {
        let mut b = CircuitBuilder::new(8);
        for q in [1, 3, 5, 7] {
            b.discard(q).unwrap();
        }
        let c = b.build().unwrap();
        assert_eq!(c.active_qubits(0), (0..8).collect::<Vec<_>>());
        assert_eq!(c.active_qubits(c.len()), vec![0, 2, 4, 6]);
    }

    #[test]
    fn dump_is_one_line_per_instruction() {
        let mut b = CircuitBuilder::new(2);
        let p = b.alloc_params(1);
        b.gate(GateOp::controlled(GateKind::Crz, 1, 0, vec![Angle::Slot(p)]).unwrap()).unwrap();
        b.noise(LayerTag::Conv(1));
        b.gate(GateOp::single(GateKind::Rx, 0, vec![Angle::Fixed(0.5)]).unwrap()).unwrap();
        b.discard(1).unwrap();
        let dump = b.build().unwrap().dump();
        assert_eq!(dump, "circuit qubits=2 params=1\ncrz c1 q0 p0\nnoise conv-layer-1\nrx q0 0.5\ndiscard q1\n");
    }
}
