//! Circuit execution.
//!
//! [`run_statevector`] and [`run_density`] are the reference backends: the
//! first ignores noise points and defers discards, the second keeps the full
//! `2^n x 2^n` matrix and applies channels at every firing noise point.
//!
//! [`Program`] is the evaluator used for training. It stays on the pure
//! statevector until a channel has to act on a qubit that is still needed,
//! then switches to a density matrix over the qubits that still matter: a
//! qubit whose next event is its discard is traced out at that point, and the
//! channel on it is skipped. For trace-preserving channels that is exact.

use super::gates::target_block;
use super::state::{reduce_pure, Mat2};
use super::{Circuit, DensityMatrix, GateKind, Instruction, LayerTag, StateVector};
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::num::{partial_trace, ComplexMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ResolvedGate {
    pub kind: GateKind,
    pub control: Option<usize>,
    pub targets: [usize; 2],
    pub angles: [f64; 3],
}

impl ResolvedGate {
    fn block(&self) -> Option<Mat2> {
        target_block(self.kind, &self.angles)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Step {
    Gate(ResolvedGate),
    Noise(LayerTag),
    Discard(usize),
}

trait GateSink {
    fn one(&mut self, q: usize, m: &Mat2);
    fn ctrl(&mut self, c: usize, t: usize, m: &Mat2);
    fn cz(&mut self, a: usize, b: usize);
}

impl GateSink for StateVector {
    fn one(&mut self, q: usize, m: &Mat2) {
        self.apply_1q(q, m)
    }
    fn ctrl(&mut self, c: usize, t: usize, m: &Mat2) {
        self.apply_controlled(c, t, m)
    }
    fn cz(&mut self, a: usize, b: usize) {
        self.apply_cz(a, b)
    }
}

impl GateSink for DensityMatrix {
    fn one(&mut self, q: usize, m: &Mat2) {
        self.apply_1q(q, m)
    }
    fn ctrl(&mut self, c: usize, t: usize, m: &Mat2) {
        self.apply_controlled(c, t, m)
    }
    fn cz(&mut self, a: usize, b: usize) {
        self.apply_cz(a, b)
    }
}

fn apply_gate(sink: &mut impl GateSink, g: &ResolvedGate, map: impl Fn(usize) -> usize) {
    if g.kind == GateKind::Cz {
        sink.cz(map(g.targets[0]), map(g.targets[1]));
        return;
    }
    let block = g.block().expect("non-CZ gate");
    match g.control {
        Some(c) => sink.ctrl(map(c), map(g.targets[0]), &block),
        None => sink.one(map(g.targets[0]), &block),
    }
}

fn resolve(circuit: &Circuit, params: &[f64]) -> Result<Vec<Step>> {
    if params.len() != circuit.n_params() {
        return Err(Error::invalid(format!(
            "circuit takes {} parameters, got {}",
            circuit.n_params(),
            params.len()
        )));
    }
    circuit
        .instructions()
        .iter()
        .map(|ins| {
            Ok(match ins {
                Instruction::Gate(g) => {
                    let mut targets = [0; 2];
                    targets[..g.targets.len()].copy_from_slice(&g.targets);
                    Step::Gate(ResolvedGate {
                        kind: g.kind,
                        control: g.control,
                        targets,
                        angles: g.resolve_angles(params)?,
                    })
                }
                Instruction::Noise(tag) => Step::Noise(*tag),
                Instruction::Discard(q) => Step::Discard(*q),
            })
        })
        .collect()
}

/// Applies every gate in order to `input`. Noise points are ignored and
/// discards deferred; read marginals from the result.
pub fn run_statevector(c: &Circuit, params: &[f64], input: &StateVector) -> Result<StateVector> {
    if input.n_qubits() != c.n_qubits() {
        return Err(Error::invalid(format!(
            "circuit has {} qubits, input state has {}",
            c.n_qubits(),
            input.n_qubits()
        )));
    }
    let mut state = input.clone();
    for step in resolve(c, params)? {
        if let Step::Gate(g) = step {
            apply_gate(&mut state, &g, |q| q);
        }
    }
    Ok(state)
}

/// Full density-matrix execution. Discarded qubits stay in the matrix; a
/// firing noise point applies the channel to every qubit not yet discarded.
pub fn run_density(
    c: &Circuit,
    params: &[f64],
    input: &DensityMatrix,
    noise: Option<&NoiseModel>,
) -> Result<DensityMatrix> {
    if input.n_qubits() != c.n_qubits() {
        return Err(Error::invalid(format!(
            "circuit has {} qubits, input state has {}",
            c.n_qubits(),
            input.n_qubits()
        )));
    }
    let mut rho = input.clone();
    let mut active = vec![true; c.n_qubits()];
    for step in resolve(c, params)? {
        match step {
            Step::Gate(g) => apply_gate(&mut rho, &g, |q| q),
            Step::Noise(tag) => {
                if let Some(model) = noise.filter(|m| m.fires_at(tag)) {
                    for q in (0..c.n_qubits()).filter(|&q| active[q]) {
                        model.apply_in_place(&mut rho, q);
                    }
                }
            }
            Step::Discard(q) => active[q] = false,
        }
    }
    Ok(rho)
}

/// Simulator state inside a [`Program`] run.
#[derive(Debug, Clone)]
pub enum Register {
    /// Whole register as a statevector; discarded qubits are flagged, not removed.
    Pure { state: StateVector, discarded: Vec<bool> },
    /// Density matrix over `qubits` (ascending global indices) only.
    Mixed { qubits: Vec<usize>, rho: DensityMatrix },
}

impl Register {
    fn local(qubits: &[usize], q: usize) -> usize {
        qubits.binary_search(&q).expect("qubit present in reduced register")
    }

    /// Global indices of the qubits still in play.
    pub fn active_qubits(&self) -> Vec<usize> {
        match self {
            Register::Pure { discarded, .. } => (0..discarded.len()).filter(|&q| !discarded[q]).collect(),
            Register::Mixed { qubits, .. } => qubits.clone(),
        }
    }

    /// Probability of reading `|1>` on global qubit `q`.
    pub fn prob_one(&self, q: usize) -> f64 {
        match self {
            Register::Pure { state, .. } => state.prob_one(q),
            Register::Mixed { qubits, rho } => rho.prob_one(Self::local(qubits, q)),
        }
    }

    /// Single-qubit reduced density matrix of global qubit `q`.
    pub fn marginal(&self, q: usize) -> Result<ComplexMatrix> {
        match self {
            Register::Pure { state, .. } => state.reduced(&[q]),
            Register::Mixed { qubits, rho } => {
                let local = qubits
                    .binary_search(&q)
                    .map_err(|_| Error::invalid(format!("qubit {q} has been discarded")))?;
                rho.reduced(&[local])
            }
        }
    }

    /// Density matrix of the active qubits.
    pub fn active_density(&self) -> Result<DensityMatrix> {
        match self {
            Register::Pure { state, discarded } => {
                let keep: Vec<usize> = (0..discarded.len()).filter(|&q| !discarded[q]).collect();
                let m = reduce_pure(state.amplitudes(), state.n_qubits(), &keep)?;
                Ok(DensityMatrix::from_matrix_unchecked(keep.len(), m))
            }
            Register::Mixed { rho, .. } => Ok(rho.clone()),
        }
    }

    /// Switches to a density matrix over `keep`, tracing out every other qubit.
    fn make_mixed(&mut self, keep: &[usize]) {
        match self {
            Register::Pure { state, .. } => {
                let m = reduce_pure(state.amplitudes(), state.n_qubits(), keep).expect("valid keep set");
                let rho = DensityMatrix::from_matrix_unchecked(keep.len(), m);
                *self = Register::Mixed { qubits: keep.to_vec(), rho };
            }
            Register::Mixed { qubits, rho } => {
                if qubits.as_slice() == keep {
                    return;
                }
                let local: Vec<usize> = keep.iter().map(|&q| Register::local(qubits, q)).collect();
                let reduced = partial_trace(rho.matrix(), qubits.len(), &local).expect("valid keep set");
                *rho = DensityMatrix::from_matrix_unchecked(keep.len(), reduced);
                *qubits = keep.to_vec();
            }
        }
    }
}

/// Reusable evaluator for one circuit.
#[derive(Debug, Clone)]
pub struct Program<'c> {
    circuit: &'c Circuit,
    /// For noise instructions: per qubit, whether the channel has any effect
    /// on what follows (false when the qubit's next event is a discard).
    live: Vec<Vec<bool>>,
}

impl<'c> Program<'c> {
    pub fn new(circuit: &'c Circuit) -> Self {
        let n = circuit.n_qubits();
        let ins = circuit.instructions();
        let live = ins
            .iter()
            .enumerate()
            .map(|(i, inst)| {
                if !matches!(inst, Instruction::Noise(_)) {
                    return Vec::new();
                }
                (0..n)
                    .map(|q| {
                        for later in &ins[i + 1..] {
                            match later {
                                Instruction::Discard(d) if *d == q => return false,
                                Instruction::Gate(g) if g.qubits().any(|x| x == q) => return true,
                                _ => {}
                            }
                        }
                        true
                    })
                    .collect()
            })
            .collect();
        Self { circuit, live }
    }

    pub fn circuit(&self) -> &'c Circuit {
        self.circuit
    }

    pub(crate) fn resolve(&self, params: &[f64]) -> Result<Vec<Step>> {
        resolve(self.circuit, params)
    }

    pub fn start(&self, input: StateVector) -> Result<Register> {
        if input.n_qubits() != self.circuit.n_qubits() {
            return Err(Error::invalid(format!(
                "circuit has {} qubits, input state has {}",
                self.circuit.n_qubits(),
                input.n_qubits()
            )));
        }
        let discarded = vec![false; input.n_qubits()];
        Ok(Register::Pure { state: input, discarded })
    }

    /// Executes instruction `idx` (already resolved as `step`) on `reg`.
    pub(crate) fn step(&self, reg: &mut Register, idx: usize, step: &Step, noise: Option<&NoiseModel>) {
        match step {
            Step::Gate(g) => match reg {
                Register::Pure { state, .. } => apply_gate(state, g, |q| q),
                Register::Mixed { qubits, rho } => apply_gate(rho, g, |q| Register::local(qubits, q)),
            },
            Step::Noise(tag) => {
                let Some(model) = noise.filter(|m| m.fires_at(*tag)) else { return };
                let targets: Vec<usize> = reg
                    .active_qubits()
                    .into_iter()
                    .filter(|&q| self.live[idx][q])
                    .collect();
                if targets.is_empty() {
                    return;
                }
                reg.make_mixed(&targets);
                if let Register::Mixed { qubits, rho } = reg {
                    for q in targets {
                        model.apply_in_place(rho, Register::local(qubits, q));
                    }
                }
            }
            Step::Discard(q) => match reg {
                Register::Pure { discarded, .. } => discarded[*q] = true,
                Register::Mixed { qubits, rho } => {
                    let Ok(local) = qubits.binary_search(q) else { return };
                    let keep: Vec<usize> = (0..qubits.len()).filter(|&l| l != local).collect();
                    let reduced = partial_trace(rho.matrix(), qubits.len(), &keep).expect("valid keep set");
                    qubits.remove(local);
                    *rho = DensityMatrix::from_matrix_unchecked(qubits.len(), reduced);
                }
            },
        }
    }

    pub(crate) fn run_steps(
        &self,
        reg: &mut Register,
        steps: &[Step],
        range: std::ops::Range<usize>,
        noise: Option<&NoiseModel>,
    ) {
        for idx in range {
            self.step(reg, idx, &steps[idx], noise);
        }
    }

    /// Runs the first `end` instructions.
    pub fn run_until(
        &self,
        params: &[f64],
        input: StateVector,
        noise: Option<&NoiseModel>,
        end: usize,
    ) -> Result<Register> {
        let steps = self.resolve(params)?;
        let mut reg = self.start(input)?;
        self.run_steps(&mut reg, &steps, 0..end.min(steps.len()), noise);
        Ok(reg)
    }

    pub fn run(&self, params: &[f64], input: StateVector, noise: Option<&NoiseModel>) -> Result<Register> {
        self.run_until(params, input, noise, usize::MAX)
    }
}
