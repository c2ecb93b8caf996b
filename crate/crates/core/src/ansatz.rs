//! The nine two-qubit convolution units, the pooling unit, and the layered
//! QCNN built from them.
//!
//! Each layer acts on the currently active qubits `a0..a(k-1)` laid out on a
//! ring. The convolution unit is applied to `(a0,a1), (a2,a3), ...` and then to
//! `(a1,a2), (a3,a4), ..., (a(k-1),a0)`, every application sharing one block of
//! parameter slots. Half of the qubits are then pooled away: `a1, a3, ...` are
//! discarded and `a0, a2, ...` kept, except in the final two-qubit layer, which
//! discards `a0` and keeps `a1`. For eight qubits this leaves
//! `{0,2,4,6} -> {0,4} -> {4}`, so qubit 4 is the readout.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{Angle, Circuit, CircuitBuilder, GateKind, GateOp, LayerTag};
use crate::error::{Error, Result};

/// Per-application parameter counts of convolution units 1..=9.
pub const CONV_PARAMS: [usize; 9] = [2, 2, 4, 6, 6, 6, 10, 10, 15];
pub const POOL_PARAMS: usize = 2;
pub const SUPPORTED_QUBITS: [usize; 3] = [8, 10, 12];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvUnitSpec {
    pub id: u8,
    pub n_params: usize,
}

impl ConvUnitSpec {
    pub fn new(id: u8) -> Result<Self> {
        if !(1..=9).contains(&id) {
            return Err(Error::invalid(format!("convolution id {id} outside 1..=9")));
        }
        Ok(Self { id, n_params: CONV_PARAMS[id as usize - 1] })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub conv_id: u8,
    pub pooling: bool,
    pub n_qubits: usize,
}

impl AnsatzSpec {
    pub fn new(conv_id: u8, pooling: bool, n_qubits: usize) -> Result<Self> {
        ConvUnitSpec::new(conv_id)?;
        if !SUPPORTED_QUBITS.contains(&n_qubits) {
            return Err(Error::invalid(format!("unsupported qubit count {n_qubits} (8, 10 or 12)")));
        }
        Ok(Self { conv_id, pooling, n_qubits })
    }

    /// All eighteen configurations at `n_qubits`, pooling variants first.
    pub fn all(n_qubits: usize) -> Result<Vec<Self>> {
        let mut out = Vec::with_capacity(18);
        for pooling in [true, false] {
            for id in 1..=9 {
                out.push(Self::new(id, pooling, n_qubits)?);
            }
        }
        Ok(out)
    }

    /// Stable name, `a{id}-pool` or `a{id}-nopool`.
    pub fn name(&self) -> String {
        format!("a{}-{}", self.conv_id, if self.pooling { "pool" } else { "nopool" })
    }

    /// Parses a name such as `a3-nopool` with the given qubit count.
    pub fn parse(name: &str, n_qubits: usize) -> Result<Self> {
        let bad = || Error::invalid(format!("unknown ansatz `{name}` (expected a1..a9 with -pool or -nopool)"));
        let rest = name.strip_prefix('a').ok_or_else(bad)?;
        let (id, kind) = rest.split_once('-').ok_or_else(bad)?;
        let id: u8 = id.parse().map_err(|_| bad())?;
        let pooling = match kind {
            "pool" => true,
            "nopool" => false,
            _ => return Err(bad()),
        };
        if !(1..=9).contains(&id) {
            return Err(bad());
        }
        Self::new(id, pooling, n_qubits)
    }

    pub fn conv_unit(&self) -> ConvUnitSpec {
        ConvUnitSpec::new(self.conv_id).expect("validated id")
    }

    pub fn n_layers(&self) -> usize {
        layer_plan(self.n_qubits).len()
    }
}

impl fmt::Display for AnsatzSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for AnsatzSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s, 8)
    }
}

/// One layer of the discard schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSchedule {
    /// Active qubits at the start of the layer.
    pub active: Vec<usize>,
    pub conv_pairs: Vec<(usize, usize)>,
    /// `(discard, keep)` pairs.
    pub pool_pairs: Vec<(usize, usize)>,
}

impl LayerSchedule {
    pub fn kept(&self) -> Vec<usize> {
        self.active.iter().copied().filter(|q| !self.pool_pairs.iter().any(|(d, _)| d == q)).collect()
    }
}

/// Layer schedule for a register of `n_qubits`, run until one qubit remains.
pub fn layer_plan(n_qubits: usize) -> Vec<LayerSchedule> {
    let mut active: Vec<usize> = (0..n_qubits).collect();
    let mut layers = Vec::new();
    while active.len() > 1 {
        let k = active.len();
        let mut conv_pairs: Vec<(usize, usize)> = (0..k / 2).map(|i| (active[2 * i], active[2 * i + 1])).collect();
        if k > 2 {
            conv_pairs.extend((0..).map(|i| 2 * i + 1).take_while(|&j| j + 1 < k).map(|j| (active[j], active[j + 1])));
            conv_pairs.push((active[k - 1], active[0]));
        }
        let pool_pairs: Vec<(usize, usize)> = if k == 2 {
            vec![(active[0], active[1])]
        } else {
            (0..k / 2).map(|i| (active[2 * i + 1], active[2 * i])).collect()
        };
        let layer = LayerSchedule { active: active.clone(), conv_pairs, pool_pairs };
        active = layer.kept();
        layers.push(layer);
    }
    layers
}

fn slot(base: usize, i: usize) -> Angle {
    Angle::Slot(base + i)
}

fn one(b: &mut CircuitBuilder, kind: GateKind, q: usize, angles: Vec<Angle>) -> Result<()> {
    b.gate(GateOp::single(kind, q, angles)?)?;
    Ok(())
}

fn ctrl(b: &mut CircuitBuilder, kind: GateKind, c: usize, t: usize, angles: Vec<Angle>) -> Result<()> {
    b.gate(GateOp::controlled(kind, c, t, angles)?)?;
    Ok(())
}

/// Appends convolution unit `id` on `(qa, qb)` using slots `base..base+n_params`.
pub(crate) fn emit_conv(b: &mut CircuitBuilder, id: u8, qa: usize, qb: usize, base: usize) -> Result<()> {
    use GateKind::*;
    let s = |i| slot(base, i);
    match id {
        1 => {
            one(b, Ry, qa, vec![s(0)])?;
            one(b, Ry, qb, vec![s(1)])?;
            ctrl(b, Cnot, qa, qb, vec![])?;
        }
        2 => {
            one(b, H, qa, vec![])?;
            one(b, H, qb, vec![])?;
            b.gate(GateOp::cz(qa, qb)?)?;
            one(b, Ry, qa, vec![s(0)])?;
            one(b, Ry, qb, vec![s(1)])?;
        }
        3 => {
            one(b, Rx, qa, vec![s(0)])?;
            one(b, Rx, qb, vec![s(1)])?;
            one(b, Rz, qa, vec![s(2)])?;
            one(b, Rz, qb, vec![s(3)])?;
            ctrl(b, Cnot, qa, qb, vec![])?;
        }
        4 | 5 => {
            let entangler = if id == 4 { Crz } else { Crx };
            one(b, Ry, qa, vec![s(0)])?;
            one(b, Ry, qb, vec![s(1)])?;
            ctrl(b, entangler, qb, qa, vec![s(2)])?;
            one(b, Ry, qa, vec![s(3)])?;
            one(b, Ry, qb, vec![s(4)])?;
            ctrl(b, entangler, qa, qb, vec![s(5)])?;
        }
        6 => {
            one(b, Ry, qa, vec![s(0)])?;
            one(b, Ry, qb, vec![s(1)])?;
            ctrl(b, Cnot, qa, qb, vec![])?;
            one(b, Ry, qa, vec![s(2)])?;
            one(b, Ry, qb, vec![s(3)])?;
            ctrl(b, Cnot, qb, qa, vec![])?;
            one(b, Ry, qa, vec![s(4)])?;
            one(b, Ry, qb, vec![s(5)])?;
        }
        7 | 8 => {
            let entangler = if id == 7 { Crz } else { Crx };
            one(b, Rx, qa, vec![s(0)])?;
            one(b, Rz, qa, vec![s(1)])?;
            one(b, Rx, qb, vec![s(2)])?;
            one(b, Rz, qb, vec![s(3)])?;
            ctrl(b, entangler, qb, qa, vec![s(4)])?;
            one(b, Rx, qa, vec![s(5)])?;
            one(b, Rz, qa, vec![s(6)])?;
            one(b, Rx, qb, vec![s(7)])?;
            one(b, Rz, qb, vec![s(8)])?;
            ctrl(b, entangler, qa, qb, vec![s(9)])?;
        }
        9 => {
            one(b, U3, qa, vec![s(0), s(1), s(2)])?;
            one(b, U3, qb, vec![s(3), s(4), s(5)])?;
            ctrl(b, Cnot, qb, qa, vec![])?;
            one(b, Rz, qa, vec![s(6)])?;
            one(b, Ry, qb, vec![s(7)])?;
            ctrl(b, Cnot, qa, qb, vec![])?;
            one(b, Ry, qb, vec![s(8)])?;
            ctrl(b, Cnot, qb, qa, vec![])?;
            one(b, U3, qa, vec![s(9), s(10), s(11)])?;
            one(b, U3, qb, vec![s(12), s(13), s(14)])?;
        }
        _ => return Err(Error::invalid(format!("convolution id {id} outside 1..=9"))),
    }
    Ok(())
}

/// Appends the pooling unitary; the caller adds the discard.
pub(crate) fn emit_pool(b: &mut CircuitBuilder, discard: usize, keep: usize, base: usize) -> Result<()> {
    ctrl(b, GateKind::Crz, discard, keep, vec![slot(base, 0)])?;
    one(b, GateKind::X, discard, vec![])?;
    ctrl(b, GateKind::Crx, discard, keep, vec![slot(base, 1)])?;
    Ok(())
}

/// Convolution unit `id` as a standalone two-qubit circuit (qubit 0 = a, 1 = b).
pub fn build_conv_unit(id: u8) -> Result<Circuit> {
    let spec = ConvUnitSpec::new(id)?;
    let mut b = CircuitBuilder::new(2);
    let base = b.alloc_params(spec.n_params);
    emit_conv(&mut b, id, 0, 1, base)?;
    b.build()
}

/// Pooling unit on two qubits: qubit 0 is discarded, qubit 1 kept.
pub fn build_pooling_unit() -> Result<Circuit> {
    let mut b = CircuitBuilder::new(2);
    let base = b.alloc_params(POOL_PARAMS);
    emit_pool(&mut b, 0, 1, base)?;
    b.discard(0)?;
    b.build()
}

/// A built QCNN with its layer boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct Qcnn {
    pub spec: AnsatzSpec,
    pub circuit: Circuit,
    /// Instruction index one past the end of each layer.
    pub layer_ends: Vec<usize>,
    /// Parameter slot range of each layer (convolution block then pooling block).
    pub layer_slots: Vec<std::ops::Range<usize>>,
    pub readout: usize,
}

impl Qcnn {
    pub fn n_params(&self) -> usize {
        self.circuit.n_params()
    }

    pub fn n_layers(&self) -> usize {
        self.layer_ends.len()
    }

    /// Active qubits after `layer` layers (1-based; 0 = before the first).
    pub fn active_after(&self, layer: usize) -> Vec<usize> {
        let pos = if layer == 0 { 0 } else { self.layer_ends[layer - 1] };
        self.circuit.active_qubits(pos)
    }
}

pub fn build_qcnn(spec: &AnsatzSpec) -> Result<Qcnn> {
    let spec = AnsatzSpec::new(spec.conv_id, spec.pooling, spec.n_qubits)?;
    let conv = spec.conv_unit();
    let mut b = CircuitBuilder::new(spec.n_qubits);
    let mut layer_ends = Vec::new();
    let mut layer_slots = Vec::new();
    for (li, layer) in layer_plan(spec.n_qubits).iter().enumerate() {
        let tag = li + 1;
        let conv_base = b.alloc_params(conv.n_params);
        for &(qa, qb) in &layer.conv_pairs {
            emit_conv(&mut b, conv.id, qa, qb, conv_base)?;
        }
        b.noise(LayerTag::Conv(tag));
        if spec.pooling {
            let pool_base = b.alloc_params(POOL_PARAMS);
            for &(d, k) in &layer.pool_pairs {
                emit_pool(&mut b, d, k, pool_base)?;
            }
            b.noise(LayerTag::Pool(tag));
        }
        for &(d, _) in &layer.pool_pairs {
            b.discard(d)?;
        }
        layer_slots.push(conv_base..b.n_params());
        layer_ends.push(b.len());
    }
    let circuit = b.build()?;
    let readout = circuit.active_qubits(circuit.len())[0];
    Ok(Qcnn { spec, circuit, layer_ends, layer_slots, readout })
}

pub fn param_count(spec: &AnsatzSpec) -> usize {
    let per_layer = spec.conv_unit().n_params + if spec.pooling { POOL_PARAMS } else { 0 };
    per_layer * spec.n_layers()
}

/// Uniform draws on `[0, 2π)`, one per slot.
pub fn init_params(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{run_density, run_statevector, DensityMatrix, Instruction, StateVector};
    use crate::entropy::von_neumann_entropy;
    use crate::num::kron;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const TABLE_POOL: [usize; 9] = [12, 12, 18, 24, 24, 24, 36, 36, 51];
    const TABLE_NOPOOL: [usize; 9] = [6, 6, 12, 18, 18, 18, 30, 30, 45];

    #[test]
    fn parameter_counts_match_table() {
        for id in 1..=9u8 {
            let i = id as usize - 1;
            for (pooling, expected) in [(true, TABLE_POOL[i]), (false, TABLE_NOPOOL[i])] {
                let spec = AnsatzSpec::new(id, pooling, 8).unwrap();
                assert_eq!(param_count(&spec), expected, "{spec}");
                assert_eq!(build_qcnn(&spec).unwrap().n_params(), expected, "{spec}");
            }
            assert_eq!(build_conv_unit(id).unwrap().n_params(), CONV_PARAMS[i]);
        }
        assert_eq!(build_pooling_unit().unwrap().n_params(), 2);
    }

    #[test]
    fn discard_schedule_for_eight_qubits() {
        let q = build_qcnn(&AnsatzSpec::new(1, true, 8).unwrap()).unwrap();
        assert_eq!(q.active_after(0), (0..8).collect::<Vec<_>>());
        assert_eq!(q.active_after(1), vec![0, 2, 4, 6]);
        assert_eq!(q.active_after(2), vec![0, 4]);
        assert_eq!(q.active_after(3), vec![4]);
        assert_eq!(q.readout, 4);
        assert_eq!(q.layer_ends.last(), Some(&q.circuit.len()));
    }

    #[test]
    fn larger_registers_reduce_to_one_qubit() {
        for n in [10, 12] {
            for pooling in [true, false] {
                let spec = AnsatzSpec::new(5, pooling, n).unwrap();
                let q = build_qcnn(&spec).unwrap();
                assert_eq!(q.active_after(q.n_layers()).len(), 1);
                assert_eq!(param_count(&spec), q.n_params());
            }
        }
        let plan = layer_plan(10);
        assert_eq!(plan.iter().map(|l| l.active.len()).collect::<Vec<_>>(), vec![10, 5, 3, 2]);
        assert!(AnsatzSpec::new(1, true, 6).is_err());
        assert!(build_conv_unit(0).is_err());
        assert!(build_conv_unit(10).is_err());
    }

    #[test]
    fn ring_pairs_for_eight_qubits() {
        let plan = layer_plan(8);
        assert_eq!(
            plan[0].conv_pairs,
            vec![(0, 1), (2, 3), (4, 5), (6, 7), (1, 2), (3, 4), (5, 6), (7, 0)]
        );
        assert_eq!(plan[1].conv_pairs, vec![(0, 2), (4, 6), (2, 4), (6, 0)]);
        assert_eq!(plan[2].conv_pairs, vec![(0, 4)]);
        assert_eq!(plan[0].pool_pairs, vec![(1, 0), (3, 2), (5, 4), (7, 6)]);
        assert_eq!(plan[2].pool_pairs, vec![(0, 4)]);
    }

    #[test]
    fn names_round_trip() {
        for spec in AnsatzSpec::all(8).unwrap() {
            assert_eq!(AnsatzSpec::parse(&spec.name(), 8).unwrap(), spec);
        }
        for bad in ["a0-pool", "a10-nopool", "a3", "b3-pool", "a3-pooling"] {
            assert!(AnsatzSpec::parse(bad, 8).is_err(), "{bad}");
        }
    }

    #[test]
    fn conv_units_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for id in 1..=9u8 {
            let c = build_conv_unit(id).unwrap();
            for _ in 0..200 {
                let params = init_params(c.n_params(), &mut rng);
                // columns of the unitary are the images of basis states
                let mut u = crate::num::ComplexMatrix::zeros(4, 4);
                for col in 0..4 {
                    let out = run_statevector(&c, &params, &StateVector::basis(2, col).unwrap()).unwrap();
                    for (row, a) in out.amplitudes().iter().enumerate() {
                        u[(row, col)] = *a;
                    }
                }
                assert!(u.unitarity_error() < 1e-10, "conv {id}");
            }
        }
    }

    #[test]
    fn conv1_zero_angles_leave_zero_state() {
        let c = build_conv_unit(1).unwrap();
        let out = run_statevector(&c, &[0.0, 0.0], &StateVector::zero(2)).unwrap();
        assert_eq!(out, StateVector::zero(2));
    }

    #[test]
    fn conv2_is_maximally_entangling_on_zero_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let c = build_conv_unit(2).unwrap();
        for _ in 0..100 {
            let params = init_params(2, &mut rng);
            let out = run_statevector(&c, &params, &StateVector::zero(2)).unwrap();
            let s = von_neumann_entropy(&out.reduced(&[0]).unwrap()).unwrap();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn pooling_with_zero_angles_is_x_then_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let pool = build_pooling_unit().unwrap();
        let mut x_only = CircuitBuilder::new(2);
        x_only.gate(GateOp::single(GateKind::X, 0, vec![]).unwrap()).unwrap();
        x_only.discard(0).unwrap();
        let x_only = x_only.build().unwrap();
        for _ in 0..10 {
            let a = crate::num::ComplexMatrix::projector(&random_qubit(&mut rng));
            let b = crate::num::ComplexMatrix::projector(&random_qubit(&mut rng));
            let rho = DensityMatrix::from_matrix(kron(&a, &b)).unwrap();
            let pooled = run_density(&pool, &[0.0, 0.0], &rho, None).unwrap().reduced(&[1]).unwrap();
            let plain = run_density(&x_only, &[], &rho, None).unwrap().reduced(&[1]).unwrap();
            assert!(pooled.max_abs_diff(&plain) < 1e-14);
            let params = init_params(2, &mut rng);
            let out = run_density(&pool, &params, &rho, None).unwrap().reduced(&[1]).unwrap();
            assert!((out.trace().re - 1.0).abs() < 1e-10);
        }
    }

    fn random_qubit(rng: &mut impl Rng) -> Vec<crate::num::C64> {
        let t: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let p: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        vec![crate::num::C64::new((t / 2.0).cos(), 0.0), crate::num::C64::from_polar((t / 2.0).sin(), p)]
    }

    #[test]
    fn ansatz1_nopool_zero_angles_reads_zero() {
        let q = build_qcnn(&AnsatzSpec::new(1, false, 8).unwrap()).unwrap();
        let out = run_statevector(&q.circuit, &vec![0.0; q.n_params()], &StateVector::zero(8)).unwrap();
        assert!(out.prob_one(q.readout).abs() < 1e-15);
    }

    #[test]
    fn weight_sharing_is_confined_to_one_layer() {
        let spec = AnsatzSpec::new(3, true, 8).unwrap();
        let q = build_qcnn(&spec).unwrap();
        let occ = q.circuit.slot_occurrences();
        for (layer, range) in q.layer_slots.iter().enumerate() {
            let lo = if layer == 0 { 0 } else { q.layer_ends[layer - 1] };
            let hi = q.layer_ends[layer];
            for s in range.clone() {
                assert!(!occ[s].is_empty());
                assert!(occ[s].iter().all(|(i, _)| (lo..hi).contains(i)), "slot {s} leaks out of layer {layer}");
            }
        }
        // layer 1 conv slots are shared by all eight applications
        assert_eq!(occ[0].len(), 8);
    }

    #[test]
    fn pool_and_nopool_differ_by_two_per_layer() {
        for id in 1..=9 {
            let p = param_count(&AnsatzSpec::new(id, true, 8).unwrap());
            let n = param_count(&AnsatzSpec::new(id, false, 8).unwrap());
            assert_eq!(p - n, 2 * 3);
        }
    }

    #[test]
    fn noise_markers_follow_layers() {
        let pool = build_qcnn(&AnsatzSpec::new(3, true, 8).unwrap()).unwrap();
        let nopool = build_qcnn(&AnsatzSpec::new(3, false, 8).unwrap()).unwrap();
        assert_eq!(pool.circuit.noise_markers().len(), 6);
        assert_eq!(nopool.circuit.noise_markers().len(), 3);
        // in the pooling ansatz, noise precedes the discards of its layer
        let ins = pool.circuit.instructions();
        let first_discard = ins.iter().position(|i| matches!(i, Instruction::Discard(_))).unwrap();
        let pool_noise = ins.iter().position(|i| matches!(i, Instruction::Noise(LayerTag::Pool(1)))).unwrap();
        assert!(pool_noise < first_discard);
    }
}
