//! Gate kinds, angle bindings and their matrices.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::state::Mat2;
use crate::error::{Error, Result};
use crate::num::{ComplexMatrix, C64, I, ONE, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    H,
    X,
    Rx,
    Ry,
    Rz,
    U3,
    Cnot,
    Cz,
    Crx,
    Crz,
}

impl GateKind {
    pub fn n_angles(self) -> usize {
        match self {
            GateKind::H | GateKind::X | GateKind::Cnot | GateKind::Cz => 0,
            GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::Crx | GateKind::Crz => 1,
            GateKind::U3 => 3,
        }
    }

    pub fn is_controlled(self) -> bool {
        matches!(self, GateKind::Cnot | GateKind::Crx | GateKind::Crz)
    }

    /// Number of qubits the gate acts on.
    pub fn arity(self) -> usize {
        match self {
            GateKind::Cnot | GateKind::Cz | GateKind::Crx | GateKind::Crz => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::H => "h",
            GateKind::X => "x",
            GateKind::Rx => "rx",
            GateKind::Ry => "ry",
            GateKind::Rz => "rz",
            GateKind::U3 => "u3",
            GateKind::Cnot => "cnot",
            GateKind::Cz => "cz",
            GateKind::Crx => "crx",
            GateKind::Crz => "crz",
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where a gate angle comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Angle {
    Fixed(f64),
    Slot(usize),
}

impl Angle {
    pub fn resolve(self, params: &[f64]) -> Result<f64> {
        match self {
            Angle::Fixed(v) => Ok(v),
            Angle::Slot(i) => params
                .get(i)
                .copied()
                .ok_or_else(|| Error::invalid(format!("parameter slot {i} unresolved ({} params given)", params.len()))),
        }
    }
}

/// One gate application. Controlled kinds have `control` set and a single
/// target; CZ uses two targets and no control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOp {
    pub kind: GateKind,
    pub targets: Vec<usize>,
    pub control: Option<usize>,
    pub angles: Vec<Angle>,
}

impl GateOp {
    pub fn new(kind: GateKind, targets: Vec<usize>, control: Option<usize>, angles: Vec<Angle>) -> Result<Self> {
        let op = Self { kind, targets, control, angles };
        op.validate()?;
        Ok(op)
    }

    pub fn single(kind: GateKind, qubit: usize, angles: Vec<Angle>) -> Result<Self> {
        Self::new(kind, vec![qubit], None, angles)
    }

    pub fn controlled(kind: GateKind, control: usize, target: usize, angles: Vec<Angle>) -> Result<Self> {
        Self::new(kind, vec![target], Some(control), angles)
    }

    pub fn cz(a: usize, b: usize) -> Result<Self> {
        Self::new(GateKind::Cz, vec![a, b], None, vec![])
    }

    pub fn validate(&self) -> Result<()> {
        if self.angles.len() != self.kind.n_angles() {
            return Err(Error::invalid(format!(
                "{} takes {} angles, got {}",
                self.kind,
                self.kind.n_angles(),
                self.angles.len()
            )));
        }
        let expected_targets = if self.kind == GateKind::Cz { 2 } else { 1 };
        if self.targets.len() != expected_targets {
            return Err(Error::invalid(format!("{} takes {expected_targets} target(s)", self.kind)));
        }
        match (self.kind.is_controlled(), self.control) {
            (true, None) => return Err(Error::invalid(format!("{} needs a control qubit", self.kind))),
            (false, Some(_)) => return Err(Error::invalid(format!("{} takes no control qubit", self.kind))),
            _ => {}
        }
        if let Some(c) = self.control {
            if self.targets.contains(&c) {
                return Err(Error::invalid(format!("control qubit {c} is also a target")));
            }
        }
        if self.kind == GateKind::Cz && self.targets[0] == self.targets[1] {
            return Err(Error::invalid("cz needs two distinct qubits"));
        }
        Ok(())
    }

    /// Every qubit the gate touches.
    pub fn qubits(&self) -> impl Iterator<Item = usize> + '_ {
        self.control.into_iter().chain(self.targets.iter().copied())
    }

    pub fn slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.angles.iter().filter_map(|a| match a {
            Angle::Slot(i) => Some(*i),
            Angle::Fixed(_) => None,
        })
    }

    pub fn resolve_angles(&self, params: &[f64]) -> Result<[f64; 3]> {
        let mut out = [0.0; 3];
        for (o, a) in out.iter_mut().zip(&self.angles) {
            *o = a.resolve(params)?;
        }
        Ok(out)
    }
}

pub fn rx(theta: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    [[C64::new(c, 0.0), -I * s], [-I * s, C64::new(c, 0.0)]]
}

pub fn ry(theta: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    [[C64::new(c, 0.0), C64::new(-s, 0.0)], [C64::new(s, 0.0), C64::new(c, 0.0)]]
}

pub fn rz(theta: f64) -> Mat2 {
    [[C64::from_polar(1.0, -theta / 2.0), ZERO], [ZERO, C64::from_polar(1.0, theta / 2.0)]]
}

pub fn u3(theta: f64, phi: f64, lambda: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    [
        [C64::new(c, 0.0), -C64::from_polar(s, lambda)],
        [C64::from_polar(s, phi), C64::from_polar(c, phi + lambda)],
    ]
}

pub fn hadamard() -> Mat2 {
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [[h, h], [h, -h]]
}

pub fn pauli_x() -> Mat2 {
    [[ZERO, ONE], [ONE, ZERO]]
}

/// The 2x2 block a gate applies to its (single) target, given resolved angles.
/// For controlled kinds this is the block applied when the control is `|1>`.
/// Returns `None` for CZ, which has no single-target block.
pub(crate) fn target_block(kind: GateKind, angles: &[f64; 3]) -> Option<Mat2> {
    Some(match kind {
        GateKind::H => hadamard(),
        GateKind::X | GateKind::Cnot => pauli_x(),
        GateKind::Rx | GateKind::Crx => rx(angles[0]),
        GateKind::Ry => ry(angles[0]),
        GateKind::Rz | GateKind::Crz => rz(angles[0]),
        GateKind::U3 => u3(angles[0], angles[1], angles[2]),
        GateKind::Cz => return None,
    })
}

fn to_matrix(m: &Mat2) -> ComplexMatrix {
    ComplexMatrix::from_vec(2, 2, vec![m[0][0], m[0][1], m[1][0], m[1][1]]).expect("2x2")
}

/// Unitary of a gate. Two-qubit gates are returned as 4x4 matrices in the
/// basis `|control, target>` (or `|targets[0], targets[1]>` for CZ).
pub fn gate_matrix(g: &GateOp, params: &[f64]) -> Result<ComplexMatrix> {
    g.validate()?;
    let angles = g.resolve_angles(params)?;
    if g.kind == GateKind::Cz {
        return Ok(ComplexMatrix::diag(&[ONE, ONE, ONE, -ONE]));
    }
    let block = target_block(g.kind, &angles).expect("non-CZ gate has a block");
    if !g.kind.is_controlled() {
        return Ok(to_matrix(&block));
    }
    let mut m = ComplexMatrix::identity(4);
    for r in 0..2 {
        for c in 0..2 {
            m[(2 + r, 2 + c)] = block[r][c];
        }
    }
    Ok(m)
}
