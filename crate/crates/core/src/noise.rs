//! Single-qubit Kraus channels and where they fire inside a QCNN.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ansatz::AnsatzSpec;
use crate::circuit::{Circuit, DensityMatrix, LayerTag};
use crate::error::{Error, Result};
use crate::num::{consts, ComplexMatrix, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NoiseKind {
    #[serde(rename = "bitflip")]
    BitFlip,
    #[serde(rename = "phaseflip")]
    PhaseFlip,
    #[serde(rename = "ampdamp")]
    AmplitudeDamping,
    #[serde(rename = "depol")]
    Depolarizing,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] =
        [NoiseKind::BitFlip, NoiseKind::PhaseFlip, NoiseKind::AmplitudeDamping, NoiseKind::Depolarizing];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::BitFlip => "bitflip",
            NoiseKind::PhaseFlip => "phaseflip",
            NoiseKind::AmplitudeDamping => "ampdamp",
            NoiseKind::Depolarizing => "depol",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown noise kind `{s}` (bitflip|phaseflip|ampdamp|depol)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub p: f64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, p: f64) -> Result<Self> {
        let spec = Self { kind, p };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::invalid(format!("noise probability {} outside [0, 1]", self.p)));
        }
        Ok(())
    }
}

/// Kraus operators of the channel.
pub fn kraus_ops(spec: &NoiseSpec) -> Result<Vec<ComplexMatrix>> {
    spec.validate()?;
    let p = spec.p;
    let s = |x: f64| C64::new(x.sqrt(), 0.0);
    let id = consts::identity2();
    Ok(match spec.kind {
        NoiseKind::BitFlip => vec![id.scale(s(1.0 - p)), consts::pauli_x().scale(s(p))],
        NoiseKind::PhaseFlip => vec![id.scale(s(1.0 - p)), consts::pauli_z().scale(s(p))],
        NoiseKind::AmplitudeDamping => vec![
            ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, (1.0 - p).sqrt()])?,
            ComplexMatrix::from_real(2, 2, &[0.0, p.sqrt(), 0.0, 0.0])?,
        ],
        NoiseKind::Depolarizing => vec![
            id.scale(s(1.0 - p)),
            consts::pauli_x().scale(s(p / 3.0)),
            consts::pauli_y().scale(s(p / 3.0)),
            consts::pauli_z().scale(s(p / 3.0)),
        ],
    })
}

/// `sum_k K_k ⊗ conj(K_k)`, acting on row-major vectorised 2x2 blocks.
fn superoperator(kraus: &[ComplexMatrix]) -> [[C64; 4]; 4] {
    let mut s = [[C64::new(0.0, 0.0); 4]; 4];
    for k in kraus {
        for (r, row) in s.iter_mut().enumerate() {
            for (c, entry) in row.iter_mut().enumerate() {
                *entry += k[(r / 2, c / 2)] * k[(r % 2, c % 2)].conj();
            }
        }
    }
    s
}

/// Applies the channel to `qubit`, which must be in `active`.
pub fn apply_channel(rho: &DensityMatrix, spec: &NoiseSpec, qubit: usize, active: &[usize]) -> Result<DensityMatrix> {
    if qubit >= rho.n_qubits() || !active.contains(&qubit) {
        return Err(Error::invalid(format!("qubit {qubit} is not active")));
    }
    let s = superoperator(&kraus_ops(spec)?);
    let mut out = rho.clone();
    out.apply_superop_1q(qubit, &s);
    Ok(out)
}

/// Which layer noise points fire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerFilter {
    pub conv: bool,
    pub pool: bool,
}

impl MarkerFilter {
    pub const ALL: MarkerFilter = MarkerFilter { conv: true, pool: true };

    pub fn accepts(&self, tag: LayerTag) -> bool {
        match tag {
            LayerTag::Conv(_) => self.conv,
            LayerTag::Pool(_) => self.pool,
        }
    }

    /// Number of noise points in `circuit` this filter fires at.
    pub fn firing_points(&self, circuit: &Circuit) -> usize {
        circuit.noise_markers().into_iter().filter(|(_, t)| self.accepts(*t)).count()
    }
}

/// Noise placement for an ansatz: after convolution and pooling layers when the
/// ansatz pools, after convolution layers only otherwise.
pub fn noise_points(ansatz: &AnsatzSpec) -> MarkerFilter {
    MarkerFilter { conv: true, pool: ansatz.pooling }
}

/// A channel together with the layers it fires after.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    spec: NoiseSpec,
    filter: MarkerFilter,
    superop: [[C64; 4]; 4],
}

impl NoiseModel {
    pub fn new(spec: NoiseSpec, filter: MarkerFilter) -> Result<Self> {
        let superop = superoperator(&kraus_ops(&spec)?);
        Ok(Self { spec, filter, superop })
    }

    /// Fires at every noise point.
    pub fn everywhere(spec: NoiseSpec) -> Result<Self> {
        Self::new(spec, MarkerFilter::ALL)
    }

    pub fn for_ansatz(spec: NoiseSpec, ansatz: &AnsatzSpec) -> Result<Self> {
        Self::new(spec, noise_points(ansatz))
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn filter(&self) -> MarkerFilter {
        self.filter
    }

    pub fn fires_at(&self, tag: LayerTag) -> bool {
        self.filter.accepts(tag)
    }

    pub(crate) fn apply_in_place(&self, rho: &mut DensityMatrix, qubit: usize) {
        rho.apply_superop_1q(qubit, &self.superop);
    }
}
