//! Pure and mixed register states plus the strided gate kernels that act on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{partial_trace, qubit_count, ComplexMatrix, C64, ONE, ZERO};

pub const NORM_TOL: f64 = 1e-9;

/// 2x2 operator in row-major order.
pub type Mat2 = [[C64; 2]; 2];

#[cfg(test)]
pub(crate) fn mat2_from(m: &ComplexMatrix) -> Mat2 {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

pub(crate) fn mat2_conj(m: &Mat2) -> Mat2 {
    [[m[0][0].conj(), m[0][1].conj()], [m[1][0].conj(), m[1][1].conj()]]
}

#[inline]
fn is_diagonal(m: &Mat2) -> bool {
    m[0][1] == ZERO && m[1][0] == ZERO
}

/// Applies `m` to bit `bit` (a stride) of every basis index.
pub(crate) fn apply_1q(amps: &mut [C64], stride: usize, m: &Mat2) {
    let len = amps.len();
    if is_diagonal(m) {
        let (d0, d1) = (m[0][0], m[1][1]);
        let mut base = 0;
        while base < len {
            if d0 != ONE {
                for a in &mut amps[base..base + stride] {
                    *a *= d0;
                }
            }
            if d1 != ONE {
                for a in &mut amps[base + stride..base + 2 * stride] {
                    *a *= d1;
                }
            }
            base += 2 * stride;
        }
        return;
    }
    let mut base = 0;
    while base < len {
        let (lo, hi) = amps[base..base + 2 * stride].split_at_mut(stride);
        for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
            let (x, y) = (*a0, *a1);
            *a0 = m[0][0] * x + m[0][1] * y;
            *a1 = m[1][0] * x + m[1][1] * y;
        }
        base += 2 * stride;
    }
}

/// Applies `m` to the target bit of every basis index whose control bit is set.
pub(crate) fn apply_controlled_1q(amps: &mut [C64], control_stride: usize, target_stride: usize, m: &Mat2) {
    let diagonal = is_diagonal(m);
    for i in 0..amps.len() {
        if i & control_stride == 0 || i & target_stride != 0 {
            continue;
        }
        let j = i | target_stride;
        if diagonal {
            amps[i] *= m[0][0];
            amps[j] *= m[1][1];
        } else {
            let (x, y) = (amps[i], amps[j]);
            amps[i] = m[0][0] * x + m[0][1] * y;
            amps[j] = m[1][0] * x + m[1][1] * y;
        }
    }
}

pub(crate) fn apply_cz(amps: &mut [C64], a_stride: usize, b_stride: usize) {
    let both = a_stride | b_stride;
    for (i, a) in amps.iter_mut().enumerate() {
        if i & both == both {
            *a = -*a;
        }
    }
}

#[inline]
pub(crate) fn stride_of(n_qubits: usize, qubit: usize) -> usize {
    1 << (n_qubits - 1 - qubit)
}

/// Pure state of `n_qubits` qubits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<C64>,
}

impl StateVector {
    /// `|0...0>`
    pub fn zero(n_qubits: usize) -> Self {
        let mut amplitudes = vec![ZERO; 1 << n_qubits];
        amplitudes[0] = ONE;
        Self { n_qubits, amplitudes }
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        if index >= 1 << n_qubits {
            return Err(Error::invalid(format!("basis index {index} out of range")));
        }
        let mut amplitudes = vec![ZERO; 1 << n_qubits];
        amplitudes[index] = ONE;
        Ok(Self { n_qubits, amplitudes })
    }

    /// Wraps amplitudes, checking the length is a power of two and the norm is 1.
    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        let n_qubits = qubit_count(amplitudes.len())
            .ok_or_else(|| Error::invalid(format!("{} amplitudes is not a power of two", amplitudes.len())))?;
        let state = Self { n_qubits, amplitudes };
        let norm = state.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid(format!("state norm {norm} is not 1")));
        }
        Ok(state)
    }

    pub(crate) fn from_amplitudes_unchecked(n_qubits: usize, amplitudes: Vec<C64>) -> Self {
        debug_assert_eq!(amplitudes.len(), 1 << n_qubits);
        Self { n_qubits, amplitudes }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix { n_qubits: self.n_qubits, matrix: ComplexMatrix::projector(&self.amplitudes) }
    }

    /// Probability that `qubit` reads `|1>`.
    pub fn prob_one(&self, qubit: usize) -> f64 {
        let stride = stride_of(self.n_qubits, qubit);
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| i & stride != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Reduced density matrix of the listed qubits (ascending order in the result).
    pub fn reduced(&self, keep: &[usize]) -> Result<ComplexMatrix> {
        reduce_pure(&self.amplitudes, self.n_qubits, keep)
    }

    pub fn apply_1q(&mut self, qubit: usize, m: &Mat2) {
        apply_1q(&mut self.amplitudes, stride_of(self.n_qubits, qubit), m);
    }

    pub fn apply_controlled(&mut self, control: usize, target: usize, m: &Mat2) {
        let n = self.n_qubits;
        apply_controlled_1q(&mut self.amplitudes, stride_of(n, control), stride_of(n, target), m);
    }

    pub fn apply_cz(&mut self, a: usize, b: usize) {
        let n = self.n_qubits;
        apply_cz(&mut self.amplitudes, stride_of(n, a), stride_of(n, b));
    }
}

/// `Tr_rest |psi><psi|` without forming the full projector.
pub(crate) fn reduce_pure(amps: &[C64], n_qubits: usize, keep: &[usize]) -> Result<ComplexMatrix> {
    if keep.is_empty() {
        return Err(Error::invalid("reduced state needs at least one qubit"));
    }
    let mut kept = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.len() != keep.len() || kept.iter().any(|&q| q >= n_qubits) {
        return Err(Error::invalid(format!("bad keep set {keep:?} for {n_qubits} qubits")));
    }
    let traced: Vec<usize> = (0..n_qubits).filter(|q| !kept.contains(q)).collect();
    let kept_idx = spread_indices(&kept, n_qubits);
    let traced_idx = spread_indices(&traced, n_qubits);
    let kd = kept_idx.len();
    let mut out = ComplexMatrix::zeros(kd, kd);
    for r in 0..kd {
        for c in r..kd {
            let mut acc = ZERO;
            for &t in &traced_idx {
                acc += amps[kept_idx[r] | t] * amps[kept_idx[c] | t].conj();
            }
            out[(r, c)] = acc;
            if r != c {
                out[(c, r)] = acc.conj();
            }
        }
    }
    Ok(out)
}

/// All global basis offsets spanned by `qubits` (ascending qubit order, MSB first).
fn spread_indices(qubits: &[usize], n_qubits: usize) -> Vec<usize> {
    let k = qubits.len();
    (0..1usize << k)
        .map(|sub| {
            qubits
                .iter()
                .enumerate()
                .filter(|(j, _)| sub >> (k - 1 - j) & 1 == 1)
                .fold(0, |acc, (_, &q)| acc | stride_of(n_qubits, q))
        })
        .collect()
}

/// Mixed state of `n_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub fn zero(n_qubits: usize) -> Self {
        StateVector::zero(n_qubits).to_density()
    }

    /// Wraps a matrix after checking Hermiticity and unit trace.
    pub fn from_matrix(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::invalid("density matrix must be square"));
        }
        let n_qubits = qubit_count(matrix.rows())
            .ok_or_else(|| Error::invalid(format!("dimension {} is not a power of two", matrix.rows())))?;
        if !matrix.is_hermitian(NORM_TOL) {
            return Err(Error::invalid("density matrix is not Hermitian"));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > NORM_TOL || tr.im.abs() > NORM_TOL {
            return Err(Error::invalid(format!("density matrix trace {tr} is not 1")));
        }
        Ok(Self { n_qubits, matrix })
    }

    pub(crate) fn from_matrix_unchecked(n_qubits: usize, matrix: ComplexMatrix) -> Self {
        Self { n_qubits, matrix }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        // Tr(rho^2) = sum |rho_ij|^2 for Hermitian rho
        self.matrix.as_slice().iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn prob_one(&self, qubit: usize) -> f64 {
        let stride = stride_of(self.n_qubits, qubit);
        (0..self.dim()).filter(|i| i & stride != 0).map(|i| self.matrix[(i, i)].re).sum()
    }

    pub fn reduced(&self, keep: &[usize]) -> Result<ComplexMatrix> {
        partial_trace(&self.matrix, self.n_qubits, keep)
    }

    // The matrix is treated as a 2n-qubit vector: row bits are qubits 0..n,
    // column bits are qubits n..2n. U rho U^dagger is U on the row qubit and
    // conj(U) on the matching column qubit.
    fn row_stride(&self, qubit: usize) -> usize {
        stride_of(self.n_qubits, qubit) * self.dim()
    }

    fn col_stride(&self, qubit: usize) -> usize {
        stride_of(self.n_qubits, qubit)
    }

    pub fn apply_1q(&mut self, qubit: usize, m: &Mat2) {
        let (rs, cs) = (self.row_stride(qubit), self.col_stride(qubit));
        let data = self.matrix.as_mut_slice();
        apply_1q(data, rs, m);
        apply_1q(data, cs, &mat2_conj(m));
    }

    pub fn apply_controlled(&mut self, control: usize, target: usize, m: &Mat2) {
        let (rc, rt) = (self.row_stride(control), self.row_stride(target));
        let (cc, ct) = (self.col_stride(control), self.col_stride(target));
        let data = self.matrix.as_mut_slice();
        apply_controlled_1q(data, rc, rt, m);
        apply_controlled_1q(data, cc, ct, &mat2_conj(m));
    }

    pub fn apply_cz(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.row_stride(a), self.row_stride(b));
        let (ca, cb) = (self.col_stride(a), self.col_stride(b));
        let data = self.matrix.as_mut_slice();
        apply_cz(data, ra, rb);
        apply_cz(data, ca, cb);
    }

    /// Applies a single-qubit superoperator `S` acting on the row-major
    /// vectorisation `(r00, r01, r10, r11)` of each 2x2 block.
    pub(crate) fn apply_superop_1q(&mut self, qubit: usize, s: &[[C64; 4]; 4]) {
        let (rs, cs) = (self.row_stride(qubit), self.col_stride(qubit));
        let data = self.matrix.as_mut_slice();
        for i in 0..data.len() {
            if i & rs != 0 || i & cs != 0 {
                continue;
            }
            let idx = [i, i | cs, i | rs, i | rs | cs];
            let v = [data[idx[0]], data[idx[1]], data[idx[2]], data[idx[3]]];
            for (k, &dst) in idx.iter().enumerate() {
                data[dst] = s[k][0] * v[0] + s[k][1] * v[1] + s[k][2] * v[2] + s[k][3] * v[3];
            }
        }
    }
}
