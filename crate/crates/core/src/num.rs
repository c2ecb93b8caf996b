//! Dense complex linear algebra shared by the simulators.
//!
//! Qubit 0 is the most significant bit of a computational-basis index, so an
//! n-qubit basis state `|q0 q1 ... q(n-1)>` has index `sum q_k << (n-1-k)`.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Hermiticity tolerance used by every validating operation.
pub const HERMITIAN_TOL: f64 = 1e-9;

/// Row-major dense complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|c| {
                    let z = self[(r, c)];
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data has {} entries, expected {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from real row-major entries.
    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::from_vec(rows, cols, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn diag(values: &[C64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Outer product `|v><v|`.
    pub fn projector(v: &[C64]) -> Self {
        let n = v.len();
        let mut m = Self::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                m[(r, c)] = v[r] * v[c].conj();
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn dagger(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::invalid(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == ZERO {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        if v.len() != self.cols {
            return Err(Error::invalid(format!(
                "vector of length {} does not match {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::invalid(format!(
                "shape mismatch: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest absolute entry difference from `other` (infinity if shapes differ).
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Largest deviation from Hermiticity, `max |m_rc - conj(m_cr)|`.
    pub fn hermiticity_error(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut err: f64 = 0.0;
        for r in 0..self.rows {
            for c in r..self.cols {
                err = err.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        err
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// Deviation of `m m^dagger` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let prod = self.matmul(&self.dagger()).expect("square");
        prod.max_abs_diff(&Self::identity(self.rows))
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut out = ComplexMatrix::zeros(rows, cols);
    for ar in 0..a.rows {
        for ac in 0..a.cols {
            let s = a[(ar, ac)];
            if s == ZERO {
                continue;
            }
            for br in 0..b.rows {
                for bc in 0..b.cols {
                    out[(ar * b.rows + br, ac * b.cols + bc)] = s * b[(br, bc)];
                }
            }
        }
    }
    out
}

/// Kronecker product of two state vectors.
pub fn kron_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(x * y);
        }
    }
    out
}

pub(crate) fn qubit_count(dim: usize) -> Option<usize> {
    if dim.is_power_of_two() {
        Some(dim.trailing_zeros() as usize)
    } else {
        None
    }
}

/// Reduced density matrix on the qubits in `keep`.
///
/// The kept qubits appear in the result in ascending index order, whatever
/// the order of `keep`.
pub fn partial_trace(rho: &ComplexMatrix, n_qubits: usize, keep: &[usize]) -> Result<ComplexMatrix> {
    let dim = 1usize << n_qubits;
    if rho.rows != dim || rho.cols != dim {
        return Err(Error::invalid(format!(
            "expected a {dim}x{dim} matrix for {n_qubits} qubits, got {}x{}",
            rho.rows, rho.cols
        )));
    }
    if keep.is_empty() {
        return Err(Error::invalid("partial trace needs at least one kept qubit"));
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.len() != keep.len() {
        return Err(Error::invalid("duplicate qubit in keep set"));
    }
    if let Some(&q) = kept.iter().find(|&&q| q >= n_qubits) {
        return Err(Error::invalid(format!("qubit {q} out of range for {n_qubits} qubits")));
    }
    let traced: Vec<usize> = (0..n_qubits).filter(|q| !kept.contains(q)).collect();
    let kept_masks: Vec<usize> = kept.iter().map(|&q| 1 << (n_qubits - 1 - q)).collect();
    let traced_masks: Vec<usize> = traced.iter().map(|&q| 1 << (n_qubits - 1 - q)).collect();
    let spread = |sub: usize, masks: &[usize]| -> usize {
        let k = masks.len();
        masks
            .iter()
            .enumerate()
            .filter(|(j, _)| sub >> (k - 1 - j) & 1 == 1)
            .fold(0, |acc, (_, m)| acc | m)
    };
    let kd = 1usize << kept.len();
    let td = 1usize << traced.len();
    let kept_idx: Vec<usize> = (0..kd).map(|s| spread(s, &kept_masks)).collect();
    let traced_idx: Vec<usize> = (0..td).map(|s| spread(s, &traced_masks)).collect();
    let mut out = ComplexMatrix::zeros(kd, kd);
    for (r, &kr) in kept_idx.iter().enumerate() {
        for (c, &kc) in kept_idx.iter().enumerate() {
            let mut acc = ZERO;
            for &t in &traced_idx {
                acc += rho[(kr | t, kc | t)];
            }
            out[(r, c)] = acc;
        }
    }
    Ok(out)
}

/// Eigenvalues of a Hermitian matrix, descending.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianSpectrum {
    pub eigenvalues: Vec<f64>,
}

/// Closed-form spectrum of a 2x2 Hermitian matrix from its trace and determinant.
pub fn eig_hermitian_2x2(m: &ComplexMatrix) -> Result<HermitianSpectrum> {
    if m.rows != 2 || m.cols != 2 {
        return Err(Error::invalid(format!("expected 2x2 matrix, got {}x{}", m.rows, m.cols)));
    }
    if !m.is_hermitian(HERMITIAN_TOL) {
        return Err(Error::invalid("matrix is not Hermitian"));
    }
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)];
    let half_tr = 0.5 * (a + d);
    // sqrt((tr/2)^2 - det) written without cancellation
    let disc = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    Ok(HermitianSpectrum { eigenvalues: vec![half_tr + disc, half_tr - disc] })
}

/// Eigenvalues of an arbitrary Hermitian matrix, descending.
pub(crate) fn eig_hermitian(m: &ComplexMatrix) -> Result<HermitianSpectrum> {
    if !m.is_square() {
        return Err(Error::invalid("eigenvalues need a square matrix"));
    }
    if m.rows == 2 {
        return eig_hermitian_2x2(m);
    }
    if !m.is_hermitian(HERMITIAN_TOL) {
        return Err(Error::invalid("matrix is not Hermitian"));
    }
    let n = m.rows;
    let dm = nalgebra::DMatrix::from_fn(n, n, |r, c| {
        // symmetrize so the solver sees an exactly Hermitian input
        0.5 * (m[(r, c)] + m[(c, r)].conj())
    });
    let mut eigenvalues: Vec<f64> = dm.symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    Ok(HermitianSpectrum { eigenvalues })
}

/// Trace distance `½‖a − b‖₁` between two Hermitian matrices.
pub fn trace_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::invalid(format!(
            "shape mismatch: {}x{} vs {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let diff = a.sub(b)?;
    let spectrum = eig_hermitian(&diff)?;
    Ok(0.5 * spectrum.eigenvalues.iter().map(|l| l.abs()).sum::<f64>())
}

/// Pauli and Clifford constants.
pub mod consts {
    use super::*;

    pub fn identity2() -> ComplexMatrix {
        ComplexMatrix::identity(2)
    }

    pub fn pauli_x() -> ComplexMatrix {
        ComplexMatrix::from_vec(2, 2, vec![ZERO, ONE, ONE, ZERO]).unwrap()
    }

    pub fn pauli_y() -> ComplexMatrix {
        ComplexMatrix::from_vec(2, 2, vec![ZERO, -I, I, ZERO]).unwrap()
    }

    pub fn pauli_z() -> ComplexMatrix {
        ComplexMatrix::from_vec(2, 2, vec![ONE, ZERO, ZERO, -ONE]).unwrap()
    }

    pub fn hadamard() -> ComplexMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        ComplexMatrix::from_real(2, 2, &[h, h, h, -h]).unwrap()
    }

    pub fn ket0_projector() -> ComplexMatrix {
        ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]).unwrap()
    }

    pub fn ket1_projector() -> ComplexMatrix {
        ComplexMatrix::from_real(2, 2, &[0.0, 0.0, 0.0, 1.0]).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::consts::*;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unitary2(rng: &mut impl Rng) -> ComplexMatrix {
        // exp(-i a Z/2) exp(-i b Y/2) exp(-i c Z/2) with a global phase
        let (a, b, c, g): (f64, f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen(), rng.gen());
        let (a, b, c, g) = (a * 6.0, b * 6.0, c * 6.0, g * 6.0);
        let rz = |t: f64| ComplexMatrix::diag(&[C64::from_polar(1.0, -t / 2.0), C64::from_polar(1.0, t / 2.0)]);
        let ry = ComplexMatrix::from_real(2, 2, &[(b / 2.0).cos(), -(b / 2.0).sin(), (b / 2.0).sin(), (b / 2.0).cos()]).unwrap();
        rz(a).matmul(&ry).unwrap().matmul(&rz(c)).unwrap().scale(C64::from_polar(1.0, g))
    }

    fn random_pure(rng: &mut impl Rng, dim: usize) -> Vec<C64> {
        let v: Vec<C64> = (0..dim).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v.into_iter().map(|z| z / n).collect()
    }

    fn random_density(rng: &mut impl Rng, dim: usize, mix: usize) -> ComplexMatrix {
        let mut rho = ComplexMatrix::zeros(dim, dim);
        let weights: Vec<f64> = (0..mix).map(|_| rng.gen::<f64>()).collect();
        let total: f64 = weights.iter().sum();
        for w in weights {
            let p = ComplexMatrix::projector(&random_pure(rng, dim));
            rho = rho.add(&p.scale(C64::new(w / total, 0.0))).unwrap();
        }
        rho
    }

    #[test]
    fn kron_identities() {
        assert_eq!(kron(&identity2(), &identity2()), ComplexMatrix::identity(4));
        let m = kron(&pauli_x(), &ket0_projector());
        for r in 0..4 {
            for c in 0..4 {
                let expected = if (r, c) == (2, 0) || (r, c) == (0, 2) { ONE } else { ZERO };
                assert_eq!(m[(r, c)], expected, "entry ({r},{c})");
            }
        }
    }

    #[test]
    fn kron_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_unitary2(&mut rng);
        let b = random_unitary2(&mut rng);
        let c = random_unitary2(&mut rng);
        let left = kron(&a, &kron(&b, &c));
        let right = kron(&kron(&a, &b), &c);
        assert!(left.max_abs_diff(&right) < 1e-14);
    }

    #[test]
    fn kron_preserves_unitarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let u = random_unitary2(&mut rng);
            let v = random_unitary2(&mut rng);
            assert!(kron(&u, &v).unitarity_error() < 1e-10);
        }
    }

    #[test]
    fn partial_trace_examples() {
        let ket00 = vec![ONE, ZERO, ZERO, ZERO];
        let rho = ComplexMatrix::projector(&ket00);
        assert!(partial_trace(&rho, 2, &[0]).unwrap().max_abs_diff(&ket0_projector()) < 1e-15);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = vec![C64::new(s, 0.0), ZERO, ZERO, C64::new(s, 0.0)];
        let marginal = partial_trace(&ComplexMatrix::projector(&bell), 2, &[0]).unwrap();
        assert!(marginal.max_abs_diff(&ComplexMatrix::identity(2).scale(C64::new(0.5, 0.0))) < 1e-15);
    }

    /// Index-by-index contraction, independent of the mask bookkeeping above.
    fn brute_force_trace_out_last(rho: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(2, 2);
        for a in 0..2 {
            for b in 0..2 {
                for t in 0..2 {
                    out[(a, b)] += rho[(2 * a + t, 2 * b + t)];
                }
            }
        }
        out
    }

    #[test]
    fn partial_trace_matches_contraction_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let psi = random_pure(&mut rng, 4);
            let rho = ComplexMatrix::projector(&psi);
            let fast = partial_trace(&rho, 2, &[0]).unwrap();
            let slow = brute_force_trace_out_last(&rho);
            assert!(fast.max_abs_diff(&slow) < 1e-14);
            assert!((fast.trace() - ONE).norm() < 1e-10);
            assert!(fast.is_hermitian(1e-12));
        }
    }

    #[test]
    fn partial_trace_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let rho = random_density(&mut rng, 8, 3);
            // trace out qubit 2, then (in the 2-qubit result) qubit 0 == keep {1}
            let step = partial_trace(&rho, 3, &[0, 1]).unwrap();
            let two_step = partial_trace(&step, 2, &[1]).unwrap();
            let one_step = partial_trace(&rho, 3, &[1]).unwrap();
            assert!(two_step.max_abs_diff(&one_step) < 1e-10);
        }
    }

    #[test]
    fn partial_trace_errors() {
        let rho = ComplexMatrix::identity(4);
        assert!(partial_trace(&rho, 3, &[0]).is_err());
        assert!(partial_trace(&rho, 2, &[]).is_err());
        assert!(partial_trace(&rho, 2, &[2]).is_err());
    }

    #[test]
    fn eig_2x2_examples() {
        let cases = [([1.0, 0.0], [1.0, 0.0]), ([0.5, 0.5], [0.5, 0.5]), ([0.75, 0.25], [0.75, 0.25])];
        for (diag, expected) in cases {
            let m = ComplexMatrix::diag(&[C64::new(diag[0], 0.0), C64::new(diag[1], 0.0)]);
            let s = eig_hermitian_2x2(&m).unwrap();
            assert!((s.eigenvalues[0] - expected[0]).abs() < 1e-15);
            assert!((s.eigenvalues[1] - expected[1]).abs() < 1e-15);
        }
        let not_hermitian = ComplexMatrix::from_real(2, 2, &[1.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(eig_hermitian_2x2(&not_hermitian).is_err());
    }

    #[test]
    fn eig_2x2_reproduces_trace_and_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let m = random_density(&mut rng, 2, 2);
            let s = eig_hermitian_2x2(&m).unwrap();
            let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re;
            assert!((s.eigenvalues.iter().sum::<f64>() - m.trace().re).abs() < 1e-10);
            assert!((s.eigenvalues[0] * s.eigenvalues[1] - det).abs() < 1e-10);
            assert!(s.eigenvalues[0] >= s.eigenvalues[1]);
        }
    }

    #[test]
    fn trace_distance_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rho = random_density(&mut rng, 4, 2);
        assert!(trace_distance(&rho, &rho).unwrap().abs() < 1e-12);
        let d = trace_distance(&ket0_projector(), &ket1_projector()).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
        let half = ComplexMatrix::identity(2).scale(C64::new(0.5, 0.0));
        assert!((trace_distance(&ket0_projector(), &half).unwrap() - 0.5).abs() < 1e-15);
        assert!(trace_distance(&rho, &half).is_err());
    }

    #[test]
    fn trace_distance_general_size_matches_pure_state_formula() {
        // for pure states: T = sqrt(1 - |<a|b>|^2)
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let a = random_pure(&mut rng, 16);
            let b = random_pure(&mut rng, 16);
            let overlap: C64 = a.iter().zip(&b).map(|(x, y)| x.conj() * y).sum();
            let expected = (1.0 - overlap.norm_sqr()).sqrt();
            let got = trace_distance(&ComplexMatrix::projector(&a), &ComplexMatrix::projector(&b)).unwrap();
            assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
        }
    }
}
