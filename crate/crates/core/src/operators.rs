//! Dense operators on `N` qubits.
//!
//! Basis ordering is big-endian: qubit 0 is the most significant bit of the
//! basis index, so `kron(A₀, A₁, …)` acts with `A₀` on qubit 0. `|0⟩` is spin
//! up, `S^z = +1/2`.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest register the dense code paths accept.
pub const MAX_DENSE_QUBITS: usize = 12;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

pub(crate) fn guard(n_qubits: usize) -> Result<()> {
    if n_qubits > MAX_DENSE_QUBITS {
        return Err(Error::DimensionGuard {
            n_qubits,
            limit: MAX_DENSE_QUBITS,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> DMatrix<C64> {
        match self {
            Pauli::I => DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ONE]),
            Pauli::X => DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
            Pauli::Y => DMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
            Pauli::Z => DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        }
    }

    pub fn from_char(c: char) -> Option<Pauli> {
        match c.to_ascii_uppercase() {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// A square operator on `n_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    n_qubits: usize,
    matrix: DMatrix<C64>,
}

impl DenseOperator {
    pub fn from_matrix(matrix: DMatrix<C64>) -> Result<Self> {
        let dim = matrix.nrows();
        if matrix.ncols() != dim || dim == 0 || !dim.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "operator must be square with power-of-two dimension, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(DenseOperator {
            n_qubits: dim.trailing_zeros() as usize,
            matrix,
        })
    }

    pub fn zeros(n_qubits: usize) -> Result<Self> {
        guard(n_qubits)?;
        let dim = 1 << n_qubits;
        Ok(DenseOperator {
            n_qubits,
            matrix: DMatrix::zeros(dim, dim),
        })
    }

    pub fn identity(n_qubits: usize) -> Result<Self> {
        guard(n_qubits)?;
        let dim = 1 << n_qubits;
        Ok(DenseOperator {
            n_qubits,
            matrix: DMatrix::identity(dim, dim),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn adjoint(&self) -> DenseOperator {
        DenseOperator {
            n_qubits: self.n_qubits,
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn mul(&self, other: &DenseOperator) -> DenseOperator {
        DenseOperator {
            n_qubits: self.n_qubits,
            matrix: &self.matrix * &other.matrix,
        }
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> f64 {
        operator_norm(&self.matrix)
    }

    /// `‖A − A†‖_F / ‖A‖_F` (0 for the zero operator).
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.matrix.norm();
        if n == 0.0 {
            return 0.0;
        }
        (&self.matrix - self.matrix.adjoint()).norm() / n
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let prod = &self.matrix * self.matrix.adjoint();
        let id = DMatrix::<C64>::identity(self.dim(), self.dim());
        operator_norm(&(prod - id)) < tol
    }
}

impl fmt::Display for DenseOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.matrix)
    }
}

pub fn operator_norm(m: &DMatrix<C64>) -> f64 {
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// `min over global phases φ` of `‖A − e^{iφ}B‖₂`, evaluated at the phase
/// aligning `Tr(B†A)`.
pub fn distance_up_to_phase(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let overlap = (b.adjoint() * a).trace();
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        ONE
    };
    operator_norm(&(a - b * phase))
}

pub fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

/// Bit mask of `qubit` inside an `n`-qubit basis index.
#[inline]
pub fn qubit_mask(qubit: usize, n: usize) -> usize {
    1 << (n - 1 - qubit)
}

/// Embeds a `2^k × 2^k` operator acting on `qubits` (first listed qubit is the
/// most significant local bit) into the full `n`-qubit space.
pub fn embed(local: &DMatrix<C64>, qubits: &[usize], n: usize) -> Result<DMatrix<C64>> {
    guard(n)?;
    let k = qubits.len();
    if local.nrows() != 1 << k || local.ncols() != 1 << k {
        return Err(Error::DimensionMismatch {
            expected: 1 << k,
            got: local.nrows(),
        });
    }
    check_qubits(qubits, n)?;
    let dim = 1 << n;
    let masks: Vec<usize> = qubits.iter().map(|&q| qubit_mask(q, n)).collect();
    let all: usize = masks.iter().sum();
    let local_index = |idx: usize| -> usize {
        masks
            .iter()
            .fold(0, |acc, &m| (acc << 1) | usize::from(idx & m != 0))
    };
    let mut out = DMatrix::zeros(dim, dim);
    for r in 0..dim {
        for c in 0..dim {
            if r & !all == c & !all {
                out[(r, c)] = local[(local_index(r), local_index(c))];
            }
        }
    }
    Ok(out)
}

pub(crate) fn check_qubits(qubits: &[usize], n: usize) -> Result<()> {
    for (a, &q) in qubits.iter().enumerate() {
        if q >= n {
            return Err(Error::InvalidCircuit(format!(
                "qubit {q} out of range for width {n}"
            )));
        }
        if qubits[..a].contains(&q) {
            return Err(Error::InvalidCircuit(format!("qubit {q} repeated")));
        }
    }
    Ok(())
}

/// `S^α_q = σ^α_q / 2`.
pub fn spin_operator(axis: Pauli, qubit: usize, n: usize) -> Result<DMatrix<C64>> {
    Ok(embed(&axis.matrix(), &[qubit], n)? * C64::new(0.5, 0.0))
}

/// `S^α_tot = Σ_q σ^α_q / 2`.
pub fn total_spin(axis: Pauli, n: usize) -> Result<DMatrix<C64>> {
    guard(n)?;
    let dim = 1 << n;
    let mut out = DMatrix::zeros(dim, dim);
    for q in 0..n {
        out += spin_operator(axis, q, n)?;
    }
    Ok(out)
}

/// A tensor product of single-qubit Paulis, e.g. `XIZ`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString(pub Vec<Pauli>);

impl PauliString {
    pub fn parse(label: &str) -> Option<PauliString> {
        if label.is_empty() {
            return None;
        }
        label.chars().map(Pauli::from_char).collect::<Option<Vec<_>>>().map(PauliString)
    }

    /// `σ^axis` on one qubit, identity elsewhere.
    pub fn single(axis: Pauli, qubit: usize, n: usize) -> PauliString {
        let mut v = vec![Pauli::I; n];
        v[qubit] = axis;
        PauliString(v)
    }

    pub fn n_qubits(&self) -> usize {
        self.0.len()
    }

    pub fn label(&self) -> String {
        self.0.iter().map(|p| p.as_char()).collect()
    }

    pub fn matrix(&self) -> DMatrix<C64> {
        self.0
            .iter()
            .map(|p| p.matrix())
            .reduce(|acc, m| acc.kronecker(&m))
            .unwrap_or_else(|| DMatrix::identity(1, 1))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Computational basis state written as a bitstring, qubit 0 first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisState {
    index: usize,
    n: usize,
}

impl BasisState {
    pub fn new(index: usize, n: usize) -> Result<Self> {
        guard(n)?;
        if index >= 1 << n {
            return Err(Error::InvalidParameter(format!(
                "basis index {index} out of range for {n} qubits"
            )));
        }
        Ok(BasisState { index, n })
    }

    pub fn parse(bits: &str) -> Result<Self> {
        let n = bits.len();
        if n == 0 {
            return Err(Error::InvalidParameter("empty bitstring".into()));
        }
        let mut index = 0usize;
        for c in bits.chars() {
            index = (index << 1)
                | match c {
                    '0' => 0,
                    '1' => 1,
                    _ => {
                        return Err(Error::InvalidParameter(format!("bad bitstring {bits:?}")))
                    }
                };
        }
        BasisState::new(index, n)
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn bit(&self, qubit: usize) -> bool {
        self.index & qubit_mask(qubit, self.n) != 0
    }

    /// Total `S^z` eigenvalue, `(N − 2·#ones)/2`.
    pub fn magnetization(&self) -> f64 {
        magnetization_of(self.index, self.n)
    }

    /// Relabels qubits: logical qubit `l` moves to position `layout[l]`.
    pub fn permuted(&self, layout: &[usize]) -> BasisState {
        let mut index = 0;
        for (l, &p) in layout.iter().enumerate() {
            if self.bit(l) {
                index |= qubit_mask(p, self.n);
            }
        }
        BasisState { index, n: self.n }
    }

    /// All basis states with positive total magnetization, ascending index.
    pub fn positive_sectors(n: usize) -> Result<Vec<BasisState>> {
        guard(n)?;
        Ok((0..1usize << n)
            .filter(|&i| magnetization_of(i, n) > 0.0)
            .map(|index| BasisState { index, n })
            .collect())
    }
}

impl fmt::Display for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in 0..self.n {
            f.write_str(if self.bit(q) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn magnetization_of(index: usize, n: usize) -> f64 {
    (n as f64 - 2.0 * index.count_ones() as f64) / 2.0
}
