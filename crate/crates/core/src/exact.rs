//! Dense exact-diagonalization reference: Hamiltonian matrix, exact
//! propagators, correlation functions and spectra. Everything else in the
//! crate is checked against this module.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::operators::{guard, total_spin, spin_operator, BasisState, DenseOperator, Pauli, C64};
use crate::record::CorrelationRecord;
use crate::spectrum::{default_padding, spectrum_from_record, zero_pad, Spectrum};
use crate::spin_system::{FrameConfig, HamiltonianTerms};

/// `Σ ω_i S^x_i + Σ 2πJ_ij S_i·S_j` as a dense matrix.
pub fn dense_hamiltonian(terms: &HamiltonianTerms) -> Result<DenseOperator> {
    let n = terms.n_spins();
    guard(n)?;
    let dim = 1 << n;
    let mut h = DMatrix::<C64>::zeros(dim, dim);
    for t in &terms.onsite {
        h += spin_operator(Pauli::X, t.spin, n)? * C64::from(t.omega);
    }
    for p in &terms.pairs {
        for axis in [Pauli::X, Pauli::Y, Pauli::Z] {
            let si = spin_operator(axis, p.i, n)?;
            let sj = spin_operator(axis, p.j, n)?;
            h += si * sj * C64::from(p.strength);
        }
    }
    DenseOperator::from_matrix(h)
}

/// Eigen-decomposition of a Hermitian Hamiltonian, reused for every time.
#[derive(Debug, Clone)]
pub struct Propagator {
    energies: DVector<f64>,
    vectors: DMatrix<C64>,
}

impl Propagator {
    pub fn new(hamiltonian: &DenseOperator) -> Result<Self> {
        if hamiltonian.hermiticity_defect() > 1e-12 {
            return Err(Error::Numerical("Hamiltonian is not Hermitian".into()));
        }
        let eig = SymmetricEigen::new(hamiltonian.matrix().clone());
        Ok(Propagator {
            energies: eig.eigenvalues,
            vectors: eig.eigenvectors,
        })
    }

    pub fn energies(&self) -> &DVector<f64> {
        &self.energies
    }

    /// `exp(−iHt)`.
    pub fn unitary(&self, t: f64) -> DenseOperator {
        let phases = DMatrix::from_diagonal(&self.energies.map(|e| C64::from_polar(1.0, -e * t)));
        let m = &self.vectors * phases * self.vectors.adjoint();
        DenseOperator::from_matrix(m).expect("propagator keeps the Hamiltonian's dimension")
    }

    /// Rotates an operator into the eigenbasis, `V†AV`.
    fn to_eigenbasis(&self, a: &DMatrix<C64>) -> DMatrix<C64> {
        self.vectors.adjoint() * a * &self.vectors
    }
}

/// `Tr{A(t) B}` with `A(t) = e^{iHt} A e^{−iHt}` for every `t` in the grid.
pub fn exact_trace_correlation(
    prop: &Propagator,
    a: &DMatrix<C64>,
    b: &DMatrix<C64>,
    t_grid: &[f64],
) -> Vec<C64> {
    let a_e = prop.to_eigenbasis(a);
    let b_e = prop.to_eigenbasis(b);
    let dim = a_e.nrows();
    let e = &prop.energies;
    t_grid
        .iter()
        .map(|&t| {
            let phase: Vec<C64> = (0..dim).map(|k| C64::from_polar(1.0, e[k] * t)).collect();
            let mut acc = C64::new(0.0, 0.0);
            for p in 0..dim {
                for q in 0..dim {
                    // Tr{A(t)B} = Σ e^{i(E_p − E_q)t} A_pq B_qp
                    acc += phase[p] * phase[q].conj() * a_e[(p, q)] * b_e[(q, p)];
                }
            }
            acc
        })
        .collect()
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if t_grid[0] != 0.0 || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter(
            "time grid must start at 0 and be strictly ascending".into(),
        ));
    }
    Ok(())
}

/// Full-trace correlation functions by exact exponentiation.
pub fn exact_correlations(terms: &HamiltonianTerms, t_grid: &[f64]) -> Result<CorrelationRecord> {
    check_grid(t_grid)?;
    let n = terms.n_spins();
    let h = dense_hamiltonian(terms)?;
    let prop = Propagator::new(&h)?;
    let sz = total_spin(Pauli::Z, n)?;
    let sy = total_spin(Pauli::Y, n)?;
    let cz = exact_trace_correlation(&prop, &sz, &sz, t_grid);
    let cy = exact_trace_correlation(&prop, &sy, &sz, t_grid);
    CorrelationRecord::new(
        t_grid.to_vec(),
        cz.iter().map(|c| c.re).collect(),
        cy.iter().map(|c| c.re).collect(),
    )
}

/// The same correlations assembled from pure-state evolutions of every
/// positive-magnetization basis state, `2 Σ_{m⁰>0} m⁰ ⟨m(t)|S|m(t)⟩`.
pub fn exact_sector_correlations(
    terms: &HamiltonianTerms,
    t_grid: &[f64],
) -> Result<CorrelationRecord> {
    check_grid(t_grid)?;
    let n = terms.n_spins();
    let h = dense_hamiltonian(terms)?;
    let prop = Propagator::new(&h)?;
    let sz = total_spin(Pauli::Z, n)?;
    let sy = total_spin(Pauli::Y, n)?;
    let sectors = BasisState::positive_sectors(n)?;
    let mut cz = vec![0.0; t_grid.len()];
    let mut cy = vec![0.0; t_grid.len()];
    for (k, &t) in t_grid.iter().enumerate() {
        let u = prop.unitary(t);
        for s in &sectors {
            let psi = u.matrix().column(s.index()).into_owned();
            let ez = (psi.adjoint() * &sz * &psi)[(0, 0)].re;
            let ey = (psi.adjoint() * &sy * &psi)[(0, 0)].re;
            cz[k] += 2.0 * s.magnetization() * ez;
            cy[k] += 2.0 * s.magnetization() * ey;
        }
    }
    CorrelationRecord::new(t_grid.to_vec(), cz, cy)
}

/// Spectrum of an exact record, using the same discrete transform as the
/// circuit pipeline. `gamma` must be given explicitly.
pub fn exact_spectrum(
    correlations: &CorrelationRecord,
    gamma: f64,
    frame: &FrameConfig,
) -> Result<Spectrum> {
    if correlations.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {gamma}")));
    }
    let padded = zero_pad(correlations, default_padding(correlations.measured_len))?;
    spectrum_from_record(&padded, gamma, frame, false)
}
