//! Lindblad master equation with a rate matrix over Pauli-string operators,
//! quantum-regression correlations and envelope fits.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::budget::{gamma_eff, ErrorBudget};
use crate::error::{Error, Result};
use crate::exact::dense_hamiltonian;
use crate::operators::{guard, total_spin, DenseOperator, Pauli, PauliString, C64, I, ONE, ZERO};
use crate::spin_system::HamiltonianTerms;

/// Largest register the superoperator integrator accepts.
pub const MAX_LINDBLAD_QUBITS: usize = 5;

#[derive(Debug, Clone)]
pub struct LindbladModel {
    hamiltonian: DenseOperator,
    ops: Vec<PauliString>,
    gamma: DMatrix<C64>,
    op_matrices: Vec<DMatrix<C64>>,
}

impl LindbladModel {
    /// Validates that `gamma` is Hermitian to 1e-12 and positive
    /// semidefinite to −1e-10.
    pub fn new(hamiltonian: DenseOperator, ops: Vec<PauliString>, gamma: DMatrix<C64>) -> Result<Self> {
        let n = hamiltonian.n_qubits();
        guard(n)?;
        if gamma.nrows() != ops.len() || gamma.ncols() != ops.len() {
            return Err(Error::InvalidRates(format!(
                "{} operators but a {}×{} rate matrix",
                ops.len(),
                gamma.nrows(),
                gamma.ncols()
            )));
        }
        if let Some(bad) = ops.iter().find(|o| o.n_qubits() != n) {
            return Err(Error::InvalidRates(format!("operator {bad} does not act on {n} qubits")));
        }
        if !gamma.is_empty() {
            let defect = max_abs(&(&gamma - gamma.adjoint()));
            if defect > 1e-12 {
                return Err(Error::InvalidRates(format!("rate matrix not Hermitian (defect {defect:e})")));
            }
            let herm = (&gamma + gamma.adjoint()) * C64::new(0.5, 0.0);
            let lo = herm.symmetric_eigenvalues().min();
            if lo < -1e-10 {
                return Err(Error::InvalidRates(format!("rate matrix has negative eigenvalue {lo:e}")));
            }
        }
        let op_matrices = ops.iter().map(|o| o.matrix()).collect();
        Ok(LindbladModel {
            hamiltonian,
            ops,
            gamma,
            op_matrices,
        })
    }

    pub fn coherent(hamiltonian: DenseOperator) -> Result<Self> {
        LindbladModel::new(hamiltonian, Vec::new(), DMatrix::zeros(0, 0))
    }

    /// Diagonal rates `rate` on `σ^x_i, σ^y_i, σ^z_i` for every qubit, which
    /// gives `d⟨σ^z_i⟩/dt = −4·rate·⟨σ^z_i⟩`.
    pub fn depolarizing(hamiltonian: DenseOperator, rate: f64) -> Result<Self> {
        let n = hamiltonian.n_qubits();
        Self::depolarizing_per_qubit(hamiltonian, &vec![rate; n])
    }

    pub fn depolarizing_per_qubit(hamiltonian: DenseOperator, rates: &[f64]) -> Result<Self> {
        let n = hamiltonian.n_qubits();
        if rates.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: rates.len() });
        }
        let mut ops = Vec::new();
        let mut diag = Vec::new();
        for (q, &r) in rates.iter().enumerate() {
            for axis in [Pauli::X, Pauli::Y, Pauli::Z] {
                ops.push(PauliString::single(axis, q, n));
                diag.push(C64::new(r, 0.0));
            }
        }
        LindbladModel::new(hamiltonian, ops, DMatrix::from_diagonal(&DVector::from_vec(diag)))
    }

    /// Target Hamiltonian plus uniform single-qubit depolarizing whose total
    /// rate is the budget's `Σγ̃` (rates rescaled by `γ̃τ = γ·t_gate`),
    /// averaged over the spins.
    pub fn from_budget(terms: &HamiltonianTerms, budget: &ErrorBudget) -> Result<Self> {
        let h = dense_hamiltonian(terms)?;
        let per_pauli = budget.rescaled_rate_sum() / (4.0 * budget.n_spins() as f64);
        LindbladModel::depolarizing(h, per_pauli)
    }

    pub fn n_qubits(&self) -> usize {
        self.hamiltonian.n_qubits()
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn ops(&self) -> &[PauliString] {
        &self.ops
    }

    pub fn gamma(&self) -> &DMatrix<C64> {
        &self.gamma
    }

    pub fn hamiltonian(&self) -> &DenseOperator {
        &self.hamiltonian
    }

    /// Superoperator acting on row-major vectorized matrices.
    pub fn superoperator(&self) -> Result<DMatrix<C64>> {
        let n = self.n_qubits();
        if n > MAX_LINDBLAD_QUBITS {
            return Err(Error::DimensionGuard { n_qubits: n, limit: MAX_LINDBLAD_QUBITS });
        }
        let dim = self.dim();
        let d2 = dim * dim;
        let mut l = DMatrix::zeros(d2, d2);
        let mut basis = DMatrix::<C64>::zeros(dim, dim);
        for k in 0..d2 {
            basis[(k / dim, k % dim)] = ONE;
            let col = master_rhs(&basis, self)?;
            for r in 0..d2 {
                l[(r, k)] = col[(r / dim, r % dim)];
            }
            basis[(k / dim, k % dim)] = ZERO;
        }
        Ok(l)
    }
}

/// `ρ̇ = −i[H,ρ] + Σ_{αβ} γ_{αβ}(O_α ρ O_β† − ½{O_β†O_α, ρ})`.
pub fn master_rhs(rho: &DMatrix<C64>, model: &LindbladModel) -> Result<DMatrix<C64>> {
    let dim = model.dim();
    if rho.nrows() != dim || rho.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: rho.nrows() });
    }
    let h = model.hamiltonian.matrix();
    let mut out = (h * rho - rho * h) * (-I);
    for a in 0..model.ops.len() {
        for b in 0..model.ops.len() {
            let g = model.gamma[(a, b)];
            if g == ZERO {
                continue;
            }
            let oa = &model.op_matrices[a];
            let ob_dag = model.op_matrices[b].adjoint();
            let anti = &ob_dag * oa;
            out += (oa * rho * &ob_dag - (&anti * rho + rho * &anti) * C64::new(0.5, 0.0)) * g;
        }
    }
    Ok(out)
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn vectorize(m: &DMatrix<C64>) -> DVector<C64> {
    let dim = m.nrows();
    DVector::from_iterator(dim * dim, (0..dim * dim).map(|k| m[(k / dim, k % dim)]))
}

fn unvectorize(v: &DVector<C64>, dim: usize) -> DMatrix<C64> {
    DMatrix::from_fn(dim, dim, |r, c| v[r * dim + c])
}

/// Trace distance `½‖a − b‖₁` of two Hermitian matrices.
pub fn trace_distance(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let d = a - b;
    let herm = (&d + d.adjoint()) * C64::new(0.5, 0.0);
    0.5 * herm.symmetric_eigenvalues().iter().map(|x| x.abs()).sum::<f64>()
}

/// Fourth-order Taylor (classical RK4) propagator for `ẋ = Lx` over `h`,
/// applied `m` times.
fn rk4_propagator(l: &DMatrix<C64>, dt: f64, m: usize) -> DMatrix<C64> {
    let h = dt / m as f64;
    let hl = l * C64::new(h, 0.0);
    let d = l.nrows();
    let mut step = DMatrix::<C64>::identity(d, d);
    let mut term = DMatrix::<C64>::identity(d, d);
    for k in 1..=4 {
        term = &term * &hl / C64::new(k as f64, 0.0);
        step += &term;
    }
    // step^m by repeated squaring
    let mut p = DMatrix::<C64>::identity(d, d);
    let mut base = step;
    let mut e = m;
    while e > 0 {
        if e & 1 == 1 {
            p = &base * p;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    p
}

/// States on `t_grid` plus the substep count per grid interval that met the
/// step-halving tolerance.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub vectors: Vec<DVector<C64>>,
    pub substeps: usize,
    dim: usize,
}

impl Trajectory {
    pub fn state(&self, k: usize) -> DMatrix<C64> {
        unvectorize(&self.vectors[k], self.dim)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Halving the step must change the final state by less than this.
pub const STEP_TOLERANCE: f64 = 1e-9;

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if t_grid.iter().any(|t| !t.is_finite()) || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("time grid must be finite and strictly ascending".into()));
    }
    Ok(())
}

fn propagate(l: &DMatrix<C64>, x0: &DVector<C64>, t_grid: &[f64], substeps: usize) -> Vec<DVector<C64>> {
    // intervals equal to ~1e-12 share a propagator; k·τ grids differ in the last bits
    let scale = t_grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let mut cache: HashMap<u64, DMatrix<C64>> = HashMap::new();
    let mut out = Vec::with_capacity(t_grid.len());
    let mut x = x0.clone();
    out.push(x.clone());
    for w in t_grid.windows(2) {
        let dt = w[1] - w[0];
        let p = cache.entry((dt / scale * 1e12).round() as u64).or_insert_with(|| rk4_propagator(l, dt, substeps));
        x = &*p * x;
        out.push(x.clone());
    }
    out
}

fn integrate_vector(model: &LindbladModel, x0: &DVector<C64>, t_grid: &[f64]) -> Result<Trajectory> {
    check_grid(t_grid)?;
    let dim = model.dim();
    if t_grid.len() == 1 {
        return Ok(Trajectory { times: t_grid.to_vec(), vectors: vec![x0.clone()], substeps: 0, dim });
    }
    let l = model.superoperator()?;
    let max_dt = t_grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    // induced 1-norm, max column sum
    let norm = l.column_iter().map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
    let mut m = ((max_dt * norm / 0.25).ceil() as usize).max(1);
    let mut coarse = propagate(&l, x0, t_grid, m);
    for _ in 0..24 {
        let fine = propagate(&l, x0, t_grid, 2 * m);
        let a = unvectorize(coarse.last().unwrap(), dim);
        let b = unvectorize(fine.last().unwrap(), dim);
        let change = trace_distance(&a, &b);
        m *= 2;
        coarse = fine;
        if change < STEP_TOLERANCE {
            if coarse.iter().flat_map(|v| v.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Numerical("Lindblad integration diverged".into()));
            }
            return Ok(Trajectory { times: t_grid.to_vec(), vectors: coarse, substeps: m, dim });
        }
    }
    Err(Error::Numerical("Lindblad step control did not converge".into()))
}

/// Integrates `ρ̇ = Lρ` from `rho0` at `t_grid[0]`.
pub fn integrate(model: &LindbladModel, rho0: &DMatrix<C64>, t_grid: &[f64]) -> Result<Trajectory> {
    let dim = model.dim();
    if rho0.nrows() != dim || rho0.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: rho0.nrows() });
    }
    integrate_vector(model, &vectorize(rho0), t_grid)
}

/// `⟨A(t)B⟩ = 2^N·Tr{A·e^{Lt}(B·I/2^N)}` on a grid starting at 0.
pub fn regression_correlation(
    model: &LindbladModel,
    a: &DMatrix<C64>,
    b: &DMatrix<C64>,
    t_grid: &[f64],
) -> Result<Vec<C64>> {
    let dim = model.dim();
    for m in [a, b] {
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: m.nrows() });
        }
    }
    check_grid(t_grid)?;
    if t_grid[0] != 0.0 {
        return Err(Error::InvalidParameter("correlation grid must start at 0".into()));
    }
    // B·ρ(0)·2^N with ρ(0) = I/2^N is just B
    let traj = integrate_vector(model, &vectorize(b), t_grid)?;
    Ok(traj
        .vectors
        .iter()
        .map(|v| {
            let x = unvectorize(v, dim);
            (a * x).trace()
        })
        .collect())
}

/// Envelope fit of an oscillating, decaying series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeFit {
    /// `r` in `|C(t)| ≈ A·e^{−rt}`, clamped at zero.
    pub rate: f64,
    pub amplitude: f64,
    /// RMS residual of `ln|C|` at the fitted maxima.
    pub residual: f64,
    pub n_points: usize,
    /// Set when the raw fitted rate was negative (non-decaying series).
    pub non_decaying: bool,
}

/// Log-linear least squares on the local maxima of `|values|`, each refined
/// by a parabola through its neighbours. Falls back to every sample when
/// fewer than three maxima exist.
pub fn fit_envelope(times: &[f64], values: &[f64]) -> Result<EnvelopeFit> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), got: values.len() });
    }
    if times.len() < 2 {
        return Err(Error::EmptyGrid);
    }
    let mag: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let floor = mag.iter().cloned().fold(0.0, f64::max) * 1e-12;
    let mut pts = Vec::new();
    if mag[0] >= mag[1] {
        pts.push((times[0], mag[0]));
    }
    for k in 1..mag.len() - 1 {
        if mag[k] > mag[k - 1] && mag[k] >= mag[k + 1] {
            let (y0, y1, y2) = (mag[k - 1], mag[k], mag[k + 1]);
            let denom = y0 - 2.0 * y1 + y2;
            let (shift, peak) = if denom < 0.0 {
                let s = 0.5 * (y0 - y2) / denom;
                (s, y1 - 0.25 * (y0 - y2) * s)
            } else {
                (0.0, y1)
            };
            let dt = times[k + 1] - times[k];
            pts.push((times[k] + shift * dt, peak));
        }
    }
    if pts.len() < 3 {
        pts = times.iter().cloned().zip(mag.iter().cloned()).collect();
    }
    pts.retain(|&(_, y)| y > floor);
    if pts.len() < 2 {
        return Ok(EnvelopeFit { rate: 0.0, amplitude: 0.0, residual: 0.0, n_points: pts.len(), non_decaying: true });
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), &(t, y)| (a + t, b + y.ln()));
    let (mx, my) = (sx / n, sy / n);
    let sxx: f64 = pts.iter().map(|&(t, _)| (t - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|&(t, y)| (t - mx) * (y.ln() - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|&(t, y)| (y.ln() - intercept - slope * t).powi(2)).sum::<f64>() / n).sqrt();
    let raw = -slope;
    Ok(EnvelopeFit {
        rate: raw.max(0.0),
        amplitude: intercept.exp(),
        residual,
        n_points: pts.len(),
        non_decaying: raw < 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EomEstimate {
    /// Fitted decay rate of the `C_z` envelope (s⁻¹).
    pub decay_rate: f64,
    pub residual: f64,
    pub non_decaying: bool,
    /// `Σε/(Nτ)` of the budget the model came from.
    pub gamma_eff: f64,
    pub times: Vec<f64>,
    pub cz: Vec<f64>,
}

/// Regression-theorem `C_z(t)` under `model`, then an envelope fit.
pub fn broadening_estimate(model: &LindbladModel, t_grid: &[f64], reference_gamma_eff: f64) -> Result<EomEstimate> {
    let sz = total_spin(Pauli::Z, model.n_qubits())?;
    let cz: Vec<f64> = regression_correlation(model, &sz, &sz, t_grid)?
        .into_iter()
        .map(|z| z.re)
        .collect();
    let fit = fit_envelope(t_grid, &cz)?;
    Ok(EomEstimate {
        decay_rate: fit.rate,
        residual: fit.residual,
        non_decaying: fit.non_decaying,
        gamma_eff: reference_gamma_eff,
        times: t_grid.to_vec(),
        cz,
    })
}

/// Budget → Lindblad model → envelope estimate on `n_steps` steps of `τ`.
pub fn broadening_from_budget(terms: &HamiltonianTerms, budget: &ErrorBudget, n_steps: usize) -> Result<EomEstimate> {
    let model = LindbladModel::from_budget(terms, budget)?;
    let grid: Vec<f64> = (0..=n_steps).map(|k| k as f64 * budget.tau()).collect();
    broadening_estimate(&model, &grid, gamma_eff(budget))
}

/// Rate matrix over Pauli strings read from text.
///
/// ```text
/// units s^-1
/// # alpha beta re [im]
/// iX iX 0.5
/// Zi iZ 0.1 0.02
/// ```
/// Unlisted transposed entries are filled by Hermitian conjugation.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    pub ops: Vec<PauliString>,
    pub gamma: DMatrix<C64>,
}

impl RateMatrix {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut units_seen = false;
        let mut ops: Vec<PauliString> = Vec::new();
        let mut raw: Vec<(usize, usize, C64, usize)> = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| Error::parse(path, no + 1, m);
            let words: Vec<&str> = line.split_whitespace().collect();
            if words[0] == "units" {
                match words.get(1..).map(|w| w.join(" ")).as_deref() {
                    Some("s^-1") | Some("1/s") | Some("s-1") => units_seen = true,
                    other => return Err(err(format!("unsupported units {other:?}; expected s^-1"))),
                }
                continue;
            }
            if !units_seen {
                return Err(err("the first entry must be a `units s^-1` line".into()));
            }
            if !(3..=4).contains(&words.len()) {
                return Err(err("expected `alpha beta re [im]`".into()));
            }
            let mut index = |label: &str| -> Result<usize> {
                let p = PauliString::parse(label).ok_or_else(|| err(format!("bad Pauli label {label}")))?;
                if let Some(first) = ops.first() {
                    if first.n_qubits() != p.n_qubits() {
                        return Err(err(format!("label {label} has the wrong length")));
                    }
                }
                Ok(match ops.iter().position(|o| *o == p) {
                    Some(i) => i,
                    None => {
                        ops.push(p);
                        ops.len() - 1
                    }
                })
            };
            let a = index(words[0])?;
            let b = index(words[1])?;
            let re: f64 = words[2].parse().map_err(|_| err(format!("bad rate {}", words[2])))?;
            let im: f64 = match words.get(3) {
                Some(w) => w.parse().map_err(|_| err(format!("bad rate {w}")))?,
                None => 0.0,
            };
            if !re.is_finite() || !im.is_finite() {
                return Err(err("non-finite rate".into()));
            }
            raw.push((a, b, C64::new(re, im), no + 1));
        }
        if !units_seen {
            return Err(Error::parse(path, 0, "missing `units s^-1` line"));
        }
        if ops.is_empty() {
            return Err(Error::parse(path, 0, "no rate entries"));
        }
        let k = ops.len();
        let mut gamma = DMatrix::zeros(k, k);
        let mut set = DMatrix::from_element(k, k, false);
        for &(a, b, v, line) in &raw {
            if set[(a, b)] && gamma[(a, b)] != v {
                return Err(Error::parse(path, line, "conflicting entry"));
            }
            gamma[(a, b)] = v;
            set[(a, b)] = true;
        }
        for &(a, b, v, line) in &raw {
            if a == b && v.im != 0.0 {
                return Err(Error::parse(path, line, "diagonal rates must be real"));
            }
            if !set[(b, a)] {
                gamma[(b, a)] = v.conj();
                set[(b, a)] = true;
            }
        }
        Ok(RateMatrix { ops, gamma })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RateMatrix::parse(&text, path)
    }

    pub fn into_model(self, hamiltonian: DenseOperator) -> Result<LindbladModel> {
        LindbladModel::new(hamiltonian, self.ops, self.gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::embed;

    fn eps_sigma_x(eps: f64) -> DenseOperator {
        DenseOperator::from_matrix(Pauli::X.matrix() * C64::new(eps, 0.0)).unwrap()
    }

    fn ket0() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ZERO])
    }

    fn expect(rho: &DMatrix<C64>, op: &DMatrix<C64>) -> f64 {
        (rho * op).trace().re
    }

    #[test]
    fn zero_rates_give_commutator() {
        let h = eps_sigma_x(0.7);
        let model = LindbladModel::coherent(h.clone()).unwrap();
        let rho = DMatrix::from_row_slice(2, 2, &[C64::new(0.6, 0.0), C64::new(0.1, 0.2), C64::new(0.1, -0.2), C64::new(0.4, 0.0)]);
        let expected = (h.matrix() * &rho - &rho * h.matrix()) * (-I);
        assert!(max_abs(&(master_rhs(&rho, &model).unwrap() - expected)) < 1e-15);
        assert!(master_rhs(&DMatrix::zeros(4, 4), &model).is_err());
    }

    #[test]
    fn sigma_z_dephasing_rate() {
        let h = DenseOperator::zeros(1).unwrap();
        let g = 0.3;
        let model = LindbladModel::new(h, vec![PauliString::parse("Z").unwrap()], DMatrix::from_element(1, 1, C64::new(g, 0.0))).unwrap();
        let rho = DMatrix::from_row_slice(2, 2, &[C64::new(0.5, 0.0), C64::new(0.5, 0.0), C64::new(0.5, 0.0), C64::new(0.5, 0.0)]);
        let d = master_rhs(&rho, &model).unwrap();
        assert!((d[(0, 1)] - C64::new(-2.0 * g * 0.5, 0.0)).norm() < 1e-15);
        assert!(d[(0, 0)].norm() < 1e-15);
    }

    #[test]
    fn depolarizing_generator_coefficient() {
        let g = 0.25;
        let model = LindbladModel::depolarizing(DenseOperator::zeros(1).unwrap(), g).unwrap();
        let rho = DMatrix::from_row_slice(2, 2, &[C64::new(0.8, 0.0), ZERO, ZERO, C64::new(0.2, 0.0)]);
        let d = master_rhs(&rho, &model).unwrap();
        let z = Pauli::Z.matrix();
        assert!((expect(&d, &z) + 4.0 * g * expect(&rho, &z)).abs() < 1e-14);
    }

    #[test]
    fn two_spin_ixix_iyiy_contribution() {
        let g = 0.4;
        let ops = vec![PauliString::parse("iX").unwrap(), PauliString::parse("iY").unwrap()];
        let gamma = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(g, 0.0); 2]));
        let model = LindbladModel::new(DenseOperator::zeros(2).unwrap(), ops, gamma).unwrap();
        let mut rho = DMatrix::<C64>::zeros(4, 4);
        rho[(0, 0)] = C64::new(0.7, 0.0);
        rho[(1, 1)] = C64::new(0.3, 0.0);
        let d = master_rhs(&rho, &model).unwrap();
        let z1 = embed(&Pauli::Z.matrix(), &[1], 2).unwrap();
        let z0 = embed(&Pauli::Z.matrix(), &[0], 2).unwrap();
        assert!((expect(&d, &z1) + 4.0 * g * expect(&rho, &z1)).abs() < 1e-14);
        assert!(expect(&d, &z0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_rate_matrices() {
        let h = DenseOperator::zeros(1).unwrap();
        let ops = vec![PauliString::parse("X").unwrap(), PauliString::parse("Y").unwrap()];
        let non_herm = DMatrix::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        assert!(LindbladModel::new(h.clone(), ops.clone(), non_herm).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[ONE, C64::new(2.0, 0.0), C64::new(2.0, 0.0), ONE]);
        assert!(LindbladModel::new(h.clone(), ops.clone(), indefinite).is_err());
        assert!(LindbladModel::new(h, vec![PauliString::parse("XX").unwrap()], DMatrix::identity(1, 1)).is_err());
    }

    #[test]
    fn rabi_oscillation() {
        let eps = 3.0;
        let model = LindbladModel::coherent(eps_sigma_x(eps)).unwrap();
        let grid: Vec<f64> = (0..=200).map(|k| k as f64 * 0.01).collect();
        let traj = integrate(&model, &ket0(), &grid).unwrap();
        for (k, &t) in grid.iter().enumerate() {
            let z = expect(&traj.state(k), &Pauli::Z.matrix());
            assert!((z - (2.0 * eps * t).cos()).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn depolarizing_envelope_and_trace() {
        let (eps, g) = (3.0, 0.2);
        let model = LindbladModel::depolarizing(eps_sigma_x(eps), g).unwrap();
        let grid: Vec<f64> = (0..=300).map(|k| k as f64 * 0.01).collect();
        let traj = integrate(&model, &ket0(), &grid).unwrap();
        for (k, &t) in grid.iter().enumerate() {
            let rho = traj.state(k);
            assert!((rho.trace() - ONE).norm() < 1e-8);
            let z = expect(&rho, &Pauli::Z.matrix());
            assert!((z - (-4.0 * g * t).exp() * (2.0 * eps * t).cos()).abs() < 1e-8);
        }
        let single = integrate(&model, &ket0(), &[0.0]).unwrap();
        assert_eq!(single.state(0), ket0());
    }

    #[test]
    fn regression_matches_single_spin_law() {
        let eps = 2.0;
        let model = LindbladModel::coherent(eps_sigma_x(eps)).unwrap();
        let grid: Vec<f64> = (0..=100).map(|k| k as f64 * 0.01).collect();
        let z = Pauli::Z.matrix();
        let y = Pauli::Y.matrix();
        let czz = regression_correlation(&model, &z, &z, &grid).unwrap();
        let cyz = regression_correlation(&model, &y, &z, &grid).unwrap();
        for (k, &t) in grid.iter().enumerate() {
            assert!((czz[k].re - 2.0 * (2.0 * eps * t).cos()).abs() < 1e-8);
            assert!((cyz[k] - C64::new(-2.0 * (2.0 * eps * t).sin(), 0.0)).norm() < 1e-8, "t={t} {}", cyz[k]);
        }
    }

    #[test]
    fn envelope_fit_recovers_rate() {
        let times: Vec<f64> = (0..=400).map(|k| k as f64 * 0.005).collect();
        let vals: Vec<f64> = times.iter().map(|t| (-1.7 * t).exp() * (25.0 * t).cos()).collect();
        let fit = fit_envelope(&times, &vals).unwrap();
        assert!((fit.rate - 1.7).abs() < 0.01 * 1.7, "{fit:?}");
        let flat: Vec<f64> = times.iter().map(|t| (25.0 * t).cos()).collect();
        let fit = fit_envelope(&times, &flat).unwrap();
        assert!(fit.rate < 1e-4, "{fit:?}");
        let growing: Vec<f64> = times.iter().map(|t| (0.5 * t).exp()).collect();
        let fit = fit_envelope(&times, &growing).unwrap();
        assert_eq!(fit.rate, 0.0);
        assert!(fit.non_decaying);
    }

    #[test]
    fn broadening_of_single_spin() {
        let g = 0.5;
        let model = LindbladModel::depolarizing(eps_sigma_x(20.0), g).unwrap();
        let grid: Vec<f64> = (0..=400).map(|k| k as f64 * 0.005).collect();
        let est = broadening_estimate(&model, &grid, 0.0).unwrap();
        assert!((est.decay_rate - 4.0 * g).abs() < 0.05 * 4.0 * g, "{}", est.decay_rate);
        let still = LindbladModel::coherent(eps_sigma_x(20.0)).unwrap();
        assert!(broadening_estimate(&still, &grid, 0.0).unwrap().decay_rate < 1e-4);
    }

    #[test]
    fn rate_file_parsing() {
        let p = Path::new("rates.txt");
        let text = "units s^-1\niX iX 0.5\niY iY 0.5\nZi iZ 0.1 0.02\nZi Zi 0.3\niZ iZ 0.3\n";
        let r = RateMatrix::parse(text, p).unwrap();
        assert_eq!(r.ops.len(), 4);
        assert_eq!(r.gamma[(3, 2)], C64::new(0.1, -0.02));
        let model = r.into_model(DenseOperator::zeros(2).unwrap()).unwrap();
        assert_eq!(model.ops()[0].label(), "IX");
        assert!(RateMatrix::parse("iX iX 0.5\n", p).is_err());
        assert!(RateMatrix::parse("units Hz\niX iX 0.5\n", p).is_err());
        assert!(RateMatrix::parse("units s^-1\n", p).is_err());
        assert!(RateMatrix::parse("units s^-1\niX iX 0.5 0.1\n", p).is_err());
        assert!(RateMatrix::parse("units s^-1\niX iXX 0.5\n", p).is_err());
        assert!(RateMatrix::parse("units s^-1\niX iY 0.5\niX iY 0.6\n", p).is_err());
    }
}
