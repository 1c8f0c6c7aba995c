//! Density-matrix evolution through Trotter circuits with per-gate noise.
//!
//! Each gate is followed by its configured coherent-error rotation and then
//! by a depolarizing channel on the qubits it touched.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Gate, GateClass, GateKind, GateOrigin};
use crate::error::{Error, Result};
use crate::operators::{guard, magnetization_of, qubit_mask, BasisState, C64, ONE, ZERO};
use crate::record::{CorrelationRecord, SectorSeries};

/// Coherent Z error after single-qubit gates in the IBM-like preset.
pub const IBM_LIKE_PHI_Z: f64 = -0.027;
/// `(φ_x^c, φ_x^t, φ_z^c)` after CNOTs for the same preset.
pub const IBM_LIKE_CNOT_ANGLES: [f64; 3] = [0.05, -0.047, -0.05];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateNoise {
    /// Average gate infidelity ε.
    pub error: f64,
    /// Gate duration in seconds, used only when bridging to Lindblad rates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub gates: BTreeMap<GateClass, GateNoise>,
    /// Rz angle applied after every non-virtual single-qubit gate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coherent_after_1q: Option<f64>,
    /// `(φ_x^c, φ_x^t, φ_z^c)` applied after every CNOT.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coherent_after_2q: Option<[f64; 3]>,
    /// Treat Rz as a physical gate that receives noise.
    #[serde(default)]
    pub noisy_rz: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::noiseless()
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        NoiseModel {
            name: "noiseless".into(),
            gates: BTreeMap::new(),
            coherent_after_1q: None,
            coherent_after_2q: None,
            noisy_rz: false,
            seed: 0,
        }
    }

    /// Pure depolarizing noise: `eps_1q` on X and √X, `eps_2q` on CNOT.
    pub fn depolarizing(eps_1q: f64, eps_2q: f64) -> Result<Self> {
        let mut model = NoiseModel::noiseless();
        model.name = "depolarizing".into();
        for class in [GateClass::X, GateClass::SqrtX] {
            model.gates.insert(class, GateNoise { error: eps_1q, duration_s: None });
        }
        model.gates.insert(GateClass::Cnot, GateNoise { error: eps_2q, duration_s: None });
        model.validate()?;
        Ok(model)
    }

    /// Depolarizing noise plus IBM-like coherent over-rotations.
    pub fn ibm_like(eps_1q: f64, eps_2q: f64) -> Result<Self> {
        let mut model = NoiseModel::depolarizing(eps_1q, eps_2q)?;
        model.name = "ibm-like".into();
        model.coherent_after_1q = Some(IBM_LIKE_PHI_Z);
        model.coherent_after_2q = Some(IBM_LIKE_CNOT_ANGLES);
        Ok(model)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (class, g) in &self.gates {
            if !(0.0..1.0).contains(&g.error) {
                return Err(Error::InvalidNoise(format!("{class}: ε = {} outside [0, 1)", g.error)));
            }
            depolarizing_probability(g.error, class.arity().min(2))?;
            if let Some(t) = g.duration_s {
                if !(t >= 0.0) || !t.is_finite() {
                    return Err(Error::InvalidNoise(format!("{class}: bad duration {t}")));
                }
            }
        }
        let angles = self
            .coherent_after_1q
            .iter()
            .chain(self.coherent_after_2q.iter().flatten());
        for a in angles {
            if !a.is_finite() {
                return Err(Error::InvalidNoise("non-finite coherent angle".into()));
            }
        }
        Ok(())
    }

    /// ε for a gate class; SWAP falls back to CNOT.
    pub fn error_for(&self, class: GateClass) -> f64 {
        let class = if class == GateClass::Swap { GateClass::Cnot } else { class };
        if class == GateClass::Rz && !self.noisy_rz {
            return 0.0;
        }
        self.gates.get(&class).map_or(0.0, |g| g.error)
    }

    pub fn duration_for(&self, class: GateClass) -> Option<f64> {
        self.gates.get(&class).and_then(|g| g.duration_s)
    }

    pub fn is_noiseless(&self) -> bool {
        self.gates.values().all(|g| g.error == 0.0)
            && self.coherent_after_1q.is_none_or(|a| a == 0.0)
            && self.coherent_after_2q.is_none_or(|a| a.iter().all(|&x| x == 0.0))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let model: NoiseModel =
            toml::from_str(text).map_err(|e| Error::InvalidNoise(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        NoiseModel::from_toml_str(&text).map_err(|e| match e {
            Error::InvalidNoise(m) => Error::InvalidNoise(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

/// Strength `p` of `ρ → (1−p)ρ + p·I/d` with average gate infidelity `ε`:
/// `p = ε·d/(d−1)`, `d = 2^n`.
pub fn depolarizing_probability(epsilon: f64, n_qubits: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::InvalidNoise(format!("ε = {epsilon} outside [0, 1)")));
    }
    if n_qubits == 0 {
        return Err(Error::InvalidParameter("depolarizing channel on zero qubits".into()));
    }
    let d = (1usize << n_qubits) as f64;
    let p = epsilon * d / (d - 1.0);
    if p > 1.0 {
        return Err(Error::InvalidNoise(format!(
            "ε = {epsilon} gives depolarizing strength {p} > 1 on {n_qubits} qubits"
        )));
    }
    Ok(p)
}

/// Row-major `2^N × 2^N` density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n: usize,
    dim: usize,
    data: Vec<C64>,
}

/// Local-index offsets of `qubits` inside the full basis index, plus the mask
/// of all touched bits.
fn offsets(qubits: &[usize], n: usize) -> (Vec<usize>, usize) {
    let masks: Vec<usize> = qubits.iter().map(|&q| qubit_mask(q, n)).collect();
    let k = qubits.len();
    let offs = (0..1usize << k)
        .map(|l| {
            (0..k)
                .filter(|b| l & (1 << (k - 1 - b)) != 0)
                .map(|b| masks[b])
                .sum()
        })
        .collect();
    (offs, masks.iter().sum())
}

impl DensityMatrix {
    pub fn from_basis_state(state: BasisState) -> Self {
        let n = state.n_qubits();
        let dim = 1 << n;
        let mut data = vec![ZERO; dim * dim];
        data[state.index() * dim + state.index()] = ONE;
        DensityMatrix { n, dim, data }
    }

    pub fn maximally_mixed(n: usize) -> Result<Self> {
        guard(n)?;
        let dim = 1 << n;
        let mut data = vec![ZERO; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = C64::new(1.0 / dim as f64, 0.0);
        }
        Ok(DensityMatrix { n, dim, data })
    }

    pub fn from_matrix(m: &DMatrix<C64>) -> Result<Self> {
        let dim = m.nrows();
        if m.ncols() != dim || !dim.is_power_of_two() {
            return Err(Error::DimensionMismatch {
                expected: dim.next_power_of_two(),
                got: m.ncols(),
            });
        }
        let n = dim.trailing_zeros() as usize;
        guard(n)?;
        let data = (0..dim * dim).map(|k| m[(k / dim, k % dim)]).collect();
        Ok(DensityMatrix { n, dim, data })
    }

    pub fn to_matrix(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.dim + c]
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn purity(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.dim {
            for c in r..self.dim {
                worst = worst.max((self.get(r, c) - self.get(c, r).conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let m = self.to_matrix();
        let herm = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        herm.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Hermitian to 1e-10, unit trace to 1e-10, eigenvalues ≥ −1e-8.
    pub fn check_valid(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - ONE).norm() > 1e-10 {
            return Err(Error::Numerical(format!("density matrix trace {tr}")));
        }
        let h = self.hermiticity_defect();
        if h > 1e-10 {
            return Err(Error::Numerical(format!("density matrix not Hermitian ({h:e})")));
        }
        let lo = self.min_eigenvalue();
        if lo < -1e-8 {
            return Err(Error::Numerical(format!("density matrix eigenvalue {lo:e}")));
        }
        Ok(())
    }

    /// `ρ ← UρU†` for a local unitary given row-major over `qubits`.
    pub fn apply_unitary(&mut self, u: &[C64], qubits: &[usize]) {
        let (offs, all) = offsets(qubits, self.n);
        let ld = offs.len();
        debug_assert_eq!(u.len(), ld * ld);
        let dim = self.dim;
        let mut v = vec![ZERO; ld];
        for base in (0..dim).filter(|i| i & all == 0) {
            for c in 0..dim {
                for l in 0..ld {
                    v[l] = self.data[(base + offs[l]) * dim + c];
                }
                for a in 0..ld {
                    let row = &u[a * ld..(a + 1) * ld];
                    self.data[(base + offs[a]) * dim + c] =
                        row.iter().zip(&v).map(|(x, y)| x * y).sum();
                }
            }
        }
        for r in 0..dim {
            let row = &mut self.data[r * dim..(r + 1) * dim];
            for base in (0..dim).filter(|i| i & all == 0) {
                for l in 0..ld {
                    v[l] = row[base + offs[l]];
                }
                for a in 0..ld {
                    let urow = &u[a * ld..(a + 1) * ld];
                    row[base + offs[a]] = urow.iter().zip(&v).map(|(x, y)| y * x.conj()).sum();
                }
            }
        }
    }

    /// `ρ ← (1−p)ρ + p·(I/d_Q ⊗ Tr_Q ρ)` on the qubit subset `Q`.
    pub fn depolarize(&mut self, qubits: &[usize], p: f64) {
        if p == 0.0 {
            return;
        }
        let (offs, all) = offsets(qubits, self.n);
        let ld = offs.len();
        let dim = self.dim;
        let bases: Vec<usize> = (0..dim).filter(|i| i & all == 0).collect();
        for &rb in &bases {
            for &cb in &bases {
                let partial: C64 = offs.iter().map(|o| self.data[(rb + o) * dim + cb + o]).sum();
                let fill = partial * (p / ld as f64);
                for l1 in 0..ld {
                    for l2 in 0..ld {
                        let k = (rb + offs[l1]) * dim + cb + offs[l2];
                        self.data[k] *= 1.0 - p;
                        if l1 == l2 {
                            self.data[k] += fill;
                        }
                    }
                }
            }
        }
    }

    /// `Tr{ρ S^z_tot}`.
    pub fn expect_sz_total(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.data[i * self.dim + i].re * magnetization_of(i, self.n))
            .sum()
    }

    /// `Tr{ρ S^y_tot}`.
    pub fn expect_sy_total(&self) -> f64 {
        let mut total = 0.0;
        for q in 0..self.n {
            let m = qubit_mask(q, self.n);
            for a in (0..self.dim).filter(|i| i & m == 0) {
                total -= self.data[a * self.dim + (a | m)].im;
            }
        }
        total
    }

    /// Computational-basis outcome probabilities, clamped at zero.
    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.data[i * self.dim + i].re.max(0.0)).collect()
    }
}

fn flat(m: &DMatrix<C64>) -> Vec<C64> {
    (0..m.nrows() * m.ncols())
        .map(|k| m[(k / m.ncols(), k % m.ncols())])
        .collect()
}

fn rx(theta: f64) -> DMatrix<C64> {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    DMatrix::from_row_slice(2, 2, &[C64::new(c, 0.0), C64::new(0.0, -s), C64::new(0.0, -s), C64::new(c, 0.0)])
}

/// One gate lowered to channel operations.
#[derive(Debug, Clone)]
enum Op {
    Unitary { u: Vec<C64>, qubits: Vec<usize> },
    Depolarize { p: f64, qubits: Vec<usize> },
}

fn lower_gate(gate: &Gate, model: &NoiseModel, ops: &mut Vec<Op>) -> Result<()> {
    if gate.kind == GateKind::Swap {
        let (a, b) = (gate.qubits[0], gate.qubits[1]);
        for (c, t) in [(a, b), (b, a), (a, b)] {
            lower_gate(&Gate::new(GateKind::Cnot, &[c, t], gate.origin), model, ops)?;
        }
        return Ok(());
    }
    let class = gate.kind.class();
    let virtual_rz = class == GateClass::Rz && !model.noisy_rz;
    let mut u = gate.kind.matrix();
    if !virtual_rz {
        match gate.kind.arity() {
            1 => {
                if let Some(phi) = model.coherent_after_1q {
                    u = GateKind::Rz(phi).matrix() * u;
                }
            }
            _ => {
                if let Some([xc, xt, zc]) = model.coherent_after_2q {
                    let coherent = crate::operators::kron(&(GateKind::Rz(zc).matrix() * rx(xc)), &rx(xt));
                    u = coherent * u;
                }
            }
        }
    }
    ops.push(Op::Unitary { u: flat(&u), qubits: gate.qubits.clone() });
    let eps = model.error_for(class);
    if !virtual_rz && eps > 0.0 {
        let p = depolarizing_probability(eps, gate.qubits.len())?;
        ops.push(Op::Depolarize { p, qubits: gate.qubits.clone() });
    }
    Ok(())
}

fn run_ops(rho: &mut DensityMatrix, ops: &[Op]) {
    for op in ops {
        match op {
            Op::Unitary { u, qubits } => rho.apply_unitary(u, qubits),
            Op::Depolarize { p, qubits } => rho.depolarize(qubits, *p),
        }
    }
}

/// `ρ ← noise(UρU†)`: gate unitary, then the coherent rotation for its arity,
/// then depolarizing on its qubits. Virtual Rz is noiseless unless the model
/// sets `noisy_rz`. SWAP runs as three noisy CNOTs.
pub fn apply_gate_with_noise(rho: &mut DensityMatrix, gate: &Gate, model: &NoiseModel) -> Result<()> {
    crate::operators::check_qubits(&gate.qubits, rho.n)?;
    let mut ops = Vec::new();
    lower_gate(gate, model, &mut ops)?;
    run_ops(rho, &ops);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Readout {
    /// Exact `Tr{ρ S}` from the density matrix.
    #[default]
    Expectation,
    /// Sampled outcomes; Y is read after one noisy √X per qubit.
    Shots(usize),
}

/// Trotter step lowered once under a noise model and replayed.
#[derive(Debug, Clone)]
pub struct CompiledStep {
    width: usize,
    layout: Vec<usize>,
    ops: Vec<Op>,
    y_readout: Vec<Op>,
}

impl CompiledStep {
    pub fn new(step: &Circuit, model: &NoiseModel) -> Result<Self> {
        model.validate()?;
        guard(step.width())?;
        if step.layout() != step.initial_layout() {
            return Err(Error::InvalidCircuit("Trotter step does not restore its qubit layout".into()));
        }
        let mut ops = Vec::new();
        for g in step.gates() {
            lower_gate(g, model, &mut ops)?;
        }
        let mut y_readout = Vec::new();
        for q in 0..step.width() {
            lower_gate(&Gate::new(GateKind::SqrtX, &[q], GateOrigin::Readout), model, &mut y_readout)?;
        }
        Ok(CompiledStep {
            width: step.width(),
            layout: step.initial_layout().to_vec(),
            ops,
            y_readout,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn apply(&self, rho: &mut DensityMatrix) {
        run_ops(rho, &self.ops);
    }

    /// Density matrix for a logical basis state placed through the layout.
    pub fn prepare(&self, initial: BasisState) -> DensityMatrix {
        DensityMatrix::from_basis_state(initial.permuted(&self.layout))
    }
}

fn sample_magnetization(probs: &[f64], n: usize, shots: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let dist = WeightedIndex::new(probs).map_err(|e| Error::Numerical(format!("outcome distribution: {e}")))?;
    let total: f64 = (0..shots).map(|_| magnetization_of(dist.sample(rng), n)).sum();
    Ok(total / shots as f64)
}

/// `⟨S^z_tot⟩` and `⟨S^y_tot⟩` after `k = 0..=n_steps` steps from one
/// positive-magnetization basis state.
pub fn run_sector(
    step: &CompiledStep,
    n_steps: usize,
    initial: BasisState,
    readout: Readout,
    seed: u64,
) -> Result<SectorSeries> {
    if initial.n_qubits() != step.width {
        return Err(Error::DimensionMismatch {
            expected: step.width,
            got: initial.n_qubits(),
        });
    }
    let m = initial.magnetization();
    if m <= 0.0 {
        return Err(Error::NonPositiveMagnetization {
            state: initial.to_string(),
            magnetization: m,
        });
    }
    let mut rho = step.prepare(initial);
    let mut sz = Vec::with_capacity(n_steps + 1);
    let mut sy = Vec::with_capacity(n_steps + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(initial.index() as u64);
    for k in 0..=n_steps {
        if k > 0 {
            step.apply(&mut rho);
        }
        match readout {
            Readout::Expectation => {
                sz.push(rho.expect_sz_total());
                sy.push(rho.expect_sy_total());
            }
            Readout::Shots(shots) => {
                if shots == 0 {
                    return Err(Error::InvalidParameter("shot count must be positive".into()));
                }
                sz.push(sample_magnetization(&rho.probabilities(), step.width, shots, &mut rng)?);
                let mut rotated = rho.clone();
                run_ops(&mut rotated, &step.y_readout);
                sy.push(sample_magnetization(&rotated.probabilities(), step.width, shots, &mut rng)?);
            }
        }
    }
    if sz.iter().chain(&sy).any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite expectation in sector {initial}")));
    }
    Ok(SectorSeries { initial, sz, sy })
}

/// Runs every positive-magnetization sector in parallel; output order is the
/// ascending basis index regardless of scheduling.
pub fn run_all_sectors(
    step: &Circuit,
    n_steps: usize,
    model: &NoiseModel,
    readout: Readout,
) -> Result<Vec<SectorSeries>> {
    let compiled = CompiledStep::new(step, model)?;
    BasisState::positive_sectors(step.width())?
        .into_par_iter()
        .map(|s| run_sector(&compiled, n_steps, s, readout, model.seed))
        .collect()
}

/// `C_{z/y}(t_k) = 2 Σ_{m⁰>0} m⁰ ⟨S^{z/y}_tot⟩_n(t_k)` on `t_k = k·τ`.
pub fn assemble_correlations(series: Vec<SectorSeries>, tau: f64) -> Result<CorrelationRecord> {
    let first = series.first().ok_or(Error::EmptyGrid)?;
    let n = first.initial.n_qubits();
    let len = first.sz.len();
    for s in BasisState::positive_sectors(n)? {
        if !series.iter().any(|x| x.initial == s) {
            return Err(Error::MissingSector(s.to_string()));
        }
    }
    let mut cz = vec![0.0; len];
    let mut cy = vec![0.0; len];
    for s in &series {
        if s.initial.n_qubits() != n || s.sz.len() != len || s.sy.len() != len {
            return Err(Error::DimensionMismatch { expected: len, got: s.sz.len() });
        }
        let w = 2.0 * s.magnetization();
        for k in 0..len {
            cz[k] += w * s.sz[k];
            cy[k] += w * s.sy[k];
        }
    }
    let times = (0..len).map(|k| k as f64 * tau).collect();
    let mut record = CorrelationRecord::new(times, cz, cy)?;
    record.per_sector = Some(series);
    Ok(record)
}

/// Sector runs plus assembly.
pub fn simulate_correlations(
    step: &Circuit,
    n_steps: usize,
    tau: f64,
    model: &NoiseModel,
    readout: Readout,
) -> Result<CorrelationRecord> {
    assemble_correlations(run_all_sectors(step, n_steps, model, readout)?, tau)
}
