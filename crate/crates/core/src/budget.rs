//! Gate-error budgets and the effective decoherence rate `Γ_eff = Σε/(Nτ)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use log::warn;
use serde::Serialize;

use crate::circuit::{gate_census, Circuit, GateClass, GateKind};
use crate::error::{Error, Result};
use crate::noisy::{GateNoise, NoiseModel};
use crate::spin_system::{larmor_frequency_hz, HamiltonianTerms, MoleculeSpec, PairTerm};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetEntry {
    pub class: GateClass,
    pub qubits: Vec<usize>,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    pub origin: String,
}

/// Errors of the gates in one Trotter step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBudget {
    entries: Vec<BudgetEntry>,
    n_spins: usize,
    tau: f64,
}

impl ErrorBudget {
    pub fn new(entries: Vec<BudgetEntry>, n_spins: usize, tau: f64) -> Result<Self> {
        if n_spins == 0 {
            return Err(Error::InvalidParameter("budget needs at least one spin".into()));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!("Trotter step must be positive, got {tau}")));
        }
        for e in &entries {
            if !(0.0..1.0).contains(&e.epsilon) {
                return Err(Error::InvalidNoise(format!("{}: ε = {} outside [0, 1)", e.class, e.epsilon)));
            }
        }
        Ok(ErrorBudget { entries, n_spins, tau })
    }

    /// One entry per physical gate of `step` with ε from `model`. SWAPs become
    /// three CNOT entries; virtual Rz gates are left out unless the model
    /// makes them noisy.
    pub fn from_circuit(step: &Circuit, model: &NoiseModel, tau: f64) -> Result<Self> {
        let mut entries = Vec::new();
        for g in step.gates() {
            let origin = g.origin.to_string();
            match g.kind {
                GateKind::Swap => {
                    let (a, b) = (g.qubits[0], g.qubits[1]);
                    for qubits in [[a, b], [b, a], [a, b]] {
                        entries.push(BudgetEntry {
                            class: GateClass::Cnot,
                            qubits: qubits.to_vec(),
                            epsilon: model.error_for(GateClass::Cnot),
                            duration_s: model.duration_for(GateClass::Cnot),
                            origin: origin.clone(),
                        });
                    }
                }
                GateKind::Rz(_) if !model.noisy_rz => {}
                kind => entries.push(BudgetEntry {
                    class: kind.class(),
                    qubits: g.qubits.clone(),
                    epsilon: model.error_for(kind.class()),
                    duration_s: model.duration_for(kind.class()),
                    origin,
                }),
            }
        }
        ErrorBudget::new(entries, step.width(), tau)
    }

    pub fn entries(&self) -> &[BudgetEntry] {
        &self.entries
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Same gates at a different Trotter step.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        ErrorBudget::new(self.entries.clone(), self.n_spins, tau)
    }

    pub fn total_error(&self) -> f64 {
        self.entries.iter().map(|e| e.epsilon).sum()
    }

    /// `Σ_kl Σ_i γ̃^{i,kl}` from the exact prefactor, `ε = c_d·τ·Σ_i γ̃^i`.
    pub fn rescaled_rate_sum(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.epsilon / (fidelity_prefactor(e.qubits.len()) * self.tau))
            .sum()
    }

    /// Per-qubit rates `γ̃` (Bloch-vector decay, s⁻¹) accumulated by qubit.
    pub fn rates_by_qubit(&self) -> Vec<f64> {
        let width = self
            .entries
            .iter()
            .flat_map(|e| e.qubits.iter().map(|q| q + 1))
            .max()
            .unwrap_or(0)
            .max(self.n_spins);
        let mut rates = vec![0.0; width];
        for e in &self.entries {
            let share = rescaled_rate(
                rates_from_error(e.epsilon, e.qubits.len(), 1.0),
                1.0,
                self.tau,
            );
            for &q in &e.qubits {
                rates[q] += share;
            }
        }
        rates
    }
}

/// `3d/(4(d+1))` with `d = 2^n`.
pub fn fidelity_prefactor(n_qubits: usize) -> f64 {
    let d = (1usize << n_qubits) as f64;
    3.0 * d / (4.0 * (d + 1.0))
}

/// ε of an `n`-qubit gate of duration `t_gate` whose qubits each depolarize
/// at Bloch rate `gamma`: `ε = c_d·t_gate·n·γ`.
pub fn error_from_rates(gamma_per_qubit: f64, n_qubits: usize, t_gate: f64) -> f64 {
    fidelity_prefactor(n_qubits) * t_gate * n_qubits as f64 * gamma_per_qubit
}

/// Inverse of [`error_from_rates`].
pub fn rates_from_error(epsilon: f64, n_qubits: usize, t_gate: f64) -> f64 {
    epsilon / (fidelity_prefactor(n_qubits) * t_gate * n_qubits as f64)
}

/// `γ̃ = γ·t_gate/τ`.
pub fn rescaled_rate(gamma: f64, t_gate: f64, tau: f64) -> f64 {
    gamma * t_gate / tau
}

/// `Σε / (N·τ)` in s⁻¹.
pub fn gamma_eff(budget: &ErrorBudget) -> f64 {
    if budget.entries.is_empty() {
        warn!("error budget has no entries; Γ_eff = 0");
        return 0.0;
    }
    budget.total_error() / (budget.n_spins as f64 * budget.tau)
}

/// Lorentzian FWHM `2Γ` converted to ppm of the Larmor frequency.
pub fn linewidth_ppm(gamma: f64, spec: &MoleculeSpec) -> f64 {
    2.0 * gamma / (2.0 * PI * larmor_frequency_hz(spec) * 1e-6)
}

/// Pair terms whose angular coupling is below `Γ_eff`.
pub fn reduction_advice(budget: &ErrorBudget, terms: &HamiltonianTerms) -> Vec<PairTerm> {
    let g = gamma_eff(budget);
    terms.pairs.iter().filter(|p| p.strength.abs() < g).copied().collect()
}

/// Per-gate-kind calibration: `kind arity ε t_gate` per line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub gates: BTreeMap<GateClass, GateNoise>,
}

impl Calibration {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut gates = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| Error::parse(path, no + 1, m);
            let words: Vec<&str> = line.split_whitespace().collect();
            if !(3..=4).contains(&words.len()) {
                return Err(err("expected `kind arity epsilon [t_gate]`".into()));
            }
            let class = GateClass::from_label(words[0]).ok_or_else(|| err(format!("unknown gate kind {}", words[0])))?;
            let arity: usize = words[1].parse().map_err(|_| err(format!("bad arity {}", words[1])))?;
            if arity != class.arity() {
                return Err(err(format!("{class} has arity {}, file says {arity}", class.arity())));
            }
            let error: f64 = words[2].parse().map_err(|_| err(format!("bad epsilon {}", words[2])))?;
            if !(0.0..1.0).contains(&error) {
                return Err(err(format!("epsilon {error} outside [0, 1)")));
            }
            let duration_s = match words.get(3) {
                None | Some(&"-") => None,
                Some(w) => {
                    let t: f64 = w.parse().map_err(|_| err(format!("bad gate time {w}")))?;
                    if !(t >= 0.0) || !t.is_finite() {
                        return Err(err(format!("gate time {t} must be non-negative")));
                    }
                    Some(t)
                }
            };
            if gates.insert(class, GateNoise { error, duration_s }).is_some() {
                return Err(err(format!("{class} listed twice")));
            }
        }
        if gates.is_empty() {
            return Err(Error::parse(path, 0, "calibration file lists no gates"));
        }
        Ok(Calibration { gates })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Calibration::parse(&text, path)
    }

    /// Pure-depolarizing noise model with these errors.
    pub fn to_noise_model(&self) -> Result<NoiseModel> {
        let mut model = NoiseModel::noiseless();
        model.name = "calibration".into();
        model.gates = self.gates.clone();
        model.noisy_rz = self.gates.get(&GateClass::Rz).is_some_and(|g| g.error > 0.0);
        model.validate()?;
        Ok(model)
    }
}

/// Joins the gate census of one Trotter step with a calibration file.
pub fn ingest_calibration(path: impl AsRef<Path>, step: &Circuit, tau: f64) -> Result<ErrorBudget> {
    let model = Calibration::from_file(path)?.to_noise_model()?;
    ErrorBudget::from_circuit(step, &model, tau)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlaggedCoupling {
    pub i: usize,
    pub j: usize,
    pub coupling_hz: f64,
    pub strength_rad_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetReport {
    pub molecule: String,
    pub n_spins: usize,
    pub tau_s: f64,
    pub n_entries: usize,
    pub total_error: f64,
    pub gamma_eff_per_s: f64,
    pub fwhm_rad_s: f64,
    pub fwhm_ppm: f64,
    pub gate_counts: BTreeMap<GateClass, usize>,
    pub flagged_couplings: Vec<FlaggedCoupling>,
}

impl BudgetReport {
    pub fn new(budget: &ErrorBudget, step: &Circuit, spec: &MoleculeSpec, terms: &HamiltonianTerms) -> Self {
        let g = gamma_eff(budget);
        BudgetReport {
            molecule: spec.name().to_string(),
            n_spins: budget.n_spins,
            tau_s: budget.tau,
            n_entries: budget.entries.len(),
            total_error: budget.total_error(),
            gamma_eff_per_s: g,
            fwhm_rad_s: 2.0 * g,
            fwhm_ppm: linewidth_ppm(g, spec),
            gate_counts: gate_census(step).by_kind,
            flagged_couplings: reduction_advice(budget, terms)
                .into_iter()
                .map(|p| FlaggedCoupling {
                    i: p.i,
                    j: p.j,
                    coupling_hz: p.coupling_hz(),
                    strength_rad_s: p.strength,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
