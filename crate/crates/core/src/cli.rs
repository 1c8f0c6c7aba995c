//! Command-line runner: one experiment per invocation, results as data files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Serialize;

use crate::budget::{BudgetReport, Calibration, ErrorBudget};
use crate::circuit::{gate_census, trotter_step, Circuit, Topology, TrotterOrder};
use crate::error::{Error, Result};
use crate::exact::{dense_hamiltonian, exact_correlations};
use crate::lindblad::{fit_envelope, regression_correlation, LindbladModel, RateMatrix, MAX_LINDBLAD_QUBITS};
use crate::noisy::{simulate_correlations, NoiseModel, Readout};
use crate::operators::{total_spin, Pauli};
use crate::record::CorrelationRecord;
use crate::spectrum::{default_padding, spectrum_from_record, zero_pad, Spectrum};
use crate::spin_system::{build_rotating_frame_terms, reduce_couplings, FrameConfig, HamiltonianTerms, MoleculeSpec};

pub const OUT_DIR_ENV: &str = "NMR_NOISE_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Exact,
    TrotterNoiseless,
    TrotterNoisy,
    Budget,
    Lindblad,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyArg {
    AllToAll,
    Chain,
}

impl From<TopologyArg> for Topology {
    fn from(t: TopologyArg) -> Self {
        match t {
            TopologyArg::AllToAll => Topology::AllToAll,
            TopologyArg::Chain => Topology::LinearChain,
        }
    }
}

/// Simulated NMR spectra of small molecules on noisy gate-based hardware.
#[derive(Debug, Clone, PartialEq, Parser, Serialize)]
#[command(name = "nmr-noise", version, about)]
pub struct RunConfig {
    /// Molecule description (TOML).
    #[arg(long)]
    pub molecule: PathBuf,

    #[arg(long, value_enum, default_value_t = Mode::TrotterNoiseless)]
    pub mode: Mode,

    /// Trotter step / sampling interval in seconds.
    #[arg(long, default_value_t = 0.01)]
    pub tau: f64,

    #[arg(long, default_value_t = 81)]
    pub n_steps: usize,

    /// Trotter order, 1 or 2.
    #[arg(long, default_value_t = 2)]
    pub order: u8,

    #[arg(long, value_enum, default_value_t = TopologyArg::AllToAll)]
    pub topology: TopologyArg,

    /// Noise model (TOML).
    #[arg(long)]
    pub noise: Option<PathBuf>,

    /// Gate calibration table; alternative to --noise.
    #[arg(long, conflicts_with = "noise")]
    pub calibration: Option<PathBuf>,

    /// Lindblad rate matrix over Pauli strings (lindblad mode).
    #[arg(long)]
    pub rates: Option<PathBuf>,

    /// Drop couplings weaker than this (Hz) before compiling the circuit.
    #[arg(long)]
    pub reduce_below_hz: Option<f64>,

    /// Exponential window Γ (s⁻¹) applied before the transform. Required in exact mode.
    #[arg(long)]
    pub gamma_window: Option<f64>,

    /// Zero-padded record length; defaults to the next power of two ≥ 8× the record.
    #[arg(long)]
    pub padding: Option<usize>,

    /// Drop the C_y contribution so the spectrum is mirror-symmetric.
    #[arg(long)]
    pub symmetrize: bool,

    /// Finite-shot readout instead of exact expectations.
    #[arg(long)]
    pub shots: Option<usize>,

    /// Overrides the noise model's seed.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Rotating-frame reference shift; defaults to the molecule's or the mean shift.
    #[arg(long, allow_hyphen_values = true)]
    pub reference_ppm: Option<f64>,

    #[arg(long, env = OUT_DIR_ENV, default_value = "nmr-noise-out")]
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn new(molecule: impl Into<PathBuf>, mode: Mode, out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            molecule: molecule.into(),
            mode,
            tau: 0.01,
            n_steps: 81,
            order: 2,
            topology: TopologyArg::AllToAll,
            noise: None,
            calibration: None,
            rates: None,
            reduce_below_hz: None,
            gamma_window: None,
            padding: None,
            symmetrize: false,
            shots: None,
            seed: None,
            reference_ppm: None,
            out_dir: out_dir.into(),
        }
    }

    /// Human-readable problems; empty means runnable.
    pub fn validate(&self) -> Vec<String> {
        let mut d = Vec::new();
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            d.push(format!("--tau must be a positive finite number of seconds, got {}", self.tau));
        }
        if self.n_steps == 0 {
            d.push("--n-steps must be at least 1".into());
        }
        if TrotterOrder::from_number(self.order).is_err() {
            d.push(format!("--order must be 1 or 2, got {}", self.order));
        }
        if !self.molecule.is_file() {
            d.push(format!("molecule file {} not found", self.molecule.display()));
        }
        for (flag, path) in [("--noise", &self.noise), ("--calibration", &self.calibration), ("--rates", &self.rates)] {
            if let Some(p) = path {
                if !p.is_file() {
                    d.push(format!("{flag} file {} not found", p.display()));
                }
            }
        }
        let has_noise = self.noise.is_some() || self.calibration.is_some();
        match self.mode {
            Mode::TrotterNoisy | Mode::Budget if !has_noise => {
                d.push(format!("mode {} needs --noise or --calibration", self.mode));
            }
            Mode::Lindblad if !has_noise && self.rates.is_none() => {
                d.push("mode lindblad needs --rates, --noise or --calibration".into());
            }
            Mode::Exact if self.gamma_window.is_none() => {
                d.push("mode exact needs an explicit --gamma-window".into());
            }
            _ => {}
        }
        if self.rates.is_some() && self.mode != Mode::Lindblad {
            d.push("--rates is only used in lindblad mode".into());
        }
        if self.shots.is_some() && self.mode != Mode::TrotterNoisy && self.mode != Mode::TrotterNoiseless {
            d.push("--shots only applies to the trotter modes".into());
        }
        if self.shots == Some(0) {
            d.push("--shots must be at least 1".into());
        }
        if let Some(g) = self.gamma_window {
            if !(g >= 0.0 && g.is_finite()) {
                d.push(format!("--gamma-window must be >= 0, got {g}"));
            }
        }
        if let Some(p) = self.padding {
            if p < self.n_steps + 1 {
                d.push(format!("--padding {p} is shorter than the {} samples", self.n_steps + 1));
            }
        }
        if let Some(r) = self.reduce_below_hz {
            if !(r >= 0.0 && r.is_finite()) {
                d.push(format!("--reduce-below-hz must be >= 0, got {r}"));
            }
        }
        if let Some(r) = self.reference_ppm {
            if !r.is_finite() {
                d.push("--reference-ppm must be finite".into());
            }
        }
        d
    }
}

/// Exit status for a failed run: 1 for bad inputs, 2 for numerical failure.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Numerical(_) | Error::MissingSector(_) => 2,
        _ => 1,
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    molecule: &'a MoleculeSpec,
    frame: FrameConfig,
    hamiltonian: &'a HamiltonianTerms,
    removed_couplings: Vec<(usize, usize, f64)>,
    noise_model: Option<&'a NoiseModel>,
    readout: Readout,
    padded_length: Option<usize>,
    gamma_window: f64,
    files: Vec<String>,
}

#[derive(Debug, Serialize)]
struct EomReport {
    decay_rate_per_s: f64,
    residual: f64,
    non_decaying: bool,
    gamma_eff_per_s: Option<f64>,
}

/// Files produced by a run, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutput {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
}

struct Staging {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Staging {
    fn add(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body));
    }
}

/// Runs one experiment. Nothing is left in the output directory on failure.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let diagnostics = config.validate();
    if !diagnostics.is_empty() {
        return Err(Error::InvalidParameter(diagnostics.join("; ")));
    }
    let mut staging = Staging {
        dir: config.out_dir.clone(),
        files: Vec::new(),
    };
    compute(config, &mut staging)?;
    commit(staging)
}

fn compute(config: &RunConfig, out: &mut Staging) -> Result<()> {
    let spec = MoleculeSpec::from_file(&config.molecule)?;
    let frame = match config.reference_ppm {
        Some(r) => FrameConfig::with_reference(&spec, r)?,
        None => FrameConfig::for_molecule(&spec),
    };
    let full_terms = build_rotating_frame_terms(&spec, &frame);
    let (terms, removed) = match config.reduce_below_hz {
        Some(hz) => {
            let r = reduce_couplings(&full_terms, 2.0 * std::f64::consts::PI * hz)?;
            (r.terms, r.removed)
        }
        None => (full_terms.clone(), Vec::new()),
    };
    let order = TrotterOrder::from_number(config.order)?;
    let model = load_noise(config)?;
    let readout = config.shots.map(Readout::Shots).unwrap_or(Readout::Expectation);
    let gamma_window = config.gamma_window.unwrap_or(0.0);
    let step = || trotter_step(&terms, config.tau, order, config.topology.into());

    let mut padded_length = None;
    let mut emit_spectrum = |rec: &CorrelationRecord, out: &mut Staging| -> Result<()> {
        let target = config.padding.unwrap_or_else(|| default_padding(rec.len()));
        let spectrum = spectrum_from_record(&zero_pad(rec, target)?, gamma_window, &frame, config.symmetrize)?;
        check_finite(&spectrum)?;
        padded_length = Some(target);
        out.add("correlations.csv", rec.to_csv());
        out.add("spectrum.csv", spectrum.to_csv());
        out.add("spectrum.json", spectrum.metadata_json()?);
        out.add("spectrum.txt", spectrum.to_plot_text());
        Ok(())
    };

    match config.mode {
        Mode::Exact => {
            let grid = time_grid(config.tau, config.n_steps);
            emit_spectrum(&exact_correlations(&terms, &grid)?, out)?;
        }
        Mode::TrotterNoiseless | Mode::TrotterNoisy => {
            let circuit = step()?;
            let model = model.clone().unwrap_or_else(NoiseModel::noiseless);
            let rec = simulate_correlations(&circuit, config.n_steps, config.tau, &model, readout)?;
            emit_spectrum(&rec, out)?;
            add_budget(out, &circuit, &model, config.tau, &spec, &full_terms)?;
            out.add("circuit.txt", circuit.to_dump());
        }
        Mode::Budget => {
            let circuit = step()?;
            let model = model.clone().expect("validated");
            add_budget(out, &circuit, &model, config.tau, &spec, &full_terms)?;
            out.add("circuit.txt", circuit.to_dump());
        }
        Mode::Lindblad => {
            if terms.n_spins() > MAX_LINDBLAD_QUBITS {
                return Err(Error::DimensionGuard {
                    n_qubits: terms.n_spins(),
                    limit: MAX_LINDBLAD_QUBITS,
                });
            }
            let h = dense_hamiltonian(&terms)?;
            let (lindblad, gamma_eff) = match (&config.rates, &model) {
                (Some(path), _) => (RateMatrix::from_file(path)?.into_model(h)?, None),
                (None, Some(model)) => {
                    let circuit = step()?;
                    let budget = ErrorBudget::from_circuit(&circuit, model, config.tau)?;
                    add_budget(out, &circuit, model, config.tau, &spec, &full_terms)?;
                    (LindbladModel::from_budget(&terms, &budget)?, Some(crate::budget::gamma_eff(&budget)))
                }
                (None, None) => unreachable!("validated"),
            };
            let grid = time_grid(config.tau, config.n_steps);
            let n = terms.n_spins();
            let sz = total_spin(Pauli::Z, n)?;
            let sy = total_spin(Pauli::Y, n)?;
            let cz: Vec<f64> = regression_correlation(&lindblad, &sz, &sz, &grid)?.iter().map(|c| c.re).collect();
            let cy: Vec<f64> = regression_correlation(&lindblad, &sy, &sz, &grid)?.iter().map(|c| c.re).collect();
            let fit = fit_envelope(&grid, &cz)?;
            let rec = CorrelationRecord::new(grid, cz, cy)?;
            emit_spectrum(&rec, out)?;
            let eom = EomReport {
                decay_rate_per_s: fit.rate,
                residual: fit.residual,
                non_decaying: fit.non_decaying,
                gamma_eff_per_s: gamma_eff,
            };
            out.add("eom.json", serde_json::to_string_pretty(&eom)? + "\n");
        }
    }

    let mut files: Vec<String> = out.files.iter().map(|(n, _)| n.clone()).collect();
    files.push("manifest.json".into());
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config,
        molecule: &spec,
        frame,
        hamiltonian: &terms,
        removed_couplings: removed.iter().map(|p| (p.i, p.j, p.coupling_hz())).collect(),
        noise_model: model.as_ref(),
        readout,
        padded_length,
        gamma_window,
        files,
    };
    out.add("manifest.json", serde_json::to_string_pretty(&manifest)? + "\n");
    Ok(())
}

fn load_noise(config: &RunConfig) -> Result<Option<NoiseModel>> {
    let model = match (&config.noise, &config.calibration) {
        (Some(path), _) => Some(NoiseModel::from_file(path)?),
        (None, Some(path)) => Some(Calibration::from_file(path)?.to_noise_model()?),
        (None, None) => None,
    };
    Ok(match (model, config.seed) {
        (Some(m), Some(seed)) => Some(m.with_seed(seed)),
        (Some(m), None) => Some(m),
        (None, Some(seed)) => Some(NoiseModel::noiseless().with_seed(seed)),
        (None, None) => None,
    })
}

fn add_budget(
    out: &mut Staging,
    circuit: &Circuit,
    model: &NoiseModel,
    tau: f64,
    spec: &MoleculeSpec,
    full_terms: &HamiltonianTerms,
) -> Result<()> {
    let budget = ErrorBudget::from_circuit(circuit, model, tau)?;
    let report = BudgetReport::new(&budget, circuit, spec, full_terms);
    log::info!(
        "{} CNOT per step, Γ_eff = {:.4} s⁻¹, {} coupling(s) flagged",
        gate_census(circuit).cnots(),
        report.gamma_eff_per_s,
        report.flagged_couplings.len()
    );
    out.add("budget.json", report.to_json()? + "\n");
    Ok(())
}

fn time_grid(tau: f64, n_steps: usize) -> Vec<f64> {
    (0..=n_steps).map(|k| k as f64 * tau).collect()
}

fn check_finite(s: &Spectrum) -> Result<()> {
    if s.amplitude.iter().all(|a| a.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical("spectrum contains non-finite values".into()))
    }
}

/// Writes staged files into a scratch directory, then moves them into place.
fn commit(staging: Staging) -> Result<RunOutput> {
    let dir = staging.dir;
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let scratch = dir.join(format!(".nmr-noise-partial-{}", std::process::id()));
    let result = write_all(&dir, &scratch, &staging.files);
    let _ = fs::remove_dir_all(&scratch);
    if result.is_err() {
        for (name, _) in &staging.files {
            let _ = fs::remove_file(dir.join(name));
        }
    }
    result?;
    Ok(RunOutput {
        out_dir: dir,
        files: staging.files.into_iter().map(|(n, _)| n).collect(),
    })
}

fn write_all(dir: &Path, scratch: &Path, files: &[(String, String)]) -> Result<()> {
    fs::create_dir_all(scratch).map_err(|e| Error::io(scratch, e))?;
    for (name, body) in files {
        let p = scratch.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    for (name, _) in files {
        let from = scratch.join(name);
        fs::rename(&from, dir.join(name)).map_err(|e| Error::io(&from, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn molecule_file(dir: &Path) -> PathBuf {
        let p = dir.join("m.toml");
        fs::write(&p, MoleculeSpec::chloroacrylic_acid().to_toml_string()).unwrap();
        p
    }

    #[test]
    fn noisy_mode_without_noise_is_one_diagnostic() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::new(molecule_file(dir.path()), Mode::TrotterNoisy, dir.path());
        let d = cfg.validate();
        assert_eq!(d.len(), 1, "{d:?}");
        assert!(d[0].contains("--noise"));
    }

    #[test]
    fn nonpositive_tau_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new(molecule_file(dir.path()), Mode::TrotterNoiseless, dir.path());
        cfg.tau = 0.0;
        assert!(cfg.validate().iter().any(|m| m.contains("--tau")));
        cfg.tau = -1.0;
        assert!(!cfg.validate().is_empty());
    }

    #[test]
    fn noisy_recipe_validates_clean() {
        let dir = tempfile::tempdir().unwrap();
        let noise = dir.path().join("n.toml");
        fs::write(&noise, NoiseModel::ibm_like(0.0003, 0.0075).unwrap().to_toml_string()).unwrap();
        let mut cfg = RunConfig::new(molecule_file(dir.path()), Mode::TrotterNoisy, dir.path());
        cfg.noise = Some(noise);
        assert!(cfg.validate().is_empty(), "{:?}", cfg.validate());
    }

    #[test]
    fn exact_mode_requires_window() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new(molecule_file(dir.path()), Mode::Exact, dir.path());
        assert_eq!(cfg.validate().len(), 1);
        cfg.gamma_window = Some(2.0);
        assert!(cfg.validate().is_empty());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::InvalidParameter("x".into())), 1);
        assert_eq!(exit_code(&Error::Numerical("x".into())), 2);
    }

    #[test]
    fn failed_run_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let bad = dir.path().join("bad.toml");
        fs::write(&bad, "name = \"x\"\nfield_tesla = -1.0\nshifts_ppm = [1.0]\n").unwrap();
        let cfg = RunConfig::new(&bad, Mode::TrotterNoiseless, &out);
        assert!(run(&cfg).is_err());
        assert!(!out.exists() || fs::read_dir(&out).unwrap().next().is_none());
    }

    #[test]
    fn parses_flags() {
        let cfg = RunConfig::try_parse_from([
            "nmr-noise",
            "--molecule",
            "m.toml",
            "--mode",
            "trotter-noisy",
            "--tau",
            "0.005",
            "--topology",
            "chain",
            "--noise",
            "n.toml",
            "--reference-ppm",
            "-1.5",
            "--out-dir",
            "o",
        ])
        .unwrap();
        assert_eq!(cfg.mode, Mode::TrotterNoisy);
        assert_eq!(cfg.topology, TopologyArg::Chain);
        assert_eq!(cfg.reference_ppm, Some(-1.5));
        assert_eq!(cfg.out_dir, PathBuf::from("o"));
    }
}
