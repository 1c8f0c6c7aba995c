//! Molecules as spin-1/2 Hamiltonians.
//!
//! The laboratory Hamiltonian has the static field along `x`. Moving to the
//! frame rotating with the bare proton Larmor frequency, offset by a reference
//! shift `δ_ref`, leaves one `x`-axis Zeeman term per spin,
//! `ω_i = −γB(δ_i − δ_ref)·10⁻⁶`, plus isotropic couplings `2πJ_ij S_i·S_j`.
//! Spin operators are `S = σ/2` throughout the crate.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Proton gyromagnetic ratio in rad s⁻¹ T⁻¹.
pub const PROTON_GYROMAGNETIC_RATIO: f64 = 2.6752218744e8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoleculeSpec {
    name: String,
    shifts_ppm: Vec<f64>,
    couplings_hz: Vec<Vec<f64>>,
    gyromagnetic_ratio: f64,
    field_tesla: f64,
    reference_ppm: Option<f64>,
}

impl MoleculeSpec {
    /// Builds a molecule from a full, symmetric coupling matrix.
    pub fn new(
        name: impl Into<String>,
        shifts_ppm: Vec<f64>,
        couplings_hz: Vec<Vec<f64>>,
        field_tesla: f64,
    ) -> Result<Self> {
        let spec = MoleculeSpec {
            name: name.into(),
            shifts_ppm,
            couplings_hz,
            gyromagnetic_ratio: PROTON_GYROMAGNETIC_RATIO,
            field_tesla,
            reference_ppm: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_gyromagnetic_ratio(mut self, gamma: f64) -> Result<Self> {
        self.gyromagnetic_ratio = gamma;
        self.validate()?;
        Ok(self)
    }

    pub fn with_reference_ppm(mut self, reference_ppm: f64) -> Result<Self> {
        self.reference_ppm = Some(reference_ppm);
        self.validate()?;
        Ok(self)
    }

    /// cis-3-chloroacrylic acid, the two non-exchangeable protons at 11.7 T.
    pub fn chloroacrylic_acid() -> Self {
        MoleculeSpec::new(
            "cis-3-chloroacrylic acid",
            vec![6.375, 6.302],
            vec![vec![0.0, 7.92], vec![7.92, 0.0]],
            11.7,
        )
        .expect("built-in molecule is valid")
    }

    /// 1,2,4-trichlorobenzene at 11.7 T.
    pub fn trichlorobenzene() -> Self {
        MoleculeSpec::new(
            "1,2,4-trichlorobenzene",
            vec![7.194, 7.377, 7.467],
            vec![
                vec![0.0, 8.5, 2.5],
                vec![8.5, 0.0, 0.5],
                vec![2.5, 0.5, 0.0],
            ],
            11.7,
        )
        .expect("built-in molecule is valid")
    }

    fn validate(&self) -> Result<()> {
        let n = self.shifts_ppm.len();
        if n == 0 {
            return Err(Error::InvalidMolecule("at least one spin is required".into()));
        }
        if let Some(s) = self.shifts_ppm.iter().find(|s| !s.is_finite()) {
            return Err(Error::InvalidMolecule(format!("non-finite shift {s}")));
        }
        if self.couplings_hz.len() != n || self.couplings_hz.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidMolecule(format!(
                "coupling matrix must be {n}x{n}"
            )));
        }
        for i in 0..n {
            if self.couplings_hz[i][i] != 0.0 {
                return Err(Error::InvalidMolecule(format!(
                    "coupling diagonal entry ({i}, {i}) must be zero"
                )));
            }
            for j in 0..n {
                let (a, b) = (self.couplings_hz[i][j], self.couplings_hz[j][i]);
                if !a.is_finite() {
                    return Err(Error::InvalidMolecule(format!("non-finite coupling J[{i}][{j}]")));
                }
                if a != b {
                    return Err(Error::InvalidMolecule(format!(
                        "coupling matrix is not symmetric: J[{i}][{j}] = {a}, J[{j}][{i}] = {b}"
                    )));
                }
            }
        }
        if !(self.field_tesla > 0.0) || !self.field_tesla.is_finite() {
            return Err(Error::InvalidMolecule(format!(
                "field must be positive, got {}",
                self.field_tesla
            )));
        }
        if !(self.gyromagnetic_ratio > 0.0) || !self.gyromagnetic_ratio.is_finite() {
            return Err(Error::InvalidMolecule(format!(
                "gyromagnetic ratio must be positive, got {}",
                self.gyromagnetic_ratio
            )));
        }
        if let Some(r) = self.reference_ppm {
            if !r.is_finite() {
                return Err(Error::InvalidMolecule("reference shift must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_spins(&self) -> usize {
        self.shifts_ppm.len()
    }

    pub fn shifts_ppm(&self) -> &[f64] {
        &self.shifts_ppm
    }

    pub fn coupling_hz(&self, i: usize, j: usize) -> f64 {
        self.couplings_hz[i][j]
    }

    pub fn couplings_hz(&self) -> &[Vec<f64>] {
        &self.couplings_hz
    }

    pub fn gyromagnetic_ratio(&self) -> f64 {
        self.gyromagnetic_ratio
    }

    pub fn field_tesla(&self) -> f64 {
        self.field_tesla
    }

    /// The reference shift stored in the molecule file, if any.
    pub fn reference_ppm(&self) -> Option<f64> {
        self.reference_ppm
    }

    /// Reads the TOML molecule format:
    ///
    /// ```toml
    /// name = "cis-3-chloroacrylic acid"
    /// field_tesla = 11.7
    /// shifts_ppm = [6.375, 6.302]
    /// couplings_hz = [[7.92]]          # upper triangle, row i holds J_ij for j > i
    /// # gyromagnetic_ratio = 2.6752218744e8
    /// # reference_ppm = 6.3385
    /// ```
    ///
    /// A full `N×N` matrix is accepted as well, provided it is symmetric.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::parse(path, line, message),
            other => other,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            name: String,
            field_tesla: f64,
            shifts_ppm: Vec<f64>,
            #[serde(default)]
            couplings_hz: Vec<Vec<f64>>,
            gyromagnetic_ratio: Option<f64>,
            reference_ppm: Option<f64>,
        }
        let raw: Raw = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start].lines().count().max(1))
                .unwrap_or(0);
            Error::parse("<molecule>", line, e.message().to_string())
        })?;
        let n = raw.shifts_ppm.len();
        let couplings = expand_couplings(n, &raw.couplings_hz)?;
        let mut spec = MoleculeSpec::new(raw.name, raw.shifts_ppm, couplings, raw.field_tesla)?;
        if let Some(g) = raw.gyromagnetic_ratio {
            spec = spec.with_gyromagnetic_ratio(g)?;
        }
        if let Some(r) = raw.reference_ppm {
            spec = spec.with_reference_ppm(r)?;
        }
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        let n = self.n_spins();
        let mut out = String::new();
        out.push_str(&format!("name = {:?}\n", self.name));
        out.push_str(&format!("field_tesla = {:?}\n", self.field_tesla));
        out.push_str(&format!("gyromagnetic_ratio = {:?}\n", self.gyromagnetic_ratio));
        out.push_str(&format!("shifts_ppm = {:?}\n", self.shifts_ppm));
        let upper: Vec<Vec<f64>> = (0..n.saturating_sub(1))
            .map(|i| self.couplings_hz[i][i + 1..].to_vec())
            .collect();
        out.push_str(&format!("couplings_hz = {upper:?}\n"));
        if let Some(r) = self.reference_ppm {
            out.push_str(&format!("reference_ppm = {r:?}\n"));
        }
        out
    }
}

/// Accepts either the strict upper triangle (row `i` has `N − 1 − i` entries,
/// trailing empty rows may be omitted) or a full symmetric matrix.
fn expand_couplings(n: usize, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut full = vec![vec![0.0; n]; n];
    if rows.is_empty() {
        return Ok(full);
    }
    let is_full = rows.len() == n && rows.iter().all(|r| r.len() == n);
    if is_full && n > 1 {
        return Ok(rows.to_vec());
    }
    let is_upper = rows.len() <= n
        && rows.iter().enumerate().all(|(i, r)| r.len() == n - 1 - i)
        && (rows.len() >= n.saturating_sub(1));
    if !is_upper {
        return Err(Error::InvalidMolecule(format!(
            "couplings_hz must be the upper triangle of a {n}x{n} matrix or the full matrix"
        )));
    }
    for (i, row) in rows.iter().enumerate() {
        for (k, &value) in row.iter().enumerate() {
            let j = i + 1 + k;
            full[i][j] = value;
            full[j][i] = value;
        }
    }
    Ok(full)
}

/// Center of the rotating frame together with the Larmor frequency needed to
/// convert angular offsets into ppm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub reference_ppm: f64,
    pub larmor_hz: f64,
}

impl FrameConfig {
    /// Uses the molecule's stored reference, or the mean shift when absent.
    pub fn for_molecule(spec: &MoleculeSpec) -> Self {
        let reference = spec.reference_ppm().unwrap_or_else(|| {
            spec.shifts_ppm.iter().sum::<f64>() / spec.n_spins() as f64
        });
        FrameConfig {
            reference_ppm: reference,
            larmor_hz: larmor_frequency_hz(spec),
        }
    }

    pub fn with_reference(spec: &MoleculeSpec, reference_ppm: f64) -> Result<Self> {
        if !reference_ppm.is_finite() {
            return Err(Error::InvalidParameter("reference shift must be finite".into()));
        }
        Ok(FrameConfig {
            reference_ppm,
            larmor_hz: larmor_frequency_hz(spec),
        })
    }

    /// Angular frequency per ppm of shift, `2πν₀·10⁻⁶`.
    pub fn rad_per_ppm(&self) -> f64 {
        2.0 * PI * self.larmor_hz * 1e-6
    }

    pub fn ppm_of(&self, omega_rad_s: f64) -> f64 {
        self.reference_ppm + omega_rad_s / self.rad_per_ppm()
    }
}

/// `γB/2π` in Hz.
pub fn larmor_frequency_hz(spec: &MoleculeSpec) -> f64 {
    spec.gyromagnetic_ratio * spec.field_tesla / (2.0 * PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnsiteTerm {
    pub spin: usize,
    /// Angular frequency of the `S^x` Zeeman term, rad/s.
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTerm {
    pub i: usize,
    pub j: usize,
    /// Angular coupling `2πJ_ij` multiplying `S_i·S_j`, rad/s.
    pub strength: f64,
}

impl PairTerm {
    pub fn coupling_hz(&self) -> f64 {
        self.strength / (2.0 * PI)
    }
}

/// Rotating-frame Hamiltonian as a list of partial Hamiltonians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianTerms {
    n_spins: usize,
    pub onsite: Vec<OnsiteTerm>,
    pub pairs: Vec<PairTerm>,
}

impl HamiltonianTerms {
    pub fn new(n_spins: usize, onsite: Vec<OnsiteTerm>, pairs: Vec<PairTerm>) -> Result<Self> {
        if n_spins == 0 {
            return Err(Error::InvalidParameter("n_spins must be positive".into()));
        }
        for t in &onsite {
            if t.spin >= n_spins || !t.omega.is_finite() {
                return Err(Error::InvalidParameter(format!("bad onsite term {t:?}")));
            }
        }
        for p in &pairs {
            if p.i >= p.j || p.j >= n_spins || !p.strength.is_finite() {
                return Err(Error::InvalidParameter(format!("bad pair term {p:?}")));
            }
        }
        Ok(HamiltonianTerms { n_spins, onsite, pairs })
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }
}

pub fn build_rotating_frame_terms(spec: &MoleculeSpec, frame: &FrameConfig) -> HamiltonianTerms {
    let gb = spec.gyromagnetic_ratio * spec.field_tesla;
    let n = spec.n_spins();
    let onsite = spec
        .shifts_ppm
        .iter()
        .enumerate()
        .map(|(spin, &delta)| OnsiteTerm {
            spin,
            omega: -gb * (delta - frame.reference_ppm) * 1e-6,
        })
        .collect();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let jij = spec.couplings_hz[i][j];
            if jij != 0.0 {
                pairs.push(PairTerm {
                    i,
                    j,
                    strength: 2.0 * PI * jij,
                });
            }
        }
    }
    HamiltonianTerms {
        n_spins: n,
        onsite,
        pairs,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub terms: HamiltonianTerms,
    pub removed: Vec<PairTerm>,
}

/// Drops every pair whose angular strength is below `threshold_rad_s`.
pub fn reduce_couplings(terms: &HamiltonianTerms, threshold_rad_s: f64) -> Result<Reduction> {
    if !(threshold_rad_s >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold must be non-negative, got {threshold_rad_s}"
        )));
    }
    let (kept, removed): (Vec<PairTerm>, Vec<PairTerm>) = terms
        .pairs
        .iter()
        .partition(|p| p.strength.abs() >= threshold_rad_s);
    Ok(Reduction {
        terms: HamiltonianTerms {
            n_spins: terms.n_spins,
            onsite: terms.onsite.clone(),
            pairs: kept,
        },
        removed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn larmor_of_proton_at_eleven_tesla() {
        let spec = MoleculeSpec::chloroacrylic_acid();
        let expected = 2.6752218744e8 * 11.7 / (2.0 * PI);
        assert_eq!(larmor_frequency_hz(&spec), expected);
        assert!((expected - 4.9815e8).abs() / 4.9815e8 < 1e-4);
    }

    #[test]
    fn larmor_unit_gamma() {
        let spec = MoleculeSpec::new("x", vec![0.0], vec![vec![0.0]], 1.0)
            .unwrap()
            .with_gyromagnetic_ratio(2.0 * PI)
            .unwrap();
        assert!((larmor_frequency_hz(&spec) - 1.0).abs() < 1e-15);
        let doubled = MoleculeSpec::new("x", vec![0.0], vec![vec![0.0]], 2.0).unwrap();
        let single = MoleculeSpec::new("x", vec![0.0], vec![vec![0.0]], 1.0).unwrap();
        assert_eq!(larmor_frequency_hz(&doubled), 2.0 * larmor_frequency_hz(&single));
    }

    #[test]
    fn rejects_bad_molecules() {
        assert!(MoleculeSpec::new("x", vec![], vec![], 1.0).is_err());
        assert!(MoleculeSpec::new("x", vec![1.0], vec![vec![0.0]], 0.0).is_err());
        assert!(MoleculeSpec::new("x", vec![1.0], vec![vec![1.0]], 1.0).is_err());
        assert!(MoleculeSpec::new(
            "x",
            vec![1.0, 2.0],
            vec![vec![0.0, 1.0], vec![1.5, 0.0]],
            1.0
        )
        .is_err());
    }

    #[test]
    fn chloroacrylic_terms() {
        let spec = MoleculeSpec::chloroacrylic_acid();
        let frame = FrameConfig::for_molecule(&spec);
        assert!((frame.reference_ppm - 6.3385).abs() < 1e-12);
        let terms = build_rotating_frame_terms(&spec, &frame);
        assert_eq!(terms.onsite.len(), 2);
        assert_eq!(terms.pairs.len(), 1);
        let nu0 = larmor_frequency_hz(&spec);
        let offset = 2.0 * PI * 0.0365 * nu0 * 1e-6;
        assert!((terms.onsite[0].omega + offset).abs() < 1e-9);
        assert!((terms.onsite[1].omega - offset).abs() < 1e-9);
        assert!((terms.pairs[0].strength - 2.0 * PI * 7.92).abs() < 1e-12);
    }

    #[test]
    fn onsite_matches_formula_bit_for_bit() {
        let spec = MoleculeSpec::trichlorobenzene();
        let frame = FrameConfig::with_reference(&spec, 7.3).unwrap();
        let terms = build_rotating_frame_terms(&spec, &frame);
        let gb = spec.gyromagnetic_ratio() * spec.field_tesla();
        for t in &terms.onsite {
            let expected = -gb * (spec.shifts_ppm()[t.spin] - 7.3) * 1e-6;
            assert_eq!(t.omega, expected);
        }
    }

    #[test]
    fn trichlorobenzene_terms_and_reduction() {
        let spec = MoleculeSpec::trichlorobenzene();
        let terms = build_rotating_frame_terms(&spec, &FrameConfig::for_molecule(&spec));
        assert_eq!(terms.onsite.len(), 3);
        assert_eq!(terms.pairs.len(), 3);

        let r = reduce_couplings(&terms, 2.0 * PI * 1.0).unwrap();
        assert_eq!(r.removed.len(), 1);
        assert_eq!((r.removed[0].i, r.removed[0].j), (1, 2));
        assert_eq!(r.terms.pairs.len(), 2);
        assert_eq!(r.terms.onsite, terms.onsite);

        let none = reduce_couplings(&terms, 0.0).unwrap();
        assert_eq!(none.terms, terms);
        assert!(none.removed.is_empty());

        let all = reduce_couplings(&terms, 2.0 * PI * 9.0).unwrap();
        assert!(all.terms.pairs.is_empty());
        assert_eq!(all.removed.len(), 3);

        assert!(reduce_couplings(&terms, -1.0).is_err());
    }

    #[test]
    fn single_spin_on_reference() {
        let spec = MoleculeSpec::new("h", vec![7.26], vec![vec![0.0]], 11.7).unwrap();
        let terms = build_rotating_frame_terms(&spec, &FrameConfig::for_molecule(&spec));
        assert_eq!(terms.onsite.len(), 1);
        assert_eq!(terms.onsite[0].omega, 0.0);
        assert!(terms.pairs.is_empty());
    }

    #[test]
    fn zero_couplings_produce_no_pairs() {
        let spec = MoleculeSpec::new(
            "x",
            vec![1.0, 2.0, 3.0],
            vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]],
            1.0,
        )
        .unwrap();
        let terms = build_rotating_frame_terms(&spec, &FrameConfig::for_molecule(&spec));
        assert_eq!(terms.pairs.len(), 1);
        assert_eq!((terms.pairs[0].i, terms.pairs[0].j), (0, 2));
    }

    #[test]
    fn toml_upper_triangle_and_full() {
        let upper = r#"
name = "tcb"
field_tesla = 11.7
shifts_ppm = [7.194, 7.377, 7.467]
couplings_hz = [[8.5, 2.5], [0.5]]
"#;
        let spec = MoleculeSpec::from_toml_str(upper).unwrap();
        assert_eq!(spec, MoleculeSpec::trichlorobenzene().renamed("tcb"));

        let full = r#"
name = "tcb"
field_tesla = 11.7
shifts_ppm = [7.194, 7.377, 7.467]
couplings_hz = [[0, 8.5, 2.5], [8.5, 0, 0.5], [2.5, 0.5, 0]]
"#;
        assert_eq!(MoleculeSpec::from_toml_str(full).unwrap(), spec);

        let asym = r#"
name = "bad"
field_tesla = 11.7
shifts_ppm = [1.0, 2.0]
couplings_hz = [[0, 1.0], [2.0, 0]]
"#;
        assert!(MoleculeSpec::from_toml_str(asym).is_err());

        let round = MoleculeSpec::from_toml_str(&spec.to_toml_string()).unwrap();
        assert_eq!(round, spec);
    }

    #[test]
    fn toml_optional_fields() {
        let text = r#"
name = "h"
field_tesla = 1.0
shifts_ppm = [1.0]
gyromagnetic_ratio = 6.283185307179586
reference_ppm = 0.5
"#;
        let spec = MoleculeSpec::from_toml_str(text).unwrap();
        assert_eq!(spec.reference_ppm(), Some(0.5));
        assert_eq!(FrameConfig::for_molecule(&spec).reference_ppm, 0.5);
        assert!((larmor_frequency_hz(&spec) - 1.0).abs() < 1e-15);
    }

    impl MoleculeSpec {
        fn renamed(mut self, name: &str) -> Self {
            self.name = name.into();
            self
        }
    }
}
