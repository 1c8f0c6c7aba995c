//! Trotter-step circuits in the native gate set {CNOT, X, √X, virtual Rz}.
//!
//! Gate qubit indices are physical positions. A circuit carries the layout
//! (logical spin → physical qubit) it starts from and the layout it ends in;
//! SWAP gates update the latter.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::{self, Write as _};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{check_qubits, embed, guard, BasisState, DenseOperator, C64, ONE, ZERO};
use crate::spin_system::HamiltonianTerms;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateKind {
    Cnot,
    X,
    SqrtX,
    /// `exp(−iθZ/2)`, virtual on the hardware.
    Rz(f64),
    /// Compiled to three CNOTs.
    Swap,
}

/// Gate kind without parameters, used as a key for counts and noise tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateClass {
    #[serde(rename = "CNOT")]
    Cnot,
    X,
    #[serde(rename = "SX")]
    SqrtX,
    #[serde(rename = "RZ")]
    Rz,
    #[serde(rename = "SWAP")]
    Swap,
}

impl GateClass {
    pub fn label(self) -> &'static str {
        match self {
            GateClass::Cnot => "CNOT",
            GateClass::X => "X",
            GateClass::SqrtX => "SX",
            GateClass::Rz => "RZ",
            GateClass::Swap => "SWAP",
        }
    }

    pub fn from_label(s: &str) -> Option<GateClass> {
        match s.to_ascii_uppercase().as_str() {
            "CNOT" | "CX" => Some(GateClass::Cnot),
            "X" => Some(GateClass::X),
            "SX" | "SQRTX" => Some(GateClass::SqrtX),
            "RZ" => Some(GateClass::Rz),
            "SWAP" => Some(GateClass::Swap),
            _ => None,
        }
    }

    pub fn arity(self) -> usize {
        match self {
            GateClass::Cnot | GateClass::Swap => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for GateClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl GateKind {
    pub fn class(&self) -> GateClass {
        match self {
            GateKind::Cnot => GateClass::Cnot,
            GateKind::X => GateClass::X,
            GateKind::SqrtX => GateClass::SqrtX,
            GateKind::Rz(_) => GateClass::Rz,
            GateKind::Swap => GateClass::Swap,
        }
    }

    pub fn arity(&self) -> usize {
        self.class().arity()
    }

    /// Local matrix; for two-qubit gates the first listed qubit is the most
    /// significant local bit (the control, for CNOT).
    pub fn matrix(&self) -> DMatrix<C64> {
        match *self {
            GateKind::X => DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
            GateKind::SqrtX => {
                let p = C64::new(0.5, 0.5);
                let m = C64::new(0.5, -0.5);
                DMatrix::from_row_slice(2, 2, &[p, m, m, p])
            }
            GateKind::Rz(theta) => DMatrix::from_row_slice(
                2,
                2,
                &[C64::from_polar(1.0, -theta / 2.0), ZERO, ZERO, C64::from_polar(1.0, theta / 2.0)],
            ),
            GateKind::Cnot => {
                let mut m = DMatrix::zeros(4, 4);
                m[(0, 0)] = ONE;
                m[(1, 1)] = ONE;
                m[(2, 3)] = ONE;
                m[(3, 2)] = ONE;
                m
            }
            GateKind::Swap => {
                let mut m = DMatrix::zeros(4, 4);
                m[(0, 0)] = ONE;
                m[(1, 2)] = ONE;
                m[(2, 1)] = ONE;
                m[(3, 3)] = ONE;
                m
            }
        }
    }
}

/// Which Hamiltonian term a gate implements, for error attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum GateOrigin {
    Onsite { spin: usize },
    Pair { i: usize, j: usize },
    Routing,
    Readout,
    Unattributed,
}

impl fmt::Display for GateOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GateOrigin::Onsite { spin } => write!(f, "onsite:{spin}"),
            GateOrigin::Pair { i, j } => write!(f, "pair:{i}-{j}"),
            GateOrigin::Routing => f.write_str("routing"),
            GateOrigin::Readout => f.write_str("readout"),
            GateOrigin::Unattributed => f.write_str("other"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub qubits: Vec<usize>,
    pub origin: GateOrigin,
}

impl Gate {
    pub fn new(kind: GateKind, qubits: &[usize], origin: GateOrigin) -> Self {
        Gate {
            kind,
            qubits: qubits.to_vec(),
            origin,
        }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Gate::new(GateKind::Cnot, &[control, target], GateOrigin::Unattributed)
    }

    pub fn rz(qubit: usize, theta: f64) -> Self {
        Gate::new(GateKind::Rz(theta), &[qubit], GateOrigin::Unattributed)
    }

    pub fn sx(qubit: usize) -> Self {
        Gate::new(GateKind::SqrtX, &[qubit], GateOrigin::Unattributed)
    }

    pub fn x(qubit: usize) -> Self {
        Gate::new(GateKind::X, &[qubit], GateOrigin::Unattributed)
    }

    pub fn swap(a: usize, b: usize) -> Self {
        Gate::new(GateKind::Swap, &[a, b], GateOrigin::Routing)
    }

    fn with_origin(mut self, origin: GateOrigin) -> Self {
        self.origin = origin;
        self
    }

    fn on(mut self, map: &[usize]) -> Self {
        for q in &mut self.qubits {
            *q = map[*q];
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    width: usize,
    gates: Vec<Gate>,
    initial_layout: Vec<usize>,
    layout: Vec<usize>,
}

impl Circuit {
    pub fn new(width: usize) -> Self {
        let layout: Vec<usize> = (0..width).collect();
        Circuit {
            width,
            gates: Vec::new(),
            initial_layout: layout.clone(),
            layout,
        }
    }

    /// Starts from `layout[logical] = physical`.
    pub fn with_layout(width: usize, layout: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; width];
        if layout.len() != width {
            return Err(Error::InvalidCircuit("layout length differs from width".into()));
        }
        for &p in &layout {
            if p >= width || seen[p] {
                return Err(Error::InvalidCircuit(format!("layout {layout:?} is not a permutation")));
            }
            seen[p] = true;
        }
        Ok(Circuit {
            width,
            gates: Vec::new(),
            initial_layout: layout.clone(),
            layout,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn initial_layout(&self) -> &[usize] {
        &self.initial_layout
    }

    /// Layout after the last gate.
    pub fn layout(&self) -> &[usize] {
        &self.layout
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        if gate.qubits.len() != gate.kind.arity() {
            return Err(Error::InvalidCircuit(format!(
                "{} acts on {} qubits, got {:?}",
                gate.kind.class(),
                gate.kind.arity(),
                gate.qubits
            )));
        }
        check_qubits(&gate.qubits, self.width)?;
        if let GateKind::Rz(theta) = gate.kind {
            if !theta.is_finite() {
                return Err(Error::InvalidCircuit("non-finite Rz angle".into()));
            }
        }
        if gate.kind == GateKind::Swap {
            let (a, b) = (gate.qubits[0], gate.qubits[1]);
            for p in &mut self.layout {
                if *p == a {
                    *p = b;
                } else if *p == b {
                    *p = a;
                }
            }
        }
        self.gates.push(gate);
        Ok(())
    }

    fn extend(&mut self, gates: impl IntoIterator<Item = Gate>) -> Result<()> {
        for g in gates {
            self.push(g)?;
        }
        Ok(())
    }

    /// One gate per line: `CNOT 0 1`, `RZ 2 1.5707963267948966`, `SX 0`, …
    /// preceded by `# width` and `# layout` header comments.
    pub fn to_dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# width {}", self.width);
        let layout: Vec<String> = self.initial_layout.iter().map(|p| p.to_string()).collect();
        let _ = writeln!(out, "# layout {}", layout.join(" "));
        for g in &self.gates {
            out.push_str(g.kind.class().label());
            for q in &g.qubits {
                let _ = write!(out, " {q}");
            }
            if let GateKind::Rz(theta) = g.kind {
                let _ = write!(out, " {theta:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_dump(text: &str) -> Result<Circuit> {
        let mut width = None;
        let mut layout = None;
        let mut lines = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let mut words = comment.split_whitespace();
                match words.next() {
                    Some("width") => {
                        width = words.next().and_then(|w| w.parse::<usize>().ok());
                    }
                    Some("layout") => {
                        layout = words
                            .map(|w| w.parse::<usize>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .ok();
                    }
                    _ => {}
                }
                continue;
            }
            lines.push((no + 1, line));
        }
        let mut parsed = Vec::new();
        let mut max_q = 0;
        for (no, line) in lines {
            let words: Vec<&str> = line.split_whitespace().collect();
            let class = GateClass::from_label(words[0])
                .ok_or_else(|| Error::parse("<circuit>", no, format!("unknown gate {}", words[0])))?;
            let arity = class.arity();
            let extra = usize::from(class == GateClass::Rz);
            if words.len() != 1 + arity + extra {
                return Err(Error::parse("<circuit>", no, "wrong number of operands"));
            }
            let qubits = words[1..=arity]
                .iter()
                .map(|w| w.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse("<circuit>", no, e.to_string()))?;
            let kind = match class {
                GateClass::Cnot => GateKind::Cnot,
                GateClass::X => GateKind::X,
                GateClass::SqrtX => GateKind::SqrtX,
                GateClass::Swap => GateKind::Swap,
                GateClass::Rz => GateKind::Rz(
                    words[2]
                        .parse::<f64>()
                        .map_err(|e| Error::parse("<circuit>", no, e.to_string()))?,
                ),
            };
            max_q = max_q.max(qubits.iter().cloned().max().unwrap_or(0) + 1);
            parsed.push(Gate::new(kind, &qubits, GateOrigin::Unattributed));
        }
        let width = width.unwrap_or(max_q);
        let mut circuit = match layout {
            Some(l) => Circuit::with_layout(width, l)?,
            None => Circuit::new(width),
        };
        circuit.extend(parsed)?;
        Ok(circuit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Topology {
    #[serde(rename = "all-to-all")]
    AllToAll,
    #[serde(rename = "linear")]
    LinearChain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrotterOrder {
    First,
    Second,
}

impl TrotterOrder {
    pub fn from_number(order: u8) -> Result<Self> {
        match order {
            1 => Ok(TrotterOrder::First),
            2 => Ok(TrotterOrder::Second),
            _ => Err(Error::InvalidParameter(format!("Trotter order must be 1 or 2, got {order}"))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            TrotterOrder::First => 1,
            TrotterOrder::Second => 2,
        }
    }
}

/// `Rx(θ)` as `Rz(π/2)·√X·Rz(θ+π)·√X·Rz(π/2)` (up to global phase).
pub fn rx_gates(theta: f64, qubit: usize) -> Vec<Gate> {
    vec![
        Gate::rz(qubit, FRAC_PI_2),
        Gate::sx(qubit),
        Gate::rz(qubit, theta + PI),
        Gate::sx(qubit),
        Gate::rz(qubit, FRAC_PI_2),
    ]
}

/// `Ry(θ)` as `√X·Rz(θ+π)·√X·Rz(π)` (up to global phase).
pub fn ry_gates(theta: f64, qubit: usize) -> Vec<Gate> {
    vec![
        Gate::sx(qubit),
        Gate::rz(qubit, theta + PI),
        Gate::sx(qubit),
        Gate::rz(qubit, PI),
    ]
}

/// Three-CNOT block on local qubits 0 and 1 implementing
/// `exp(−iθ(XX+YY+ZZ)/4)` up to global phase.
pub fn decompose_heisenberg(theta: f64) -> Vec<Gate> {
    let mut gates = vec![Gate::rz(0, -FRAC_PI_2), Gate::cnot(1, 0)];
    gates.push(Gate::rz(0, FRAC_PI_2 + theta / 2.0));
    gates.extend(ry_gates(FRAC_PI_2 + theta / 2.0, 1));
    gates.push(Gate::cnot(0, 1));
    gates.extend(ry_gates(-theta / 2.0 - FRAC_PI_2, 1));
    gates.push(Gate::cnot(1, 0));
    gates.push(Gate::rz(1, FRAC_PI_2));
    gates
}

/// Layout placing every coupled pair as close as possible on a chain: the
/// lexicographically first permutation minimising `Σ (distance − 1)`.
/// Registers above eight qubits keep the identity layout.
pub fn chain_layout(terms: &HamiltonianTerms) -> Vec<usize> {
    let n = terms.n_spins();
    let identity: Vec<usize> = (0..n).collect();
    if n > 8 {
        return identity;
    }
    let cost = |layout: &[usize]| -> usize {
        terms
            .pairs
            .iter()
            .map(|p| layout[p.i].abs_diff(layout[p.j]) - 1)
            .sum()
    };
    let mut best = identity.clone();
    let mut best_cost = cost(&best);
    let mut perm = identity;
    while best_cost > 0 && next_permutation(&mut perm) {
        let c = cost(&perm);
        if c < best_cost {
            best_cost = c;
            best = perm.clone();
        }
    }
    best
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// One Trotter step of `exp(−iHτ)`.
///
/// Order 1 applies all onsite rotations, then every pair block. Order 2 is
/// the symmetric splitting with half onsite layers outside and the pair
/// blocks, in ascending `(i, j)` order, inside. On a chain, a non-adjacent
/// pair is brought together by SWAPs that move `j` towards `i`, and the SWAPs
/// are undone right after the block, so every step ends in its initial layout.
pub fn trotter_step(
    terms: &HamiltonianTerms,
    tau: f64,
    order: TrotterOrder,
    topology: Topology,
) -> Result<Circuit> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!("Trotter step must be positive, got {tau}")));
    }
    let n = terms.n_spins();
    let layout = match topology {
        Topology::AllToAll => (0..n).collect(),
        Topology::LinearChain => chain_layout(terms),
    };
    let mut circuit = Circuit::with_layout(n, layout)?;

    let onsite_layer = |circuit: &mut Circuit, fraction: f64| -> Result<()> {
        for t in &terms.onsite {
            if t.omega == 0.0 {
                continue;
            }
            let q = circuit.layout[t.spin];
            let origin = GateOrigin::Onsite { spin: t.spin };
            circuit.extend(rx_gates(t.omega * tau * fraction, q).into_iter().map(|g| g.with_origin(origin)))?;
        }
        Ok(())
    };

    let mut pairs = terms.pairs.clone();
    pairs.sort_by_key(|p| (p.i, p.j));

    let first_fraction = match order {
        TrotterOrder::First => 1.0,
        TrotterOrder::Second => 0.5,
    };
    onsite_layer(&mut circuit, first_fraction)?;

    for p in &pairs {
        let origin = GateOrigin::Pair { i: p.i, j: p.j };
        let mut swaps = Vec::new();
        if topology == Topology::LinearChain {
            let target = circuit.layout[p.i];
            loop {
                let pos = circuit.layout[p.j];
                if pos.abs_diff(target) <= 1 {
                    break;
                }
                let next = if pos > target { pos - 1 } else { pos + 1 };
                swaps.push((pos, next));
                circuit.push(Gate::swap(pos, next))?;
            }
        }
        let (a, b) = (circuit.layout[p.i], circuit.layout[p.j]);
        if topology == Topology::LinearChain && a.abs_diff(b) != 1 {
            return Err(Error::Unroutable(p.i, p.j));
        }
        let block = decompose_heisenberg(p.strength * tau);
        circuit.extend(block.into_iter().map(|g| g.on(&[a, b]).with_origin(origin)))?;
        for &(x, y) in swaps.iter().rev() {
            circuit.push(Gate::swap(x, y))?;
        }
    }

    if order == TrotterOrder::Second {
        onsite_layer(&mut circuit, 0.5)?;
    }
    debug_assert_eq!(circuit.layout, circuit.initial_layout);
    Ok(circuit)
}

/// Permutation matrix sending logical basis states to physical ones.
fn layout_matrix(layout: &[usize]) -> Result<DMatrix<C64>> {
    let n = layout.len();
    let dim = 1 << n;
    let mut p = DMatrix::zeros(dim, dim);
    for idx in 0..dim {
        let s = BasisState::new(idx, n)?;
        p[(s.permuted(layout).index(), idx)] = ONE;
    }
    Ok(p)
}

/// Unitary of the circuit in the logical basis,
/// `P_final† · U_physical · P_initial`.
pub fn circuit_unitary(circuit: &Circuit) -> Result<DenseOperator> {
    let n = circuit.width;
    guard(n)?;
    let dim = 1 << n;
    let mut u = DMatrix::<C64>::identity(dim, dim);
    for g in &circuit.gates {
        u = embed(&g.kind.matrix(), &g.qubits, n)? * u;
    }
    let p_init = layout_matrix(&circuit.initial_layout)?;
    let p_final = layout_matrix(&circuit.layout)?;
    DenseOperator::from_matrix(p_final.adjoint() * u * p_init)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GateCensus {
    /// Native gate counts; every SWAP contributes three CNOTs.
    pub by_kind: BTreeMap<GateClass, usize>,
    /// Native gate counts per Hamiltonian term.
    pub by_origin: BTreeMap<String, usize>,
    pub swaps: usize,
}

impl GateCensus {
    pub fn count(&self, class: GateClass) -> usize {
        self.by_kind.get(&class).copied().unwrap_or(0)
    }

    pub fn cnots(&self) -> usize {
        self.count(GateClass::Cnot)
    }

    /// Gates that are not virtual Rz rotations.
    pub fn physical(&self) -> usize {
        self.by_kind
            .iter()
            .filter(|(k, _)| **k != GateClass::Rz)
            .map(|(_, v)| v)
            .sum()
    }
}

pub fn gate_census(circuit: &Circuit) -> GateCensus {
    let mut census = GateCensus::default();
    for class in [GateClass::Cnot, GateClass::X, GateClass::SqrtX, GateClass::Rz] {
        census.by_kind.insert(class, 0);
    }
    for g in &circuit.gates {
        let (class, weight) = match g.kind {
            GateKind::Swap => {
                census.swaps += 1;
                (GateClass::Cnot, 3)
            }
            other => (other.class(), 1),
        };
        *census.by_kind.entry(class).or_default() += weight;
        *census.by_origin.entry(g.origin.to_string()).or_default() += weight;
    }
    census
}
