use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use nmr_noise::budget::{BudgetEntry, ErrorBudget};
use nmr_noise::circuit::{circuit_unitary, trotter_step, Gate, GateClass, Topology, TrotterOrder};
use nmr_noise::exact::{dense_hamiltonian, exact_correlations, Propagator};
use nmr_noise::lindblad::{integrate, regression_correlation, LindbladModel};
use nmr_noise::noisy::{apply_gate_with_noise, run_sector, CompiledStep, DensityMatrix, NoiseModel, Readout};
use nmr_noise::operators::{distance_up_to_phase, kron, total_spin, BasisState, Pauli};
use nmr_noise::record::CorrelationRecord;
use nmr_noise::spectrum::spectrum_from_record;
use nmr_noise::spin_system::{
    build_rotating_frame_terms, FrameConfig, HamiltonianTerms, MoleculeSpec, OnsiteTerm, PairTerm,
};

fn terms_strategy(max_spins: usize) -> impl Strategy<Value = HamiltonianTerms> {
    (1..=max_spins).prop_flat_map(|n| {
        let n_pairs = n * (n - 1) / 2;
        (
            prop::collection::vec(-500.0..500.0f64, n),
            prop::collection::vec(0.0..80.0f64, n_pairs),
        )
            .prop_map(move |(omegas, js)| {
                let onsite = omegas
                    .iter()
                    .enumerate()
                    .map(|(spin, &omega)| OnsiteTerm { spin, omega })
                    .collect();
                let mut pairs = Vec::new();
                let mut k = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        pairs.push(PairTerm { i, j, strength: js[k] });
                        k += 1;
                    }
                }
                HamiltonianTerms::new(n, onsite, pairs).unwrap()
            })
    })
}

fn x_flip(n: usize) -> DMatrix<C64> {
    let x = Pauli::X.matrix();
    (1..n).fold(x.clone(), |acc, _| kron(&acc, &x))
}

fn max_entry(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn hamiltonian_symmetries(terms in terms_strategy(4)) {
        let n = terms.n_spins();
        let h = dense_hamiltonian(&terms).unwrap().into_matrix();
        prop_assert!(max_entry(&(&h - h.adjoint())) < 1e-12);
        let sx = total_spin(Pauli::X, n).unwrap();
        prop_assert!(max_entry(&(&h * &sx - &sx * &h)) < 1e-9);
        let f = x_flip(n);
        prop_assert!(max_entry(&(&f * &h * &f - &h)) < 1e-9);
    }

    #[test]
    fn noisy_gates_keep_states_physical(
        ops in prop::collection::vec((0usize..4, 0usize..3, 0usize..3, -PI..PI), 1..40),
        e1 in 0.0..0.05f64,
        e2 in 0.0..0.2f64,
        coherent in any::<bool>(),
        start in 0usize..8,
    ) {
        let model = if coherent { NoiseModel::ibm_like(e1, e2).unwrap() } else { NoiseModel::depolarizing(e1, e2).unwrap() };
        let mut rho = DensityMatrix::from_basis_state(BasisState::new(start, 3).unwrap());
        for (kind, a, b, angle) in ops {
            let gate = match kind {
                0 => Gate::sx(a),
                1 => Gate::rz(a, angle),
                2 => Gate::x(a),
                _ if a != b => Gate::cnot(a, b),
                _ => Gate::cnot(a, (a + 1) % 3),
            };
            apply_gate_with_noise(&mut rho, &gate, &model).unwrap();
        }
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-10);
        prop_assert!(rho.check_valid().is_ok());
    }

    #[test]
    fn spectrum_is_linear(
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        cz1 in prop::collection::vec(-2.0..2.0f64, 16),
        cz2 in prop::collection::vec(-2.0..2.0f64, 16),
        cy1 in prop::collection::vec(-2.0..2.0f64, 16),
        cy2 in prop::collection::vec(-2.0..2.0f64, 16),
        gamma in 0.0..5.0f64,
    ) {
        let frame = FrameConfig::for_molecule(&MoleculeSpec::chloroacrylic_acid());
        let t: Vec<f64> = (0..16).map(|k| k as f64 * 0.01).collect();
        let r1 = CorrelationRecord::new(t.clone(), cz1.clone(), cy1.clone()).unwrap();
        let r2 = CorrelationRecord::new(t.clone(), cz2.clone(), cy2.clone()).unwrap();
        let mix = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| a * x + b * y).collect::<Vec<_>>();
        let r = CorrelationRecord::new(t, mix(&cz1, &cz2), mix(&cy1, &cy2)).unwrap();
        let s1 = spectrum_from_record(&r1, gamma, &frame, false).unwrap();
        let s2 = spectrum_from_record(&r2, gamma, &frame, false).unwrap();
        let s = spectrum_from_record(&r, gamma, &frame, false).unwrap();
        for k in 0..s.len() {
            prop_assert!((s.amplitude[k] - a * s1.amplitude[k] - b * s2.amplitude[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn routed_step_restores_layout_and_matches(terms in terms_strategy(4), tau in 0.0005..0.01f64) {
        let routed = trotter_step(&terms, tau, TrotterOrder::Second, Topology::LinearChain).unwrap();
        prop_assert_eq!(routed.layout(), routed.initial_layout());
        let direct = trotter_step(&terms, tau, TrotterOrder::Second, Topology::AllToAll).unwrap();
        let d = distance_up_to_phase(
            circuit_unitary(&routed).unwrap().matrix(),
            circuit_unitary(&direct).unwrap().matrix(),
        );
        prop_assert!(d < 1e-10, "distance {}", d);
        for g in routed.gates() {
            if g.qubits.len() == 2 {
                prop_assert_eq!(g.qubits[0].abs_diff(g.qubits[1]), 1);
            }
        }
    }
}

/// Global error of `n` steps at fixed total time `T`, fitted as a power of τ.
fn trotter_exponent(terms: &HamiltonianTerms, order: TrotterOrder) -> f64 {
    let total = 0.02;
    let exact = Propagator::new(&dense_hamiltonian(terms).unwrap()).unwrap().unitary(total).into_matrix();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for n in [4usize, 8, 16, 40] {
        let tau = total / n as f64;
        let u = circuit_unitary(&trotter_step(terms, tau, order, Topology::AllToAll).unwrap()).unwrap().into_matrix();
        let mut un = DMatrix::<C64>::identity(u.nrows(), u.ncols());
        for _ in 0..n {
            un = &u * un;
        }
        xs.push(tau.ln());
        ys.push(distance_up_to_phase(&un, &exact).ln());
    }
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[test]
fn trotter_error_exponents() {
    let terms = build_rotating_frame_terms(
        &MoleculeSpec::trichlorobenzene(),
        &FrameConfig::for_molecule(&MoleculeSpec::trichlorobenzene()),
    );
    let p1 = trotter_exponent(&terms, TrotterOrder::First);
    let p2 = trotter_exponent(&terms, TrotterOrder::Second);
    assert!((p1 - 1.0).abs() < 0.15, "first order exponent {p1}");
    assert!((p2 - 2.0).abs() < 0.15, "second order exponent {p2}");
}

#[test]
fn regression_matches_exact_without_noise() {
    let specs = [
        HamiltonianTerms::new(1, vec![OnsiteTerm { spin: 0, omega: 31.0 }], vec![]).unwrap(),
        build_rotating_frame_terms(
            &MoleculeSpec::chloroacrylic_acid(),
            &FrameConfig::for_molecule(&MoleculeSpec::chloroacrylic_acid()),
        ),
        build_rotating_frame_terms(
            &MoleculeSpec::trichlorobenzene(),
            &FrameConfig::for_molecule(&MoleculeSpec::trichlorobenzene()),
        ),
    ];
    let grid: Vec<f64> = (0..=40).map(|k| k as f64 * 0.005).collect();
    for terms in &specs {
        let n = terms.n_spins();
        let model = LindbladModel::coherent(dense_hamiltonian(terms).unwrap()).unwrap();
        let sz = total_spin(Pauli::Z, n).unwrap();
        let sy = total_spin(Pauli::Y, n).unwrap();
        let cz = regression_correlation(&model, &sz, &sz, &grid).unwrap();
        let cy = regression_correlation(&model, &sy, &sz, &grid).unwrap();
        let exact = exact_correlations(terms, &grid).unwrap();
        for k in 0..grid.len() {
            assert!((cz[k].re - exact.cz[k]).abs() < 1e-8, "N={n} C_z at {k}");
            assert!((cy[k].re - exact.cy[k]).abs() < 1e-8, "N={n} C_y at {k}");
            assert!(cz[k].im.abs() < 1e-8);
        }
    }
}

#[test]
fn per_gate_channel_matches_lindblad_generator() {
    // single spin, gates dense in time
    let terms = HamiltonianTerms::new(1, vec![OnsiteTerm { spin: 0, omega: 40.0 }], vec![]).unwrap();
    let (tau, n_steps) = (0.001, 2000);
    let model = NoiseModel::depolarizing(1e-4, 0.0).unwrap();
    let step = trotter_step(&terms, tau, TrotterOrder::Second, Topology::AllToAll).unwrap();
    let budget = ErrorBudget::from_circuit(&step, &model, tau).unwrap();
    let compiled = CompiledStep::new(&step, &model).unwrap();
    let series = run_sector(&compiled, n_steps, BasisState::parse("0").unwrap(), Readout::Expectation, 0).unwrap();

    let lind = LindbladModel::from_budget(&terms, &budget).unwrap();
    let grid: Vec<f64> = (0..=n_steps).map(|k| k as f64 * tau).collect();
    let mut rho0 = DMatrix::<C64>::zeros(2, 2);
    rho0[(0, 0)] = C64::new(1.0, 0.0);
    let traj = integrate(&lind, &rho0, &grid).unwrap();
    let z = Pauli::Z.matrix();
    for k in (0..=n_steps).step_by(50) {
        let lz = (traj.state(k) * &z).trace().re;
        let cz = 2.0 * series.sz[k];
        assert!((lz - cz).abs() < 0.01, "t={} lindblad {lz} circuit {cz}", grid[k]);
    }
}

#[test]
fn half_tau_rate_sum_for_single_qubit_budgets() {
    let tau = 0.004;
    let entries: Vec<BudgetEntry> = (0..7)
        .map(|k| BudgetEntry {
            class: GateClass::SqrtX,
            qubits: vec![k % 2],
            epsilon: 1e-4 * (k + 1) as f64,
            duration_s: None,
            origin: "other".into(),
        })
        .collect();
    let budget = ErrorBudget::new(entries, 2, tau).unwrap();
    let lhs = budget.total_error();
    let rhs = 0.5 * tau * budget.rescaled_rate_sum();
    assert!((lhs - rhs).abs() < 1e-15 * lhs.max(1.0));
}
