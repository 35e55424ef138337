use qdist_core::algorithms::*;
use qdist_core::engine::{run_parallel, MergedValue, RunOptions, TraceMode};
use qdist_core::{simulate, Circuit, GateKind, Matrix2, QubitRef};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn quiet() -> RunOptions {
    RunOptions {
        trace: TraceMode::Off,
        ..Default::default()
    }
}

#[test]
fn qpe_is_exact_for_dyadic_phases() {
    for n in 1..=4usize {
        for j in 0..(1u64 << n) {
            let theta = j as f64 / (1u64 << n) as f64;
            let c = qpe_circuit(n, &phase_unitary(theta)).unwrap();
            let (_, bits) = simulate(&c, &mut ChaCha8Rng::seed_from_u64(j)).unwrap();
            let decoded = (0..n).fold(0u64, |acc, i| (acc << 1) | bits[&format!("q{i}")] as u64);
            assert_eq!(decoded, j, "n={n} theta={theta}");
        }
    }
}

#[test]
fn qpe_demo_reports_three_eighths() {
    let u = phase_unitary(1.0 / 3.0);
    let (pp, topo) = qpe_demo(3, &u, 1000).unwrap();
    let out = run_parallel(&pp, &topo, 7, &quiet()).unwrap();
    assert_eq!(out.value.as_scalar(), Some(0.375));
    assert!(out.outcomes[0].frequency("011") > 0.5);
    assert_eq!(out.circuits[0].blocks.len(), 3);
}

#[test]
fn split_qpe_matches_dyadic_phase() {
    let (pp, topo) = qpe_demo(3, &phase_unitary(0.625), 20).unwrap();
    let out = run_parallel(&pp, &topo, 1, &quiet()).unwrap();
    assert_eq!(out.value.as_scalar(), Some(0.625));
    assert_eq!(out.outcomes[0].frequency("101"), 1.0);
}

#[test]
fn split_repetitions_pools_to_the_same_estimate() {
    let (a, q) = rotation_oracle(0.3).unwrap();
    let cfg = PlaeConfig {
        beta: 0.5,
        k_max: 4,
        shots: 400,
    };
    let batch = plae_programs(&a, &q, 0, &cfg, 1000).unwrap();
    let split = split_repetitions(&batch, 4).unwrap();
    assert_eq!(split.programs.len(), 16);
    assert!(split.programs.iter().all(|p| p.repetitions == 100));
    let topo = qdist_core::Topology::from_sizes(&[4, 4, 4, 4]).unwrap();
    let pp = split
        .schedule(&topo, qdist_core::Allocator::Greedy)
        .unwrap();
    let out = run_parallel(&pp, &topo, 11, &quiet()).unwrap();
    let est = out.value.as_scalar().unwrap();
    assert!((est - 0.3).abs() < 0.05, "{est}");
}

#[test]
fn kmeans_separates_two_clusters() {
    let v = |x: f64, y: f64| FeatureVector::new(vec![x, y]).unwrap();
    let points = vec![
        v(1.0, 0.1),
        v(0.1, 1.0),
        v(0.9, 0.2),
        v(0.2, 0.9),
        v(1.0, 0.0),
    ];
    let topo = qdist_core::Topology::from_sizes(&[3, 3, 3]).unwrap();
    let r = kmeans(&points, 2, 5, Estimation::Exact, &topo, 0, &quiet()).unwrap();
    assert_eq!(r.assignment, vec![0, 1, 0, 1, 0]);
    assert_eq!(
        r.assignment,
        classical_assignment(&points, &r.centroids).unwrap()
    );
}

#[test]
fn vqe_batch_merges_to_dense_energy() {
    let mut ansatz = Circuit::with_width(2);
    ansatz
        .apply(GateKind::Ry(0.7), &QubitRef::logical(0))
        .apply(GateKind::Ry(-1.3), &QubitRef::logical(1))
        .apply2(GateKind::Cnot, &QubitRef::logical(0), &QubitRef::logical(1));
    let terms = vec![
        HamiltonianTerm::new(0.5, "ZZ"),
        HamiltonianTerm::new(-0.25, "XI"),
        HamiltonianTerm::new(0.125, "YY"),
    ];
    let batch = vqe_programs(&terms, &ansatz, Estimation::Exact).unwrap();
    let topo = qdist_core::Topology::from_sizes(&[2, 2, 2]).unwrap();
    let pp = batch
        .schedule(&topo, qdist_core::Allocator::Greedy)
        .unwrap();
    let out = run_parallel(&pp, &topo, 0, &quiet()).unwrap();
    let (state, _) = simulate(&ansatz, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut want = 0.0;
    for t in &terms {
        want += t.coefficient
            * state
                .exact_expectation(&t.pauli_string(&ansatz.qubits).unwrap())
                .unwrap();
    }
    let MergedValue::Scalar(got) = out.value else {
        panic!()
    };
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
}

#[test]
fn non_unitary_qpe_is_rejected() {
    assert!(qpe_demo(2, &Matrix2::real(2.0, 0.0, 0.0, 1.0), 10).is_err());
}
