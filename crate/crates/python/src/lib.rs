use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use qdist_core::algorithms::{
    parse_terms, phase_unitary, plae_programs, qpe_circuit, qpe_demo, rotation_oracle,
    swap_test_program, vqe_programs, Estimation, FeatureVector, PlaeConfig,
};
use qdist_core::engine::{run_parallel, run_sequential, RunOptions, RunOutput, DEFAULT_GRID};
use qdist_core::error::CircuitError;
use qdist_core::metrics::{
    count_distributed, count_monolithic, sweep_qpe as sweep, AccountingProfile,
};
use qdist_core::{
    build_parallel_program, Allocator, Circuit, Error, MergeSpec, ParallelProgram, Program,
    Topology,
};

fn py_err(e: impl Into<Error>) -> PyErr {
    let e: Error = e.into();
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn mode(shots: Option<u32>) -> Estimation {
    shots.map_or(Estimation::Exact, Estimation::Shots)
}

fn scalar(out: &RunOutput) -> PyResult<f64> {
    out.value
        .as_scalar()
        .ok_or_else(|| PyRuntimeError::new_err("merged value is not a scalar"))
}

fn topology(qpus: &[usize]) -> PyResult<Topology> {
    Topology::from_sizes(qpus).map_err(py_err)
}

fn parallel(
    circuits: &[String],
    qpus: &[usize],
    shots: u32,
) -> PyResult<(ParallelProgram, Topology)> {
    let topo = topology(qpus)?;
    let programs = circuits
        .iter()
        .map(|text| {
            let c = Circuit::from_json(text).map_err(py_err)?;
            let violations = c.structural_violations();
            if !violations.is_empty() {
                return Err(py_err(CircuitError::Invalid(violations)));
            }
            Ok(Program::new(c, shots))
        })
        .collect::<PyResult<Vec<_>>>()?;
    let pp = build_parallel_program(&topo, programs, Allocator::Greedy, MergeSpec::Identity)
        .map_err(py_err)?;
    Ok((pp, topo))
}

/// Round schedule of circuit JSON strings on QPUs of the given sizes, as one-based program indices.
#[pyfunction]
fn schedule(circuits: Vec<String>, qpus: Vec<usize>) -> PyResult<Vec<Vec<Vec<usize>>>> {
    Ok(parallel(&circuits, &qpus, 1)?.0.schedule.one_based())
}

/// Run circuit JSON strings in parallel and return the outcome counts of each program.
#[pyfunction]
#[pyo3(signature = (circuits, qpus, shots = 1000, seed = 0))]
fn run(
    circuits: Vec<String>,
    qpus: Vec<usize>,
    shots: u32,
    seed: u64,
) -> PyResult<Vec<BTreeMap<String, u64>>> {
    let (pp, topo) = parallel(&circuits, &qpus, shots)?;
    let out = run_parallel(&pp, &topo, seed, &RunOptions::default()).map_err(py_err)?;
    Ok(out.outcomes.into_iter().map(|o| o.counts).collect())
}

/// Phase estimation of diag(1, e^{2πiθ}) split over two QPUs.
#[pyfunction]
#[pyo3(signature = (n, phase, shots = 1000, seed = 0))]
fn qpe(py: Python<'_>, n: usize, phase: f64, shots: u32, seed: u64) -> PyResult<Py<PyAny>> {
    let u = phase_unitary(phase);
    let (pp, topo) = qpe_demo(n, &u, shots).map_err(py_err)?;
    let out = run_parallel(&pp, &topo, seed, &RunOptions::default()).map_err(py_err)?;
    let profile = AccountingProfile::default();
    let mono = count_monolithic(&qpe_circuit(n, &u).map_err(py_err)?, &profile);
    let dist = count_distributed(&out.circuits[0], &profile);
    let d = pyo3::types::PyDict::new(py);
    d.set_item("estimate", scalar(&out)?)?;
    d.set_item("counts", out.outcomes[0].counts.clone())?;
    d.set_item("monolithic_ops", mono.total_ops)?;
    d.set_item("distributed_ops", dist.total_ops)?;
    d.set_item("cat_blocks", out.circuits[0].blocks.len())?;
    Ok(d.into_any().unbind())
}

/// Operation counts (n, monolithic, distributed) for split phase estimation over n in [lo, hi].
#[pyfunction]
fn sweep_qpe(lo: usize, hi: usize) -> PyResult<Vec<(usize, u64, u64)>> {
    let rows = sweep(lo..=hi, &AccountingProfile::default()).map_err(py_err)?;
    Ok(rows
        .into_iter()
        .map(|r| (r.n, r.monolithic, r.distributed))
        .collect())
}

/// Energy of an ansatz circuit under a Pauli-sum Hamiltonian; exact when `shots` is None.
#[pyfunction]
#[pyo3(signature = (terms, ansatz, qpus, shots = None, seed = 0))]
fn vqe_energy(
    terms: &str,
    ansatz: &str,
    qpus: Vec<usize>,
    shots: Option<u32>,
    seed: u64,
) -> PyResult<f64> {
    let terms = parse_terms(terms).map_err(py_err)?;
    let ansatz = Circuit::from_json(ansatz).map_err(py_err)?;
    let topo = topology(&qpus)?;
    let pp = vqe_programs(&terms, &ansatz, mode(shots))
        .map_err(py_err)?
        .schedule(&topo, Allocator::Greedy)
        .map_err(py_err)?;
    scalar(&run_parallel(&pp, &topo, seed, &RunOptions::default()).map_err(py_err)?)
}

/// Power-law amplitude estimate for a one-qubit rotation oracle with success probability `amplitude`.
#[pyfunction]
#[pyo3(signature = (amplitude, beta, k, shots, seed = 0, qpus = None))]
fn plae(
    amplitude: f64,
    beta: f64,
    k: u32,
    shots: u32,
    seed: u64,
    qpus: Option<Vec<usize>>,
) -> PyResult<f64> {
    let (a, q) = rotation_oracle(amplitude).map_err(py_err)?;
    let cfg = PlaeConfig {
        beta,
        k_max: k,
        shots,
    };
    let topo = topology(&qpus.unwrap_or_else(|| vec![1; 4]))?;
    let pp = plae_programs(&a, &q, 0, &cfg, DEFAULT_GRID)
        .map_err(py_err)?
        .schedule(&topo, Allocator::Greedy)
        .map_err(py_err)?;
    scalar(&run_parallel(&pp, &topo, seed, &RunOptions::default()).map_err(py_err)?)
}

/// Swap-test estimate of the squared overlap of two normalized feature vectors; exact when `shots` is None.
#[pyfunction]
#[pyo3(signature = (a, b, shots = None, seed = 0))]
fn swap_test(a: Vec<f64>, b: Vec<f64>, shots: Option<u32>, seed: u64) -> PyResult<f64> {
    let a = FeatureVector::new(a).map_err(py_err)?;
    let b = FeatureVector::new(b).map_err(py_err)?;
    let program = swap_test_program(&a, &b, mode(shots)).map_err(py_err)?;
    let out = run_sequential(
        vec![program],
        MergeSpec::Identity,
        seed,
        &RunOptions::default(),
    )
    .map_err(py_err)?;
    out.outcomes[0]
        .expectations
        .get("overlap")
        .copied()
        .ok_or_else(|| PyRuntimeError::new_err("overlap was not recorded"))
}

#[pymodule]
fn qdist(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(schedule, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(qpe, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_qpe, m)?)?;
    m.add_function(wrap_pyfunction!(vqe_energy, m)?)?;
    m.add_function(wrap_pyfunction!(plae, m)?)?;
    m.add_function(wrap_pyfunction!(swap_test, m)?)?;
    Ok(())
}
