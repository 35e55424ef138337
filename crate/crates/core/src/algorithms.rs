//! Builders that turn the parallelisable algorithms into program batches:
//! phase estimation, term-parallel VQE, power-law amplitude estimation and
//! swap-test k-means.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Deserialize;

use crate::backend::{Pauli, PauliString};
use crate::circuit::{Circuit, GateKind, Matrix2, QubitRef};
use crate::engine::{merge, run_parallel, MergeSpec, MergedValue, RunOptions, DEFAULT_GRID};
use crate::error::{AlgorithmError, EngineError, Error, ScheduleError};
use crate::scheduler::{
    build_parallel_program, Allocation, Allocator, Observable, ParallelProgram, Program, Schedule,
};
use crate::topology::Topology;

const UNITARY_TOL: f64 = 1e-10;

/// Programs plus the rule that merges their outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramBatch {
    pub programs: Vec<Program>,
    pub merge: MergeSpec,
}

impl ProgramBatch {
    pub fn schedule(
        self,
        topology: &Topology,
        allocator: Allocator,
    ) -> Result<ParallelProgram, ScheduleError> {
        build_parallel_program(topology, self.programs, allocator, self.merge)
    }
}

/// How expectation values are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimation {
    /// Read off the final state, one repetition.
    Exact,
    /// Sample measurement outcomes.
    Shots(u32),
}

// ---------------------------------------------------------------- QPE

/// `diag(1, e^{2πiθ})`.
pub fn phase_unitary(theta: f64) -> Matrix2 {
    Matrix2::phase(2.0 * PI * theta)
}

/// Bit names of the measurement register, most significant first.
pub fn qpe_bits(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("q{i}")).collect()
}

/// Phase estimation with `n` measurement qubits (logical `0..n`) and one
/// eigenstate qubit (logical `n`, prepared as `|1⟩`). Measurement qubit `i`
/// controls `2^i` applications of `u`; its bit is `q{i}`.
pub fn qpe_circuit(n: usize, u: &Matrix2) -> Result<Circuit, AlgorithmError> {
    if n == 0 {
        return Err(AlgorithmError::InvalidConfig(
            "at least one measurement qubit is needed".into(),
        ));
    }
    if !u.is_unitary(UNITARY_TOL) {
        return Err(AlgorithmError::NonUnitary(format!("{:?}", u.0)));
    }
    let mut c = Circuit::with_width(n + 1);
    let phase = QubitRef::logical(n);
    let meas: Vec<QubitRef> = (0..n).map(QubitRef::logical).collect();
    c.apply(GateKind::X, &phase);
    for m in &meas {
        c.apply(GateKind::H, m);
    }
    for (i, m) in meas.iter().enumerate() {
        for _ in 0..(1u64 << i) {
            c.apply2(GateKind::CustomControlled(*u), m, &phase);
        }
    }
    let rev: Vec<&QubitRef> = meas.iter().rev().collect();
    for i in 0..n {
        for j in 0..i {
            let angle = -PI * (1u64 << j) as f64 / (1u64 << i) as f64;
            c.apply2(GateKind::CPhase(angle), rev[j], rev[i]);
        }
        c.apply(GateKind::H, rev[i]);
    }
    for (i, m) in meas.iter().enumerate() {
        c.measure(m, format!("q{i}"));
    }
    Ok(c)
}

/// Two QPUs of `n` qubits each.
pub fn qpe_demo_topology(n: usize) -> Topology {
    Topology::from_sizes(&[n, n]).expect("n > 0")
}

/// Eigenstate qubit on `QPU_0[0]`, measurement qubit `i` on `QPU_1[i]`.
pub fn qpe_demo_allocation(n: usize) -> Allocation {
    let mut slots: Vec<QubitRef> = (0..n).map(|i| QubitRef::new("QPU_1", i)).collect();
    slots.push(QubitRef::new("QPU_0", 0));
    Allocation { slots }
}

/// The split phase-estimation demo as a one-program parallel program.
pub fn qpe_demo(
    n: usize,
    u: &Matrix2,
    shots: u32,
) -> Result<(ParallelProgram, Topology), AlgorithmError> {
    if shots == 0 {
        return Err(AlgorithmError::InvalidConfig(
            "shots must be positive".into(),
        ));
    }
    let circuit = qpe_circuit(n, u)?;
    let topology = qpe_demo_topology(n);
    let pp = ParallelProgram {
        programs: vec![Program::new(circuit, shots)],
        schedule: Schedule {
            rounds: vec![vec![BTreeSet::from([0]), BTreeSet::from([0])]],
        },
        merge: MergeSpec::BitAssembly { bits: qpe_bits(n) },
        allocations: vec![qpe_demo_allocation(n)],
        round_of: vec![0],
    };
    Ok((pp, topology))
}

// ---------------------------------------------------------------- VQE

/// `coefficient · pauli`, character `i` of `pauli` acting on logical qubit `i`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct HamiltonianTerm {
    #[serde(rename = "coeff")]
    pub coefficient: f64,
    pub pauli: String,
}

impl HamiltonianTerm {
    pub fn new(coefficient: f64, pauli: impl Into<String>) -> Self {
        HamiltonianTerm {
            coefficient,
            pauli: pauli.into(),
        }
    }

    fn factors(&self) -> Result<Vec<Pauli>, AlgorithmError> {
        self.pauli
            .chars()
            .map(|c| {
                Pauli::from_char(c)
                    .ok_or_else(|| AlgorithmError::Parse(format!("bad Pauli letter {c:?}")))
            })
            .collect()
    }

    pub fn pauli_string(&self, qubits: &[QubitRef]) -> Result<PauliString, AlgorithmError> {
        let mut p = PauliString::identity();
        for (i, f) in self.factors()?.into_iter().enumerate() {
            let q = qubits.get(i).ok_or_else(|| {
                AlgorithmError::WidthMismatch(format!(
                    "term {} is wider than the ansatz",
                    self.pauli
                ))
            })?;
            p.set(q.clone(), f);
        }
        Ok(p)
    }
}

/// Parse `[{"coeff": 0.5, "pauli": "ZIXX"}, …]`.
pub fn parse_terms(text: &str) -> Result<Vec<HamiltonianTerm>, AlgorithmError> {
    let terms: Vec<HamiltonianTerm> =
        serde_json::from_str(text).map_err(|e| AlgorithmError::Parse(e.to_string()))?;
    for t in &terms {
        if !t.coefficient.is_finite() {
            return Err(AlgorithmError::InvalidConfig(format!(
                "coefficient of {} is not finite",
                t.pauli
            )));
        }
        t.factors()?;
    }
    Ok(terms)
}

/// One program per term: the ansatz, a rotation of each factor into the Z
/// basis, then either sampling of the support or an exact Z-string readout.
/// Every program reports its term's expectation as `expval`.
pub fn vqe_programs(
    terms: &[HamiltonianTerm],
    ansatz: &Circuit,
    mode: Estimation,
) -> Result<ProgramBatch, AlgorithmError> {
    if terms.is_empty() {
        return Err(AlgorithmError::InvalidConfig("no Hamiltonian terms".into()));
    }
    let mut programs = Vec::with_capacity(terms.len());
    for term in terms {
        if !term.coefficient.is_finite() {
            return Err(AlgorithmError::InvalidConfig(format!(
                "coefficient of {} is not finite",
                term.pauli
            )));
        }
        let factors = term.factors()?;
        if factors.len() > ansatz.width() {
            return Err(AlgorithmError::WidthMismatch(format!(
                "term {} acts on {} qubits but the ansatz has {}",
                term.pauli,
                factors.len(),
                ansatz.width()
            )));
        }
        let mut c = ansatz.clone();
        let mut zstring = PauliString::identity();
        let mut support = Vec::new();
        for (i, f) in factors.iter().enumerate() {
            let q = ansatz.qubits[i].clone();
            match f {
                Pauli::I => continue,
                Pauli::X => {
                    c.apply(GateKind::H, &q);
                }
                Pauli::Y => {
                    c.apply(GateKind::Phase(-PI / 2.0), &q)
                        .apply(GateKind::H, &q);
                }
                Pauli::Z => {}
            }
            zstring.set(q.clone(), Pauli::Z);
            support.push((i, q));
        }
        let program = match mode {
            Estimation::Exact => {
                Program::new(c, 1).with_observable("expval", Observable::Exact(zstring))
            }
            Estimation::Shots(n) => {
                let mut bits = Vec::new();
                for (i, q) in &support {
                    let b = format!("m{i}");
                    c.measure(q, b.clone());
                    bits.push(b);
                }
                Program::new(c, n).with_observable("expval", Observable::Parity(bits))
            }
        };
        programs.push(program);
    }
    Ok(ProgramBatch {
        programs,
        merge: MergeSpec::weighted_sum(terms.iter().map(|t| t.coefficient).collect()),
    })
}

/// Evaluate `energy` at every candidate and keep the lowest; ties keep the
/// earlier candidate.
pub fn minimize_over<P: Clone, E>(
    candidates: &[P],
    mut energy: impl FnMut(&P) -> Result<f64, E>,
) -> Result<Option<(P, f64)>, E> {
    let mut best: Option<(P, f64)> = None;
    for p in candidates {
        let e = energy(p)?;
        if best.as_ref().is_none_or(|(_, b)| e < *b) {
            best = Some((p.clone(), e));
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------- PLAE

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaeConfig {
    pub beta: f64,
    pub k_max: u32,
    pub shots: u32,
}

impl PlaeConfig {
    pub fn check(&self) -> Result<(), AlgorithmError> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(AlgorithmError::InvalidConfig(format!(
                "beta {} is outside (0, 1]",
                self.beta
            )));
        }
        if self.k_max == 0 {
            return Err(AlgorithmError::InvalidConfig("K must be at least 1".into()));
        }
        if self.shots == 0 {
            return Err(AlgorithmError::InvalidConfig(
                "shots must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `⌊k^{(1−β)/(2β)}⌋` for `k = 1..=K`.
pub fn plae_queries(cfg: &PlaeConfig) -> Vec<u64> {
    let exponent = (1.0 - cfg.beta) / (2.0 * cfg.beta);
    (1..=cfg.k_max)
        .map(|k| {
            let x = f64::from(k).powf(exponent);
            let r = x.round();
            if (x - r).abs() < 1e-9 {
                r as u64
            } else {
                x.floor() as u64
            }
        })
        .collect()
}

/// Program `k` runs `oracle` then `m_k` copies of `grover` and measures
/// logical qubit `good` into bit `good`; outcomes merge by maximum likelihood
/// over `grid + 1` amplitudes.
pub fn plae_programs(
    oracle: &Circuit,
    grover: &Circuit,
    good: usize,
    cfg: &PlaeConfig,
    grid: usize,
) -> Result<ProgramBatch, AlgorithmError> {
    cfg.check()?;
    if oracle.width() != grover.width() || oracle.qubits != grover.qubits {
        return Err(AlgorithmError::WidthMismatch(format!(
            "oracle has {} qubits, Grover iterate {}",
            oracle.width(),
            grover.width()
        )));
    }
    if good >= oracle.width() {
        return Err(AlgorithmError::WidthMismatch(format!(
            "good qubit {good} is outside the oracle"
        )));
    }
    let queries = plae_queries(cfg);
    let programs = queries
        .iter()
        .map(|&m| {
            let mut c = oracle.clone();
            for _ in 0..m {
                c.extend_from(grover);
            }
            c.measure(&oracle.qubits[good].clone(), "good");
            Program::new(c, cfg.shots)
        })
        .collect();
    Ok(ProgramBatch {
        programs,
        merge: MergeSpec::MaxLikelihoodAmplitude {
            queries,
            grid,
            success: "1".into(),
        },
    })
}

/// One-qubit oracle with success probability `a` and its exact Grover
/// iterate: `RY(2·asin√a)` and `RY(4·asin√a)`.
pub fn rotation_oracle(a: f64) -> Result<(Circuit, Circuit), AlgorithmError> {
    if !(0.0..=1.0).contains(&a) {
        return Err(AlgorithmError::InvalidConfig(format!(
            "amplitude {a} is outside [0, 1]"
        )));
    }
    let theta = a.sqrt().asin();
    let q = QubitRef::logical(0);
    let mut oracle = Circuit::with_width(1);
    oracle.apply(GateKind::Ry(2.0 * theta), &q);
    let mut grover = Circuit::with_width(1);
    grover.apply(GateKind::Ry(4.0 * theta), &q);
    Ok((oracle, grover))
}

/// Duplicate every program `parts` times with its repetitions split evenly.
/// A maximum-likelihood merge pools the copies' counts automatically.
pub fn split_repetitions(batch: &ProgramBatch, parts: u32) -> Result<ProgramBatch, AlgorithmError> {
    if parts == 0 {
        return Err(AlgorithmError::InvalidConfig(
            "parts must be positive".into(),
        ));
    }
    let MergeSpec::MaxLikelihoodAmplitude {
        queries,
        grid,
        success,
    } = &batch.merge
    else {
        return Err(AlgorithmError::InvalidConfig(
            "only likelihood merges can be split".into(),
        ));
    };
    let mut programs = Vec::new();
    let mut split_queries = Vec::new();
    for (p, &m) in batch.programs.iter().zip(queries) {
        if p.repetitions % parts != 0 {
            return Err(AlgorithmError::InvalidConfig(format!(
                "{} repetitions do not split into {parts} parts",
                p.repetitions
            )));
        }
        for _ in 0..parts {
            let mut copy = p.clone();
            copy.repetitions = p.repetitions / parts;
            programs.push(copy);
            split_queries.push(m);
        }
    }
    Ok(ProgramBatch {
        programs,
        merge: MergeSpec::MaxLikelihoodAmplitude {
            queries: split_queries,
            grid: *grid,
            success: success.clone(),
        },
    })
}

pub fn default_plae_grid() -> usize {
    DEFAULT_GRID
}

// ---------------------------------------------------------------- swap test

/// A raw feature vector; normalised and zero-padded on use.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self, AlgorithmError> {
        if values.is_empty() {
            return Err(AlgorithmError::DimensionMismatch(
                "empty feature vector".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AlgorithmError::InvalidConfig(
                "feature vector has non-finite entries".into(),
            ));
        }
        Ok(FeatureVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Length after padding: the next power of two, at least 2.
    pub fn padded_len(&self) -> usize {
        self.values.len().next_power_of_two().max(2)
    }

    /// Unit-norm, zero-padded amplitudes.
    pub fn normalized(&self) -> Result<Vec<f64>, AlgorithmError> {
        let norm = self.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(AlgorithmError::ZeroVector);
        }
        let mut out: Vec<f64> = self.values.iter().map(|v| v / norm).collect();
        out.resize(self.padded_len(), 0.0);
        Ok(out)
    }

    /// `|⟨a|b⟩|²` of the normalised vectors.
    pub fn overlap(&self, other: &FeatureVector) -> Result<f64, AlgorithmError> {
        let a = self.normalized()?;
        let b = other.normalized()?;
        if a.len() != b.len() {
            return Err(AlgorithmError::DimensionMismatch(format!(
                "{} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>().powi(2))
    }
}

/// One vector per CSV row. A first row that does not parse as numbers is
/// taken as a header.
pub fn parse_feature_csv(text: &str) -> Result<Vec<FeatureVector>, AlgorithmError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| AlgorithmError::Parse(e.to_string()))?;
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(values) => out.push(FeatureVector::new(values)?),
            Err(_) if row == 0 => continue,
            Err(e) => return Err(AlgorithmError::Parse(format!("row {}: {e}", row + 1))),
        }
    }
    if let Some(first) = out.first() {
        let d = first.dim();
        if out.iter().any(|v| v.dim() != d) {
            return Err(AlgorithmError::DimensionMismatch(
                "rows have different lengths".into(),
            ));
        }
    }
    Ok(out)
}

/// Load real `amplitudes` (length `2^qubits.len()`, unit norm) into fresh
/// qubits, `qubits[0]` most significant. A tree of uniformly controlled RY
/// rotations, each decomposed into RY and CNOT along a Gray code.
pub fn amplitude_encode(circuit: &mut Circuit, qubits: &[QubitRef], amplitudes: &[f64]) {
    let n = qubits.len();
    assert_eq!(amplitudes.len(), 1 << n, "amplitude count must be 2^qubits");
    for level in 0..n {
        let block = 1 << (n - level);
        let half = block / 2;
        let angles: Vec<f64> = amplitudes
            .chunks(block)
            .map(|chunk| {
                if level + 1 == n {
                    2.0 * chunk[1].atan2(chunk[0])
                } else {
                    let n0 = chunk[..half].iter().map(|v| v * v).sum::<f64>().sqrt();
                    let n1 = chunk[half..].iter().map(|v| v * v).sum::<f64>().sqrt();
                    2.0 * n1.atan2(n0)
                }
            })
            .collect();
        uniformly_controlled_ry(circuit, &qubits[..level], &qubits[level], &angles);
    }
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

/// `Σ_p |p⟩⟨p| ⊗ RY(angles[p])`, `controls[0]` the most significant bit of `p`.
fn uniformly_controlled_ry(
    circuit: &mut Circuit,
    controls: &[QubitRef],
    target: &QubitRef,
    angles: &[f64],
) {
    let k = controls.len();
    if k == 0 {
        if angles[0] != 0.0 {
            circuit.apply(GateKind::Ry(angles[0]), target);
        }
        return;
    }
    let count = 1usize << k;
    for i in 0..count {
        let g = gray(i);
        let theta: f64 = angles
            .iter()
            .enumerate()
            .map(|(p, a)| {
                if (p & g).count_ones() % 2 == 1 {
                    -a
                } else {
                    *a
                }
            })
            .sum::<f64>()
            / count as f64;
        circuit.apply(GateKind::Ry(theta), target);
        let flipped = (g ^ gray((i + 1) % count)).trailing_zeros() as usize;
        circuit.apply2(GateKind::Cnot, &controls[k - 1 - flipped], target);
    }
}

/// Toffoli from H, T, T† and CNOT.
pub fn toffoli(circuit: &mut Circuit, c1: &QubitRef, c2: &QubitRef, t: &QubitRef) {
    let tdg = GateKind::Phase(-PI / 4.0);
    circuit
        .apply(GateKind::H, t)
        .apply2(GateKind::Cnot, c2, t)
        .apply(tdg.clone(), t)
        .apply2(GateKind::Cnot, c1, t)
        .apply(GateKind::T, t)
        .apply2(GateKind::Cnot, c2, t)
        .apply(tdg.clone(), t)
        .apply2(GateKind::Cnot, c1, t)
        .apply(GateKind::T, c2)
        .apply(GateKind::T, t)
        .apply(GateKind::H, t)
        .apply2(GateKind::Cnot, c1, c2)
        .apply(GateKind::T, c1)
        .apply(tdg, c2)
        .apply2(GateKind::Cnot, c1, c2);
}

/// Controlled swap of `a` and `b`.
pub fn controlled_swap(circuit: &mut Circuit, control: &QubitRef, a: &QubitRef, b: &QubitRef) {
    circuit.apply2(GateKind::Cnot, b, a);
    toffoli(circuit, control, a, b);
    circuit.apply2(GateKind::Cnot, b, a);
}

fn swap_test(
    a: &FeatureVector,
    b: &FeatureVector,
    measure: bool,
) -> Result<Circuit, AlgorithmError> {
    let va = a.normalized()?;
    let vb = b.normalized()?;
    if va.len() != vb.len() {
        return Err(AlgorithmError::DimensionMismatch(format!(
            "padded lengths {} and {} differ",
            va.len(),
            vb.len()
        )));
    }
    let q = va.len().trailing_zeros() as usize;
    let mut c = Circuit::with_width(1 + 2 * q);
    let anc = QubitRef::logical(0);
    let ra: Vec<QubitRef> = (1..=q).map(QubitRef::logical).collect();
    let rb: Vec<QubitRef> = (q + 1..=2 * q).map(QubitRef::logical).collect();
    amplitude_encode(&mut c, &ra, &va);
    amplitude_encode(&mut c, &rb, &vb);
    c.apply(GateKind::H, &anc);
    for (x, y) in ra.iter().zip(&rb) {
        controlled_swap(&mut c, &anc, x, y);
    }
    c.apply(GateKind::H, &anc);
    if measure {
        c.measure(&anc, "anc");
    }
    Ok(c)
}

/// Swap test on amplitude-encoded `a` and `b`; ancilla is logical qubit 0,
/// measured into bit `anc`. `P(anc = 0) = (1 + |⟨a|b⟩|²) / 2`.
pub fn swap_test_circuit(a: &FeatureVector, b: &FeatureVector) -> Result<Circuit, AlgorithmError> {
    swap_test(a, b, true)
}

/// Swap test reporting the overlap `|⟨a|b⟩|² = P(0) − P(1)` as `overlap`.
pub fn swap_test_program(
    a: &FeatureVector,
    b: &FeatureVector,
    mode: Estimation,
) -> Result<Program, AlgorithmError> {
    Ok(match mode {
        Estimation::Exact => {
            let c = swap_test(a, b, false)?;
            let z = PauliString::identity().with(QubitRef::logical(0), Pauli::Z);
            Program::new(c, 1).with_observable("overlap", Observable::Exact(z))
        }
        Estimation::Shots(n) => Program::new(swap_test(a, b, true)?, n)
            .with_observable("overlap", Observable::Parity(vec!["anc".into()])),
    })
}

/// `n·k` swap tests, program `i·k + j` comparing point `i` with centroid `j`.
pub fn kmeans_round(
    points: &[FeatureVector],
    centroids: &[FeatureVector],
    mode: Estimation,
) -> Result<ProgramBatch, AlgorithmError> {
    if points.is_empty() || centroids.is_empty() {
        return Err(AlgorithmError::InvalidConfig(
            "need at least one point and one centroid".into(),
        ));
    }
    let d = points[0].dim();
    if points.iter().chain(centroids).any(|v| v.dim() != d) {
        return Err(AlgorithmError::DimensionMismatch(
            "all vectors must share one dimension".into(),
        ));
    }
    let mut programs = Vec::with_capacity(points.len() * centroids.len());
    for p in points {
        for c in centroids {
            programs.push(swap_test_program(p, c, mode)?);
        }
    }
    Ok(ProgramBatch {
        programs,
        merge: MergeSpec::NearestCentroid {
            points: points.len(),
            centroids: centroids.len(),
            observable: "overlap".into(),
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignment: Vec<usize>,
    pub centroids: Vec<FeatureVector>,
    pub iterations: usize,
}

/// Mean of the normalised members of each cluster; empty clusters keep
/// their centroid.
pub fn update_centroids(
    points: &[FeatureVector],
    assignment: &[usize],
    centroids: &[FeatureVector],
) -> Result<Vec<FeatureVector>, AlgorithmError> {
    let mut out = Vec::with_capacity(centroids.len());
    for (j, old) in centroids.iter().enumerate() {
        let members: Vec<Vec<f64>> = points
            .iter()
            .zip(assignment)
            .filter(|(_, &a)| a == j)
            .map(|(p, _)| p.normalized())
            .collect::<Result<_, _>>()?;
        if members.is_empty() {
            out.push(old.clone());
            continue;
        }
        let mut mean = vec![0.0; old.dim()];
        for m in &members {
            for (acc, v) in mean.iter_mut().zip(m) {
                *acc += v / members.len() as f64;
            }
        }
        if mean.iter().all(|v| *v == 0.0) {
            out.push(old.clone());
        } else {
            out.push(FeatureVector::new(mean)?);
        }
    }
    Ok(out)
}

/// Swap-test k-means: start from the first `k` points, run one parallel
/// round of distance programs per iteration, update centroids classically,
/// stop when the assignment is stable.
pub fn kmeans(
    points: &[FeatureVector],
    k: usize,
    iterations: usize,
    mode: Estimation,
    topology: &Topology,
    seed: u64,
    options: &RunOptions,
) -> Result<KMeansResult, Error> {
    if k == 0 || k > points.len() {
        return Err(
            AlgorithmError::InvalidConfig(format!("k = {k} with {} points", points.len())).into(),
        );
    }
    let mut centroids: Vec<FeatureVector> = points[..k].to_vec();
    let mut assignment: Vec<usize> = Vec::new();
    let mut done = 0;
    for it in 0..iterations.max(1) {
        let pp = kmeans_round(points, &centroids, mode)?.schedule(topology, Allocator::Greedy)?;
        let out = run_parallel(&pp, topology, seed.wrapping_add(it as u64), options)?;
        let MergedValue::Assignment(next) = out.value else {
            return Err(EngineError::InvalidMerge("expected an assignment".into()).into());
        };
        done = it + 1;
        let stable = next == assignment;
        assignment = next;
        centroids = update_centroids(points, &assignment, &centroids)?;
        if stable {
            break;
        }
    }
    Ok(KMeansResult {
        assignment,
        centroids,
        iterations: done,
    })
}

/// Classical nearest-centroid assignment by overlap, for comparison.
pub fn classical_assignment(
    points: &[FeatureVector],
    centroids: &[FeatureVector],
) -> Result<Vec<usize>, AlgorithmError> {
    let n = points.len();
    let k = centroids.len();
    let mut outcomes = Vec::with_capacity(n * k);
    for (i, p) in points.iter().enumerate() {
        for (j, c) in centroids.iter().enumerate() {
            let mut o = crate::engine::Outcome::empty(i * k + j, Vec::new());
            o.expectations.insert("overlap".into(), p.overlap(c)?);
            outcomes.push(o);
        }
    }
    let spec = MergeSpec::NearestCentroid {
        points: n,
        centroids: k,
        observable: "overlap".into(),
    };
    match merge(&spec, &outcomes) {
        Ok(MergedValue::Assignment(a)) => Ok(a),
        _ => Err(AlgorithmError::InvalidConfig(
            "classical assignment failed".into(),
        )),
    }
}

/// Amplitudes `values / ‖values‖` as complex numbers, for state comparisons.
pub fn as_state(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|v| Complex64::new(*v, 0.0)).collect()
}
