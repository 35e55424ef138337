//! Device-agnostic circuit representation.
//!
//! Qubits are addressed globally as `(node, local index)` pairs. A circuit that
//! has not been placed on hardware yet uses the reserved [`NodeId::logical`]
//! node, and an [`Allocation`](crate::scheduler::Allocation) maps those logical
//! qubits onto QPU slots.

use std::collections::{HashMap, HashSet};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::CircuitError;
use crate::topology::Topology;

const UNITARY_TOL: f64 = 1e-10;

/// Identifier of a QPU (computing node).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    /// Placeholder node of circuits that are not yet allocated.
    pub fn logical() -> Self {
        NodeId("logical".to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId::new(s)
    }
}

/// A qubit slot on a node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QubitRef {
    pub node: NodeId,
    pub index: usize,
}

impl QubitRef {
    pub fn new(node: impl Into<NodeId>, index: usize) -> Self {
        QubitRef {
            node: node.into(),
            index,
        }
    }

    pub fn logical(index: usize) -> Self {
        QubitRef {
            node: NodeId::logical(),
            index,
        }
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

impl fmt::Display for QubitRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.node, self.index)
    }
}

/// A 2x2 complex matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matrix2(pub [[Complex64; 2]; 2]);

impl Matrix2 {
    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Matrix2([[a, b], [c, d]])
    }

    pub fn real(a: f64, b: f64, c: f64, d: f64) -> Self {
        Matrix2::new(a.into(), b.into(), c.into(), d.into())
    }

    pub fn identity() -> Self {
        Matrix2::real(1.0, 0.0, 0.0, 1.0)
    }

    pub fn pauli_x() -> Self {
        Matrix2::real(0.0, 1.0, 1.0, 0.0)
    }

    pub fn pauli_y() -> Self {
        let i = Complex64::i();
        Matrix2::new(0.0.into(), -i, i, 0.0.into())
    }

    pub fn pauli_z() -> Self {
        Matrix2::real(1.0, 0.0, 0.0, -1.0)
    }

    pub fn hadamard() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Matrix2::real(s, s, s, -s)
    }

    /// `diag(1, e^{iθ})`.
    pub fn phase(theta: f64) -> Self {
        Matrix2::new(
            1.0.into(),
            0.0.into(),
            0.0.into(),
            Complex64::from_polar(1.0, theta),
        )
    }

    pub fn rx(theta: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        let mi = Complex64::new(0.0, -s);
        Matrix2::new(c.into(), mi, mi, c.into())
    }

    pub fn ry(theta: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        Matrix2::real(c, -s, s, c)
    }

    pub fn rz(theta: f64) -> Self {
        Matrix2::new(
            Complex64::from_polar(1.0, -theta / 2.0),
            0.0.into(),
            0.0.into(),
            Complex64::from_polar(1.0, theta / 2.0),
        )
    }

    pub fn mul(&self, rhs: &Matrix2) -> Matrix2 {
        let a = &self.0;
        let b = &rhs.0;
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        Matrix2(out)
    }

    pub fn adjoint(&self) -> Matrix2 {
        let m = &self.0;
        Matrix2::new(
            m[0][0].conj(),
            m[1][0].conj(),
            m[0][1].conj(),
            m[1][1].conj(),
        )
    }

    pub fn pow(&self, n: u64) -> Matrix2 {
        (0..n).fold(Matrix2::identity(), |acc, _| acc.mul(self))
    }

    /// `U U† = I` entrywise within `tol`.
    pub fn is_unitary(&self, tol: f64) -> bool {
        let p = self.mul(&self.adjoint());
        let id = Matrix2::identity();
        p.0.iter()
            .flatten()
            .zip(id.0.iter().flatten())
            .all(|(a, b)| (a - b).norm() <= tol)
    }
}

/// Gate kinds. The list is closed: arbitrary multi-qubit unitaries are not
/// representable, and three-qubit operations must be decomposed.
#[derive(Debug, Clone, PartialEq)]
pub enum GateKind {
    /// Prepare the qubit in the given computational basis state.
    Prepare(bool),
    X,
    Y,
    Z,
    H,
    S,
    T,
    Rx(f64),
    Ry(f64),
    Rz(f64),
    Phase(f64),
    Cnot,
    Cz,
    CPhase(f64),
    CustomSingle(Matrix2),
    CustomControlled(Matrix2),
    /// Measure into the named classical bit.
    Measure(String),
    /// Apply X if the named bit is 1.
    CondX(String),
    /// Apply Z if the named bit is 1.
    CondZ(String),
    Reset,
    /// Create `(|00⟩+|11⟩)/√2` on two fresh qubits. Only produced by the remapper.
    EprGen,
}

impl GateKind {
    pub fn name(&self) -> &'static str {
        match self {
            GateKind::Prepare(_) => "PREPARE",
            GateKind::X => "X",
            GateKind::Y => "Y",
            GateKind::Z => "Z",
            GateKind::H => "H",
            GateKind::S => "S",
            GateKind::T => "T",
            GateKind::Rx(_) => "RX",
            GateKind::Ry(_) => "RY",
            GateKind::Rz(_) => "RZ",
            GateKind::Phase(_) => "PHASE",
            GateKind::Cnot => "CNOT",
            GateKind::Cz => "CZ",
            GateKind::CPhase(_) => "CPHASE",
            GateKind::CustomSingle(_) => "CUSTOM_SINGLE",
            GateKind::CustomControlled(_) => "CUSTOM_CONTROLLED",
            GateKind::Measure(_) => "MEASURE",
            GateKind::CondX(_) => "COND_X",
            GateKind::CondZ(_) => "COND_Z",
            GateKind::Reset => "RESET",
            GateKind::EprGen => "EPR_GEN",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            GateKind::Cnot
            | GateKind::Cz
            | GateKind::CPhase(_)
            | GateKind::CustomControlled(_)
            | GateKind::EprGen => 2,
            _ => 1,
        }
    }

    /// Two-qubit kinds of the form `|0⟩⟨0| ⊗ I + |1⟩⟨1| ⊗ U`.
    pub fn is_controlled(&self) -> bool {
        self.controlled_target().is_some()
    }

    /// Target unitary of a controlled kind.
    pub fn controlled_target(&self) -> Option<Matrix2> {
        match self {
            GateKind::Cnot => Some(Matrix2::pauli_x()),
            GateKind::Cz => Some(Matrix2::pauli_z()),
            GateKind::CPhase(t) => Some(Matrix2::phase(*t)),
            GateKind::CustomControlled(m) => Some(*m),
            _ => None,
        }
    }

    /// Matrix of a single-qubit unitary kind.
    pub fn single_matrix(&self) -> Option<Matrix2> {
        use std::f64::consts::FRAC_PI_4;
        match self {
            GateKind::X => Some(Matrix2::pauli_x()),
            GateKind::Y => Some(Matrix2::pauli_y()),
            GateKind::Z => Some(Matrix2::pauli_z()),
            GateKind::H => Some(Matrix2::hadamard()),
            GateKind::S => Some(Matrix2::phase(2.0 * FRAC_PI_4)),
            GateKind::T => Some(Matrix2::phase(FRAC_PI_4)),
            GateKind::Rx(t) => Some(Matrix2::rx(*t)),
            GateKind::Ry(t) => Some(Matrix2::ry(*t)),
            GateKind::Rz(t) => Some(Matrix2::rz(*t)),
            GateKind::Phase(t) => Some(Matrix2::phase(*t)),
            GateKind::CustomSingle(m) => Some(*m),
            _ => None,
        }
    }

    /// Classical bit read or written by this kind.
    pub fn bit(&self) -> Option<&str> {
        match self {
            GateKind::Measure(b) | GateKind::CondX(b) | GateKind::CondZ(b) => Some(b),
            _ => None,
        }
    }

    fn custom_matrix(&self) -> Option<&Matrix2> {
        match self {
            GateKind::CustomSingle(m) | GateKind::CustomControlled(m) => Some(m),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    /// Control first for controlled kinds.
    pub operands: Vec<QubitRef>,
}

impl Gate {
    pub fn new(kind: GateKind, operands: Vec<QubitRef>) -> Self {
        Gate { kind, operands }
    }

    pub fn single(kind: GateKind, q: QubitRef) -> Self {
        Gate::new(kind, vec![q])
    }

    pub fn two(kind: GateKind, control: QubitRef, target: QubitRef) -> Self {
        Gate::new(kind, vec![control, target])
    }

    /// Whether the operands live on more than one node.
    pub fn spans_nodes(&self) -> bool {
        self.operands.windows(2).any(|w| w[0].node != w[1].node)
    }

    pub fn map_operands(&self, f: impl Fn(&QubitRef) -> QubitRef) -> Gate {
        Gate {
            kind: self.kind.clone(),
            operands: self.operands.iter().map(f).collect(),
        }
    }
}

/// An ordered gate list over a declared set of qubits.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Circuit {
    pub qubits: Vec<QubitRef>,
    pub gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(qubits: Vec<QubitRef>) -> Self {
        Circuit {
            qubits,
            gates: Vec::new(),
        }
    }

    /// `w` logical qubits `logical[0..w]`.
    pub fn with_width(w: usize) -> Self {
        Circuit::new((0..w).map(QubitRef::logical).collect())
    }

    pub fn width(&self) -> usize {
        self.qubits.len()
    }

    /// Append a gate, declaring any operand not yet in `qubits`.
    pub fn push(&mut self, gate: Gate) -> &mut Self {
        for q in &gate.operands {
            if !self.qubits.contains(q) {
                self.qubits.push(q.clone());
            }
        }
        self.gates.push(gate);
        self
    }

    pub fn apply(&mut self, kind: GateKind, q: &QubitRef) -> &mut Self {
        self.push(Gate::single(kind, q.clone()))
    }

    pub fn apply2(&mut self, kind: GateKind, control: &QubitRef, target: &QubitRef) -> &mut Self {
        self.push(Gate::two(kind, control.clone(), target.clone()))
    }

    pub fn measure(&mut self, q: &QubitRef, bit: impl Into<String>) -> &mut Self {
        self.push(Gate::single(GateKind::Measure(bit.into()), q.clone()))
    }

    /// Append every gate of `other`.
    pub fn extend_from(&mut self, other: &Circuit) -> &mut Self {
        for q in &other.qubits {
            if !self.qubits.contains(q) {
                self.qubits.push(q.clone());
            }
        }
        self.gates.extend(other.gates.iter().cloned());
        self
    }

    pub fn logical_qubit(&self, i: usize) -> &QubitRef {
        &self.qubits[i]
    }

    /// Names of bits written by MEASURE, in gate order, without repeats.
    pub fn measured_bits(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.gates
            .iter()
            .filter_map(|g| match &g.kind {
                GateKind::Measure(b) if seen.insert(b.clone()) => Some(b.clone()),
                _ => None,
            })
            .collect()
    }

    /// Checks that do not need a topology: arity, duplicate operands,
    /// undeclared operands and unitarity of custom matrices.
    pub fn structural_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut declared = HashSet::new();
        for q in &self.qubits {
            if !declared.insert(q) {
                out.push(Violation::DuplicateQubit { qubit: q.clone() });
            }
        }
        for (i, g) in self.gates.iter().enumerate() {
            if g.operands.len() != g.kind.arity() {
                out.push(Violation::WrongArity {
                    gate: i,
                    expected: g.kind.arity(),
                    found: g.operands.len(),
                });
            }
            let distinct: HashSet<_> = g.operands.iter().collect();
            if distinct.len() != g.operands.len() {
                out.push(Violation::DuplicateOperand { gate: i });
            }
            for q in &g.operands {
                if !declared.contains(q) {
                    out.push(Violation::UndeclaredQubit {
                        gate: i,
                        qubit: q.clone(),
                    });
                }
            }
            if let Some(m) = g.kind.custom_matrix() {
                if !m.is_unitary(UNITARY_TOL) {
                    out.push(Violation::NonUnitary { gate: i });
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("circuit serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Circuit, CircuitError> {
        serde_json::from_str(s).map_err(|e| CircuitError::Parse(e.to_string()))
    }
}

/// Gate indices grouped into layers of pairwise qubit-disjoint gates.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LayeredCircuit {
    pub layers: Vec<Vec<usize>>,
}

impl LayeredCircuit {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Gate indices in layer order.
    pub fn flatten(&self) -> Vec<usize> {
        self.layers.iter().flatten().copied().collect()
    }
}

/// Greedy earliest-layer assignment. Gates that share a qubit, or a classical
/// bit, land in strictly increasing layers.
pub fn layer_decompose(circuit: &Circuit) -> LayeredCircuit {
    let mut qubit_level: HashMap<&QubitRef, usize> = HashMap::new();
    let mut bit_level: HashMap<&str, usize> = HashMap::new();
    let mut layers: Vec<Vec<usize>> = Vec::new();
    for (i, g) in circuit.gates.iter().enumerate() {
        let mut level = 0;
        for q in &g.operands {
            if let Some(&l) = qubit_level.get(q) {
                level = level.max(l + 1);
            }
        }
        if let Some(b) = g.kind.bit() {
            if let Some(&l) = bit_level.get(b) {
                level = level.max(l + 1);
            }
        }
        for q in &g.operands {
            qubit_level.insert(q, level);
        }
        if let Some(b) = g.kind.bit() {
            bit_level.insert(b, level);
        }
        if layers.len() <= level {
            layers.resize_with(level + 1, Vec::new);
        }
        layers[level].push(i);
    }
    LayeredCircuit { layers }
}

/// A single problem found by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    UnknownNode {
        gate: Option<usize>,
        qubit: QubitRef,
    },
    IndexOutOfRange {
        gate: Option<usize>,
        qubit: QubitRef,
        capacity: usize,
    },
    NonUnitary {
        gate: usize,
    },
    DuplicateOperand {
        gate: usize,
    },
    DuplicateQubit {
        qubit: QubitRef,
    },
    UndeclaredQubit {
        gate: usize,
        qubit: QubitRef,
    },
    WrongArity {
        gate: usize,
        expected: usize,
        found: usize,
    },
}

fn at(gate: &Option<usize>) -> String {
    match gate {
        Some(i) => format!("gate {i}"),
        None => "qubit list".to_string(),
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownNode { gate, qubit } => {
                write!(
                    f,
                    "{}: unknown node {} for qubit {}",
                    at(gate),
                    qubit.node,
                    qubit
                )
            }
            Violation::IndexOutOfRange {
                gate,
                qubit,
                capacity,
            } => write!(
                f,
                "{}: index out of range for qubit {} (node has {} qubits)",
                at(gate),
                qubit,
                capacity
            ),
            Violation::NonUnitary { gate } => write!(f, "gate {gate}: non-unitary matrix"),
            Violation::DuplicateOperand { gate } => write!(f, "gate {gate}: duplicate operand"),
            Violation::DuplicateQubit { qubit } => write!(f, "qubit {qubit} declared twice"),
            Violation::UndeclaredQubit { gate, qubit } => {
                write!(f, "gate {gate}: operand {qubit} is not declared")
            }
            Violation::WrongArity {
                gate,
                expected,
                found,
            } => write!(
                f,
                "gate {gate}: expected {expected} operand(s), found {found}"
            ),
        }
    }
}

/// Outcome of [`validate`]: ok iff there are no violations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check a placed circuit against a topology.
pub fn validate(circuit: &Circuit, topology: &Topology) -> ValidationReport {
    let mut violations = circuit.structural_violations();
    let mut check = |gate: Option<usize>, q: &QubitRef| match topology.qpu(&q.node) {
        None => violations.push(Violation::UnknownNode {
            gate,
            qubit: q.clone(),
        }),
        Some(spec) if q.index >= spec.num_qubits => violations.push(Violation::IndexOutOfRange {
            gate,
            qubit: q.clone(),
            capacity: spec.num_qubits,
        }),
        Some(_) => {}
    };
    for q in &circuit.qubits {
        check(None, q);
    }
    for (i, g) in circuit.gates.iter().enumerate() {
        for q in &g.operands {
            if !circuit.qubits.contains(q) {
                check(Some(i), q);
            }
        }
    }
    ValidationReport { violations }
}

// JSON form -----------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CircuitDoc {
    qubits: Vec<QubitRef>,
    gates: Vec<GateDoc>,
}

#[derive(Serialize, Deserialize)]
struct GateDoc {
    kind: String,
    operands: Vec<QubitRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<u8>,
}

impl From<&Gate> for GateDoc {
    fn from(g: &Gate) -> Self {
        let mut doc = GateDoc {
            kind: g.kind.name().to_string(),
            operands: g.operands.clone(),
            angle: None,
            matrix: None,
            bit: None,
            value: None,
        };
        match &g.kind {
            GateKind::Prepare(b) => doc.value = Some(u8::from(*b)),
            GateKind::Rx(t)
            | GateKind::Ry(t)
            | GateKind::Rz(t)
            | GateKind::Phase(t)
            | GateKind::CPhase(t) => doc.angle = Some(*t),
            GateKind::CustomSingle(m) | GateKind::CustomControlled(m) => {
                doc.matrix = Some(m.0.iter().flatten().map(|c| [c.re, c.im]).collect())
            }
            GateKind::Measure(b) | GateKind::CondX(b) | GateKind::CondZ(b) => {
                doc.bit = Some(b.clone())
            }
            _ => {}
        }
        doc
    }
}

impl TryFrom<GateDoc> for Gate {
    type Error = CircuitError;

    fn try_from(doc: GateDoc) -> Result<Self, Self::Error> {
        let angle = || {
            doc.angle
                .ok_or_else(|| CircuitError::Parse(format!("{} requires \"angle\"", doc.kind)))
        };
        let bit = || {
            doc.bit
                .clone()
                .ok_or_else(|| CircuitError::Parse(format!("{} requires \"bit\"", doc.kind)))
        };
        let matrix = || -> Result<Matrix2, CircuitError> {
            let m = doc
                .matrix
                .as_ref()
                .ok_or_else(|| CircuitError::Parse(format!("{} requires \"matrix\"", doc.kind)))?;
            if m.len() != 4 {
                return Err(CircuitError::Parse(format!(
                    "{}: matrix must have 4 [re, im] entries, found {}",
                    doc.kind,
                    m.len()
                )));
            }
            let c = |i: usize| Complex64::new(m[i][0], m[i][1]);
            Ok(Matrix2::new(c(0), c(1), c(2), c(3)))
        };
        let kind = match doc.kind.as_str() {
            "PREPARE" => GateKind::Prepare(doc.value.unwrap_or(0) != 0),
            "X" => GateKind::X,
            "Y" => GateKind::Y,
            "Z" => GateKind::Z,
            "H" => GateKind::H,
            "S" => GateKind::S,
            "T" => GateKind::T,
            "RX" => GateKind::Rx(angle()?),
            "RY" => GateKind::Ry(angle()?),
            "RZ" => GateKind::Rz(angle()?),
            "PHASE" => GateKind::Phase(angle()?),
            "CNOT" => GateKind::Cnot,
            "CZ" => GateKind::Cz,
            "CPHASE" => GateKind::CPhase(angle()?),
            "CUSTOM_SINGLE" => GateKind::CustomSingle(matrix()?),
            "CUSTOM_CONTROLLED" => GateKind::CustomControlled(matrix()?),
            "MEASURE" => GateKind::Measure(bit()?),
            "COND_X" => GateKind::CondX(bit()?),
            "COND_Z" => GateKind::CondZ(bit()?),
            "RESET" => GateKind::Reset,
            "EPR_GEN" => GateKind::EprGen,
            other => return Err(CircuitError::Parse(format!("unknown gate kind {other:?}"))),
        };
        Ok(Gate::new(kind, doc.operands))
    }
}

impl Serialize for Circuit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        CircuitDoc {
            qubits: self.qubits.clone(),
            gates: self.gates.iter().map(GateDoc::from).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Circuit {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = CircuitDoc::deserialize(d)?;
        let gates = doc
            .gates
            .into_iter()
            .map(Gate::try_from)
            .collect::<Result<Vec<_>, _>>()
            .map_err(serde::de::Error::custom)?;
        Ok(Circuit {
            qubits: doc.qubits,
            gates,
        })
    }
}
