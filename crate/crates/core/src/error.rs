use thiserror::Error;

use crate::circuit::{NodeId, QubitRef, Violation};

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("malformed circuit: {0}")]
    Parse(String),
    #[error("invalid circuit: {}", join(.0))]
    Invalid(Vec<Violation>),
}

fn join(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("topology has no QPUs")]
    Empty,
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("node {0} must have at least one qubit")]
    NoQubits(NodeId),
    #[error("unsatisfiable timing: node {node} declares duration {duration} for {kind}")]
    UnsatisfiableTiming {
        node: NodeId,
        kind: String,
        duration: i64,
    },
    #[error("malformed topology: {0}")]
    Parse(String),
}

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("unschedulable: program {program} has width {width} but the cluster holds {capacity} qubits")]
    Unschedulable {
        program: usize,
        width: usize,
        capacity: usize,
    },
    #[error("program {0} must have at least one qubit")]
    EmptyProgram(usize),
    #[error("program {0} must repeat at least once")]
    ZeroRepetitions(usize),
}

#[derive(Debug, Error)]
pub enum RemapError {
    #[error(
        "unsupported non-local kind {kind} at gate {gate}: only controlled gates may cross nodes"
    )]
    UnsupportedNonLocal { gate: usize, kind: &'static str },
    #[error("no ancilla available on node {0}")]
    NoAncilla(NodeId),
    #[error("qubit {0} has no allocation")]
    Unallocated(QubitRef),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("unregistered qubit {0}")]
    UnregisteredQubit(QubitRef),
    #[error("ancilla not reset: {0} is not in |0>")]
    AncillaNotReset(QubitRef),
    #[error("state would need {0} qubits; the dense simulator is capped at {cap}", cap = crate::backend::MAX_QUBITS)]
    TooManyQubits(usize),
    #[error("gate {0} is not a unitary the backend can apply directly")]
    NotApplicable(&'static str),
    #[error("operands of {0} must be distinct")]
    DuplicateOperand(&'static str),
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("message never arrives: node {node} expects bit {bit} from {from} at tick {tick}")]
    MessageNeverArrives {
        node: NodeId,
        from: NodeId,
        bit: String,
        tick: u64,
    },
    #[error("bit {bit} is not available on node {node} at tick {tick}")]
    BitUnavailable {
        node: NodeId,
        bit: String,
        tick: u64,
    },
    #[error("capacity exceeded: {qubit} is beyond the {capacity} declared qubits of its node")]
    CapacityExceeded { qubit: QubitRef, capacity: usize },
    #[error("merge arity mismatch: expected {expected} outcomes, got {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("invalid merge: {0}")]
    InvalidMerge(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("gate {gate} ({kind}) spans nodes; remap the circuit first")]
    NotLocal { gate: usize, kind: &'static str },
    #[error(transparent)]
    Remap(#[from] RemapError),
    #[error("round {round}, program {program}: {source}")]
    InProgram {
        round: usize,
        program: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Error)]
pub enum AlgorithmError {
    #[error("unitary required: {0}")]
    NonUnitary(String),
    #[error("width mismatch: {0}")]
    WidthMismatch(String),
    #[error("zero vector cannot be normalized")]
    ZeroVector,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed input: {0}")]
    Parse(String),
}

/// Umbrella error of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Remap(#[from] RemapError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Algorithm(#[from] AlgorithmError),
}

impl Error {
    /// Whether the error stems from bad user input rather than an internal fault.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Circuit(_)
            | Error::Topology(_)
            | Error::Schedule(_)
            | Error::Remap(_)
            | Error::Algorithm(_) => true,
            Error::Backend(BackendError::TooManyQubits(_)) => true,
            Error::Engine(EngineError::InProgram { source, .. }) => source.is_validation(),
            Error::Engine(EngineError::CapacityExceeded { .. }) => true,
            Error::Engine(EngineError::ArityMismatch { .. } | EngineError::InvalidMerge(_)) => true,
            Error::Engine(
                EngineError::Topology(_)
                | EngineError::Remap(_)
                | EngineError::UnknownNode(_)
                | EngineError::NotLocal { .. },
            ) => true,
            Error::Engine(EngineError::Backend(BackendError::TooManyQubits(_))) => true,
            _ => false,
        }
    }
}
