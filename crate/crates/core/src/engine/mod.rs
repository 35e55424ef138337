//! Timestamped instruction schedules, their lock-step execution on simulated
//! computing nodes, and the controller's merge step.

mod compile;
mod exec;
mod merge;
mod run;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::circuit::{GateKind, NodeId, QubitRef};

pub use compile::{compile_instructions, compile_with, CompileOptions};
pub use exec::{
    execute, execute_circuit, validate_schedule, validate_trace, CausalityViolation, ExecOptions,
    Execution, ProgramPlan, TraceEntry, TraceMode,
};
pub use merge::{
    argmin, bit_assembly, log_likelihood, max_likelihood_amplitude, merge, modal_key,
    overlap_distance, success_probability, MergeSpec, MergedValue, DEFAULT_GRID,
};
pub use run::{
    run_parallel, run_sequential, sequential_program, RoundReport, RunOptions, RunOutput,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InstructionKind {
    Prepare,
    SingleGate,
    TwoQubitGate,
    Measure,
    EprSend,
    EprRecv,
    ClassicalSend,
    ClassicalRecv,
    CondCorrection,
    Reset,
    Report,
}

impl InstructionKind {
    pub fn name(self) -> &'static str {
        match self {
            InstructionKind::Prepare => "PREPARE",
            InstructionKind::SingleGate => "SINGLE_GATE",
            InstructionKind::TwoQubitGate => "TWO_QUBIT_GATE",
            InstructionKind::Measure => "MEASURE",
            InstructionKind::EprSend => "EPR_SEND",
            InstructionKind::EprRecv => "EPR_RECV",
            InstructionKind::ClassicalSend => "CLASSICAL_SEND",
            InstructionKind::ClassicalRecv => "CLASSICAL_RECV",
            InstructionKind::CondCorrection => "COND_CORRECTION",
            InstructionKind::Reset => "RESET",
            InstructionKind::Report => "REPORT",
        }
    }
}

impl fmt::Display for InstructionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a node does at one tick.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Prepare {
        qubit: QubitRef,
        value: bool,
    },
    /// Unitary gate on local qubits (one or two operands).
    Gate {
        gate: GateKind,
        operands: Vec<QubitRef>,
    },
    Measure {
        qubit: QubitRef,
        bit: String,
    },
    /// Joint creation of an EPR pair; `local` lives on this node.
    EprSend {
        local: QubitRef,
        remote: QubitRef,
    },
    EprRecv {
        local: QubitRef,
        remote: QubitRef,
    },
    ClassicalSend {
        bit: String,
        to: NodeId,
    },
    ClassicalRecv {
        bit: String,
        from: NodeId,
    },
    /// X or Z on `qubit` when `bit` is 1.
    CondCorrection {
        gate: GateKind,
        qubit: QubitRef,
        bit: String,
    },
    Reset {
        qubit: QubitRef,
    },
    /// Hand the listed bits to the controller.
    Report {
        bits: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instruction {
    pub tick: u64,
    pub node: NodeId,
    /// Position of the owning program within its round.
    pub program: usize,
    pub op: Op,
}

impl Instruction {
    pub fn kind(&self) -> InstructionKind {
        match &self.op {
            Op::Prepare { .. } => InstructionKind::Prepare,
            Op::Gate { operands, .. } if operands.len() == 1 => InstructionKind::SingleGate,
            Op::Gate { .. } => InstructionKind::TwoQubitGate,
            Op::Measure { .. } => InstructionKind::Measure,
            Op::EprSend { .. } => InstructionKind::EprSend,
            Op::EprRecv { .. } => InstructionKind::EprRecv,
            Op::ClassicalSend { .. } => InstructionKind::ClassicalSend,
            Op::ClassicalRecv { .. } => InstructionKind::ClassicalRecv,
            Op::CondCorrection { .. } => InstructionKind::CondCorrection,
            Op::Reset { .. } => InstructionKind::Reset,
            Op::Report { .. } => InstructionKind::Report,
        }
    }

    /// Qubits the instruction acts on.
    pub fn operands(&self) -> Vec<QubitRef> {
        match &self.op {
            Op::Prepare { qubit, .. }
            | Op::Measure { qubit, .. }
            | Op::CondCorrection { qubit, .. }
            | Op::Reset { qubit } => vec![qubit.clone()],
            Op::Gate { operands, .. } => operands.clone(),
            Op::EprSend { local, remote } | Op::EprRecv { local, remote } => {
                vec![local.clone(), remote.clone()]
            }
            Op::ClassicalSend { .. } | Op::ClassicalRecv { .. } | Op::Report { .. } => Vec::new(),
        }
    }

    /// Qubits that must live on this instruction's node.
    pub fn local_operands(&self) -> Vec<QubitRef> {
        match &self.op {
            Op::EprSend { local, .. } | Op::EprRecv { local, .. } => vec![local.clone()],
            _ => self.operands(),
        }
    }

    pub fn bit(&self) -> Option<&str> {
        match &self.op {
            Op::Measure { bit, .. }
            | Op::ClassicalSend { bit, .. }
            | Op::ClassicalRecv { bit, .. }
            | Op::CondCorrection { bit, .. } => Some(bit),
            _ => None,
        }
    }

    pub fn peer(&self) -> Option<&NodeId> {
        match &self.op {
            Op::EprSend { remote, .. } | Op::EprRecv { remote, .. } => Some(&remote.node),
            Op::ClassicalSend { to, .. } => Some(to),
            Op::ClassicalRecv { from, .. } => Some(from),
            _ => None,
        }
    }

    /// Gate name for gate-like instructions.
    pub fn gate_name(&self) -> Option<&'static str> {
        match &self.op {
            Op::Gate { gate, .. } | Op::CondCorrection { gate, .. } => Some(gate.name()),
            _ => None,
        }
    }
}

/// Per-node instruction lists in topology order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InstructionSchedule {
    pub nodes: Vec<(NodeId, Vec<Instruction>)>,
    pub horizon: u64,
}

impl InstructionSchedule {
    pub fn instructions(&self) -> impl Iterator<Item = &Instruction> {
        self.nodes.iter().flat_map(|(_, l)| l.iter())
    }

    pub fn len(&self) -> usize {
        self.nodes.iter().map(|(_, l)| l.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn for_node(&self, node: &NodeId) -> &[Instruction] {
        self.nodes
            .iter()
            .find(|(n, _)| n == node)
            .map_or(&[], |(_, l)| l.as_slice())
    }

    /// Merge schedules of concurrently running programs onto one clock.
    /// Instructions of schedule `k` are tagged as program `k`; at equal ticks
    /// a node runs lower programs first.
    pub fn interleave(schedules: Vec<InstructionSchedule>) -> InstructionSchedule {
        let mut nodes: Vec<(NodeId, Vec<Instruction>)> = Vec::new();
        let mut horizon = 0;
        for (k, s) in schedules.into_iter().enumerate() {
            horizon = horizon.max(s.horizon);
            for (node, list) in s.nodes {
                let slot = match nodes.iter().position(|(n, _)| *n == node) {
                    Some(i) => i,
                    None => {
                        nodes.push((node, Vec::new()));
                        nodes.len() - 1
                    }
                };
                nodes[slot].1.extend(list.into_iter().map(|mut i| {
                    i.program = k;
                    i
                }));
            }
        }
        for (_, list) in &mut nodes {
            list.sort_by_key(|i| i.tick);
        }
        InstructionSchedule { nodes, horizon }
    }

    /// Canonical execution order: (tick, node index, list index).
    pub fn canonical_order(&self) -> Vec<(usize, usize)> {
        let mut order: Vec<(u64, usize, usize)> = self
            .nodes
            .iter()
            .enumerate()
            .flat_map(|(n, (_, l))| l.iter().enumerate().map(move |(i, ins)| (ins.tick, n, i)))
            .collect();
        order.sort_unstable();
        order.into_iter().map(|(_, n, i)| (n, i)).collect()
    }
}

/// Logical clock shared by all nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Clock {
    tick: u64,
}

impl Clock {
    pub fn new() -> Self {
        Clock::default()
    }

    pub fn now(&self) -> u64 {
        self.tick
    }

    /// Move forward to `tick`; the clock never goes back.
    pub fn advance_to(&mut self, tick: u64) {
        assert!(
            tick >= self.tick,
            "clock moved backwards from {} to {tick}",
            self.tick
        );
        self.tick = tick;
    }
}

/// What one program handed back to the controller.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    /// 0-based program index.
    pub program: usize,
    pub repetitions: u32,
    /// Bit names, in count-key order.
    pub bits: Vec<String>,
    pub counts: BTreeMap<String, u64>,
    pub expectations: BTreeMap<String, f64>,
    pub last_bits: BTreeMap<String, bool>,
}

impl Outcome {
    pub fn empty(program: usize, bits: Vec<String>) -> Self {
        Outcome {
            program,
            repetitions: 0,
            bits,
            counts: BTreeMap::new(),
            expectations: BTreeMap::new(),
            last_bits: BTreeMap::new(),
        }
    }

    pub fn shots(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Frequency of the count key, 0 when unseen.
    pub fn frequency(&self, key: &str) -> f64 {
        let n = self.shots();
        if n == 0 {
            0.0
        } else {
            self.counts.get(key).copied().unwrap_or(0) as f64 / n as f64
        }
    }
}
