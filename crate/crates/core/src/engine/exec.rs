//! Lock-step execution of instruction schedules and causality checks.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{compile_instructions, Clock, InstructionKind, InstructionSchedule, Op, Outcome};
use crate::backend::StateVector;
use crate::circuit::{Gate, NodeId, QubitRef};
use crate::error::EngineError;
use crate::remapper::DistributedCircuit;
use crate::scheduler::{Observable, OutputSpec};
use crate::topology::Topology;

/// Which shots are written to the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceMode {
    #[default]
    All,
    /// Only the first `n` shots.
    FirstShots(u32),
    Off,
}

impl TraceMode {
    fn records(self, shot: u32) -> bool {
        match self {
            TraceMode::All => true,
            TraceMode::FirstShots(n) => shot < n,
            TraceMode::Off => false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExecOptions {
    /// Refuse instructions on slots beyond a node's declared capacity.
    pub strict_capacity: bool,
    pub trace: TraceMode,
}

/// A program running within one schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramPlan {
    /// Index reported in outcomes and traces.
    pub program: usize,
    pub repetitions: u32,
    /// Registered up front in this order; first is most significant.
    pub qubits: Vec<QubitRef>,
    /// Output bits and observables, over physical qubits.
    pub output: OutputSpec,
}

/// One executed instruction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub round: usize,
    pub shot: u32,
    pub tick: u64,
    pub node: NodeId,
    #[serde(skip)]
    pub node_index: usize,
    #[serde(skip)]
    pub index: usize,
    pub program: usize,
    pub kind: InstructionKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate: Option<&'static str>,
    pub operands: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub bits: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peer: Option<NodeId>,
    /// Measured, received or read bit value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<bool>,
}

impl TraceEntry {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace entries serialize")
    }
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub outcomes: Vec<Outcome>,
    pub trace: Vec<TraceEntry>,
    /// State of each program after its last shot.
    pub final_states: Vec<StateVector>,
    pub horizon: u64,
}

type Register = HashMap<(usize, NodeId, String), bool>;
type Channel = HashMap<(usize, NodeId, NodeId, String), VecDeque<(u64, bool)>>;

fn read(
    reg: &Register,
    program: usize,
    node: &NodeId,
    bit: &str,
    tick: u64,
) -> Result<bool, EngineError> {
    reg.get(&(program, node.clone(), bit.to_string()))
        .copied()
        .ok_or_else(|| EngineError::BitUnavailable {
            node: node.clone(),
            bit: bit.to_string(),
            tick,
        })
}

/// Run `schedule` shot by shot. Every shot starts from fresh states; the
/// random stream flows on across shots and is consumed in (tick, node,
/// instruction) order.
pub fn execute(
    schedule: &InstructionSchedule,
    plans: &[ProgramPlan],
    topology: &Topology,
    rng: &mut ChaCha8Rng,
    options: &ExecOptions,
) -> Result<Execution, EngineError> {
    if options.strict_capacity {
        for ins in schedule.instructions() {
            for q in ins.operands() {
                let capacity = topology
                    .qpu(&q.node)
                    .ok_or_else(|| EngineError::UnknownNode(q.node.clone()))?
                    .num_qubits;
                if q.index >= capacity {
                    return Err(EngineError::CapacityExceeded { qubit: q, capacity });
                }
            }
        }
    }
    let order = schedule.canonical_order();
    let mut outcomes: Vec<Outcome> = plans
        .iter()
        .map(|p| {
            let mut o = Outcome::empty(p.program, p.output.bits.clone());
            o.repetitions = p.repetitions;
            o
        })
        .collect();
    let mut sums: Vec<Vec<f64>> = plans
        .iter()
        .map(|p| vec![0.0; p.output.observables.len()])
        .collect();
    let mut final_states: Vec<StateVector> = vec![StateVector::new(); plans.len()];
    let mut trace = Vec::new();
    let shots = plans.iter().map(|p| p.repetitions).max().unwrap_or(0);

    for shot in 0..shots {
        let mut states = plans
            .iter()
            .map(|p| StateVector::with_qubits(&p.qubits))
            .collect::<Result<Vec<_>, _>>()?;
        let mut reg: Register = HashMap::new();
        let mut channel: Channel = HashMap::new();
        let mut reports: Vec<BTreeMap<String, bool>> = vec![BTreeMap::new(); plans.len()];
        let mut clock = Clock::new();

        for &(n, i) in &order {
            let ins = &schedule.nodes[n].1[i];
            let p = ins.program;
            if plans[p].repetitions <= shot {
                continue;
            }
            clock.advance_to(ins.tick);
            let now = clock.now();
            let node = &ins.node;
            let state = &mut states[p];
            let value = match &ins.op {
                Op::Prepare { qubit, value } => {
                    state.prepare(qubit, *value, rng)?;
                    None
                }
                Op::Gate { gate, operands } => {
                    for q in operands {
                        state.register(q)?;
                    }
                    state.apply_gate(&Gate::new(gate.clone(), operands.clone()), rng)?;
                    None
                }
                Op::Measure { qubit, bit } => {
                    state.register(qubit)?;
                    let v = state.measure(qubit, rng)?;
                    reg.insert((p, node.clone(), bit.clone()), v);
                    Some(v)
                }
                Op::EprSend { local, remote } => {
                    state.gen_epr(local, remote)?;
                    None
                }
                Op::EprRecv { .. } => None,
                Op::ClassicalSend { bit, to } => {
                    let v = read(&reg, p, node, bit, now)?;
                    channel
                        .entry((p, node.clone(), to.clone(), bit.clone()))
                        .or_default()
                        .push_back((now, v));
                    Some(v)
                }
                Op::ClassicalRecv { bit, from } => {
                    let queue = channel.get_mut(&(p, from.clone(), node.clone(), bit.clone()));
                    let v = match queue {
                        Some(q) if q.front().is_some_and(|&(sent, _)| sent < now) => {
                            q.pop_front().expect("front").1
                        }
                        _ => {
                            return Err(EngineError::MessageNeverArrives {
                                node: node.clone(),
                                from: from.clone(),
                                bit: bit.clone(),
                                tick: now,
                            })
                        }
                    };
                    reg.insert((p, node.clone(), bit.clone()), v);
                    Some(v)
                }
                Op::CondCorrection { gate, qubit, bit } => {
                    let v = read(&reg, p, node, bit, now)?;
                    if v {
                        state.register(qubit)?;
                        state.apply_gate(&Gate::single(gate.clone(), qubit.clone()), rng)?;
                    }
                    Some(v)
                }
                Op::Reset { qubit } => {
                    state.reset(qubit, rng)?;
                    None
                }
                Op::Report { bits } => {
                    for b in bits {
                        reports[p].insert(b.clone(), read(&reg, p, node, b, now)?);
                    }
                    None
                }
            };
            if options.trace.records(shot) {
                trace.push(TraceEntry {
                    round: 0,
                    shot,
                    tick: ins.tick,
                    node: node.clone(),
                    node_index: n,
                    index: i,
                    program: plans[p].program,
                    kind: ins.kind(),
                    gate: ins.gate_name(),
                    operands: ins.operands().iter().map(|q| q.to_string()).collect(),
                    bits: match &ins.op {
                        Op::Report { bits } => bits.clone(),
                        _ => ins.bit().map(|b| vec![b.to_string()]).unwrap_or_default(),
                    },
                    peer: ins.peer().cloned(),
                    value,
                });
            }
        }

        for (p, plan) in plans.iter().enumerate() {
            if plan.repetitions <= shot {
                continue;
            }
            let key: String = plan
                .output
                .bits
                .iter()
                .map(|b| {
                    if reports[p].get(b).copied().unwrap_or(false) {
                        '1'
                    } else {
                        '0'
                    }
                })
                .collect();
            *outcomes[p].counts.entry(key).or_insert(0) += 1;
            for (k, (_, obs)) in plan.output.observables.iter().enumerate() {
                sums[p][k] += match obs {
                    Observable::Exact(pauli) => states[p].exact_expectation(pauli)?,
                    Observable::Parity(bits) => {
                        let odd = bits
                            .iter()
                            .filter(|b| reports[p].get(*b).copied().unwrap_or(false))
                            .count()
                            % 2;
                        if odd == 1 {
                            -1.0
                        } else {
                            1.0
                        }
                    }
                };
            }
            if shot + 1 == plan.repetitions {
                outcomes[p].last_bits = std::mem::take(&mut reports[p]);
                final_states[p] = std::mem::take(&mut states[p]);
            }
        }
    }

    for (p, plan) in plans.iter().enumerate() {
        for (k, (name, _)) in plan.output.observables.iter().enumerate() {
            outcomes[p].expectations.insert(
                name.clone(),
                sums[p][k] / f64::from(plan.repetitions.max(1)),
            );
        }
    }
    Ok(Execution {
        outcomes,
        trace,
        final_states,
        horizon: schedule.horizon,
    })
}

/// Compile and run one distributed circuit on its own.
pub fn execute_circuit(
    dcirc: &DistributedCircuit,
    output: &OutputSpec,
    topology: &Topology,
    repetitions: u32,
    seed: u64,
    options: &ExecOptions,
) -> Result<Execution, EngineError> {
    let schedule = compile_instructions(dcirc, topology)?;
    let plan = ProgramPlan {
        program: 0,
        repetitions,
        qubits: dcirc.circuit.qubits.clone(),
        output: output.clone(),
    };
    execute(
        &schedule,
        &[plan],
        topology,
        &mut ChaCha8Rng::seed_from_u64(seed),
        options,
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalityViolation {
    pub tick: u64,
    pub node: NodeId,
    pub message: String,
}

impl fmt::Display for CausalityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tick {} on {}: {}", self.tick, self.node, self.message)
    }
}

/// Instruction as seen by the causality walk.
struct Event<'a> {
    tick: u64,
    node: &'a NodeId,
    program: usize,
    kind: InstructionKind,
    bits: Vec<&'a str>,
    peer: Option<&'a NodeId>,
    operands: Vec<String>,
}

/// Walk events in execution order and report every read of a bit that is
/// not yet available, every receive without an earlier send and every
/// unmatched EPR half.
fn causality(events: &[Event<'_>]) -> Vec<CausalityViolation> {
    let mut out = Vec::new();
    let mut fail = |e: &Event<'_>, message: String| {
        out.push(CausalityViolation {
            tick: e.tick,
            node: e.node.clone(),
            message,
        })
    };
    // (program, node, bit) → (tick it was written, readable at that same tick)
    let mut avail: HashMap<(usize, &NodeId, &str), (u64, bool)> = HashMap::new();
    let mut sent: HashMap<(usize, &NodeId, &NodeId, &str), VecDeque<u64>> = HashMap::new();
    let mut epr: HashMap<(usize, u64, Vec<String>), i32> = HashMap::new();

    for e in events {
        let readable = |avail: &HashMap<(usize, &NodeId, &str), (u64, bool)>, bit: &str| match avail
            .get(&(e.program, e.node, bit))
        {
            Some(&(t, same_tick)) => t < e.tick || (same_tick && t == e.tick),
            None => false,
        };
        match e.kind {
            InstructionKind::Measure => {
                for &b in &e.bits {
                    avail.insert((e.program, e.node, b), (e.tick, false));
                }
            }
            InstructionKind::ClassicalSend => {
                let b = e.bits[0];
                if !readable(&avail, b) {
                    fail(e, format!("sends bit {b} before it is available"));
                }
                if let Some(to) = e.peer {
                    sent.entry((e.program, e.node, to, b))
                        .or_default()
                        .push_back(e.tick);
                }
            }
            InstructionKind::ClassicalRecv => {
                let b = e.bits[0];
                let from = e.peer.expect("receive names its sender");
                match sent
                    .get_mut(&(e.program, from, e.node, b))
                    .and_then(|q| q.pop_front())
                {
                    Some(t) if t < e.tick => {}
                    Some(t) => fail(
                        e,
                        format!("receives bit {b} sent at tick {t}, not strictly earlier"),
                    ),
                    None => fail(e, format!("message never arrives: bit {b} from {from}")),
                }
                avail.insert((e.program, e.node, b), (e.tick, true));
            }
            InstructionKind::CondCorrection | InstructionKind::Report => {
                for &b in &e.bits {
                    if !readable(&avail, b) {
                        fail(e, format!("reads bit {b} before it is available"));
                    }
                }
            }
            InstructionKind::EprSend | InstructionKind::EprRecv => {
                let mut pair = e.operands.clone();
                pair.sort();
                let d = if e.kind == InstructionKind::EprSend {
                    1
                } else {
                    -1
                };
                *epr.entry((e.program, e.tick, pair)).or_insert(0) += d;
            }
            _ => {}
        }
    }
    for ((_, tick, pair), balance) in epr {
        if balance != 0 {
            out.push(CausalityViolation {
                tick,
                node: NodeId::new("?"),
                message: format!("EPR pair {} has unmatched send/receive", pair.join(",")),
            });
        }
    }
    out
}

/// Check per-node tick order, operand locality and causality of a schedule.
pub fn validate_schedule(schedule: &InstructionSchedule) -> Vec<CausalityViolation> {
    let mut out = Vec::new();
    for (node, list) in &schedule.nodes {
        for w in list.windows(2) {
            if w[1].tick < w[0].tick {
                out.push(CausalityViolation {
                    tick: w[1].tick,
                    node: node.clone(),
                    message: "ticks decrease along the node's list".into(),
                });
            }
        }
        for ins in list {
            if ins.local_operands().iter().any(|q| &q.node != node) {
                out.push(CausalityViolation {
                    tick: ins.tick,
                    node: node.clone(),
                    message: format!("{} acts on a qubit of another node", ins.kind()),
                });
            }
        }
    }
    let events: Vec<Event<'_>> = schedule
        .canonical_order()
        .into_iter()
        .map(|(n, i)| {
            let ins = &schedule.nodes[n].1[i];
            Event {
                tick: ins.tick,
                node: &ins.node,
                program: ins.program,
                kind: ins.kind(),
                bits: match &ins.op {
                    Op::Report { bits } => bits.iter().map(String::as_str).collect(),
                    _ => ins.bit().into_iter().collect(),
                },
                peer: ins.peer(),
                operands: ins.operands().iter().map(|q| q.to_string()).collect(),
            }
        })
        .collect();
    out.extend(causality(&events));
    out
}

/// Check a recorded trace: canonical ordering within every shot, causality,
/// and that concurrently running programs never share a qubit.
pub fn validate_trace(trace: &[TraceEntry]) -> Vec<CausalityViolation> {
    let mut out = Vec::new();
    let key = |e: &TraceEntry| (e.round, e.shot, e.tick, e.node_index, e.index);
    for w in trace.windows(2) {
        if key(&w[1]) < key(&w[0]) {
            out.push(CausalityViolation {
                tick: w[1].tick,
                node: w[1].node.clone(),
                message: "trace is not in (tick, node, instruction) order".into(),
            });
        }
    }
    let mut start = 0;
    while start < trace.len() {
        let (round, shot) = (trace[start].round, trace[start].shot);
        let end = start
            + trace[start..]
                .iter()
                .take_while(|e| e.round == round && e.shot == shot)
                .count();
        let group = &trace[start..end];
        let events: Vec<Event<'_>> = group
            .iter()
            .map(|e| Event {
                tick: e.tick,
                node: &e.node,
                program: e.program,
                kind: e.kind,
                bits: e.bits.iter().map(String::as_str).collect(),
                peer: e.peer.as_ref(),
                operands: e.operands.clone(),
            })
            .collect();
        out.extend(causality(&events));
        let mut owner: HashMap<&str, usize> = HashMap::new();
        let mut reported = HashSet::new();
        for e in group {
            for q in &e.operands {
                let o = *owner.entry(q).or_insert(e.program);
                if o != e.program && reported.insert(q.clone()) {
                    out.push(CausalityViolation {
                        tick: e.tick,
                        node: e.node.clone(),
                        message: format!("programs {o} and {} share qubit {q}", e.program),
                    });
                }
            }
        }
        start = end;
    }
    out
}
