//! Monolithic → distributed circuit conversion.
//!
//! Every controlled gate whose control and target sit on different nodes is
//! executed through a cat-entangler / cat-disentangler pair:
//!
//! ```text
//! control ──●──────────────────────────────────Z(m2)──
//! a_local ──X──M(m1)
//!  (EPR)   ╎
//! a_remote ───────X(m1)──●──●── … ──H──M(m2)
//! target  ───────────────U──┼──
//! target' ──────────────────U'─
//! ```
//!
//! Consecutive non-local controlled gates that share a control and a remote
//! node reuse one EPR pair (a [`CatBlock`]).

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::circuit::{Circuit, Gate, GateKind, NodeId, QubitRef};
use crate::error::{CircuitError, RemapError};
use crate::scheduler::Allocation;
use crate::topology::Topology;

/// One entangle … disentangle span serving gates with a common control.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CatBlock {
    pub control: QubitRef,
    pub remote_node: NodeId,
    /// Monolithic gate indices, in circuit order.
    pub gate_indices: Vec<usize>,
    /// EPR half on the control's node.
    pub ancilla_local: QubitRef,
    /// EPR half on the remote node; carries the cat copy of the control.
    pub ancilla_remote: QubitRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockRole {
    EprGen,
    EntangleCnot,
    EntangleMeasure,
    CorrectX,
    DisentangleH,
    DisentangleMeasure,
    CorrectZ,
    ResetLocal,
    ResetRemote,
}

/// Where a gate of the distributed circuit comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// A local monolithic gate with rewritten operands.
    Gate(usize),
    /// A non-local monolithic gate executed with the remote ancilla as control.
    Served { gate: usize, block: usize },
    /// Protocol overhead of a block.
    Block { block: usize, role: BlockRole },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributedCircuit {
    pub circuit: Circuit,
    pub blocks: Vec<CatBlock>,
    /// Parallel to `circuit.gates`.
    pub origin: Vec<Origin>,
    /// Physical refs of the monolithic qubits, in the original order.
    pub data_qubits: Vec<QubitRef>,
    /// Every ancilla slot used, sorted.
    pub ancillas: Vec<QubitRef>,
    /// Capacity warnings from overflow ancillas.
    pub warnings: Vec<String>,
}

impl DistributedCircuit {
    /// Bits written by measurements of data qubits.
    pub fn data_bits(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (g, o) in self.circuit.gates.iter().zip(&self.origin) {
            if let (GateKind::Measure(b), Origin::Gate(_)) = (&g.kind, o) {
                if !out.contains(b) {
                    out.push(b.clone());
                }
            }
        }
        out
    }

    /// The same circuit with the protocol's measurements deferred: the
    /// measure-then-correct pairs become CNOT(a_local, a_remote) and
    /// CZ(a_remote, control). Only meant for simulation checks; the result
    /// has two-node gates.
    pub fn deferred(&self) -> Circuit {
        let mut out = Circuit::new(self.circuit.qubits.clone());
        for (g, o) in self.circuit.gates.iter().zip(&self.origin) {
            match o {
                Origin::Block {
                    role: BlockRole::EntangleMeasure | BlockRole::DisentangleMeasure,
                    ..
                } => {}
                Origin::Block {
                    block,
                    role: BlockRole::CorrectX,
                } => {
                    let b = &self.blocks[*block];
                    out.apply2(GateKind::Cnot, &b.ancilla_local, &b.ancilla_remote);
                }
                Origin::Block {
                    block,
                    role: BlockRole::CorrectZ,
                } => {
                    let b = &self.blocks[*block];
                    out.apply2(GateKind::Cz, &b.ancilla_remote, &b.control);
                }
                _ => {
                    out.push(g.clone());
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(&self.circuit).expect("circuit serializes");
        let origin: serde_json::Map<String, serde_json::Value> = self
            .origin
            .iter()
            .enumerate()
            .map(|(i, o)| {
                (
                    i.to_string(),
                    serde_json::to_value(o).expect("origin serializes"),
                )
            })
            .collect();
        v["blocks"] = serde_json::to_value(&self.blocks).expect("blocks serialize");
        v["origin"] = serde_json::Value::Object(origin);
        v
    }
}

/// Circuit with operands rewritten through the allocation.
pub fn map_circuit(circuit: &Circuit, allocation: &Allocation) -> Result<Circuit, RemapError> {
    let map = allocation.bind(circuit)?;
    let lookup = |q: &QubitRef| {
        map.get(q)
            .cloned()
            .ok_or_else(|| RemapError::Unallocated(q.clone()))
    };
    let mut out = Circuit::new(
        circuit
            .qubits
            .iter()
            .map(lookup)
            .collect::<Result<_, _>>()?,
    );
    for g in &circuit.gates {
        let operands = g.operands.iter().map(lookup).collect::<Result<_, _>>()?;
        out.gates.push(Gate::new(g.kind.clone(), operands));
    }
    Ok(out)
}

fn nonlocal_in(mapped: &Circuit) -> Result<Vec<usize>, RemapError> {
    let mut out = Vec::new();
    for (i, g) in mapped.gates.iter().enumerate() {
        if g.spans_nodes() {
            if !g.kind.is_controlled() {
                return Err(RemapError::UnsupportedNonLocal {
                    gate: i,
                    kind: g.kind.name(),
                });
            }
            out.push(i);
        }
    }
    Ok(out)
}

/// Indices of gates whose allocated operands span two or more nodes.
pub fn find_nonlocal(circuit: &Circuit, allocation: &Allocation) -> Result<Vec<usize>, RemapError> {
    nonlocal_in(&map_circuit(circuit, allocation)?)
}

/// Block structure without ancillas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSpan {
    pub control: QubitRef,
    pub remote_node: NodeId,
    pub gate_indices: Vec<usize>,
}

/// Group the non-local gates of an already placed circuit into maximal
/// consecutive runs sharing (control, remote node). Any other gate touching
/// an open block's control closes it.
pub fn block_spans(mapped: &Circuit) -> Result<Vec<BlockSpan>, RemapError> {
    nonlocal_in(mapped)?;
    let mut spans: Vec<BlockSpan> = Vec::new();
    let mut open: HashMap<QubitRef, usize> = HashMap::new();
    for (i, g) in mapped.gates.iter().enumerate() {
        if g.kind.is_controlled() && g.spans_nodes() {
            let (c, t) = (&g.operands[0], &g.operands[1]);
            open.remove(t);
            match open.get(c) {
                Some(&s) if spans[s].remote_node == t.node => spans[s].gate_indices.push(i),
                _ => {
                    open.insert(c.clone(), spans.len());
                    spans.push(BlockSpan {
                        control: c.clone(),
                        remote_node: t.node.clone(),
                        gate_indices: vec![i],
                    });
                }
            }
        } else {
            for q in &g.operands {
                open.remove(q);
            }
        }
    }
    Ok(spans)
}

/// Ancilla slots shared by the programs of one round.
///
/// Slots not taken by any allocation are handed out lowest index first.
/// When a node runs dry the pool continues past its declared capacity
/// (recording a warning), or fails in strict mode.
#[derive(Debug, Clone)]
pub struct AncillaPool {
    capacity: HashMap<NodeId, usize>,
    free: HashMap<NodeId, BTreeSet<usize>>,
    next_overflow: HashMap<NodeId, usize>,
    strict: bool,
}

impl AncillaPool {
    pub fn new<'a>(
        topology: &Topology,
        reserved: impl IntoIterator<Item = &'a QubitRef>,
        strict: bool,
    ) -> Self {
        let mut free: HashMap<NodeId, BTreeSet<usize>> = topology
            .qpus()
            .iter()
            .map(|q| (q.id.clone(), (0..q.num_qubits).collect()))
            .collect();
        for q in reserved {
            if let Some(s) = free.get_mut(&q.node) {
                s.remove(&q.index);
            }
        }
        AncillaPool {
            capacity: topology
                .qpus()
                .iter()
                .map(|q| (q.id.clone(), q.num_qubits))
                .collect(),
            next_overflow: topology
                .qpus()
                .iter()
                .map(|q| (q.id.clone(), q.num_qubits))
                .collect(),
            free,
            strict,
        }
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }
}

/// Per-program view of the pool: slots are released at block close and may be
/// reused by later blocks of the same program.
struct ProgramAncillas<'a> {
    pool: &'a mut AncillaPool,
    released: HashMap<NodeId, BTreeSet<usize>>,
    used: BTreeSet<QubitRef>,
    warnings: Vec<String>,
}

impl<'a> ProgramAncillas<'a> {
    fn new(pool: &'a mut AncillaPool) -> Self {
        ProgramAncillas {
            pool,
            released: HashMap::new(),
            used: BTreeSet::new(),
            warnings: Vec::new(),
        }
    }

    fn acquire(&mut self, node: &NodeId) -> Result<QubitRef, RemapError> {
        let capacity = *self
            .pool
            .capacity
            .get(node)
            .ok_or_else(|| RemapError::UnknownNode(node.clone()))?;
        if let Some(i) = self.released.get_mut(node).and_then(|s| s.pop_first()) {
            return Ok(QubitRef::new(node.clone(), i));
        }
        let index = match self.pool.free.get_mut(node).and_then(|s| s.pop_first()) {
            Some(i) => i,
            None if self.pool.strict => return Err(RemapError::NoAncilla(node.clone())),
            None => {
                let next = self.pool.next_overflow.get_mut(node).expect("known node");
                let i = *next;
                *next += 1;
                let msg =
                    format!("node {node}: ancilla slot {i} exceeds the {capacity} declared qubits");
                log::warn!("{msg}");
                self.warnings.push(msg);
                i
            }
        };
        let q = QubitRef::new(node.clone(), index);
        self.used.insert(q.clone());
        Ok(q)
    }

    fn release(&mut self, q: &QubitRef) {
        self.released
            .entry(q.node.clone())
            .or_default()
            .insert(q.index);
    }
}

fn assign_ancillas(
    mapped: &Circuit,
    spans: Vec<BlockSpan>,
    ancillas: &mut ProgramAncillas<'_>,
) -> Result<Vec<CatBlock>, RemapError> {
    let mut opens: HashMap<usize, usize> = HashMap::new();
    let mut closes: HashMap<usize, Vec<usize>> = HashMap::new();
    for (b, s) in spans.iter().enumerate() {
        opens.insert(s.gate_indices[0], b);
        closes
            .entry(*s.gate_indices.last().expect("non-empty"))
            .or_default()
            .push(b);
    }
    let mut slots: Vec<Option<(QubitRef, QubitRef)>> = vec![None; spans.len()];
    for i in 0..mapped.gates.len() {
        if let Some(&b) = opens.get(&i) {
            let local = ancillas.acquire(&spans[b].control.node)?;
            let remote = ancillas.acquire(&spans[b].remote_node)?;
            slots[b] = Some((local, remote));
        }
        for &b in closes.get(&i).into_iter().flatten() {
            let (l, r) = slots[b].clone().expect("opened before closing");
            ancillas.release(&l);
            ancillas.release(&r);
        }
    }
    Ok(spans
        .into_iter()
        .zip(slots)
        .map(|(s, slot)| {
            let (ancilla_local, ancilla_remote) = slot.expect("every block opened");
            CatBlock {
                control: s.control,
                remote_node: s.remote_node,
                gate_indices: s.gate_indices,
                ancilla_local,
                ancilla_remote,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Default)]
pub struct RemapOptions {
    /// Fail instead of using ancilla slots beyond declared capacity.
    pub strict: bool,
}

/// Blocks of `circuit` under `allocation`, with ancillas drawn from the
/// slots the allocation leaves free.
pub fn group_blocks(
    circuit: &Circuit,
    allocation: &Allocation,
    topology: &Topology,
    options: &RemapOptions,
) -> Result<Vec<CatBlock>, RemapError> {
    let mapped = map_circuit(circuit, allocation)?;
    let spans = block_spans(&mapped)?;
    let mut pool = AncillaPool::new(topology, &allocation.slots, options.strict);
    assign_ancillas(&mapped, spans, &mut ProgramAncillas::new(&mut pool))
}

pub fn remap(
    circuit: &Circuit,
    allocation: &Allocation,
    topology: &Topology,
) -> Result<DistributedCircuit, RemapError> {
    remap_with(circuit, allocation, topology, &RemapOptions::default())
}

pub fn remap_with(
    circuit: &Circuit,
    allocation: &Allocation,
    topology: &Topology,
    options: &RemapOptions,
) -> Result<DistributedCircuit, RemapError> {
    let mut pool = AncillaPool::new(topology, &allocation.slots, options.strict);
    remap_in_pool(circuit, allocation, &mut pool)
}

/// Remap drawing ancillas from a pool shared with other programs. Slots the
/// program uses are withdrawn from the pool for good.
pub fn remap_in_pool(
    circuit: &Circuit,
    allocation: &Allocation,
    pool: &mut AncillaPool,
) -> Result<DistributedCircuit, RemapError> {
    let violations = circuit.structural_violations();
    if !violations.is_empty() {
        return Err(CircuitError::Invalid(violations).into());
    }
    let mapped = map_circuit(circuit, allocation)?;
    let spans = block_spans(&mapped)?;
    let mut ancillas = ProgramAncillas::new(pool);
    let blocks = assign_ancillas(&mapped, spans, &mut ancillas)?;
    let used = std::mem::take(&mut ancillas.used);
    let warnings = std::mem::take(&mut ancillas.warnings);
    drop(ancillas);

    let mut served: HashMap<usize, usize> = HashMap::new();
    let mut opens: HashMap<usize, usize> = HashMap::new();
    let mut closes: HashMap<usize, Vec<usize>> = HashMap::new();
    for (b, blk) in blocks.iter().enumerate() {
        for &g in &blk.gate_indices {
            served.insert(g, b);
        }
        opens.insert(blk.gate_indices[0], b);
        closes
            .entry(*blk.gate_indices.last().expect("non-empty"))
            .or_default()
            .push(b);
    }

    let mut qubits = mapped.qubits.clone();
    qubits.extend(used.iter().cloned());
    let mut out = Circuit::new(qubits);
    let mut origin = Vec::new();
    let mut emit = |g: Gate, o: Origin| {
        out.gates.push(g);
        origin.push(o);
    };

    for (i, g) in mapped.gates.iter().enumerate() {
        if let Some(&b) = opens.get(&i) {
            let blk = &blocks[b];
            let (c, al, ar) = (&blk.control, &blk.ancilla_local, &blk.ancilla_remote);
            let m1 = format!("__cat{b}_m1");
            let role = |role| Origin::Block { block: b, role };
            emit(
                Gate::two(GateKind::EprGen, al.clone(), ar.clone()),
                role(BlockRole::EprGen),
            );
            emit(
                Gate::two(GateKind::Cnot, c.clone(), al.clone()),
                role(BlockRole::EntangleCnot),
            );
            emit(
                Gate::single(GateKind::Measure(m1.clone()), al.clone()),
                role(BlockRole::EntangleMeasure),
            );
            emit(
                Gate::single(GateKind::CondX(m1), ar.clone()),
                role(BlockRole::CorrectX),
            );
        }
        match served.get(&i) {
            Some(&b) => emit(
                Gate::two(
                    g.kind.clone(),
                    blocks[b].ancilla_remote.clone(),
                    g.operands[1].clone(),
                ),
                Origin::Served { gate: i, block: b },
            ),
            None => emit(g.clone(), Origin::Gate(i)),
        }
        for &b in closes.get(&i).into_iter().flatten() {
            let blk = &blocks[b];
            let (c, al, ar) = (&blk.control, &blk.ancilla_local, &blk.ancilla_remote);
            let m2 = format!("__cat{b}_m2");
            let role = |role| Origin::Block { block: b, role };
            emit(
                Gate::single(GateKind::H, ar.clone()),
                role(BlockRole::DisentangleH),
            );
            emit(
                Gate::single(GateKind::Measure(m2.clone()), ar.clone()),
                role(BlockRole::DisentangleMeasure),
            );
            emit(
                Gate::single(GateKind::CondZ(m2), c.clone()),
                role(BlockRole::CorrectZ),
            );
            emit(
                Gate::single(GateKind::Reset, al.clone()),
                role(BlockRole::ResetLocal),
            );
            emit(
                Gate::single(GateKind::Reset, ar.clone()),
                role(BlockRole::ResetRemote),
            );
        }
    }

    for q in &used {
        if let Some(s) = pool.free.get_mut(&q.node) {
            s.remove(&q.index);
        }
    }

    Ok(DistributedCircuit {
        circuit: out,
        blocks,
        origin,
        data_qubits: mapped.qubits,
        ancillas: used.into_iter().collect(),
        warnings,
    })
}
