//! Circuit → per-node timestamped instructions.
//!
//! Gates are placed as soon as their operands (and any classical bit they
//! read) are ready. A gate occupies its qubits for its node's declared
//! duration. A bit measured on one node and read on another travels as a
//! CLASSICAL_SEND at the tick it becomes available, received `latency` ticks
//! later.

use std::collections::HashMap;

use super::{Instruction, InstructionSchedule, Op};
use crate::circuit::{Circuit, GateKind, NodeId, QubitRef};
use crate::error::EngineError;
use crate::remapper::DistributedCircuit;
use crate::topology::Topology;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompileOptions {
    /// Ticks between a classical send and the earliest matching receive.
    pub latency: u64,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions { latency: 1 }
    }
}

pub fn compile_instructions(
    dcirc: &DistributedCircuit,
    topology: &Topology,
) -> Result<InstructionSchedule, EngineError> {
    compile_with(
        &dcirc.circuit,
        &dcirc.data_bits(),
        topology,
        &CompileOptions::default(),
    )
}

struct BitSource {
    node: NodeId,
    ready: u64,
    version: u32,
}

struct Builder<'t> {
    topology: &'t Topology,
    lists: Vec<Vec<Instruction>>,
}

impl Builder<'_> {
    fn node_index(&self, node: &NodeId) -> Result<usize, EngineError> {
        self.topology
            .node_index(node)
            .ok_or_else(|| EngineError::UnknownNode(node.clone()))
    }

    fn duration(&self, node: &NodeId, kind: &str) -> Result<u64, EngineError> {
        Ok(self.topology.qpus()[self.node_index(node)?].duration(kind))
    }

    fn push(&mut self, node: &NodeId, tick: u64, op: Op) -> Result<(), EngineError> {
        let n = self.node_index(node)?;
        self.lists[n].push(Instruction {
            tick,
            node: node.clone(),
            program: 0,
            op,
        });
        Ok(())
    }
}

/// Compile a placed circuit. `report_bits` are handed to the controller by
/// the node that measured them last.
pub fn compile_with(
    circuit: &Circuit,
    report_bits: &[String],
    topology: &Topology,
    options: &CompileOptions,
) -> Result<InstructionSchedule, EngineError> {
    topology.check_timing()?;
    let latency = options.latency.max(1);
    let mut b = Builder {
        topology,
        lists: vec![Vec::new(); topology.len()],
    };
    let mut qubit_ready: HashMap<QubitRef, u64> = HashMap::new();
    let mut sources: HashMap<String, BitSource> = HashMap::new();
    let mut copies: HashMap<(NodeId, String), (u32, u64)> = HashMap::new();
    let mut last_read: HashMap<String, u64> = HashMap::new();
    let ready = |r: &HashMap<QubitRef, u64>, q: &QubitRef| r.get(q).copied().unwrap_or(0);

    for (gi, g) in circuit.gates.iter().enumerate() {
        let node = g.operands[0].node.clone();
        let name = g.kind.name();
        match &g.kind {
            GateKind::EprGen => {
                let (a, c) = (&g.operands[0], &g.operands[1]);
                let start = ready(&qubit_ready, a).max(ready(&qubit_ready, c));
                let d = b.duration(&a.node, name)?.max(b.duration(&c.node, name)?);
                b.push(
                    &a.node,
                    start,
                    Op::EprSend {
                        local: a.clone(),
                        remote: c.clone(),
                    },
                )?;
                b.push(
                    &c.node,
                    start,
                    Op::EprRecv {
                        local: c.clone(),
                        remote: a.clone(),
                    },
                )?;
                qubit_ready.insert(a.clone(), start + d);
                qubit_ready.insert(c.clone(), start + d);
                continue;
            }
            _ if g.spans_nodes() => {
                return Err(EngineError::NotLocal {
                    gate: gi,
                    kind: name,
                });
            }
            _ => {}
        }
        let d = b.duration(&node, name)?;
        let operands_ready = g
            .operands
            .iter()
            .map(|q| ready(&qubit_ready, q))
            .max()
            .unwrap_or(0);
        let start = match &g.kind {
            GateKind::Measure(bit) => {
                let mut start = operands_ready;
                if let Some(&r) = last_read.get(bit) {
                    start = start.max(r + 1);
                }
                if let Some(src) = sources.get(bit) {
                    start = start.max(src.ready);
                }
                b.push(
                    &node,
                    start,
                    Op::Measure {
                        qubit: g.operands[0].clone(),
                        bit: bit.clone(),
                    },
                )?;
                let version = sources.get(bit).map_or(0, |s| s.version + 1);
                sources.insert(
                    bit.clone(),
                    BitSource {
                        node: node.clone(),
                        ready: start + d,
                        version,
                    },
                );
                copies.insert((node.clone(), bit.clone()), (version, start + d));
                start
            }
            GateKind::CondX(bit) | GateKind::CondZ(bit) => {
                let src = sources
                    .get(bit)
                    .ok_or_else(|| EngineError::BitUnavailable {
                        node: node.clone(),
                        bit: bit.clone(),
                        tick: operands_ready,
                    })?;
                let available = match copies.get(&(node.clone(), bit.clone())) {
                    Some(&(v, t)) if v == src.version => t,
                    _ => {
                        let send = src.ready;
                        let recv = send + latency;
                        let from = src.node.clone();
                        b.push(
                            &from,
                            send,
                            Op::ClassicalSend {
                                bit: bit.clone(),
                                to: node.clone(),
                            },
                        )?;
                        b.push(
                            &node,
                            recv,
                            Op::ClassicalRecv {
                                bit: bit.clone(),
                                from,
                            },
                        )?;
                        copies.insert((node.clone(), bit.clone()), (src.version, recv));
                        let r = last_read.entry(bit.clone()).or_insert(send);
                        *r = (*r).max(send);
                        recv
                    }
                };
                let start = operands_ready.max(available);
                let gate = if matches!(g.kind, GateKind::CondX(_)) {
                    GateKind::X
                } else {
                    GateKind::Z
                };
                b.push(
                    &node,
                    start,
                    Op::CondCorrection {
                        gate,
                        qubit: g.operands[0].clone(),
                        bit: bit.clone(),
                    },
                )?;
                let r = last_read.entry(bit.clone()).or_insert(start);
                *r = (*r).max(start);
                start
            }
            GateKind::Prepare(value) => {
                b.push(
                    &node,
                    operands_ready,
                    Op::Prepare {
                        qubit: g.operands[0].clone(),
                        value: *value,
                    },
                )?;
                operands_ready
            }
            GateKind::Reset => {
                b.push(
                    &node,
                    operands_ready,
                    Op::Reset {
                        qubit: g.operands[0].clone(),
                    },
                )?;
                operands_ready
            }
            kind => {
                b.push(
                    &node,
                    operands_ready,
                    Op::Gate {
                        gate: kind.clone(),
                        operands: g.operands.clone(),
                    },
                )?;
                operands_ready
            }
        };
        for q in &g.operands {
            qubit_ready.insert(q.clone(), start + d);
        }
    }

    let mut reports: Vec<(NodeId, u64, Vec<String>)> = Vec::new();
    for bit in report_bits {
        let Some(src) = sources.get(bit) else {
            continue;
        };
        match reports.iter_mut().find(|(n, _, _)| *n == src.node) {
            Some((_, tick, bits)) => {
                *tick = (*tick).max(src.ready);
                bits.push(bit.clone());
            }
            None => reports.push((src.node.clone(), src.ready, vec![bit.clone()])),
        }
    }
    for (node, tick, bits) in reports {
        b.push(&node, tick, Op::Report { bits })?;
    }

    let mut horizon = 0;
    let mut nodes = Vec::with_capacity(topology.len());
    for (qpu, mut list) in topology.qpus().iter().zip(b.lists) {
        list.sort_by_key(|i| i.tick);
        if let Some(last) = list.last() {
            horizon = horizon.max(last.tick);
        }
        nodes.push((qpu.id.clone(), list));
    }
    Ok(InstructionSchedule { nodes, horizon })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{validate_schedule, InstructionKind};
    use crate::remapper::remap;
    use crate::scheduler::Allocation;
    use crate::topology::QpuSpec;

    fn q(node: &str, i: usize) -> QubitRef {
        QubitRef::new(node, i)
    }

    fn topo() -> Topology {
        Topology::from_sizes(&[2, 2]).unwrap()
    }

    #[test]
    fn single_local_h() {
        let mut c = Circuit::new(vec![q("QPU_0", 0)]);
        c.apply(GateKind::H, &q("QPU_0", 0));
        let s = compile_with(&c, &[], &topo(), &CompileOptions::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.horizon, 0);
        assert_eq!(s.for_node(&"QPU_0".into())[0].tick, 0);
    }

    #[test]
    fn independent_gates_share_a_tick() {
        let mut c = Circuit::new(vec![q("QPU_0", 0), q("QPU_1", 0)]);
        c.apply(GateKind::H, &q("QPU_0", 0))
            .apply(GateKind::X, &q("QPU_1", 0));
        let s = compile_with(&c, &[], &topo(), &CompileOptions::default()).unwrap();
        assert_eq!(s.for_node(&"QPU_0".into())[0].tick, 0);
        assert_eq!(s.for_node(&"QPU_1".into())[0].tick, 0);
    }

    #[test]
    fn nonlocal_cnot_pattern() {
        let mut c = Circuit::with_width(2);
        c.apply2(GateKind::Cnot, &QubitRef::logical(0), &QubitRef::logical(1));
        let alloc = Allocation {
            slots: vec![q("QPU_0", 0), q("QPU_1", 0)],
        };
        let d = remap(&c, &alloc, &topo()).unwrap();
        let s = compile_instructions(&d, &topo()).unwrap();
        let ticks = |node: &str, kind: InstructionKind| -> Vec<u64> {
            s.for_node(&node.into())
                .iter()
                .filter(|i| i.kind() == kind)
                .map(|i| i.tick)
                .collect()
        };
        assert_eq!(ticks("QPU_0", InstructionKind::EprSend), vec![0]);
        assert_eq!(ticks("QPU_1", InstructionKind::EprRecv), vec![0]);
        assert_eq!(ticks("QPU_0", InstructionKind::TwoQubitGate), vec![1]);
        assert_eq!(ticks("QPU_0", InstructionKind::Measure), vec![2]);
        assert_eq!(ticks("QPU_0", InstructionKind::ClassicalSend), vec![3]);
        assert_eq!(ticks("QPU_1", InstructionKind::ClassicalRecv)[0], 4);
        let send = ticks("QPU_0", InstructionKind::ClassicalSend)[0];
        let recv = ticks("QPU_1", InstructionKind::ClassicalRecv)[0];
        assert!(send < recv);
        assert!(validate_schedule(&s).is_empty());
    }

    #[test]
    fn durations_stretch_the_schedule() {
        let t = Topology::new(vec![QpuSpec::new("QPU_0", 1).with_gate_time("H", 3)]).unwrap();
        let mut c = Circuit::new(vec![q("QPU_0", 0)]);
        c.apply(GateKind::H, &q("QPU_0", 0))
            .apply(GateKind::X, &q("QPU_0", 0));
        let s = compile_with(&c, &[], &t, &CompileOptions::default()).unwrap();
        let ticks: Vec<u64> = s.instructions().map(|i| i.tick).collect();
        assert_eq!(ticks, vec![0, 3]);
        assert_eq!(s.horizon, 3);
    }

    #[test]
    fn zero_duration_is_rejected() {
        let t = Topology::new(vec![QpuSpec::new("QPU_0", 1).with_gate_time("H", 0)]).unwrap();
        let c = Circuit::new(vec![q("QPU_0", 0)]);
        let err = compile_with(&c, &[], &t, &CompileOptions::default()).unwrap_err();
        assert!(err.to_string().contains("unsatisfiable timing"));
    }

    #[test]
    fn unremapped_nonlocal_gate_is_rejected() {
        let mut c = Circuit::new(vec![q("QPU_0", 0), q("QPU_1", 0)]);
        c.apply2(GateKind::Cnot, &q("QPU_0", 0), &q("QPU_1", 0));
        assert!(matches!(
            compile_with(&c, &[], &topo(), &CompileOptions::default()),
            Err(EngineError::NotLocal { gate: 0, .. })
        ));
    }
}
