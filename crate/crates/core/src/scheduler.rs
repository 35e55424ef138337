//! Qubit allocation and round scheduling of parallel programs.
//!
//! [`build_parallel_program`] walks the programs in order, allocating each
//! one in the remaining capacity of the cluster. When a program no longer
//! fits, the accumulated programs are emitted as one round, the capacity is
//! restored and the program is retried in the fresh round.

use std::collections::{BTreeSet, HashMap};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::backend::PauliString;
use crate::circuit::{Circuit, NodeId, QubitRef};
use crate::engine::MergeSpec;
use crate::error::{RemapError, ScheduleError};
use crate::topology::Topology;

/// A per-shot quantity a program reports besides its raw counts.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    /// Exact `⟨ψ|P|ψ⟩` on the final state of each shot, averaged over shots.
    Exact(PauliString),
    /// Mean of `(-1)^(b_1 ⊕ … ⊕ b_m)` over shots.
    Parity(Vec<String>),
}

/// What a program hands back to the controller.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputSpec {
    /// Bits concatenated, in this order, into the count keys.
    pub bits: Vec<String>,
    pub observables: Vec<(String, Observable)>,
}

/// A monolithic circuit together with its repetition count.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub circuit: Circuit,
    pub repetitions: u32,
    pub output: OutputSpec,
}

impl Program {
    /// A program whose output is every measured bit, in measurement order.
    pub fn new(circuit: Circuit, repetitions: u32) -> Self {
        let bits = circuit.measured_bits();
        Program {
            circuit,
            repetitions,
            output: OutputSpec {
                bits,
                observables: Vec::new(),
            },
        }
    }

    pub fn with_observable(mut self, name: impl Into<String>, obs: Observable) -> Self {
        self.output.observables.push((name.into(), obs));
        self
    }

    pub fn width(&self) -> usize {
        self.circuit.width()
    }
}

/// Free qubit slots per node, in topology order.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeSlots {
    nodes: Vec<(NodeId, BTreeSet<usize>)>,
}

impl FreeSlots {
    pub fn full(topology: &Topology) -> Self {
        FreeSlots {
            nodes: topology
                .qpus()
                .iter()
                .map(|q| (q.id.clone(), (0..q.num_qubits).collect()))
                .collect(),
        }
    }

    /// Free counts per node, slots `0..count` on each.
    pub fn from_counts(counts: &[(NodeId, usize)]) -> Self {
        FreeSlots {
            nodes: counts
                .iter()
                .map(|(id, n)| (id.clone(), (0..*n).collect()))
                .collect(),
        }
    }

    pub fn total(&self) -> usize {
        self.nodes.iter().map(|(_, s)| s.len()).sum()
    }

    pub fn take(&mut self, slots: &[QubitRef]) {
        for q in slots {
            if let Some((_, set)) = self.nodes.iter_mut().find(|(id, _)| *id == q.node) {
                set.remove(&q.index);
            }
        }
    }

    pub fn free_on(&self, node: &NodeId) -> Option<&BTreeSet<usize>> {
        self.nodes.iter().find(|(id, _)| id == node).map(|(_, s)| s)
    }

    fn all(&self) -> Vec<QubitRef> {
        self.nodes
            .iter()
            .flat_map(|(id, set)| set.iter().map(move |&i| QubitRef::new(id.clone(), i)))
            .collect()
    }
}

/// Physical slot of each logical qubit, indexed like `Circuit::qubits`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Allocation {
    pub slots: Vec<QubitRef>,
}

impl Allocation {
    /// Keep a circuit's own qubit refs; used for circuits that are already placed.
    pub fn identity(circuit: &Circuit) -> Self {
        Allocation {
            slots: circuit.qubits.clone(),
        }
    }

    pub fn width(&self) -> usize {
        self.slots.len()
    }

    /// Distinct nodes in first-use order.
    pub fn nodes(&self) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = Vec::new();
        for q in &self.slots {
            if !out.contains(&q.node) {
                out.push(q.node.clone());
            }
        }
        out
    }

    pub fn is_distributed(&self) -> bool {
        self.nodes().len() > 1
    }

    /// Logical ref → physical ref for the given circuit.
    pub fn bind(&self, circuit: &Circuit) -> Result<HashMap<QubitRef, QubitRef>, RemapError> {
        if let Some(q) = circuit.qubits.get(self.slots.len()) {
            return Err(RemapError::Unallocated(q.clone()));
        }
        Ok(circuit
            .qubits
            .iter()
            .cloned()
            .zip(self.slots.iter().cloned())
            .collect())
    }
}

/// Fill QPUs in order, lowest free index first, spilling onto the next QPU.
pub fn allocate_greedy(free: &FreeSlots, w: usize) -> Option<Allocation> {
    if free.total() < w {
        return None;
    }
    Some(Allocation {
        slots: free.all().into_iter().take(w).collect(),
    })
}

/// Draw `w` slots uniformly without replacement.
pub fn allocate_random(free: &FreeSlots, w: usize, seed: u64) -> Option<Allocation> {
    allocate_random_with(free, w, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn allocate_random_with(
    free: &FreeSlots,
    w: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Allocation> {
    let all = free.all();
    if all.len() < w {
        return None;
    }
    let picks = index::sample(rng, all.len(), w);
    Some(Allocation {
        slots: picks.into_iter().map(|i| all[i].clone()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Allocator {
    Greedy,
    Random { seed: u64 },
}

/// `S(i)`: for each round, one set of program indices per QPU (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Schedule {
    pub rounds: Vec<Vec<BTreeSet<usize>>>,
}

impl Schedule {
    pub fn num_rounds(&self) -> usize {
        self.rounds.len()
    }

    /// Programs of round `i` in ascending order.
    pub fn programs_in(&self, round: usize) -> Vec<usize> {
        let all: BTreeSet<usize> = self.rounds[round].iter().flatten().copied().collect();
        all.into_iter().collect()
    }

    /// Rounds with 1-based program numbers, as in reports.
    pub fn one_based(&self) -> Vec<Vec<Vec<usize>>> {
        self.rounds
            .iter()
            .map(|r| {
                r.iter()
                    .map(|s| s.iter().map(|p| p + 1).collect())
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelProgram {
    pub programs: Vec<Program>,
    pub schedule: Schedule,
    pub merge: MergeSpec,
    pub allocations: Vec<Allocation>,
    pub round_of: Vec<usize>,
}

impl ParallelProgram {
    /// Whether program `j` (0-based) is a distributed program.
    pub fn is_distributed(&self, j: usize) -> bool {
        self.allocations[j].is_distributed()
    }

    /// 1-based numbers of the distributed programs.
    pub fn distributed_programs(&self) -> Vec<usize> {
        (0..self.programs.len())
            .filter(|&j| self.is_distributed(j))
            .map(|j| j + 1)
            .collect()
    }

    pub fn schedule_report(&self) -> serde_json::Value {
        serde_json::json!({
            "rounds": self.schedule.one_based(),
            "distributed": self.distributed_programs(),
        })
    }
}

/// Build the round schedule for `programs` on `topology`.
pub fn build_parallel_program(
    topology: &Topology,
    programs: Vec<Program>,
    allocator: Allocator,
    merge: MergeSpec,
) -> Result<ParallelProgram, ScheduleError> {
    let capacity = topology.total_qubits();
    for (j, p) in programs.iter().enumerate() {
        if p.width() == 0 {
            return Err(ScheduleError::EmptyProgram(j + 1));
        }
        if p.repetitions == 0 {
            return Err(ScheduleError::ZeroRepetitions(j + 1));
        }
        if p.width() > capacity {
            return Err(ScheduleError::Unschedulable {
                program: j + 1,
                width: p.width(),
                capacity,
            });
        }
    }

    let mut rng = match allocator {
        Allocator::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Allocator::Greedy => None,
    };
    let mut allocate = |free: &FreeSlots, w: usize| match rng.as_mut() {
        Some(r) => allocate_random_with(free, w, r),
        None => allocate_greedy(free, w),
    };

    let n = programs.len();
    let mut allocations: Vec<Option<Allocation>> = vec![None; n];
    let mut round_of = vec![0; n];
    let mut rounds = Vec::new();
    let mut free = FreeSlots::full(topology);
    let mut pending: Vec<usize> = Vec::new();

    let close = |pending: &[usize], allocations: &[Option<Allocation>]| -> Vec<BTreeSet<usize>> {
        topology
            .qpus()
            .iter()
            .map(|qpu| {
                pending
                    .iter()
                    .copied()
                    .filter(|&j| {
                        allocations[j]
                            .as_ref()
                            .is_some_and(|a| a.slots.iter().any(|s| s.node == qpu.id))
                    })
                    .collect()
            })
            .collect()
    };

    for (j, p) in programs.iter().enumerate() {
        let alloc = match allocate(&free, p.width()) {
            Some(a) => a,
            None => {
                rounds.push(close(&pending, &allocations));
                pending.clear();
                free = FreeSlots::full(topology);
                allocate(&free, p.width()).expect("width was checked against total capacity")
            }
        };
        free.take(&alloc.slots);
        allocations[j] = Some(alloc);
        round_of[j] = rounds.len();
        pending.push(j);
    }
    if !pending.is_empty() {
        rounds.push(close(&pending, &allocations));
    }

    Ok(ParallelProgram {
        programs,
        schedule: Schedule { rounds },
        merge,
        allocations: allocations
            .into_iter()
            .map(|a| a.expect("every program allocated"))
            .collect(),
        round_of,
    })
}
