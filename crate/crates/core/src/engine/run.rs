//! Round-by-round execution of a parallel program.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    compile_with, execute, merge, CompileOptions, ExecOptions, InstructionSchedule, MergeSpec,
    MergedValue, Outcome, ProgramPlan, TraceEntry, TraceMode,
};
use crate::backend::StateVector;
use crate::circuit::{NodeId, QubitRef};
use crate::error::{EngineError, Error, RemapError};
use crate::remapper::{remap_in_pool, AncillaPool, DistributedCircuit};
use crate::scheduler::{Allocation, Observable, OutputSpec, ParallelProgram, Program, Schedule};
use crate::topology::Topology;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub strict_ancilla: bool,
    pub trace: TraceMode,
    pub compile: CompileOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundReport {
    pub round: usize,
    /// 1-based program numbers.
    pub programs: Vec<usize>,
    pub distributed: Vec<usize>,
    pub cat_blocks: usize,
    pub horizon: u64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub value: MergedValue,
    /// Indexed by program.
    pub outcomes: Vec<Outcome>,
    pub reports: Vec<RoundReport>,
    pub trace: Vec<TraceEntry>,
    /// Remapped circuit of each program.
    pub circuits: Vec<DistributedCircuit>,
    /// Interleaved schedule of each round.
    pub schedules: Vec<InstructionSchedule>,
    /// State of each program after its last shot.
    pub final_states: Vec<StateVector>,
}

impl RunOutput {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "value": self.value,
            "per_program": self.outcomes,
            "reports": self.reports,
        })
    }

    pub fn trace_lines(&self) -> String {
        let mut s = String::new();
        for e in &self.trace {
            s.push_str(&e.to_json_line());
            s.push('\n');
        }
        s
    }

    /// `Σ c_j e_j` restricted to the programs placed on each node, for a
    /// weighted-sum merge. A distributed program counts towards the first
    /// node it occupies.
    pub fn partial_sums(
        &self,
        pp: &ParallelProgram,
        topology: &Topology,
    ) -> Option<Vec<(NodeId, f64)>> {
        let MergeSpec::WeightedSum {
            coefficients,
            observable,
        } = &pp.merge
        else {
            return None;
        };
        let mut sums: Vec<(NodeId, f64)> = topology
            .qpus()
            .iter()
            .map(|q| (q.id.clone(), 0.0))
            .collect();
        for (j, o) in self.outcomes.iter().enumerate() {
            let node = &pp.allocations[j].slots[0].node;
            let e = o.expectations.get(observable).copied()?;
            if let Some(s) = sums.iter_mut().find(|(n, _)| n == node) {
                s.1 += coefficients[j] * e;
            }
        }
        Some(sums)
    }
}

fn physical_output(program: &Program, allocation: &Allocation) -> Result<OutputSpec, RemapError> {
    let map = allocation.bind(&program.circuit)?;
    let observables = program
        .output
        .observables
        .iter()
        .map(|(name, obs)| {
            let o = match obs {
                Observable::Exact(p) => Observable::Exact(p.map_qubits(|q| {
                    map.get(q)
                        .cloned()
                        .ok_or_else(|| RemapError::Unallocated(q.clone()))
                })?),
                Observable::Parity(bits) => Observable::Parity(bits.clone()),
            };
            Ok((name.clone(), o))
        })
        .collect::<Result<_, RemapError>>()?;
    Ok(OutputSpec {
        bits: program.output.bits.clone(),
        observables,
    })
}

/// Execute every round of `pp`: remap and compile each program of the round,
/// run them together on one clock, then merge all outcomes.
pub fn run_parallel(
    pp: &ParallelProgram,
    topology: &Topology,
    seed: u64,
    options: &RunOptions,
) -> Result<RunOutput, EngineError> {
    pp.merge.check()?;
    let n = pp.programs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outcomes: Vec<Option<Outcome>> = vec![None; n];
    let mut circuits: Vec<Option<DistributedCircuit>> = vec![None; n];
    let mut final_states: Vec<StateVector> = vec![StateVector::new(); n];
    let mut reports = Vec::new();
    let mut schedules = Vec::new();
    let mut trace = Vec::new();
    let context = |round: usize, program: usize| {
        move |e: Error| EngineError::InProgram {
            round,
            program: program + 1,
            source: Box::new(e),
        }
    };

    for round in 0..pp.schedule.num_rounds() {
        let members = pp.schedule.programs_in(round);
        let reserved: Vec<QubitRef> = members
            .iter()
            .flat_map(|&j| pp.allocations[j].slots.clone())
            .collect();
        let mut pool = AncillaPool::new(topology, &reserved, options.strict_ancilla);
        let mut compiled = Vec::new();
        let mut plans = Vec::new();
        let mut warnings = Vec::new();
        let mut cat_blocks = 0;
        for &j in &members {
            let program = &pp.programs[j];
            let alloc = &pp.allocations[j];
            let dc = remap_in_pool(&program.circuit, alloc, &mut pool)
                .map_err(|e| context(round, j)(e.into()))?;
            let schedule = compile_with(&dc.circuit, &dc.data_bits(), topology, &options.compile)
                .map_err(|e| context(round, j)(e.into()))?;
            let output =
                physical_output(program, alloc).map_err(|e| context(round, j)(e.into()))?;
            warnings.extend(dc.warnings.iter().cloned());
            cat_blocks += dc.blocks.len();
            plans.push(ProgramPlan {
                program: j,
                repetitions: program.repetitions,
                qubits: dc.circuit.qubits.clone(),
                output,
            });
            compiled.push(schedule);
            circuits[j] = Some(dc);
        }
        let schedule = InstructionSchedule::interleave(compiled);
        let exec_options = ExecOptions {
            strict_capacity: options.strict_ancilla,
            trace: options.trace,
        };
        let run = execute(&schedule, &plans, topology, &mut rng, &exec_options).map_err(|e| {
            let j = members.first().copied().unwrap_or(0);
            match e {
                EngineError::CapacityExceeded { .. } => e,
                other => context(round, j)(other.into()),
            }
        })?;
        for (k, &j) in members.iter().enumerate() {
            outcomes[j] = Some(run.outcomes[k].clone());
            final_states[j] = run.final_states[k].clone();
        }
        trace.extend(run.trace.into_iter().map(|mut e| {
            e.round = round;
            e
        }));
        let set: BTreeSet<usize> = members.iter().copied().collect();
        reports.push(RoundReport {
            round,
            programs: set.iter().map(|j| j + 1).collect(),
            distributed: set
                .iter()
                .filter(|&&j| pp.is_distributed(j))
                .map(|j| j + 1)
                .collect(),
            cat_blocks,
            horizon: schedule.horizon,
            warnings,
        });
        schedules.push(schedule);
    }

    let outcomes: Vec<Outcome> = outcomes
        .into_iter()
        .map(|o| o.expect("every program scheduled"))
        .collect();
    let value = merge(&pp.merge, &outcomes)?;
    Ok(RunOutput {
        value,
        outcomes,
        reports,
        trace,
        circuits: circuits
            .into_iter()
            .map(|c| c.expect("every program remapped"))
            .collect(),
        schedules,
        final_states,
    })
}

/// The same programs, one per round, each alone on a single node large
/// enough for the widest of them.
pub fn sequential_program(programs: Vec<Program>, merge: MergeSpec) -> (ParallelProgram, Topology) {
    let width = programs
        .iter()
        .map(Program::width)
        .max()
        .unwrap_or(1)
        .max(1);
    let topology = Topology::from_sizes(&[width]).expect("non-empty topology");
    let node = topology.qpus()[0].id.clone();
    let allocations: Vec<Allocation> = programs
        .iter()
        .map(|p| Allocation {
            slots: (0..p.width())
                .map(|i| QubitRef::new(node.clone(), i))
                .collect(),
        })
        .collect();
    let rounds = (0..programs.len())
        .map(|j| vec![BTreeSet::from([j])])
        .collect();
    let pp = ParallelProgram {
        round_of: (0..programs.len()).collect(),
        programs,
        schedule: Schedule { rounds },
        merge,
        allocations,
    };
    (pp, topology)
}

/// Run the programs one at a time on a single node and merge.
pub fn run_sequential(
    programs: Vec<Program>,
    merge: MergeSpec,
    seed: u64,
    options: &RunOptions,
) -> Result<RunOutput, EngineError> {
    let (pp, topology) = sequential_program(programs, merge);
    run_parallel(&pp, &topology, seed, options)
}
