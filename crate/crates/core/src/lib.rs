//! Parallel and distributed quantum program execution.
//!
//! A set of monolithic [`Program`]s is scheduled into rounds on a cluster of
//! QPUs ([`build_parallel_program`]), each program's non-local gates are
//! rewritten with cat-entangler blocks ([`remap`]), the result is compiled to
//! per-node timestamped instructions and executed in lock-step on a dense
//! statevector simulator ([`run_parallel`]), and the outputs are merged.

pub mod algorithms;
pub mod backend;
pub mod circuit;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod remapper;
pub mod scheduler;
pub mod topology;

pub use backend::{fidelity, simulate, Pauli, PauliString, StateVector};
pub use circuit::{
    layer_decompose, validate, Circuit, Gate, GateKind, LayeredCircuit, Matrix2, NodeId, QubitRef,
};
pub use engine::{
    compile_instructions, execute, merge, run_parallel, run_sequential, validate_schedule,
    validate_trace, InstructionSchedule, MergeSpec, MergedValue, Outcome, RunOptions, RunOutput,
};
pub use error::Error;
pub use remapper::{remap, remap_with, DistributedCircuit, RemapOptions};
pub use scheduler::{
    build_parallel_program, Allocation, Allocator, Observable, OutputSpec, ParallelProgram, Program,
};
pub use topology::{QpuSpec, Topology};
