//! Operation counts for monolithic circuits, remapped circuits and execution
//! traces, and the phase-estimation sweep built on them.

use std::collections::{HashMap, HashSet};
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::algorithms::{phase_unitary, qpe_circuit, qpe_demo_allocation};
use crate::circuit::{layer_decompose, Circuit, GateKind, NodeId};
use crate::engine::{InstructionKind, TraceEntry};
use crate::error::{AlgorithmError, Error};
use crate::remapper::{remap, DistributedCircuit};
use crate::topology::Topology;

/// Weight of each category in `total_ops`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccountingProfile {
    pub prep: u64,
    pub gate: u64,
    pub measure: u64,
    /// Generation plus transmission.
    pub epr_pair: u64,
    /// Send plus receive.
    pub classical_message: u64,
    pub correction: u64,
    pub reset: u64,
}

impl Default for AccountingProfile {
    fn default() -> Self {
        AccountingProfile {
            prep: 1,
            gate: 1,
            measure: 1,
            epr_pair: 2,
            classical_message: 2,
            correction: 1,
            reset: 0,
        }
    }
}

impl AccountingProfile {
    pub fn from_json(text: &str) -> Result<Self, AlgorithmError> {
        serde_json::from_str(text).map_err(|e| AlgorithmError::Parse(e.to_string()))
    }

    /// Ops added by one cat block: one pair, two messages, a CNOT and an H,
    /// two measurements, two corrections and two resets.
    pub fn block_overhead(&self) -> u64 {
        self.epr_pair
            + 2 * self.classical_message
            + 2 * self.gate
            + 2 * self.measure
            + 2 * self.correction
            + 2 * self.reset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ResourceReport {
    pub prep_count: u64,
    pub gate_count: u64,
    pub measure_count: u64,
    pub epr_pairs: u64,
    pub classical_messages: u64,
    pub correction_count: u64,
    pub reset_count: u64,
    pub total_ops: u64,
    pub ticks_elapsed: u64,
}

impl ResourceReport {
    fn finish(mut self, profile: &AccountingProfile) -> Self {
        self.total_ops = self.prep_count * profile.prep
            + self.gate_count * profile.gate
            + self.measure_count * profile.measure
            + self.epr_pairs * profile.epr_pair
            + self.classical_messages * profile.classical_message
            + self.correction_count * profile.correction
            + self.reset_count * profile.reset;
        self
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

fn count_gates(circuit: &Circuit, report: &mut ResourceReport) {
    for g in &circuit.gates {
        match g.kind {
            GateKind::Prepare(_) => report.prep_count += 1,
            GateKind::Measure(_) => report.measure_count += 1,
            GateKind::CondX(_) | GateKind::CondZ(_) => report.correction_count += 1,
            GateKind::Reset => report.reset_count += 1,
            GateKind::EprGen => report.epr_pairs += 1,
            _ => report.gate_count += 1,
        }
    }
}

/// One implicit preparation per declared qubit, unless its first gate is an
/// explicit PREPARE (counted as the gate) or an EPR generation.
fn implicit_preps(circuit: &Circuit) -> u64 {
    let mut first: HashMap<_, &GateKind> = HashMap::new();
    for g in &circuit.gates {
        for q in &g.operands {
            first.entry(q).or_insert(&g.kind);
        }
    }
    circuit
        .qubits
        .iter()
        .filter(|q| {
            !matches!(
                first.get(q),
                Some(GateKind::Prepare(_)) | Some(GateKind::EprGen)
            )
        })
        .count() as u64
}

/// Counts for a circuit run on a single device. `ticks_elapsed` is the layer
/// depth.
pub fn count_monolithic(circuit: &Circuit, profile: &AccountingProfile) -> ResourceReport {
    let mut r = ResourceReport {
        prep_count: implicit_preps(circuit),
        ticks_elapsed: layer_decompose(circuit).depth() as u64,
        ..Default::default()
    };
    count_gates(circuit, &mut r);
    r.finish(profile)
}

/// Counts for a remapped circuit. Ancillas are created by EPR generation and
/// carry no preparation; a correction whose bit was measured on another node
/// costs one classical message.
pub fn count_distributed(
    dcirc: &DistributedCircuit,
    profile: &AccountingProfile,
) -> ResourceReport {
    let circuit = &dcirc.circuit;
    let mut r = ResourceReport {
        prep_count: implicit_preps(circuit),
        ticks_elapsed: layer_decompose(circuit).depth() as u64,
        ..Default::default()
    };
    count_gates(circuit, &mut r);
    let mut producer: HashMap<&str, &NodeId> = HashMap::new();
    for g in &circuit.gates {
        match &g.kind {
            GateKind::Measure(b) => {
                producer.insert(b, &g.operands[0].node);
            }
            GateKind::CondX(b) | GateKind::CondZ(b)
                if producer
                    .get(b.as_str())
                    .is_some_and(|n| **n != g.operands[0].node) =>
            {
                r.classical_messages += 1;
            }
            _ => {}
        }
    }
    r.finish(profile)
}

/// Counts for one program's first shot in an execution trace. Qubits first
/// touched by an EPR instruction are ancillas; other qubits without an
/// explicit PREPARE count one preparation. `ticks_elapsed` is the last tick
/// plus one.
pub fn count_trace(
    trace: &[TraceEntry],
    round: usize,
    program: usize,
    profile: &AccountingProfile,
) -> ResourceReport {
    let mut r = ResourceReport::default();
    let mut seen: HashSet<&str> = HashSet::new();
    let mut last_tick = None;
    for e in trace
        .iter()
        .filter(|e| e.round == round && e.program == program && e.shot == 0)
    {
        last_tick = Some(last_tick.map_or(e.tick, |t: u64| t.max(e.tick)));
        for q in &e.operands {
            if seen.insert(q)
                && !matches!(
                    e.kind,
                    InstructionKind::Prepare | InstructionKind::EprSend | InstructionKind::EprRecv
                )
            {
                r.prep_count += 1;
            }
        }
        match e.kind {
            InstructionKind::Prepare => r.prep_count += 1,
            InstructionKind::SingleGate | InstructionKind::TwoQubitGate => r.gate_count += 1,
            InstructionKind::Measure => r.measure_count += 1,
            InstructionKind::EprSend => r.epr_pairs += 1,
            InstructionKind::ClassicalSend => r.classical_messages += 1,
            InstructionKind::CondCorrection => r.correction_count += 1,
            InstructionKind::Reset => r.reset_count += 1,
            InstructionKind::EprRecv | InstructionKind::ClassicalRecv | InstructionKind::Report => {
            }
        }
    }
    r.ticks_elapsed = last_tick.map_or(0, |t| t + 1);
    r.finish(profile)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub monolithic: u64,
    pub distributed: u64,
}

/// Phase estimation for each `n`, counted monolithically and split as in the
/// two-QPU demo. Each node gets one spare slot so the cat ancillas fit.
pub fn sweep_qpe(
    range: RangeInclusive<usize>,
    profile: &AccountingProfile,
) -> Result<Vec<SweepRow>, Error> {
    let u = phase_unitary(0.375);
    let mut rows = Vec::new();
    for n in range {
        let circuit = qpe_circuit(n, &u)?;
        let topology = Topology::from_sizes(&[n + 1, n + 1])?;
        let dcirc = remap(&circuit, &qpe_demo_allocation(n), &topology)?;
        rows.push(SweepRow {
            n,
            monolithic: count_monolithic(&circuit, profile).total_ops,
            distributed: count_distributed(&dcirc, profile).total_ops,
        });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::QubitRef;
    use crate::scheduler::Allocation;

    #[test]
    fn default_block_overhead_is_twelve() {
        assert_eq!(AccountingProfile::default().block_overhead(), 12);
    }

    #[test]
    fn qpe_three_counts() {
        let rows = sweep_qpe(3..=3, &AccountingProfile::default()).unwrap();
        assert_eq!(
            rows[0],
            SweepRow {
                n: 3,
                monolithic: 24,
                distributed: 60
            }
        );
    }

    #[test]
    fn explicit_prepare_replaces_the_implicit_one() {
        let mut c = Circuit::with_width(2);
        c.apply(GateKind::Prepare(true), &QubitRef::logical(0));
        c.apply(GateKind::H, &QubitRef::logical(1));
        let r = count_monolithic(&c, &AccountingProfile::default());
        assert_eq!((r.prep_count, r.gate_count, r.total_ops), (2, 1, 3));
    }

    #[test]
    fn local_circuit_counts_match() {
        let mut c = Circuit::with_width(2);
        c.apply(GateKind::H, &QubitRef::logical(0))
            .apply2(GateKind::Cnot, &QubitRef::logical(0), &QubitRef::logical(1))
            .measure(&QubitRef::logical(1), "b");
        let t = Topology::from_sizes(&[2]).unwrap();
        let alloc = Allocation {
            slots: vec![QubitRef::new("QPU_0", 0), QubitRef::new("QPU_0", 1)],
        };
        let d = remap(&c, &alloc, &t).unwrap();
        let p = AccountingProfile::default();
        assert_eq!(
            count_monolithic(&c, &p).total_ops,
            count_distributed(&d, &p).total_ops
        );
    }

    #[test]
    fn profile_json_fills_defaults() {
        let p = AccountingProfile::from_json(r#"{"reset": 1}"#).unwrap();
        assert_eq!(p.reset, 1);
        assert_eq!(p.epr_pair, 2);
        assert!(AccountingProfile::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn csv_has_header() {
        let csv = sweep_csv(&[SweepRow {
            n: 1,
            monolithic: 7,
            distributed: 19,
        }]);
        assert_eq!(csv, "n,monolithic,distributed\n1,7,19\n");
    }
}
