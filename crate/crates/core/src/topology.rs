//! The QPU cluster: an ordered list of nodes with qubit counts and optional
//! per-gate durations. Connectivity is implicitly complete.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::circuit::NodeId;
use crate::error::TopologyError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QpuSpec {
    pub id: NodeId,
    #[serde(rename = "qubits")]
    pub num_qubits: usize,
    /// Gate kind name (`"H"`, `"CNOT"`, `"MEASURE"`, `"EPR_GEN"`, ...) to
    /// duration in clock ticks. Missing kinds take one tick.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub gate_times: BTreeMap<String, i64>,
}

impl QpuSpec {
    pub fn new(id: impl Into<NodeId>, num_qubits: usize) -> Self {
        QpuSpec {
            id: id.into(),
            num_qubits,
            gate_times: BTreeMap::new(),
        }
    }

    pub fn with_gate_time(mut self, kind: &str, ticks: i64) -> Self {
        self.gate_times.insert(kind.to_string(), ticks);
        self
    }

    pub fn duration(&self, kind: &str) -> u64 {
        self.gate_times.get(kind).map_or(1, |&d| d.max(1) as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Topology {
    qpus: Vec<QpuSpec>,
}

impl Topology {
    pub fn new(qpus: Vec<QpuSpec>) -> Result<Self, TopologyError> {
        if qpus.is_empty() {
            return Err(TopologyError::Empty);
        }
        let mut seen = HashSet::new();
        for q in &qpus {
            if !seen.insert(&q.id) {
                return Err(TopologyError::DuplicateNode(q.id.clone()));
            }
            if q.num_qubits == 0 {
                return Err(TopologyError::NoQubits(q.id.clone()));
            }
        }
        Ok(Topology { qpus })
    }

    /// `Q = [q_1, …, q_k]` with ids `QPU_0 … QPU_{k-1}`.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self, TopologyError> {
        Topology::new(
            sizes
                .iter()
                .enumerate()
                .map(|(i, &n)| QpuSpec::new(format!("QPU_{i}").as_str(), n))
                .collect(),
        )
    }

    pub fn qpus(&self) -> &[QpuSpec] {
        &self.qpus
    }

    pub fn len(&self) -> usize {
        self.qpus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qpus.is_empty()
    }

    pub fn qpu(&self, id: &NodeId) -> Option<&QpuSpec> {
        self.qpus.iter().find(|q| &q.id == id)
    }

    pub fn node_index(&self, id: &NodeId) -> Option<usize> {
        self.qpus.iter().position(|q| &q.id == id)
    }

    pub fn total_qubits(&self) -> usize {
        self.qpus.iter().map(|q| q.num_qubits).sum()
    }

    /// Fails if any declared gate time is zero or negative.
    pub fn check_timing(&self) -> Result<(), TopologyError> {
        for q in &self.qpus {
            if let Some((kind, &d)) = q.gate_times.iter().find(|(_, &d)| d < 1) {
                return Err(TopologyError::UnsatisfiableTiming {
                    node: q.id.clone(),
                    kind: kind.clone(),
                    duration: d,
                });
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self, TopologyError> {
        #[derive(Deserialize)]
        struct Doc {
            qpus: Vec<QpuSpec>,
        }
        let doc: Doc = serde_json::from_str(s).map_err(|e| TopologyError::Parse(e.to_string()))?;
        Topology::new(doc.qpus)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serialization is infallible")
    }
}
