//! Dense statevector simulator over the union of all nodes' qubits.
//!
//! Qubits are registered lazily. The first registered qubit is the most
//! significant bit of the amplitude index; each new qubit is appended as the
//! least significant one, starting in `|0⟩`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::circuit::{Circuit, Gate, GateKind, Matrix2, QubitRef};
use crate::error::BackendError;

/// Largest number of simultaneously registered qubits.
pub const MAX_QUBITS: usize = 24;

/// Probability below which a qubit counts as being in `|0⟩`.
const RESET_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_char(c: char) -> Option<Pauli> {
        match c.to_ascii_uppercase() {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        };
        write!(f, "{c}")
    }
}

/// Tensor product of Pauli factors; unmapped qubits are identity.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PauliString {
    factors: BTreeMap<QubitRef, Pauli>,
}

impl PauliString {
    pub fn identity() -> Self {
        PauliString::default()
    }

    pub fn with(mut self, q: QubitRef, p: Pauli) -> Self {
        self.set(q, p);
        self
    }

    pub fn set(&mut self, q: QubitRef, p: Pauli) {
        if p == Pauli::I {
            self.factors.remove(&q);
        } else {
            self.factors.insert(q, p);
        }
    }

    /// Parse a string such as `"ZIXX"`; character `i` acts on `qubits[i]`.
    pub fn parse(text: &str, qubits: &[QubitRef]) -> Option<PauliString> {
        if text.chars().count() != qubits.len() {
            return None;
        }
        let mut out = PauliString::identity();
        for (c, q) in text.chars().zip(qubits) {
            out.set(q.clone(), Pauli::from_char(c)?);
        }
        Some(out)
    }

    pub fn get(&self, q: &QubitRef) -> Pauli {
        self.factors.get(q).copied().unwrap_or(Pauli::I)
    }

    /// Non-identity factors.
    pub fn factors(&self) -> impl Iterator<Item = (&QubitRef, Pauli)> {
        self.factors.iter().map(|(q, p)| (q, *p))
    }

    pub fn is_identity(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn map_qubits<E>(
        &self,
        mut f: impl FnMut(&QubitRef) -> Result<QubitRef, E>,
    ) -> Result<PauliString, E> {
        let mut out = PauliString::identity();
        for (q, p) in &self.factors {
            out.set(f(q)?, *p);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    qubits: Vec<QubitRef>,
    positions: HashMap<QubitRef, usize>,
    amps: Vec<Complex64>,
}

impl Default for StateVector {
    fn default() -> Self {
        StateVector::new()
    }
}

impl StateVector {
    /// The empty register (one amplitude, value 1).
    pub fn new() -> Self {
        StateVector {
            qubits: Vec::new(),
            positions: HashMap::new(),
            amps: vec![Complex64::new(1.0, 0.0)],
        }
    }

    /// Fresh `|0…0⟩` over `qubits`, first = most significant.
    pub fn with_qubits(qubits: &[QubitRef]) -> Result<Self, BackendError> {
        let mut s = StateVector::new();
        for q in qubits {
            s.register(q)?;
        }
        Ok(s)
    }

    pub fn qubits(&self) -> &[QubitRef] {
        &self.qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn num_qubits(&self) -> usize {
        self.qubits.len()
    }

    pub fn is_registered(&self, q: &QubitRef) -> bool {
        self.positions.contains_key(q)
    }

    /// Register `q` in `|0⟩` if it is new.
    pub fn register(&mut self, q: &QubitRef) -> Result<(), BackendError> {
        if self.positions.contains_key(q) {
            return Ok(());
        }
        if self.qubits.len() >= MAX_QUBITS {
            return Err(BackendError::TooManyQubits(self.qubits.len() + 1));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); self.amps.len() * 2];
        for (i, a) in self.amps.iter().enumerate() {
            amps[2 * i] = *a;
        }
        self.amps = amps;
        self.positions.insert(q.clone(), self.qubits.len());
        self.qubits.push(q.clone());
        Ok(())
    }

    fn mask(&self, q: &QubitRef) -> Result<usize, BackendError> {
        let pos = self
            .positions
            .get(q)
            .ok_or_else(|| BackendError::UnregisteredQubit(q.clone()))?;
        Ok(1 << (self.qubits.len() - 1 - pos))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn apply_matrix(&mut self, q: &QubitRef, m: &Matrix2) -> Result<(), BackendError> {
        let mask = self.mask(q)?;
        self.apply_masked(0, mask, m);
        Ok(())
    }

    /// Apply `m` to `target` on the subspace where `control` is 1.
    pub fn apply_controlled(
        &mut self,
        control: &QubitRef,
        target: &QubitRef,
        m: &Matrix2,
    ) -> Result<(), BackendError> {
        if control == target {
            return Err(BackendError::DuplicateOperand("controlled gate"));
        }
        let cmask = self.mask(control)?;
        let tmask = self.mask(target)?;
        self.apply_masked(cmask, tmask, m);
        Ok(())
    }

    fn apply_masked(&mut self, cmask: usize, tmask: usize, m: &Matrix2) {
        let [[a, b], [c, d]] = m.0;
        for i in 0..self.amps.len() {
            if i & tmask != 0 || i & cmask != cmask {
                continue;
            }
            let j = i | tmask;
            let (x, y) = (self.amps[i], self.amps[j]);
            self.amps[i] = a * x + b * y;
            self.amps[j] = c * x + d * y;
        }
    }

    /// Apply a unitary gate, PREPARE, RESET or EPR_GEN. Classical kinds
    /// (MEASURE, COND_X, COND_Z) are handled by [`simulate`] and the engine.
    pub fn apply_gate<R: Rng + ?Sized>(
        &mut self,
        gate: &Gate,
        rng: &mut R,
    ) -> Result<(), BackendError> {
        let ops = &gate.operands;
        if let Some(m) = gate.kind.single_matrix() {
            return self.apply_matrix(&ops[0], &m);
        }
        if let Some(m) = gate.kind.controlled_target() {
            return self.apply_controlled(&ops[0], &ops[1], &m);
        }
        match &gate.kind {
            GateKind::Prepare(v) => self.prepare(&ops[0], *v, rng),
            GateKind::Reset => self.reset(&ops[0], rng),
            GateKind::EprGen => self.gen_epr(&ops[0], &ops[1]),
            other => Err(BackendError::NotApplicable(other.name())),
        }
    }

    pub fn probability_one(&self, q: &QubitRef) -> Result<f64, BackendError> {
        let mask = self.mask(q)?;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Create `(|00⟩+|11⟩)/√2` on two fresh or reset qubits.
    pub fn gen_epr(&mut self, a: &QubitRef, b: &QubitRef) -> Result<(), BackendError> {
        if a == b {
            return Err(BackendError::DuplicateOperand("EPR_GEN"));
        }
        for q in [a, b] {
            self.register(q)?;
            if self.probability_one(q)? > RESET_TOL {
                return Err(BackendError::AncillaNotReset(q.clone()));
            }
        }
        self.apply_matrix(a, &Matrix2::hadamard())?;
        self.apply_controlled(a, b, &Matrix2::pauli_x())
    }

    /// Projective Z measurement. Draws exactly one uniform number.
    pub fn measure<R: Rng + ?Sized>(
        &mut self,
        q: &QubitRef,
        rng: &mut R,
    ) -> Result<bool, BackendError> {
        let mask = self.mask(q)?;
        let p1 = self.probability_one(q)?;
        let u: f64 = rng.random();
        let outcome = u < p1;
        let p = if outcome { p1 } else { 1.0 - p1 };
        let scale = 1.0 / p.sqrt();
        for (i, a) in self.amps.iter_mut().enumerate() {
            if (i & mask != 0) == outcome {
                *a *= scale;
            } else {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        Ok(outcome)
    }

    /// Measure and flip to `|0⟩`; registers the qubit if needed.
    pub fn reset<R: Rng + ?Sized>(
        &mut self,
        q: &QubitRef,
        rng: &mut R,
    ) -> Result<(), BackendError> {
        if !self.is_registered(q) {
            return self.register(q);
        }
        if self.measure(q, rng)? {
            self.apply_matrix(q, &Matrix2::pauli_x())?;
        }
        Ok(())
    }

    pub fn prepare<R: Rng + ?Sized>(
        &mut self,
        q: &QubitRef,
        value: bool,
        rng: &mut R,
    ) -> Result<(), BackendError> {
        self.reset(q, rng)?;
        if value {
            self.apply_matrix(q, &Matrix2::pauli_x())?;
        }
        Ok(())
    }

    /// `⟨ψ|P|ψ⟩`, exact.
    pub fn exact_expectation(&self, pauli: &PauliString) -> Result<f64, BackendError> {
        let mut xmask = 0usize;
        let mut zmask = 0usize;
        let mut ny = 0u32;
        for (q, p) in pauli.factors() {
            let m = self.mask(q)?;
            match p {
                Pauli::I => {}
                Pauli::X => xmask |= m,
                Pauli::Z => zmask |= m,
                Pauli::Y => {
                    xmask |= m;
                    zmask |= m;
                    ny += 1;
                }
            }
        }
        let iy = Complex64::i().powu(ny);
        let total: Complex64 = self
            .amps
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let sign = if (i & zmask).count_ones() % 2 == 1 {
                    -1.0
                } else {
                    1.0
                };
                self.amps[i ^ xmask].conj() * iy * sign * a
            })
            .sum();
        Ok(total.re)
    }

    /// Amplitudes over `keep` (first = most significant) on the subspace where
    /// every other registered qubit is 0. Unregistered entries of `keep` are
    /// treated as `|0⟩`.
    pub fn restrict_to(&self, keep: &[QubitRef]) -> Vec<Complex64> {
        let n = keep.len();
        let mut out = vec![Complex64::new(0.0, 0.0); 1 << n];
        let masks: Vec<Option<usize>> = keep.iter().map(|q| self.mask(q).ok()).collect();
        let keep_mask: usize = masks.iter().flatten().fold(0, |acc, m| acc | m);
        for (i, a) in self.amps.iter().enumerate() {
            if i & !keep_mask != 0 {
                continue;
            }
            let mut idx = 0usize;
            for (k, m) in masks.iter().enumerate() {
                if let Some(m) = m {
                    if i & m != 0 {
                        idx |= 1 << (n - 1 - k);
                    }
                }
            }
            out[idx] = *a;
        }
        out
    }

    /// JSON dump of the registered qubits and amplitudes.
    pub fn to_debug_json(&self) -> serde_json::Value {
        serde_json::json!({
            "qubits": self.qubits.iter().map(|q| q.to_string()).collect::<Vec<_>>(),
            "amplitudes": self.amps.iter().map(|a| [a.re, a.im]).collect::<Vec<_>>(),
        })
    }
}

/// `|⟨a|b⟩|²` of two equally sized amplitude vectors.
pub fn fidelity(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.conj() * y)
        .sum::<Complex64>()
        .norm_sqr()
}

/// Run a circuit gate by gate on a fresh state, declared qubits registered
/// first in declaration order. Returns the final state and classical bits.
pub fn simulate<R: Rng + ?Sized>(
    circuit: &Circuit,
    rng: &mut R,
) -> Result<(StateVector, HashMap<String, bool>), BackendError> {
    let mut state = StateVector::with_qubits(&circuit.qubits)?;
    let mut bits = HashMap::new();
    for g in &circuit.gates {
        match &g.kind {
            GateKind::Measure(b) => {
                let v = state.measure(&g.operands[0], rng)?;
                bits.insert(b.clone(), v);
            }
            GateKind::CondX(b) | GateKind::CondZ(b) => {
                if bits.get(b).copied().unwrap_or(false) {
                    let m = if matches!(g.kind, GateKind::CondX(_)) {
                        Matrix2::pauli_x()
                    } else {
                        Matrix2::pauli_z()
                    };
                    state.apply_matrix(&g.operands[0], &m)?;
                }
            }
            _ => {
                for q in &g.operands {
                    state.register(q)?;
                }
                state.apply_gate(g, rng)?;
            }
        }
    }
    Ok((state, bits))
}
