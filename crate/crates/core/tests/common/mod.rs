#![allow(dead_code)]

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use proptest::prelude::*;
use qdist_core::scheduler::Allocation;
use qdist_core::{Circuit, GateKind, Matrix2, QubitRef, Topology};

pub type Dense = Vec<Vec<Complex64>>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// 2x2 matrix of a single-qubit kind, written out independently of the library.
pub fn oracle_single(kind: &GateKind) -> [[Complex64; 2]; 2] {
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    let ph = |t: f64| [[o, z], [z, Complex64::from_polar(1.0, t)]];
    match kind {
        GateKind::X => [[z, o], [o, z]],
        GateKind::Y => [[z, c(0.0, -1.0)], [c(0.0, 1.0), z]],
        GateKind::Z => [[o, z], [z, -o]],
        GateKind::H => {
            let h = c(FRAC_1_SQRT_2, 0.0);
            [[h, h], [h, -h]]
        }
        GateKind::S => ph(std::f64::consts::FRAC_PI_2),
        GateKind::T => ph(std::f64::consts::FRAC_PI_4),
        GateKind::Phase(t) => ph(*t),
        GateKind::Rx(t) => {
            let (s, co) = (t / 2.0).sin_cos();
            [[c(co, 0.0), c(0.0, -s)], [c(0.0, -s), c(co, 0.0)]]
        }
        GateKind::Ry(t) => {
            let (s, co) = (t / 2.0).sin_cos();
            [[c(co, 0.0), c(-s, 0.0)], [c(s, 0.0), c(co, 0.0)]]
        }
        GateKind::Rz(t) => [
            [Complex64::from_polar(1.0, -t / 2.0), z],
            [z, Complex64::from_polar(1.0, t / 2.0)],
        ],
        GateKind::CustomSingle(m) => m.0,
        other => panic!("{other:?} is not single-qubit"),
    }
}

pub fn oracle_target(kind: &GateKind) -> [[Complex64; 2]; 2] {
    match kind {
        GateKind::Cnot => oracle_single(&GateKind::X),
        GateKind::Cz => oracle_single(&GateKind::Z),
        GateKind::CPhase(t) => oracle_single(&GateKind::Phase(*t)),
        GateKind::CustomControlled(m) => m.0,
        other => panic!("{other:?} is not controlled"),
    }
}

/// Full `2^n x 2^n` unitary of one gate, qubit 0 most significant.
pub fn gate_unitary(circuit: &Circuit, index: usize) -> Dense {
    let n = circuit.width();
    let dim = 1usize << n;
    let g = &circuit.gates[index];
    let pos = |q: &QubitRef| circuit.qubits.iter().position(|x| x == q).unwrap();
    let bit = |i: usize, k: usize| (i >> (n - 1 - k)) & 1;
    let mut u = vec![vec![c(0.0, 0.0); dim]; dim];
    if g.operands.len() == 1 {
        let k = pos(&g.operands[0]);
        let m = oracle_single(&g.kind);
        for (r, row) in u.iter_mut().enumerate() {
            for (col, cell) in row.iter_mut().enumerate() {
                if (r ^ col) & !(1 << (n - 1 - k)) == 0 {
                    *cell = m[bit(r, k)][bit(col, k)];
                }
            }
        }
    } else {
        let (kc, kt) = (pos(&g.operands[0]), pos(&g.operands[1]));
        let m = oracle_target(&g.kind);
        for (r, row) in u.iter_mut().enumerate() {
            for (col, cell) in row.iter_mut().enumerate() {
                if bit(col, kc) == 0 {
                    if r == col {
                        *cell = c(1.0, 0.0);
                    }
                } else if bit(r, kc) == 1 && (r ^ col) & !(1 << (n - 1 - kt)) == 0 {
                    *cell = m[bit(r, kt)][bit(col, kt)];
                }
            }
        }
    }
    u
}

pub fn mat_vec(m: &Dense, v: &[Complex64]) -> Vec<Complex64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Final state of a measurement-free circuit from `|0…0⟩`.
pub fn dense_state(circuit: &Circuit) -> Vec<Complex64> {
    let mut v = vec![c(0.0, 0.0); 1 << circuit.width()];
    v[0] = c(1.0, 0.0);
    for i in 0..circuit.gates.len() {
        v = mat_vec(&gate_unitary(circuit, i), &v);
    }
    v
}

pub fn random_unitary() -> impl Strategy<Value = Matrix2> {
    (0.0..6.3f64, 0.0..6.3f64, 0.0..6.3f64, 0.0..6.3f64).prop_map(|(a, b, g, d)| {
        Matrix2::phase(a)
            .mul(&Matrix2::ry(b))
            .mul(&Matrix2::rz(g))
            .mul(&Matrix2::new(
                Complex64::from_polar(1.0, d),
                c(0.0, 0.0),
                c(0.0, 0.0),
                Complex64::from_polar(1.0, d),
            ))
    })
}

pub fn single_kind() -> impl Strategy<Value = GateKind> {
    prop_oneof![
        Just(GateKind::X),
        Just(GateKind::Y),
        Just(GateKind::Z),
        Just(GateKind::H),
        Just(GateKind::S),
        Just(GateKind::T),
        (-6.3..6.3f64).prop_map(GateKind::Rx),
        (-6.3..6.3f64).prop_map(GateKind::Ry),
        (-6.3..6.3f64).prop_map(GateKind::Rz),
        (-6.3..6.3f64).prop_map(GateKind::Phase),
        random_unitary().prop_map(GateKind::CustomSingle),
    ]
}

pub fn controlled_kind() -> impl Strategy<Value = GateKind> {
    prop_oneof![
        Just(GateKind::Cnot),
        Just(GateKind::Cz),
        (-6.3..6.3f64).prop_map(GateKind::CPhase),
        random_unitary().prop_map(GateKind::CustomControlled),
    ]
}

/// Measurement-free circuits on logical qubits, widths in `2..=max_width`.
pub fn unitary_circuit(max_width: usize, max_gates: usize) -> impl Strategy<Value = Circuit> {
    (2..=max_width).prop_flat_map(move |w| {
        let gate = prop_oneof![
            (single_kind(), 0..w).prop_map(|(k, q)| (k, q, None)),
            (controlled_kind(), 0..w, 1..w).prop_map(move |(k, a, d)| (k, a, Some((a + d) % w))),
        ];
        proptest::collection::vec(gate, 0..=max_gates).prop_map(move |gates| {
            let mut circ = Circuit::with_width(w);
            for (k, a, b) in gates {
                match b {
                    None => circ.apply(k, &QubitRef::logical(a)),
                    Some(b) => circ.apply2(k, &QubitRef::logical(a), &QubitRef::logical(b)),
                };
            }
            circ
        })
    })
}

/// Qubit `i` goes to node `side[i]` of a two-node cluster sized `[w, w]`,
/// filling each node from index 0.
pub fn two_node_split(side: &[bool]) -> (Allocation, Topology) {
    let w = side.len();
    let mut next = [0usize; 2];
    let slots = side
        .iter()
        .map(|&s| {
            let n = s as usize;
            let q = QubitRef::new(format!("QPU_{n}").as_str(), next[n]);
            next[n] += 1;
            q
        })
        .collect();
    (Allocation { slots }, Topology::from_sizes(&[w, w]).unwrap())
}

pub fn fidelity_up_to_phase(a: &[Complex64], b: &[Complex64]) -> f64 {
    qdist_core::fidelity(a, b)
}
