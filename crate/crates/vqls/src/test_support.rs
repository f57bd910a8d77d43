//! Shared fixtures for unit and integration tests.

use crate::problem::{LseProblem, RightHandSide};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// The three-term, three-qubit reference system with a uniform right-hand
/// side: `A = III + 0.2·XZI + 0.2·XII`, `b = H⊗H⊗H|000⟩`.
pub fn reference_problem() -> LseProblem {
    let b = vec![Complex64::new(1.0 / 8f64.sqrt(), 0.0); 8];
    LseProblem::from_pauli(
        &[("III", c(1.0)), ("XZI", c(0.2)), ("XII", c(0.2))],
        RightHandSide::Vector(b),
    )
    .unwrap()
}

/// The same system as [`reference_problem`], but with the right-hand side given
/// as the Hadamard-layer circuit, so `U_b` is exactly `H⊗H⊗H` rather than a
/// completion of the uniform vector.
pub fn reference_problem_circuit_rhs() -> LseProblem {
    use crate::problem::GateOp;
    use crate::qsim::Gate;
    let gates = (0..3)
        .map(|q| GateOp {
            gate: Gate::H,
            targets: vec![q],
        })
        .collect();
    LseProblem::from_pauli(
        &[("III", c(1.0)), ("XZI", c(0.2)), ("XII", c(0.2))],
        RightHandSide::Circuit(gates),
    )
    .unwrap()
}

/// A random well-conditioned Pauli-mode problem with genuinely complex
/// coefficients, suitable for method-agreement and norm-identity checks.
pub fn random_problem(rng: &mut ChaCha8Rng, n_qubits: usize, m: usize) -> LseProblem {
    let labels = random_pauli_labels(rng, n_qubits, m);
    let mut terms: Vec<(String, Complex64)> = Vec::with_capacity(m);
    for (k, label) in labels.into_iter().enumerate() {
        // keep the identity-like leading term dominant so A stays invertible
        let scale = if k == 0 { 1.0 } else { 0.3 };
        let coeff = Complex64::new(
            rng.random_range(-1.0..1.0) * scale + if k == 0 { 2.0 } else { 0.0 },
            rng.random_range(-1.0..1.0) * scale,
        );
        terms.push((label, coeff));
    }
    let dim = 1usize << n_qubits;
    let raw: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let b = raw.into_iter().map(|z| z / norm).collect();
    LseProblem::from_pauli(&terms, RightHandSide::Vector(b)).unwrap()
}

fn random_pauli_labels(rng: &mut ChaCha8Rng, n_qubits: usize, m: usize) -> Vec<String> {
    let alphabet = ['I', 'X', 'Y', 'Z'];
    let mut labels = vec!["I".repeat(n_qubits)];
    while labels.len() < m {
        let candidate: String = (0..n_qubits)
            .map(|_| alphabet[rng.random_range(0..4)])
            .collect();
        if !labels.contains(&candidate) {
            labels.push(candidate);
        }
    }
    labels
}
