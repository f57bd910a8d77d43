//! Dense statevector simulation engine.
//!
//! States are stored as `2^n` complex amplitudes. Qubit 0 is the *most
//! significant* bit of a basis index, so it corresponds to the leftmost
//! character of a Pauli label: applying `X` on qubit 0 of `|000⟩` yields
//! `|100⟩`, i.e. basis index 4 of 8. Global phase is not tracked; every
//! contract exposed here (inner products, probabilities, sampling) is
//! phase-insensitive.

use ndarray::Array2;
use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use thiserror::Error;

pub type CMatrix = Array2<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QsimError {
    #[error("register must contain at least one qubit")]
    EmptyRegister,
    #[error("qubit index {index} out of range for a {n_qubits}-qubit register")]
    QubitOutOfRange { index: usize, n_qubits: usize },
    #[error("qubit index {0} appears more than once in a target/control list")]
    DuplicateQubit(usize),
    #[error("operator of dimension {found} does not match expected dimension {expected}")]
    DimensionMismatch { found: usize, expected: usize },
    #[error("gate acts on {expected} qubits but {found} targets were given")]
    TargetCountMismatch { found: usize, expected: usize },
    #[error("state has zero norm")]
    ZeroNorm,
}

pub type QsimResult<T> = Result<T, QsimError>;

/// Named gates with angle parameters, as used by circuit-mode problems and
/// the variational ansatz.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    H,
    X,
    Y,
    Z,
    S,
    Sdg,
    Ry(f64),
    Rz(f64),
    /// `Rz(a2) · Ry(a1) · Rz(a0)`, with `a0` applied first.
    RotZyz(f64, f64, f64),
    Cz,
}

impl Gate {
    pub fn arity(&self) -> usize {
        match self {
            Gate::Cz => 2,
            _ => 1,
        }
    }

    pub fn matrix(&self) -> CMatrix {
        match self {
            Gate::H => {
                let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                ndarray::array![[h, h], [h, -h]]
            }
            Gate::X => ndarray::array![[ZERO, ONE], [ONE, ZERO]],
            Gate::Y => ndarray::array![
                [ZERO, Complex64::new(0.0, -1.0)],
                [Complex64::new(0.0, 1.0), ZERO]
            ],
            Gate::Z => ndarray::array![[ONE, ZERO], [ZERO, -ONE]],
            Gate::S => ndarray::array![[ONE, ZERO], [ZERO, Complex64::new(0.0, 1.0)]],
            Gate::Sdg => ndarray::array![[ONE, ZERO], [ZERO, Complex64::new(0.0, -1.0)]],
            Gate::Ry(theta) => {
                let (s, c) = (theta / 2.0).sin_cos();
                ndarray::array![
                    [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
                    [Complex64::new(s, 0.0), Complex64::new(c, 0.0)]
                ]
            }
            Gate::Rz(theta) => ndarray::array![
                [Complex64::from_polar(1.0, -theta / 2.0), ZERO],
                [ZERO, Complex64::from_polar(1.0, theta / 2.0)]
            ],
            Gate::RotZyz(a0, a1, a2) => {
                let m = Gate::Rz(*a2).matrix().dot(&Gate::Ry(*a1).matrix());
                m.dot(&Gate::Rz(*a0).matrix())
            }
            Gate::Cz => {
                let mut m = CMatrix::eye(4);
                m[(3, 3)] = -ONE;
                m
            }
        }
    }
}

/// Dense state over `n` qubits. Operations mutate the exclusively owned
/// amplitude buffer; cloning yields an independent state, so independent
/// circuits can be evaluated in parallel without synchronization.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` on `n_qubits` qubits.
    pub fn zero_state(n_qubits: usize) -> QsimResult<Self> {
        if n_qubits == 0 {
            return Err(QsimError::EmptyRegister);
        }
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = ONE;
        Ok(Self { n_qubits, amps })
    }

    /// Computational basis state `|index⟩`.
    pub fn basis_state(n_qubits: usize, index: usize) -> QsimResult<Self> {
        let mut state = Self::zero_state(n_qubits)?;
        if index >= state.dim() {
            return Err(QsimError::DimensionMismatch {
                found: index,
                expected: state.dim(),
            });
        }
        state.amps[0] = ZERO;
        state.amps[index] = ONE;
        Ok(state)
    }

    pub fn from_amplitudes(n_qubits: usize, amps: Vec<Complex64>) -> QsimResult<Self> {
        if n_qubits == 0 {
            return Err(QsimError::EmptyRegister);
        }
        if amps.len() != 1 << n_qubits {
            return Err(QsimError::DimensionMismatch {
                found: amps.len(),
                expected: 1 << n_qubits,
            });
        }
        Ok(Self { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Bit position of `qubit` in a basis index (qubit 0 is the MSB).
    fn bit_position(&self, qubit: usize) -> usize {
        self.n_qubits - 1 - qubit
    }

    fn check_targets(&self, targets: &[usize]) -> QsimResult<()> {
        for (i, &t) in targets.iter().enumerate() {
            if t >= self.n_qubits {
                return Err(QsimError::QubitOutOfRange {
                    index: t,
                    n_qubits: self.n_qubits,
                });
            }
            if targets[..i].contains(&t) {
                return Err(QsimError::DuplicateQubit(t));
            }
        }
        Ok(())
    }

    pub fn apply_gate(&mut self, gate: &Gate, targets: &[usize]) -> QsimResult<()> {
        if targets.len() != gate.arity() {
            return Err(QsimError::TargetCountMismatch {
                found: targets.len(),
                expected: gate.arity(),
            });
        }
        self.apply_operator(&gate.matrix(), targets)
    }

    /// Apply a `2^k × 2^k` operator to the `k` target qubits. `targets[0]`
    /// is the most significant qubit of the operator's local basis.
    pub fn apply_operator(&mut self, op: &CMatrix, targets: &[usize]) -> QsimResult<()> {
        self.apply_controlled(op, targets, &[], &[])
    }

    /// Apply an operator to the target qubits only on components where every
    /// control qubit matches the corresponding bit of `pattern`.
    pub fn apply_controlled(
        &mut self,
        op: &CMatrix,
        targets: &[usize],
        controls: &[usize],
        pattern: &[bool],
    ) -> QsimResult<()> {
        self.check_targets(targets)?;
        self.check_targets(controls)?;
        if let Some(&q) = controls.iter().find(|c| targets.contains(c)) {
            return Err(QsimError::DuplicateQubit(q));
        }
        if pattern.len() != controls.len() {
            return Err(QsimError::TargetCountMismatch {
                found: pattern.len(),
                expected: controls.len(),
            });
        }
        let k = targets.len();
        let sub_dim = 1usize << k;
        if op.nrows() != sub_dim || op.ncols() != sub_dim {
            return Err(QsimError::DimensionMismatch {
                found: op.nrows(),
                expected: sub_dim,
            });
        }

        let positions: Vec<usize> = targets.iter().map(|&q| self.bit_position(q)).collect();
        let target_mask: usize = positions.iter().map(|&p| 1usize << p).sum();
        let control_mask: usize = controls
            .iter()
            .map(|&q| 1usize << self.bit_position(q))
            .sum();
        let control_want: usize = controls
            .iter()
            .zip(pattern)
            .filter(|(_, &bit)| bit)
            .map(|(&q, _)| 1usize << self.bit_position(q))
            .sum();

        // Local index `l` has its bit (k-1-j) taken from targets[j].
        let offsets: Vec<usize> = (0..sub_dim)
            .map(|l| {
                (0..k)
                    .filter(|j| (l >> (k - 1 - j)) & 1 == 1)
                    .map(|j| 1usize << positions[j])
                    .sum()
            })
            .collect();

        let mut scratch = vec![ZERO; sub_dim];
        for base in 0..self.amps.len() {
            if base & target_mask != 0 || base & control_mask != control_want {
                continue;
            }
            for (l, s) in scratch.iter_mut().enumerate() {
                *s = self.amps[base | offsets[l]];
            }
            for r in 0..sub_dim {
                let mut acc = ZERO;
                for c in 0..sub_dim {
                    acc += op[(r, c)] * scratch[c];
                }
                self.amps[base | offsets[r]] = acc;
            }
        }
        Ok(())
    }

    /// Replace the amplitudes by `matrix · amplitudes`. The matrix may be
    /// non-unitary; no renormalization is performed.
    pub fn apply_matrix(&mut self, matrix: &CMatrix) -> QsimResult<()> {
        let dim = self.dim();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(QsimError::DimensionMismatch {
                found: matrix.nrows(),
                expected: dim,
            });
        }
        let mut out = vec![ZERO; dim];
        for (r, slot) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            for c in 0..dim {
                acc += matrix[(r, c)] * self.amps[c];
            }
            *slot = acc;
        }
        self.amps = out;
        Ok(())
    }

    /// `Σ conj(a_i)·b_i`.
    pub fn inner_product(&self, other: &StateVector) -> QsimResult<Complex64> {
        if self.dim() != other.dim() {
            return Err(QsimError::DimensionMismatch {
                found: other.dim(),
                expected: self.dim(),
            });
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `|amp|² / Σ|amp|²` per basis state.
    pub fn probabilities(&self) -> QsimResult<Vec<f64>> {
        let norm_sq = self.norm_sq();
        if norm_sq <= 0.0 {
            return Err(QsimError::ZeroNorm);
        }
        Ok(self.amps.iter().map(|a| a.norm_sqr() / norm_sq).collect())
    }

    /// Draw `shots` independent basis states; returns per-basis-state counts.
    pub fn sample<R: Rng>(&self, shots: u64, rng: &mut R) -> QsimResult<Vec<u64>> {
        if self.norm_sq() <= 0.0 {
            return Err(QsimError::ZeroNorm);
        }
        let mut histogram = vec![0u64; self.dim()];
        if shots == 0 {
            return Ok(histogram);
        }
        let weights: Vec<f64> = self.amps.iter().map(|a| a.norm_sqr()).collect();
        let dist = WeightedIndex::new(&weights).map_err(|_| QsimError::ZeroNorm)?;
        for _ in 0..shots {
            histogram[dist.sample(rng)] += 1;
        }
        Ok(histogram)
    }
}

/// Conjugate transpose.
pub fn adjoint(m: &CMatrix) -> CMatrix {
    m.t().mapv(|z| z.conj())
}

/// `‖M†M − I‖_max ≤ tol`.
pub fn is_unitary(m: &CMatrix, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let product = adjoint(m).dot(m);
    let eye = CMatrix::eye(m.nrows());
    product
        .iter()
        .zip(eye.iter())
        .all(|(a, b)| (a - b).norm() <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: Complex64, b: Complex64, tol: f64) {
        assert!((a - b).norm() <= tol, "expected {b}, got {a}");
    }

    #[test]
    fn zero_state_single_qubit() {
        let s = StateVector::zero_state(1).unwrap();
        assert_eq!(s.amplitudes(), &[ONE, ZERO]);
    }

    #[test]
    fn zero_state_three_qubits() {
        let s = StateVector::zero_state(3).unwrap();
        assert_eq!(s.dim(), 8);
        assert_close(s.amplitudes()[0], ONE, 0.0);
        assert!(s.amplitudes()[1..].iter().all(|&a| a == ZERO));
    }

    #[test]
    fn zero_state_rejects_empty_register() {
        assert_eq!(StateVector::zero_state(0), Err(QsimError::EmptyRegister));
    }

    #[test]
    fn x_on_qubit_zero_is_most_significant() {
        let mut s = StateVector::zero_state(3).unwrap();
        s.apply_gate(&Gate::X, &[0]).unwrap();
        assert_close(s.amplitudes()[4], ONE, 1e-15);
    }

    #[test]
    fn rot_zyz_counter_rotation_is_identity() {
        let alpha = 1.234_567;
        let mut s = StateVector::zero_state(1).unwrap();
        s.apply_gate(&Gate::H, &[0]).unwrap();
        let before = s.clone();
        s.apply_gate(&Gate::RotZyz(-alpha, 0.0, alpha), &[0])
            .unwrap();
        for (a, b) in s.amplitudes().iter().zip(before.amplitudes()) {
            assert_close(*a, *b, 1e-14);
        }
    }

    #[test]
    fn cz_leaves_zero_state_unchanged() {
        let mut s = StateVector::zero_state(2).unwrap();
        s.apply_gate(&Gate::Cz, &[0, 1]).unwrap();
        assert_close(s.amplitudes()[0], ONE, 0.0);
    }

    #[test]
    fn cz_flips_sign_of_one_one() {
        let mut s = StateVector::basis_state(2, 3).unwrap();
        s.apply_gate(&Gate::Cz, &[0, 1]).unwrap();
        assert_close(s.amplitudes()[3], -ONE, 0.0);
    }

    #[test]
    fn hadamard_layer_produces_uniform_state() {
        let mut s = StateVector::zero_state(3).unwrap();
        for q in 0..3 {
            s.apply_gate(&Gate::H, &[q]).unwrap();
        }
        let expected = Complex64::new(1.0 / 8f64.sqrt(), 0.0);
        for &a in s.amplitudes() {
            assert_close(a, expected, 1e-14);
        }
    }

    #[test]
    fn controlled_x_inactive_control() {
        let mut s = StateVector::zero_state(2).unwrap();
        let before = s.clone();
        s.apply_controlled(&Gate::X.matrix(), &[1], &[0], &[true])
            .unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn controlled_x_entangles_plus_ancilla() {
        // ancilla |+⟩ on qubit 0, system |000⟩ on qubits 1..4
        let mut s = StateVector::zero_state(4).unwrap();
        s.apply_gate(&Gate::H, &[0]).unwrap();
        s.apply_controlled(&Gate::X.matrix(), &[1], &[0], &[true])
            .unwrap();
        let amp = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        assert_close(s.amplitudes()[0b0000], amp, 1e-14);
        assert_close(s.amplitudes()[0b1100], amp, 1e-14);
    }

    #[test]
    fn duplicate_and_out_of_range_targets_rejected() {
        let mut s = StateVector::zero_state(2).unwrap();
        assert!(matches!(
            s.apply_gate(&Gate::Cz, &[0, 0]),
            Err(QsimError::DuplicateQubit(0))
        ));
        assert!(matches!(
            s.apply_gate(&Gate::X, &[2]),
            Err(QsimError::QubitOutOfRange { .. })
        ));
    }

    #[test]
    fn apply_matrix_identity_and_zero() {
        let mut s = StateVector::zero_state(2).unwrap();
        s.apply_gate(&Gate::H, &[0]).unwrap();
        let before = s.clone();
        s.apply_matrix(&CMatrix::eye(4)).unwrap();
        assert_eq!(s, before);
        s.apply_matrix(&CMatrix::zeros((4, 4))).unwrap();
        assert_eq!(s.norm_sq(), 0.0);
    }

    #[test]
    fn apply_matrix_rejects_dimension_mismatch() {
        let mut s = StateVector::zero_state(2).unwrap();
        assert!(matches!(
            s.apply_matrix(&CMatrix::eye(8)),
            Err(QsimError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn inner_product_examples() {
        let s = StateVector::zero_state(3).unwrap();
        assert_close(s.inner_product(&s).unwrap(), ONE, 1e-15);

        let e0 = StateVector::basis_state(1, 0).unwrap();
        let e1 = StateVector::basis_state(1, 1).unwrap();
        assert_close(e0.inner_product(&e1).unwrap(), ZERO, 0.0);

        let mut uniform = StateVector::zero_state(3).unwrap();
        for q in 0..3 {
            uniform.apply_gate(&Gate::H, &[q]).unwrap();
        }
        let mut amps = vec![ZERO; 8];
        amps[0] = ONE;
        amps[4] = Complex64::new(0.4, 0.0);
        let psi = StateVector::from_amplitudes(3, amps).unwrap();
        let got = uniform.inner_product(&psi).unwrap();
        assert_close(got, Complex64::new(1.4 / 8f64.sqrt(), 0.0), 1e-12);
    }

    #[test]
    fn probabilities_uniform() {
        let mut s = StateVector::zero_state(3).unwrap();
        for q in 0..3 {
            s.apply_gate(&Gate::H, &[q]).unwrap();
        }
        for p in s.probabilities().unwrap() {
            assert!((p - 0.125).abs() < 1e-14);
        }
    }

    #[test]
    fn sampling_zero_shots_and_zero_norm() {
        let s = StateVector::zero_state(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(s.sample(0, &mut rng).unwrap(), vec![0, 0, 0, 0]);

        let dead = StateVector::from_amplitudes(1, vec![ZERO, ZERO]).unwrap();
        assert_eq!(dead.sample(10, &mut rng), Err(QsimError::ZeroNorm));
        assert_eq!(dead.probabilities(), Err(QsimError::ZeroNorm));
    }

    #[test]
    fn sampling_matches_probabilities_within_five_sigma() {
        let mut s = StateVector::zero_state(2).unwrap();
        s.apply_gate(&Gate::H, &[0]).unwrap();
        s.apply_gate(&Gate::Ry(0.8), &[1]).unwrap();
        let probs = s.probabilities().unwrap();
        let shots = 100_000u64;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let histogram = s.sample(shots, &mut rng).unwrap();
        for (count, p) in histogram.iter().zip(&probs) {
            let sigma = (p * (1.0 - p) / shots as f64).sqrt();
            let freq = *count as f64 / shots as f64;
            assert!(
                (freq - p).abs() <= 5.0 * sigma.max(1e-9),
                "freq {freq} vs prob {p}"
            );
        }
    }

    #[test]
    fn controlled_equals_block_matrix() {
        // pattern |01⟩ on a 2-qubit control register selecting X⊗Z on the
        // 2-qubit system, compared against the explicitly assembled matrix.
        let op = {
            let x = Gate::X.matrix();
            let z = Gate::Z.matrix();
            ndarray::linalg::kron(&x, &z)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let amps: Vec<Complex64> = (0..16)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let mut s = StateVector::from_amplitudes(4, amps).unwrap();
        let mut direct = s.clone();

        s.apply_controlled(&op, &[2, 3], &[0, 1], &[false, true])
            .unwrap();

        let mut block = CMatrix::zeros((16, 16));
        for anc in 0..4usize {
            let sub = if anc == 0b01 {
                op.clone()
            } else {
                CMatrix::eye(4)
            };
            for r in 0..4 {
                for c in 0..4 {
                    block[(anc * 4 + r, anc * 4 + c)] = sub[(r, c)];
                }
            }
        }
        direct.apply_matrix(&block).unwrap();

        for (a, b) in s.amplitudes().iter().zip(direct.amplitudes()) {
            assert_close(*a, *b, 1e-12);
        }
    }

    proptest! {
        #[test]
        fn gate_sequences_preserve_norm(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..4usize);
            let mut s = StateVector::zero_state(n).unwrap();
            for _ in 0..12 {
                let q = rng.random_range(0..n);
                match rng.random_range(0..5) {
                    0 => s.apply_gate(&Gate::H, &[q]).unwrap(),
                    1 => s
                        .apply_gate(&Gate::Ry(rng.random_range(0.0..std::f64::consts::TAU)), &[q])
                        .unwrap(),
                    2 => s
                        .apply_gate(&Gate::Rz(rng.random_range(0.0..std::f64::consts::TAU)), &[q])
                        .unwrap(),
                    3 => s.apply_gate(&Gate::S, &[q]).unwrap(),
                    _ if n > 1 => {
                        let p = (q + 1) % n;
                        s.apply_gate(&Gate::Cz, &[q.min(p), q.max(p)]).unwrap();
                    }
                    _ => s.apply_gate(&Gate::X, &[q]).unwrap(),
                }
            }
            prop_assert!((s.norm_sq() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn matrix_application_composes(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..4usize);
            let dim = 1 << n;
            let mut random_matrix = || {
                CMatrix::from_shape_fn((dim, dim), |_| {
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                })
            };
            let u1 = random_matrix();
            let u2 = random_matrix();
            let amps: Vec<Complex64> = (0..dim)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();

            let mut stepwise = StateVector::from_amplitudes(n, amps.clone()).unwrap();
            stepwise.apply_matrix(&u1).unwrap();
            stepwise.apply_matrix(&u2).unwrap();

            let mut fused = StateVector::from_amplitudes(n, amps).unwrap();
            fused.apply_matrix(&u2.dot(&u1)).unwrap();

            for (a, b) in stepwise.amplitudes().iter().zip(fused.amplitudes()) {
                prop_assert!((a - b).norm() < 1e-12);
            }
        }
    }
}
