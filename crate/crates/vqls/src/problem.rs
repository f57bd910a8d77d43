//! Linear-system definition: the system matrix as a coefficient-weighted sum
//! of unitary terms (or a raw, possibly non-unitary matrix), the right-hand
//! side, and the classical ground-truth oracle.
//!
//! A system can be loaded in four modes:
//! - `pauli`: each term is a Pauli label such as `"XZI"`,
//! - `unitary`: each term is an explicit unitary matrix,
//! - `circuit`: each term is a gate sequence,
//! - `matrix`: a single raw matrix, restricted to direct cost evaluation.

use crate::qsim::{adjoint, is_unitary, CMatrix, Gate, QsimError, StateVector};
use ndarray::linalg::kron;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Condition-number estimates beyond this are treated as numerically singular.
pub const SINGULARITY_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("invalid Pauli character '{0}' (expected one of I, X, Y, Z)")]
    InvalidPauliChar(char),
    #[error("empty Pauli label")]
    EmptyPauliLabel,
    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("matrix is {rows}×{cols}, expected square of dimension {expected}")]
    BadMatrixShape {
        rows: usize,
        cols: usize,
        expected: usize,
    },
    #[error("term {index} acts on {found} qubits, expected {expected}")]
    InconsistentTermSize {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("term {0} is not unitary")]
    NonUnitaryTerm(usize),
    #[error("decomposition contains no terms")]
    EmptyDecomposition,
    #[error("right-hand side vector has zero norm")]
    ZeroRhs,
    #[error("right-hand side has length {found}, expected {expected}")]
    RhsDimensionMismatch { found: usize, expected: usize },
    #[error("system matrix is singular or numerically singular (condition estimate {0:.3e})")]
    Singular(f64),
    #[error("simulation error: {0}")]
    Qsim(#[from] QsimError),
    #[error("problem file: {0}")]
    Format(String),
}

pub type ProblemResult<T> = Result<T, ProblemError>;

/// One Pauli word with its coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliTerm {
    pub label: String,
    pub coeff: Complex64,
}

/// One gate application inside a circuit realization.
#[derive(Debug, Clone, PartialEq)]
pub struct GateOp {
    pub gate: Gate,
    pub targets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TermRealization {
    Pauli(String),
    Unitary(CMatrix),
    Circuit(Vec<GateOp>),
}

/// A unitary term `c_k · A_k` of the system decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryTerm {
    pub coeff: Complex64,
    pub realization: TermRealization,
    matrix: CMatrix,
}

impl UnitaryTerm {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemMode {
    Circuit,
    Unitary,
    Pauli,
    Matrix,
}

impl std::fmt::Display for ProblemMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ProblemMode::Circuit => "circuit",
            ProblemMode::Unitary => "unitary",
            ProblemMode::Pauli => "pauli",
            ProblemMode::Matrix => "matrix",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RightHandSide {
    Vector(Vec<Complex64>),
    Circuit(Vec<GateOp>),
}

/// A validated linear system `A·x = b`. Immutable after load; shareable
/// across parallel evaluations.
#[derive(Debug, Clone)]
pub struct LseProblem {
    n_qubits: usize,
    mode: ProblemMode,
    terms: Vec<UnitaryTerm>,
    raw_matrix: Option<CMatrix>,
    rhs: RightHandSide,
    assembled: CMatrix,
    b_state: StateVector,
    u_b: CMatrix,
}

impl LseProblem {
    pub fn from_pauli<S: AsRef<str>>(
        terms: &[(S, Complex64)],
        rhs: RightHandSide,
    ) -> ProblemResult<Self> {
        if terms.is_empty() {
            return Err(ProblemError::EmptyDecomposition);
        }
        let n = terms[0].0.as_ref().len();
        let mut built = Vec::with_capacity(terms.len());
        for (index, (label, coeff)) in terms.iter().enumerate() {
            let label = label.as_ref();
            if label.len() != n {
                return Err(ProblemError::InconsistentTermSize {
                    index,
                    found: label.len(),
                    expected: n,
                });
            }
            let (matrix, _) = parse_pauli(label)?;
            built.push(UnitaryTerm {
                coeff: *coeff,
                realization: TermRealization::Pauli(label.to_string()),
                matrix,
            });
        }
        Self::finish(n, ProblemMode::Pauli, built, None, rhs)
    }

    pub fn from_unitaries(
        terms: &[(CMatrix, Complex64)],
        rhs: RightHandSide,
    ) -> ProblemResult<Self> {
        if terms.is_empty() {
            return Err(ProblemError::EmptyDecomposition);
        }
        let n = qubit_count(terms[0].0.nrows())?;
        let mut built = Vec::with_capacity(terms.len());
        for (index, (matrix, coeff)) in terms.iter().enumerate() {
            let tn = qubit_count(matrix.nrows())?;
            if matrix.nrows() != matrix.ncols() || tn != n {
                return Err(ProblemError::InconsistentTermSize {
                    index,
                    found: tn,
                    expected: n,
                });
            }
            if !is_unitary(matrix, 1e-10) {
                return Err(ProblemError::NonUnitaryTerm(index));
            }
            built.push(UnitaryTerm {
                coeff: *coeff,
                realization: TermRealization::Unitary(matrix.clone()),
                matrix: matrix.clone(),
            });
        }
        Self::finish(n, ProblemMode::Unitary, built, None, rhs)
    }

    pub fn from_circuits(
        n_qubits: usize,
        terms: &[(Vec<GateOp>, Complex64)],
        rhs: RightHandSide,
    ) -> ProblemResult<Self> {
        if terms.is_empty() {
            return Err(ProblemError::EmptyDecomposition);
        }
        let mut built = Vec::with_capacity(terms.len());
        for (ops, coeff) in terms {
            let matrix = circuit_matrix(n_qubits, ops)?;
            built.push(UnitaryTerm {
                coeff: *coeff,
                realization: TermRealization::Circuit(ops.clone()),
                matrix,
            });
        }
        Self::finish(n_qubits, ProblemMode::Circuit, built, None, rhs)
    }

    /// Raw-matrix mode; `matrix` may be non-unitary, and only the direct
    /// evaluation method is permitted downstream.
    pub fn from_matrix(matrix: CMatrix, rhs: RightHandSide) -> ProblemResult<Self> {
        let n = qubit_count(matrix.nrows())?;
        if matrix.nrows() != matrix.ncols() {
            return Err(ProblemError::BadMatrixShape {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
                expected: matrix.nrows(),
            });
        }
        Self::finish(n, ProblemMode::Matrix, Vec::new(), Some(matrix), rhs)
    }

    fn finish(
        n_qubits: usize,
        mode: ProblemMode,
        terms: Vec<UnitaryTerm>,
        raw_matrix: Option<CMatrix>,
        rhs: RightHandSide,
    ) -> ProblemResult<Self> {
        if n_qubits == 0 {
            return Err(ProblemError::Qsim(QsimError::EmptyRegister));
        }
        let dim = 1usize << n_qubits;
        let assembled = match &raw_matrix {
            Some(m) => m.clone(),
            None => {
                let mut acc = CMatrix::zeros((dim, dim));
                for term in &terms {
                    acc = acc + term.matrix() * term.coeff;
                }
                acc
            }
        };
        let (b_state, u_b) = realize_rhs(n_qubits, &rhs)?;
        Ok(Self {
            n_qubits,
            mode,
            terms,
            raw_matrix,
            rhs,
            assembled,
            b_state,
            u_b,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn mode(&self) -> ProblemMode {
        self.mode
    }

    pub fn terms(&self) -> &[UnitaryTerm] {
        &self.terms
    }

    /// Number of decomposition terms `m` (0 in matrix mode).
    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn rhs(&self) -> &RightHandSide {
        &self.rhs
    }

    /// `Σ c_k · A_k`, or the raw matrix in matrix mode.
    pub fn assembled_matrix(&self) -> &CMatrix {
        &self.assembled
    }

    pub fn is_matrix_mode(&self) -> bool {
        self.raw_matrix.is_some()
    }

    /// The normalized state `|b⟩`.
    pub fn b_state(&self) -> &StateVector {
        &self.b_state
    }

    /// Preparation unitary with `U_b|0…0⟩ = |b⟩`.
    pub fn u_b(&self) -> &CMatrix {
        &self.u_b
    }

    pub fn u_b_dagger(&self) -> CMatrix {
        adjoint(&self.u_b)
    }

    /// Dense classical solve of `A·x = b` by LU elimination with partial
    /// pivoting; returns `x/‖x‖`. Rejects singular systems.
    pub fn classical_solution(&self) -> ProblemResult<Vec<Complex64>> {
        let b: Vec<Complex64> = self.b_state.amplitudes().to_vec();
        let (x, condition) = solve_with_condition(&self.assembled, &b)?;
        if condition > SINGULARITY_THRESHOLD {
            return Err(ProblemError::Singular(condition));
        }
        let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm <= 0.0 {
            return Err(ProblemError::ZeroRhs);
        }
        Ok(x.into_iter().map(|z| z / norm).collect())
    }

    /// Squared magnitudes of the normalized classical solution.
    pub fn classical_probabilities(&self) -> ProblemResult<Vec<f64>> {
        Ok(self
            .classical_solution()?
            .iter()
            .map(|z| z.norm_sqr())
            .collect())
    }

    /// True when every coefficient product `c_k·conj(c_l)` is real, which
    /// lets estimators skip imaginary-part circuits for pairwise terms.
    pub fn coefficients(&self) -> Vec<Complex64> {
        self.terms.iter().map(|t| t.coeff).collect()
    }
}

fn qubit_count(dim: usize) -> ProblemResult<usize> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(ProblemError::NotPowerOfTwo(dim));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// Parse a Pauli label into its matrix (Kronecker product, leftmost character
/// acting on qubit 0) and a gate-sequence realization.
pub fn parse_pauli(label: &str) -> ProblemResult<(CMatrix, Vec<GateOp>)> {
    if label.is_empty() {
        return Err(ProblemError::EmptyPauliLabel);
    }
    let mut matrix = CMatrix::eye(1);
    let mut ops = Vec::new();
    for (qubit, ch) in label.chars().enumerate() {
        let gate = match ch {
            'I' => None,
            'X' => Some(Gate::X),
            'Y' => Some(Gate::Y),
            'Z' => Some(Gate::Z),
            other => return Err(ProblemError::InvalidPauliChar(other)),
        };
        let factor = gate.as_ref().map_or_else(|| CMatrix::eye(2), Gate::matrix);
        matrix = kron(&matrix, &factor);
        if let Some(g) = gate {
            ops.push(GateOp {
                gate: g,
                targets: vec![qubit],
            });
        }
    }
    Ok((matrix, ops))
}

/// Unitary of a gate sequence on `n_qubits`, built column by column.
pub fn circuit_matrix(n_qubits: usize, ops: &[GateOp]) -> ProblemResult<CMatrix> {
    let dim = 1usize << n_qubits;
    let mut matrix = CMatrix::zeros((dim, dim));
    for col in 0..dim {
        let mut state = StateVector::basis_state(n_qubits, col)?;
        for op in ops {
            state.apply_gate(&op.gate, &op.targets)?;
        }
        for (row, amp) in state.amplitudes().iter().enumerate() {
            matrix[(row, col)] = *amp;
        }
    }
    Ok(matrix)
}

/// Expand a matrix over the Pauli basis: `c_P = trace(P†·M)/2^n` for all
/// `4^n` labels, dropping coefficients below 1e-12.
pub fn decompose_matrix_to_pauli(matrix: &CMatrix) -> ProblemResult<Vec<PauliTerm>> {
    let n = qubit_count(matrix.nrows())?;
    if matrix.nrows() != matrix.ncols() {
        return Err(ProblemError::BadMatrixShape {
            rows: matrix.nrows(),
            cols: matrix.ncols(),
            expected: matrix.nrows(),
        });
    }
    let dim = matrix.nrows();
    let mut terms = Vec::new();
    let mut label = vec!['I'; n];
    let mut digits = vec![0u8; n];
    loop {
        for (i, &d) in digits.iter().enumerate() {
            label[i] = ['I', 'X', 'Y', 'Z'][d as usize];
        }
        // Pauli strings have one nonzero entry per column: P maps |col⟩ to
        // phase·|row⟩, so trace(P†·M) = Σ_col conj(phase)·M[row, col].
        let mut trace = ZERO;
        for col in 0..dim {
            let (row, phase) = pauli_column_action(&digits, n, col);
            trace += phase.conj() * matrix[(row, col)];
        }
        let coeff = trace / dim as f64;
        if coeff.norm() >= 1e-12 {
            terms.push(PauliTerm {
                label: label.iter().collect(),
                coeff,
            });
        }
        // next label in base-4 counting
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(terms);
            }
            pos -= 1;
            if digits[pos] < 3 {
                digits[pos] += 1;
                break;
            }
            digits[pos] = 0;
        }
    }
}

/// Image of basis state `col` under the Pauli string given as base-4 digits
/// (0=I, 1=X, 2=Y, 3=Z): returns (row, phase) with `P|col⟩ = phase·|row⟩`.
fn pauli_column_action(digits: &[u8], n: usize, col: usize) -> (usize, Complex64) {
    let mut row = col;
    let mut phase = ONE;
    for (qubit, &d) in digits.iter().enumerate() {
        let pos = n - 1 - qubit;
        let bit = (col >> pos) & 1;
        match d {
            0 => {}
            1 => row ^= 1 << pos,
            2 => {
                // Y: |0⟩ ↦ i|1⟩, |1⟩ ↦ −i|0⟩
                row ^= 1 << pos;
                phase *= if bit == 0 {
                    Complex64::new(0.0, 1.0)
                } else {
                    Complex64::new(0.0, -1.0)
                };
            }
            _ => {
                if bit == 1 {
                    phase = -phase;
                }
            }
        }
    }
    (row, phase)
}

/// Build `|b⟩` and a preparation unitary `U_b` whose first column is `b`.
fn realize_rhs(n_qubits: usize, rhs: &RightHandSide) -> ProblemResult<(StateVector, CMatrix)> {
    let dim = 1usize << n_qubits;
    match rhs {
        RightHandSide::Vector(v) => {
            if v.len() != dim {
                return Err(ProblemError::RhsDimensionMismatch {
                    found: v.len(),
                    expected: dim,
                });
            }
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm <= 0.0 {
                return Err(ProblemError::ZeroRhs);
            }
            if (norm - 1.0).abs() > 1e-10 {
                log::warn!("right-hand side has norm {norm}; normalizing on load");
            }
            let normalized: Vec<Complex64> = v.iter().map(|z| z / norm).collect();
            let u_b = unitary_from_first_column(&normalized);
            let state = StateVector::from_amplitudes(n_qubits, normalized)?;
            Ok((state, u_b))
        }
        RightHandSide::Circuit(ops) => {
            let u_b = circuit_matrix(n_qubits, ops)?;
            let mut state = StateVector::zero_state(n_qubits)?;
            for op in ops {
                state.apply_gate(&op.gate, &op.targets)?;
            }
            Ok((state, u_b))
        }
    }
}

/// Complete a unit vector to a unitary matrix by Gram–Schmidt over the
/// standard basis; only the first column is contractual.
pub(crate) fn unitary_from_first_column(first: &[Complex64]) -> CMatrix {
    let dim = first.len();
    let mut columns: Vec<Vec<Complex64>> = vec![first.to_vec()];
    for candidate in 0..dim {
        if columns.len() == dim {
            break;
        }
        let mut v = vec![ZERO; dim];
        v[candidate] = ONE;
        for col in &columns {
            let overlap: Complex64 = col.iter().zip(&v).map(|(c, x)| c.conj() * x).sum();
            for (vi, ci) in v.iter_mut().zip(col) {
                *vi -= overlap * ci;
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-10 {
            for vi in v.iter_mut() {
                *vi /= norm;
            }
            columns.push(v);
        }
    }
    let mut u = CMatrix::zeros((dim, dim));
    for (c, col) in columns.iter().enumerate() {
        for (r, z) in col.iter().enumerate() {
            u[(r, c)] = *z;
        }
    }
    u
}

/// LU solve with partial pivoting, plus a one-norm condition estimate from
/// the explicitly formed inverse (the systems here are desk-scale).
fn solve_with_condition(a: &CMatrix, b: &[Complex64]) -> ProblemResult<(Vec<Complex64>, f64)> {
    let dim = a.nrows();
    let lu = LuFactors::new(a)?;
    let x = lu.solve(b);
    let mut inverse_norm: f64 = 0.0;
    for col in 0..dim {
        let mut e = vec![ZERO; dim];
        e[col] = ONE;
        let inv_col = lu.solve(&e);
        // one-norm of the inverse: max column sum
        let col_sum: f64 = inv_col.iter().map(|z| z.norm()).sum();
        inverse_norm = inverse_norm.max(col_sum);
    }
    let a_norm: f64 = (0..dim)
        .map(|c| (0..dim).map(|r| a[(r, c)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    Ok((x, a_norm * inverse_norm))
}

struct LuFactors {
    lu: CMatrix,
    pivots: Vec<usize>,
}

impl LuFactors {
    fn new(a: &CMatrix) -> ProblemResult<Self> {
        let dim = a.nrows();
        let mut lu = a.clone();
        let mut pivots = Vec::with_capacity(dim);
        for col in 0..dim {
            let mut pivot = col;
            let mut best = lu[(col, col)].norm();
            for row in col + 1..dim {
                let mag = lu[(row, col)].norm();
                if mag > best {
                    best = mag;
                    pivot = row;
                }
            }
            if best == 0.0 {
                return Err(ProblemError::Singular(f64::INFINITY));
            }
            pivots.push(pivot);
            if pivot != col {
                for k in 0..dim {
                    let tmp = lu[(col, k)];
                    lu[(col, k)] = lu[(pivot, k)];
                    lu[(pivot, k)] = tmp;
                }
            }
            let diag = lu[(col, col)];
            for row in col + 1..dim {
                let factor = lu[(row, col)] / diag;
                lu[(row, col)] = factor;
                for k in col + 1..dim {
                    let sub = factor * lu[(col, k)];
                    lu[(row, k)] -= sub;
                }
            }
        }
        Ok(Self { lu, pivots })
    }

    fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let dim = b.len();
        let mut y = b.to_vec();
        for (col, &pivot) in self.pivots.iter().enumerate() {
            y.swap(col, pivot);
        }
        for col in 0..dim {
            for row in col + 1..dim {
                let sub = self.lu[(row, col)] * y[col];
                y[row] -= sub;
            }
        }
        for col in (0..dim).rev() {
            for k in col + 1..dim {
                let sub = self.lu[(col, k)] * y[k];
                y[col] -= sub;
            }
            y[col] /= self.lu[(col, col)];
        }
        y
    }
}

// ---------------------------------------------------------------------------
// JSON problem-file format
// ---------------------------------------------------------------------------

/// A complex number serialized as `[re, im]`; bare reals are accepted on read.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JsonComplex {
    Pair([f64; 2]),
    Real(f64),
}

impl From<JsonComplex> for Complex64 {
    fn from(value: JsonComplex) -> Self {
        match value {
            JsonComplex::Pair([re, im]) => Complex64::new(re, im),
            JsonComplex::Real(re) => Complex64::new(re, 0.0),
        }
    }
}

impl From<Complex64> for JsonComplex {
    fn from(value: Complex64) -> Self {
        JsonComplex::Pair([value.re, value.im])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JsonGate {
    pub gate: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JsonTerm {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pauli: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unitary: Option<Vec<Vec<JsonComplex>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circuit: Option<Vec<JsonGate>>,
    pub coeff: JsonComplex,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum JsonRhs {
    #[serde(rename = "vector")]
    Vector(Vec<JsonComplex>),
    #[serde(rename = "circuit")]
    Circuit(Vec<JsonGate>),
}

/// On-disk problem document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemFile {
    pub n: usize,
    pub mode: ProblemMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<JsonTerm>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<JsonComplex>>>,
    pub b: JsonRhs,
}

fn json_matrix(rows: &[Vec<JsonComplex>], expected: usize) -> ProblemResult<CMatrix> {
    if rows.len() != expected || rows.iter().any(|r| r.len() != expected) {
        return Err(ProblemError::BadMatrixShape {
            rows: rows.len(),
            cols: rows.first().map_or(0, Vec::len),
            expected,
        });
    }
    Ok(CMatrix::from_shape_fn((expected, expected), |(r, c)| {
        rows[r][c].into()
    }))
}

fn json_gate(spec: &JsonGate) -> ProblemResult<GateOp> {
    let gate =
        match spec.gate.as_str() {
            "H" => Gate::H,
            "X" => Gate::X,
            "Y" => Gate::Y,
            "Z" => Gate::Z,
            "S" => Gate::S,
            "Sdg" => Gate::Sdg,
            "Ry" => Gate::Ry(spec.angle.ok_or_else(|| {
                ProblemError::Format("gate Ry requires an \"angle\" field".into())
            })?),
            "Rz" => Gate::Rz(spec.angle.ok_or_else(|| {
                ProblemError::Format("gate Rz requires an \"angle\" field".into())
            })?),
            "Rot" => {
                let [a0, a1, a2] = spec.angles.ok_or_else(|| {
                    ProblemError::Format("gate Rot requires an \"angles\" triple".into())
                })?;
                Gate::RotZyz(a0, a1, a2)
            }
            "CZ" => Gate::Cz,
            other => {
                return Err(ProblemError::Format(format!("unknown gate \"{other}\"")));
            }
        };
    let targets = match (&spec.targets, spec.target) {
        (Some(list), None) => list.clone(),
        (None, Some(single)) => vec![single],
        _ => {
            return Err(ProblemError::Format(format!(
                "gate \"{}\" needs exactly one of \"target\" or \"targets\"",
                spec.gate
            )));
        }
    };
    Ok(GateOp { gate, targets })
}

fn json_rhs(spec: &JsonRhs) -> ProblemResult<RightHandSide> {
    Ok(match spec {
        JsonRhs::Vector(v) => RightHandSide::Vector(v.iter().map(|&z| z.into()).collect()),
        JsonRhs::Circuit(gates) => {
            RightHandSide::Circuit(gates.iter().map(json_gate).collect::<ProblemResult<_>>()?)
        }
    })
}

impl LseProblem {
    /// Load and validate a problem from its JSON document.
    pub fn from_json(text: &str) -> ProblemResult<Self> {
        let file: ProblemFile =
            serde_json::from_str(text).map_err(|e| ProblemError::Format(e.to_string()))?;
        Self::from_file(&file)
    }

    pub fn from_file(file: &ProblemFile) -> ProblemResult<Self> {
        let dim = 1usize
            .checked_shl(file.n as u32)
            .ok_or(ProblemError::NotPowerOfTwo(0))?;
        let rhs = json_rhs(&file.b)?;
        match file.mode {
            ProblemMode::Matrix => {
                let rows = file.matrix.as_ref().ok_or_else(|| {
                    ProblemError::Format("matrix mode requires a \"matrix\" field".into())
                })?;
                Self::from_matrix(json_matrix(rows, dim)?, rhs)
            }
            mode => {
                let terms = file.terms.as_ref().ok_or_else(|| {
                    ProblemError::Format(format!("{mode} mode requires a \"terms\" field"))
                })?;
                match mode {
                    ProblemMode::Pauli => {
                        let parsed: Vec<(String, Complex64)> = terms
                            .iter()
                            .map(|t| {
                                t.pauli
                                    .clone()
                                    .map(|p| (p, t.coeff.into()))
                                    .ok_or_else(|| missing_payload("pauli"))
                            })
                            .collect::<ProblemResult<_>>()?;
                        Self::from_pauli(&parsed, rhs)
                    }
                    ProblemMode::Unitary => {
                        let parsed: Vec<(CMatrix, Complex64)> = terms
                            .iter()
                            .map(|t| {
                                let rows = t
                                    .unitary
                                    .as_ref()
                                    .ok_or_else(|| missing_payload("unitary"))?;
                                Ok((json_matrix(rows, dim)?, t.coeff.into()))
                            })
                            .collect::<ProblemResult<_>>()?;
                        Self::from_unitaries(&parsed, rhs)
                    }
                    ProblemMode::Circuit => {
                        let parsed: Vec<(Vec<GateOp>, Complex64)> = terms
                            .iter()
                            .map(|t| {
                                let gates = t
                                    .circuit
                                    .as_ref()
                                    .ok_or_else(|| missing_payload("circuit"))?;
                                let ops: Vec<GateOp> =
                                    gates.iter().map(json_gate).collect::<ProblemResult<_>>()?;
                                Ok((ops, t.coeff.into()))
                            })
                            .collect::<ProblemResult<_>>()?;
                        Self::from_circuits(file.n, &parsed, rhs)
                    }
                    ProblemMode::Matrix => unreachable!(),
                }
            }
        }
    }
}

fn missing_payload(field: &str) -> ProblemError {
    ProblemError::Format(format!("term is missing its \"{field}\" payload"))
}
