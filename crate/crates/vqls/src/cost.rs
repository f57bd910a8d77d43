//! Cost-function machinery: pairwise term estimators, the four evaluation
//! methods (direct, Hadamard test, Hadamard-overlap test, coherent), the
//! symmetry-reduced norm, the re-defined normalized composition, and
//! evaluation-budget accounting.
//!
//! Writing `|ψ⟩ = A·V(α)|0…0⟩`, the composed costs are
//!
//! ```text
//! C_global = 1 − |⟨b|ψ⟩|² / ⟨ψ|ψ⟩
//! C_local  = 1 − S_L       / ⟨ψ|ψ⟩,   S_L = (1/n)·Σ_j ⟨ψ|U_b(|0⟩⟨0|_j ⊗ I)U_b†|ψ⟩
//! ```
//!
//! The leading 1 is exact and never divided by the norm estimate, so both
//! costs converge to exactly 0 at the solution. Estimators exploit
//! `β_kl = conj(β_lk)` (and the analogous symmetry for overlap and local
//! terms) to evaluate only the upper triangle, and they skip imaginary-part
//! circuits for every pair whose coefficient product `c_k·conj(c_l)` is real.

// triangle sweeps over (k, l) term pairs read clearest with explicit indices
#![allow(clippy::needless_range_loop)]

use crate::ansatz::VariationalForm;
use crate::problem::{unitary_from_first_column, LseProblem};
use crate::qsim::{adjoint, CMatrix, Gate, QsimResult, StateVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Coefficient products with an imaginary part at or below this are treated
/// as real, letting the pairwise estimators skip imaginary-part circuits.
pub const REAL_COEFF_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    Global,
    Local,
}

impl std::fmt::Display for CostKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CostKind::Global => "global",
            CostKind::Local => "local",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Direct,
    Hadamard,
    Overlap,
    Coherent,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Direct => "direct",
            Method::Hadamard => "hadamard",
            Method::Overlap => "overlap",
            Method::Coherent => "coherent",
        })
    }
}

/// Exact expectation values, or finite-sample estimates with the given shot
/// count per circuit. The direct method is classical state evolution and
/// always yields analytic values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shots {
    Analytic,
    Count(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSpec {
    pub kind: CostKind,
    pub method: Method,
    pub shots: Shots,
}

impl CostSpec {
    pub fn new(kind: CostKind, method: Method, shots: Shots) -> Self {
        Self {
            kind,
            method,
            shots,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("method \"{0}\" supports the global cost kind only")]
    MethodRequiresGlobal(Method),
    #[error("matrix-mode problems support only the direct evaluation method")]
    MatrixModeRequiresDirect,
    #[error("ansatz acts on {found} qubits, problem has {expected}")]
    QubitMismatch { found: usize, expected: usize },
    #[error("term index {index} out of range for {count} terms")]
    BadTermIndex { index: usize, count: usize },
    #[error("{kind} cost norm estimate {norm} is not positive; the decomposition annihilates the ansatz state")]
    DegenerateNorm { norm: f64, kind: CostKind },
    #[error("simulation error: {0}")]
    Qsim(#[from] crate::qsim::QsimError),
}

pub type CostResult<T> = Result<T, CostError>;

/// Count of simulator circuit executions and the widest register touched.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExecutionStats {
    pub circuits: u64,
    pub widest_register: usize,
}

impl ExecutionStats {
    fn record(&mut self, qubits: usize) {
        self.circuits += 1;
        self.widest_register = self.widest_register.max(qubits);
    }
}

/// Closed-form circuit and qubit requirements for one full cost evaluation,
/// split into the norm stage and the raw-cost stage. `circuits_*` totals
/// include the imaginary-part circuits reported separately alongside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EvaluationBudget {
    pub circuits_norm: u64,
    pub norm_imaginary: u64,
    pub circuits_raw_cost: u64,
    pub raw_imaginary: u64,
    pub qubits_required: usize,
    pub imaginary_doubling_applied: bool,
}

impl EvaluationBudget {
    pub fn norm_base(&self) -> u64 {
        self.circuits_norm - self.norm_imaginary
    }

    pub fn raw_base(&self) -> u64 {
        self.circuits_raw_cost - self.raw_imaginary
    }

    pub fn total(&self) -> u64 {
        self.circuits_norm + self.circuits_raw_cost
    }
}

fn product_is_real(ck: Complex64, cl: Complex64) -> bool {
    (ck * cl.conj()).im.abs() <= REAL_COEFF_TOL
}

fn nonreal_pair_count(coefficients: &[Complex64]) -> u64 {
    let m = coefficients.len();
    let mut count = 0;
    for k in 0..m {
        for l in k + 1..m {
            if !product_is_real(coefficients[k], coefficients[l]) {
                count += 1;
            }
        }
    }
    count
}

fn ceil_log2(m: usize) -> usize {
    if m <= 1 {
        0
    } else {
        (usize::BITS - (m - 1).leading_zeros()) as usize
    }
}

/// Exact per-evaluation circuit counts and register widths for a decomposition
/// of `m` terms on `n` qubits with the given coefficients.
///
/// Pairwise estimators (norm, overlap, local) add one imaginary circuit per
/// strictly-upper-triangular pair whose coefficient product is non-real; that
/// skip is exact because those quantities enter the costs only through
/// `Re(c_k·conj(c_l)·⟨…⟩)`. The global Hadamard method instead feeds the full
/// complex `μ_k` into `|Σ_k c_k μ_k|²`, so its `m` imaginary circuits are
/// always required: `V(α)` makes every `μ_k` complex even for real problem
/// data.
pub fn count_evaluations(
    method: Method,
    kind: CostKind,
    m: usize,
    n: usize,
    coefficients: &[Complex64],
) -> CostResult<EvaluationBudget> {
    if kind == CostKind::Local && matches!(method, Method::Overlap | Method::Coherent) {
        return Err(CostError::MethodRequiresGlobal(method));
    }
    let m64 = m as u64;
    let n64 = n as u64;
    let nonreal = nonreal_pair_count(coefficients);

    let (norm_base, norm_imag) = match method {
        Method::Direct => (1, 0),
        _ => (m64 * m64.saturating_sub(1) / 2, nonreal),
    };
    let (raw_base, raw_imag) = match (kind, method) {
        (_, Method::Direct) => (1, 0),
        (CostKind::Global, Method::Hadamard) => (m64, m64),
        (CostKind::Global, Method::Overlap) => (m64 * (m64 + 1) / 2, nonreal),
        (CostKind::Global, Method::Coherent) => (1, 0),
        (CostKind::Local, Method::Hadamard) => (n64 * m64 * (m64 + 1) / 2, n64 * nonreal),
        (CostKind::Local, _) => unreachable!("rejected above"),
    };
    let qubits_required = match method {
        Method::Direct => n,
        Method::Hadamard => n + 1,
        Method::Overlap => 2 * n + 1,
        Method::Coherent => n + ceil_log2(m),
    };
    Ok(EvaluationBudget {
        circuits_norm: norm_base + norm_imag,
        norm_imaginary: norm_imag,
        circuits_raw_cost: raw_base + raw_imag,
        raw_imaginary: raw_imag,
        qubits_required,
        imaginary_doubling_applied: norm_imag + raw_imag > 0,
    })
}

/// Compose a raw numerator estimate with a norm estimate. The constant 1 is
/// exact and never divided by the norm.
pub fn compose_cost(raw: f64, norm: f64, kind: CostKind) -> CostResult<f64> {
    // a NaN norm counts as degenerate
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(norm > 0.0) {
        return Err(CostError::DegenerateNorm { norm, kind });
    }
    Ok(1.0 - raw / norm)
}

/// One factor of a controlled operator `W`: `matrix` acting on the listed
/// system qubits, applied under the ancilla control.
#[derive(Debug, Clone)]
pub struct ControlledFactor {
    pub matrix: CMatrix,
    pub targets: Vec<usize>,
}

impl ControlledFactor {
    pub fn full(matrix: &CMatrix, n_qubits: usize) -> Self {
        Self {
            matrix: matrix.clone(),
            targets: (0..n_qubits).collect(),
        }
    }
}

/// Final state of a Hadamard-test circuit on `n+1` qubits: ancilla on qubit 0
/// prepared in `(|0⟩ + |1⟩)/√2` (with an extra `S†` phase for the imaginary
/// part), the prepared system state on qubits `1..=n`, the factors of `W`
/// applied in order under ancilla control, and a final ancilla `H`.
/// `P(anc=0) − P(anc=1)` of the result estimates `Re⟨φ|W|φ⟩` (`Im` with the
/// phase inserted).
pub fn hadamard_test_state(
    system: &StateVector,
    factors: &[ControlledFactor],
    imaginary: bool,
) -> QsimResult<StateVector> {
    let n = system.n_qubits();
    let dim = system.dim();
    let branch_phase = if imaginary {
        Complex64::new(0.0, -1.0)
    } else {
        Complex64::new(1.0, 0.0)
    };
    let scale = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut amps = vec![ZERO; 2 * dim];
    for (s, &a) in system.amplitudes().iter().enumerate() {
        amps[s] = a * scale;
        amps[dim | s] = a * scale * branch_phase;
    }
    let mut state = StateVector::from_amplitudes(n + 1, amps)?;
    for factor in factors {
        let shifted: Vec<usize> = factor.targets.iter().map(|&q| q + 1).collect();
        state.apply_controlled(&factor.matrix, &shifted, &[0], &[true])?;
    }
    state.apply_gate(&Gate::H, &[0])?;
    Ok(state)
}

/// Sign of a Hadamard-test outcome: `+1` on ancilla 0, `−1` on ancilla 1.
fn ancilla_sign(n_system: usize) -> impl Fn(usize) -> f64 {
    move |idx| if idx >> n_system == 0 { 1.0 } else { -1.0 }
}

/// Expectation of a real-valued function of the measured basis state: exact
/// in analytic mode, the empirical mean of `shots` draws otherwise.
fn measure_diagonal<R: Rng>(
    state: &StateVector,
    weight: impl Fn(usize) -> f64,
    shots: Shots,
    rng: &mut R,
) -> QsimResult<f64> {
    match shots {
        Shots::Analytic => Ok(state
            .probabilities()?
            .iter()
            .enumerate()
            .map(|(idx, p)| p * weight(idx))
            .sum()),
        Shots::Count(count) => {
            let histogram = state.sample(count, rng)?;
            Ok(histogram
                .iter()
                .enumerate()
                .map(|(idx, &hits)| hits as f64 * weight(idx))
                .sum::<f64>()
                / count as f64)
        }
    }
}

/// One-ancilla interference estimate of `Re⟨φ|W|φ⟩` (or `Im` with the
/// ancilla phase gate `S†` inserted), where `|φ⟩` is the given prepared
/// system state and `W` is the ordered product of the controlled factors.
pub fn hadamard_test<R: Rng>(
    system: &StateVector,
    factors: &[ControlledFactor],
    imaginary: bool,
    shots: Shots,
    rng: &mut R,
) -> QsimResult<f64> {
    let state = hadamard_test_state(system, factors, imaginary)?;
    measure_diagonal(&state, ancilla_sign(system.n_qubits()), shots, rng)
}

/// Final state of the Hadamard-overlap circuit on `2n+1` qubits: register 1
/// carries the `branch_zero`/`branch_one` images of the prepared state picked
/// by the ancilla, register 2 carries `|b⟩`, followed by a transversal
/// Bell-basis rotation (CNOT + H per qubit pair) and the ancilla measurement
/// rotation. Neither the state preparation nor `U_b` is controlled.
fn overlap_test_state(
    prepared: &StateVector,
    b_state: &StateVector,
    branch_zero: &CMatrix,
    branch_one: &CMatrix,
    imaginary: bool,
) -> QsimResult<StateVector> {
    let n = prepared.n_qubits();
    let branch_phase = if imaginary {
        Complex64::new(0.0, -1.0)
    } else {
        Complex64::new(1.0, 0.0)
    };
    let scale = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut amps = vec![ZERO; 2 << (2 * n)];
    for (x, &ax) in prepared.amplitudes().iter().enumerate() {
        for (y, &by) in b_state.amplitudes().iter().enumerate() {
            let joint = ax * by * scale;
            amps[(x << n) | y] = joint;
            amps[(1 << (2 * n)) | (x << n) | y] = joint * branch_phase;
        }
    }
    let mut state = StateVector::from_amplitudes(2 * n + 1, amps)?;
    let reg1: Vec<usize> = (1..=n).collect();
    state.apply_controlled(branch_zero, &reg1, &[0], &[false])?;
    state.apply_controlled(branch_one, &reg1, &[0], &[true])?;
    let x_matrix = Gate::X.matrix();
    for i in 0..n {
        state.apply_controlled(&x_matrix, &[1 + n + i], &[1 + i], &[true])?;
        state.apply_gate(&Gate::H, &[1 + i])?;
    }
    state.apply_gate(&Gate::H, &[0])?;
    Ok(state)
}

/// Parity post-processing for the overlap circuit: `(−1)^(a + Σ_i x_i·y_i)`.
fn overlap_sign(n: usize) -> impl Fn(usize) -> f64 {
    let reg_mask = (1usize << n) - 1;
    move |idx| {
        let a = (idx >> (2 * n)) & 1;
        let x = (idx >> n) & reg_mask;
        let y = idx & reg_mask;
        if (a as u32 + (x & y).count_ones()).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }
}

/// Estimated pairwise term values for one parameter set, in diagnostic form:
/// both parts are evaluated everywhere, and lower-triangle entries are filled
/// by conjugation so the Hermitian symmetries `β_kl = conj(β_lk)` and
/// `γ_kl = conj(γ_lk)` hold exactly.
#[derive(Debug, Clone)]
pub struct TermEstimates {
    /// `β_kl = ⟨0|V†·A_l†·A_k·V|0⟩`
    pub beta: Vec<Vec<Complex64>>,
    /// `μ_k = ⟨b|A_k·V|0⟩`
    pub mu: Vec<Complex64>,
    /// `γ_kl = μ_k·conj(μ_l)`, estimated from overlap circuits
    pub gamma: Vec<Vec<Complex64>>,
    /// `δ_kl^(j) = ⟨0|V†·A_l†·U_b·Z_j·U_b†·A_k·V|0⟩`, indexed `[k][l][j]`
    pub delta: Vec<Vec<Vec<Complex64>>>,
}

/// Norm and raw numerator estimates with their composition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub norm: f64,
    pub raw: f64,
    pub cost: f64,
}

/// Evaluates costs for one problem/ansatz pair, tracking every circuit
/// execution. All estimators reduce their terms in a fixed summation order,
/// so results are reproducible for a given construction seed.
pub struct CostEvaluator<'a> {
    problem: &'a LseProblem,
    form: &'a dyn VariationalForm,
    spec: CostSpec,
    u_b_dagger: CMatrix,
    term_adjoints: Vec<CMatrix>,
    stats: ExecutionStats,
    rng: ChaCha8Rng,
}

impl<'a> CostEvaluator<'a> {
    pub fn new(
        problem: &'a LseProblem,
        form: &'a dyn VariationalForm,
        spec: CostSpec,
        seed: u64,
    ) -> CostResult<Self> {
        if spec.kind == CostKind::Local && matches!(spec.method, Method::Overlap | Method::Coherent)
        {
            return Err(CostError::MethodRequiresGlobal(spec.method));
        }
        if problem.is_matrix_mode() && spec.method != Method::Direct {
            return Err(CostError::MatrixModeRequiresDirect);
        }
        if form.n_qubits() != problem.n_qubits() {
            return Err(CostError::QubitMismatch {
                found: form.n_qubits(),
                expected: problem.n_qubits(),
            });
        }
        let term_adjoints = problem
            .terms()
            .iter()
            .map(|t| adjoint(t.matrix()))
            .collect();
        Ok(Self {
            problem,
            form,
            spec,
            u_b_dagger: problem.u_b_dagger(),
            term_adjoints,
            stats: ExecutionStats::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn spec(&self) -> CostSpec {
        self.spec
    }

    pub fn stats(&self) -> ExecutionStats {
        self.stats
    }

    pub fn reset_stats(&mut self) {
        self.stats = ExecutionStats::default();
    }

    /// Closed-form budget for one full evaluation with this configuration.
    pub fn budget(&self) -> EvaluationBudget {
        count_evaluations(
            self.spec.method,
            self.spec.kind,
            self.problem.term_count(),
            self.problem.n_qubits(),
            &self.problem.coefficients(),
        )
        .expect("spec combination validated at construction")
    }

    fn check_term(&self, index: usize) -> CostResult<()> {
        let count = self.problem.term_count();
        if index >= count {
            return Err(CostError::BadTermIndex { index, count });
        }
        Ok(())
    }

    fn n_qubits(&self) -> usize {
        self.problem.n_qubits()
    }

    fn ansatz_state(&self, angles: &[f64]) -> CostResult<StateVector> {
        Ok(self.form.prepare(angles)?)
    }

    fn ansatz_matrix(&self, angles: &[f64]) -> CostResult<CMatrix> {
        let n = self.n_qubits();
        let dim = 1usize << n;
        let mut matrix = CMatrix::zeros((dim, dim));
        for col in 0..dim {
            let mut state = StateVector::basis_state(n, col)?;
            self.form.apply(angles, &mut state)?;
            for (row, amp) in state.amplitudes().iter().enumerate() {
                matrix[(row, col)] = *amp;
            }
        }
        Ok(matrix)
    }

    /// Run one measured circuit: record it, then reduce analytically or from
    /// `shots` samples.
    fn measure(&mut self, state: &StateVector, weight: impl Fn(usize) -> f64) -> CostResult<f64> {
        self.stats.record(state.n_qubits());
        Ok(measure_diagonal(
            state,
            weight,
            self.spec.shots,
            &mut self.rng,
        )?)
    }

    fn hadamard(
        &mut self,
        system: &StateVector,
        factors: &[ControlledFactor],
        imaginary: bool,
    ) -> CostResult<f64> {
        let state = hadamard_test_state(system, factors, imaginary)?;
        self.measure(&state, ancilla_sign(system.n_qubits()))
    }

    fn beta_factors(&self, k: usize, l: usize) -> Vec<ControlledFactor> {
        let n = self.n_qubits();
        vec![
            ControlledFactor::full(self.problem.terms()[k].matrix(), n),
            ControlledFactor::full(&self.term_adjoints[l], n),
        ]
    }

    /// `β_kl = ⟨0|V†A_l†A_kV|0⟩`. `k = l` short-circuits to exactly 1 with
    /// zero circuit cost; `k > l` is filled as `conj(β_lk)`.
    pub fn beta(&mut self, angles: &[f64], k: usize, l: usize) -> CostResult<Complex64> {
        self.check_term(k)?;
        self.check_term(l)?;
        if k == l {
            return Ok(Complex64::new(1.0, 0.0));
        }
        if k > l {
            return Ok(self.beta(angles, l, k)?.conj());
        }
        let system = self.ansatz_state(angles)?;
        let factors = self.beta_factors(k, l);
        let re = self.hadamard(&system, &factors, false)?;
        let im = self.hadamard(&system, &factors, true)?;
        Ok(Complex64::new(re, im))
    }

    fn mu_factors(&self, k: usize, v_matrix: &CMatrix) -> Vec<ControlledFactor> {
        let n = self.n_qubits();
        vec![
            ControlledFactor::full(v_matrix, n),
            ControlledFactor::full(self.problem.terms()[k].matrix(), n),
            ControlledFactor::full(&self.u_b_dagger, n),
        ]
    }

    fn mu_with_matrix(&mut self, v_matrix: &CMatrix, k: usize) -> CostResult<Complex64> {
        let zero = StateVector::zero_state(self.n_qubits())?;
        let factors = self.mu_factors(k, v_matrix);
        let re = self.hadamard(&zero, &factors, false)?;
        let im = self.hadamard(&zero, &factors, true)?;
        Ok(Complex64::new(re, im))
    }

    /// `μ_k = ⟨b|A_kV|0⟩ = ⟨0|U_b†A_kV|0⟩`, via Hadamard tests with
    /// controlled `V` and controlled `U_b†`. Both parts are always evaluated:
    /// the global cost consumes `μ_k` as a full complex value.
    pub fn mu(&mut self, angles: &[f64], k: usize) -> CostResult<Complex64> {
        self.check_term(k)?;
        let v_matrix = self.ansatz_matrix(angles)?;
        self.mu_with_matrix(&v_matrix, k)
    }

    fn delta_factors(&self, k: usize, l: usize, j: usize) -> Vec<ControlledFactor> {
        let n = self.n_qubits();
        vec![
            ControlledFactor::full(self.problem.terms()[k].matrix(), n),
            ControlledFactor::full(&self.u_b_dagger, n),
            ControlledFactor {
                matrix: Gate::Z.matrix(),
                targets: vec![j],
            },
            ControlledFactor::full(self.problem.u_b(), n),
            ControlledFactor::full(&self.term_adjoints[l], n),
        ]
    }

    /// `⟨ψ|ψ⟩`. Direct mode evolves the state once; otherwise the
    /// symmetry-reduced Hadamard form
    /// `Σ_k |c_k|² + 2·Σ_k Σ_{l>k} Re(c_k·conj(c_l)·β_kl)`
    /// is evaluated, skipping imaginary circuits for real products.
    pub fn norm_psi(&mut self, angles: &[f64]) -> CostResult<f64> {
        if self.spec.method == Method::Direct {
            let mut psi = self.ansatz_state(angles)?;
            psi.apply_matrix(self.problem.assembled_matrix())?;
            self.stats.record(self.n_qubits());
            return Ok(psi.norm_sq());
        }
        let coeffs = self.problem.coefficients();
        let system = self.ansatz_state(angles)?;
        let mut total: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
        for k in 0..coeffs.len() {
            for l in k + 1..coeffs.len() {
                let product = coeffs[k] * coeffs[l].conj();
                let factors = self.beta_factors(k, l);
                let re = self.hadamard(&system, &factors, false)?;
                let im = if product_is_real(coeffs[k], coeffs[l]) {
                    0.0
                } else {
                    self.hadamard(&system, &factors, true)?
                };
                total += 2.0 * (product * Complex64::new(re, im)).re;
            }
        }
        Ok(total)
    }

    /// `|⟨b|ψ⟩|²` by the configured method.
    pub fn raw_global(&mut self, angles: &[f64]) -> CostResult<f64> {
        match self.spec.method {
            Method::Direct => {
                let mut psi = self.ansatz_state(angles)?;
                psi.apply_matrix(self.problem.assembled_matrix())?;
                self.stats.record(self.n_qubits());
                let overlap = self.problem.b_state().inner_product(&psi)?;
                Ok(overlap.norm_sqr())
            }
            Method::Hadamard => {
                let coeffs = self.problem.coefficients();
                let v_matrix = self.ansatz_matrix(angles)?;
                let mut sum = ZERO;
                for (k, c) in coeffs.iter().enumerate() {
                    sum += c * self.mu_with_matrix(&v_matrix, k)?;
                }
                Ok(sum.norm_sqr())
            }
            Method::Overlap => self.raw_global_overlap(angles),
            Method::Coherent => self.raw_global_coherent(angles),
        }
    }

    fn gamma_circuit(
        &mut self,
        prepared: &StateVector,
        k: usize,
        l: usize,
        imaginary: bool,
    ) -> CostResult<f64> {
        let n = self.n_qubits();
        let state = overlap_test_state(
            prepared,
            self.problem.b_state(),
            self.problem.terms()[l].matrix(),
            self.problem.terms()[k].matrix(),
            imaginary,
        )?;
        self.measure(&state, overlap_sign(n))
    }

    /// One Hadamard-overlap circuit estimating `Re(γ_kl)` (or `Im` with the
    /// ancilla phase modification) on `2n+1` qubits, with no controlled
    /// application of `V` or `U_b`.
    pub fn overlap_test(
        &mut self,
        angles: &[f64],
        k: usize,
        l: usize,
        imaginary: bool,
    ) -> CostResult<f64> {
        self.check_term(k)?;
        self.check_term(l)?;
        let prepared = self.ansatz_state(angles)?;
        self.gamma_circuit(&prepared, k, l, imaginary)
    }

    fn raw_global_overlap(&mut self, angles: &[f64]) -> CostResult<f64> {
        let coeffs = self.problem.coefficients();
        let prepared = self.ansatz_state(angles)?;
        let mut total = 0.0;
        for k in 0..coeffs.len() {
            let gamma_kk = self.gamma_circuit(&prepared, k, k, false)?;
            total += coeffs[k].norm_sqr() * gamma_kk;
        }
        for k in 0..coeffs.len() {
            for l in k + 1..coeffs.len() {
                let product = coeffs[k] * coeffs[l].conj();
                let re = self.gamma_circuit(&prepared, k, l, false)?;
                let im = if product_is_real(coeffs[k], coeffs[l]) {
                    0.0
                } else {
                    self.gamma_circuit(&prepared, k, l, true)?
                };
                total += 2.0 * (product * Complex64::new(re, im)).re;
            }
        }
        Ok(total)
    }

    /// Single evaluation on `n + ⌈log₂ m⌉` qubits: the ancilla register is
    /// prepared with amplitudes `√(|c_k|/‖c‖₁)`, a select oracle applies the
    /// phase-absorbed `A_k' = (c_k/|c_k|)·A_k` on each ancilla branch, then
    /// `U_b†` and the inverse preparation; `|⟨b|ψ⟩|² = ‖c‖₁²·P₀` with `P₀`
    /// the all-zeros probability.
    fn raw_global_coherent(&mut self, angles: &[f64]) -> CostResult<f64> {
        let coeffs = self.problem.coefficients();
        let n = self.n_qubits();
        let m = coeffs.len();
        let anc = ceil_log2(m);
        let one_norm: f64 = coeffs.iter().map(|c| c.norm()).sum();
        if one_norm <= 0.0 {
            return Err(CostError::DegenerateNorm {
                norm: 0.0,
                kind: CostKind::Global,
            });
        }

        let prepared = self.ansatz_state(angles)?;
        let anc_dim = 1usize << anc;
        let weights: Vec<Complex64> = (0..anc_dim)
            .map(|k| {
                if k < m {
                    Complex64::new((coeffs[k].norm() / one_norm).sqrt(), 0.0)
                } else {
                    ZERO
                }
            })
            .collect();

        let mut amps = vec![ZERO; anc_dim << n];
        for (a, &w) in weights.iter().enumerate() {
            for (s, &v) in prepared.amplitudes().iter().enumerate() {
                amps[(a << n) | s] = w * v;
            }
        }
        let mut state = StateVector::from_amplitudes(anc + n, amps)?;

        let system: Vec<usize> = (anc..anc + n).collect();
        let controls: Vec<usize> = (0..anc).collect();
        for (k, c) in coeffs.iter().enumerate() {
            let phase = if c.norm() > 0.0 {
                c / c.norm()
            } else {
                Complex64::new(1.0, 0.0)
            };
            let phased = self.problem.terms()[k].matrix() * phase;
            let pattern: Vec<bool> = (0..anc).map(|i| (k >> (anc - 1 - i)) & 1 == 1).collect();
            state.apply_controlled(&phased, &system, &controls, &pattern)?;
        }
        state.apply_operator(&self.u_b_dagger, &system)?;
        if anc > 0 {
            let prep = unitary_from_first_column(&weights);
            state.apply_operator(&adjoint(&prep), &controls)?;
        }

        let p_zero = self.measure(&state, |idx| if idx == 0 { 1.0 } else { 0.0 })?;
        Ok(one_norm * one_norm * p_zero)
    }

    /// Weighted local observable sum `Σ_j Σ_kl c_k·conj(c_l)·δ_kl^(j)` with
    /// the same triangle symmetry and real-coefficient savings as the norm;
    /// diagonals `δ_kk^(j)` each require a circuit, unlike `β_kk`.
    fn delta_weighted_sum(&mut self, system: &StateVector) -> CostResult<f64> {
        let coeffs = self.problem.coefficients();
        let n = self.n_qubits();
        let mut total = 0.0;
        for j in 0..n {
            for k in 0..coeffs.len() {
                let factors = self.delta_factors(k, k, j);
                let re = self.hadamard(system, &factors, false)?;
                total += coeffs[k].norm_sqr() * re;
            }
            for k in 0..coeffs.len() {
                for l in k + 1..coeffs.len() {
                    let product = coeffs[k] * coeffs[l].conj();
                    let factors = self.delta_factors(k, l, j);
                    let re = self.hadamard(system, &factors, false)?;
                    let im = if product_is_real(coeffs[k], coeffs[l]) {
                        0.0
                    } else {
                        self.hadamard(system, &factors, true)?
                    };
                    total += 2.0 * (product * Complex64::new(re, im)).re;
                }
            }
        }
        Ok(total)
    }

    fn raw_local_direct(&mut self, angles: &[f64]) -> CostResult<f64> {
        let n = self.n_qubits();
        let mut psi = self.ansatz_state(angles)?;
        psi.apply_matrix(self.problem.assembled_matrix())?;
        psi.apply_matrix(&self.u_b_dagger)?;
        self.stats.record(n);
        let mut total = 0.0;
        for j in 0..n {
            let position = n - 1 - j;
            total += psi
                .amplitudes()
                .iter()
                .enumerate()
                .filter(|(idx, _)| (idx >> position) & 1 == 0)
                .map(|(_, a)| a.norm_sqr())
                .sum::<f64>();
        }
        Ok(total / n as f64)
    }

    fn raw_local_with_norm(&mut self, angles: &[f64], norm: f64) -> CostResult<f64> {
        match self.spec.method {
            Method::Direct => self.raw_local_direct(angles),
            Method::Hadamard => {
                let system = self.ansatz_state(angles)?;
                let delta_sum = self.delta_weighted_sum(&system)?;
                Ok(norm / 2.0 + delta_sum / (2.0 * self.n_qubits() as f64))
            }
            other => Err(CostError::MethodRequiresGlobal(other)),
        }
    }

    /// `S_L = (1/n)·Σ_j ⟨ψ|U_b(|0⟩⟨0|_j ⊗ I)U_b†|ψ⟩`, the local numerator.
    /// In Hadamard mode the `β` half of the `Z_j` expansion is the norm, so a
    /// standalone call estimates it too; [`CostEvaluator::evaluate`] shares
    /// that estimate with the composition instead of paying for it twice.
    pub fn raw_local(&mut self, angles: &[f64]) -> CostResult<f64> {
        match self.spec.method {
            Method::Direct => self.raw_local_direct(angles),
            _ => {
                let norm = self.norm_psi(angles)?;
                self.raw_local_with_norm(angles, norm)
            }
        }
    }

    /// One full cost evaluation: norm stage, raw stage, composed value.
    pub fn evaluate(&mut self, angles: &[f64]) -> CostResult<CostBreakdown> {
        let norm = self.norm_psi(angles)?;
        let raw = match self.spec.kind {
            CostKind::Global => self.raw_global(angles)?,
            CostKind::Local => self.raw_local_with_norm(angles, norm)?,
        };
        let cost = compose_cost(raw, norm, self.spec.kind)?;
        Ok(CostBreakdown { norm, raw, cost })
    }

    /// Convenience wrapper returning only the composed cost value.
    pub fn cost(&mut self, angles: &[f64]) -> CostResult<f64> {
        Ok(self.evaluate(angles)?.cost)
    }

    /// Full diagnostic sweep of every estimator (both parts everywhere);
    /// not budget-shaped.
    pub fn term_estimates(&mut self, angles: &[f64]) -> CostResult<TermEstimates> {
        let m = self.problem.term_count();
        let n = self.n_qubits();
        let v_matrix = self.ansatz_matrix(angles)?;
        let system = self.ansatz_state(angles)?;

        let mut beta = vec![vec![ZERO; m]; m];
        for k in 0..m {
            beta[k][k] = Complex64::new(1.0, 0.0);
            for l in k + 1..m {
                let factors = self.beta_factors(k, l);
                let re = self.hadamard(&system, &factors, false)?;
                let im = self.hadamard(&system, &factors, true)?;
                beta[k][l] = Complex64::new(re, im);
                beta[l][k] = beta[k][l].conj();
            }
        }

        let mut mu = Vec::with_capacity(m);
        for k in 0..m {
            mu.push(self.mu_with_matrix(&v_matrix, k)?);
        }

        let mut gamma = vec![vec![ZERO; m]; m];
        for k in 0..m {
            gamma[k][k] = Complex64::new(self.gamma_circuit(&system, k, k, false)?, 0.0);
            for l in k + 1..m {
                let re = self.gamma_circuit(&system, k, l, false)?;
                let im = self.gamma_circuit(&system, k, l, true)?;
                gamma[k][l] = Complex64::new(re, im);
                gamma[l][k] = gamma[k][l].conj();
            }
        }

        let mut delta = vec![vec![vec![ZERO; n]; m]; m];
        for j in 0..n {
            for k in 0..m {
                for l in k..m {
                    let factors = self.delta_factors(k, l, j);
                    let re = self.hadamard(&system, &factors, false)?;
                    let im = if k == l {
                        0.0
                    } else {
                        self.hadamard(&system, &factors, true)?
                    };
                    delta[k][l][j] = Complex64::new(re, im);
                    delta[l][k][j] = delta[k][l][j].conj();
                }
            }
        }

        Ok(TermEstimates {
            beta,
            mu,
            gamma,
            delta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{AnsatzParams, LayeredAnsatz};
    use crate::problem::{LseProblem, RightHandSide};
    use crate::test_support::{c, random_problem, reference_problem};

    fn identity_angles(n: usize) -> Vec<f64> {
        AnsatzParams::zeroed(n, 0).angles().to_vec()
    }

    fn evaluator<'a>(
        problem: &'a LseProblem,
        form: &'a LayeredAnsatz,
        kind: CostKind,
        method: Method,
    ) -> CostEvaluator<'a> {
        CostEvaluator::new(
            problem,
            form,
            CostSpec::new(kind, method, Shots::Analytic),
            1234,
        )
        .unwrap()
    }

    /// A zero-parameter form preparing a fixed state via its completion
    /// unitary; used to pin costs at the exact solution.
    struct FixedState {
        matrix: CMatrix,
        n_qubits: usize,
    }

    impl FixedState {
        fn preparing(amplitudes: &[Complex64]) -> Self {
            let n_qubits = amplitudes.len().trailing_zeros() as usize;
            Self {
                matrix: unitary_from_first_column(amplitudes),
                n_qubits,
            }
        }
    }

    impl VariationalForm for FixedState {
        fn n_qubits(&self) -> usize {
            self.n_qubits
        }

        fn apply(&self, _angles: &[f64], state: &mut StateVector) -> QsimResult<()> {
            state.apply_matrix(&self.matrix)
        }
    }

    #[test]
    fn hadamard_test_of_identity_is_one() {
        let system = StateVector::zero_state(2).unwrap();
        let factors = vec![ControlledFactor::full(&CMatrix::eye(4), 2)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let value = hadamard_test(&system, &factors, false, Shots::Analytic, &mut rng).unwrap();
        assert!((value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hadamard_test_imaginary_of_s_on_plus() {
        let mut system = StateVector::zero_state(1).unwrap();
        system.apply_gate(&Gate::H, &[0]).unwrap();
        let s = Gate::S.matrix();
        let factors = vec![ControlledFactor::full(&s, 1)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let re = hadamard_test(&system, &factors, false, Shots::Analytic, &mut rng).unwrap();
        let im = hadamard_test(&system, &factors, true, Shots::Analytic, &mut rng).unwrap();
        assert!((re - 0.5).abs() < 1e-12, "Re⟨+|S|+⟩ = {re}");
        assert!((im - 0.5).abs() < 1e-12, "Im⟨+|S|+⟩ = {im}");
    }

    #[test]
    fn beta_diagonal_is_one_with_zero_circuits() {
        let problem = reference_problem();
        let form = LayeredAnsatz::new(3);
        let mut ev = evaluator(&problem, &form, CostKind::Global, Method::Hadamard);
        let angles = identity_angles(3);
        let before = ev.stats();
        let value = ev.beta(&angles, 1, 1).unwrap();
        assert_eq!(ev.stats(), before);
        assert!((value - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn beta_values_at_identity_ansatz() {
        let problem = reference_problem();
        let form = LayeredAnsatz::new(3);
        let mut ev = evaluator(&problem, &form, CostKind::Global, Method::Hadamard);
        let angles = identity_angles(3);
        // A_1†A_2 = XZI·XII = IZI, expectation 1 on |000⟩
        let b21 = ev.beta(&angles, 2, 1).unwrap();
        assert!((b21 - c(1.0)).norm() < 1e-10);
        // ⟨000|XZI|000⟩ = 0
        let b10 = ev.beta(&angles, 1, 0).unwrap();
        assert!(b10.norm() < 1e-10);
    }

    #[test]
    fn beta_out_of_range_rejected() {
        let problem = reference_problem();
        let form = LayeredAnsatz::new(3);
        let mut ev = evaluator(&problem, &form, CostKind::Global, Method::Hadamard);
        assert!(matches!(
            ev.beta(&identity_angles(3), 3, 0),
            Err(CostError::BadTermIndex { index: 3, count: 3 })
        ));
    }

    #[test]
    fn norm_at_identity_matches_hand_expansion() {
        let problem = reference_problem();
        let form = LayeredAnsatz::new(3);
        let angles = identity_angles(3);
        for method in [Method::Direct, Method::Hadamard] {
            let mut ev = evaluator(&problem, &form, CostKind::Global, method);
            let norm = ev.norm_psi(&angles).unwrap();
            assert!((norm - 1.16).abs() < 1e-10, "{method}: {norm}");
        }
    }

    #[test]
    fn single_term_norm_needs_no_circuits() {
        let problem =
            LseProblem::from_pauli(&[("II", c(1.0))], RightHandSide::Vector(basis_b(4))).unwrap();
        let form = LayeredAnsatz::new(2);
        let mut ev = evaluator(&problem, &form, CostKind::Global, Method::Hadamard);
        let norm = ev.norm_psi(&identity_angles(2)).unwrap();
        assert_eq!(ev.stats().circuits, 0);
        assert!((norm - 1.0).abs() < 1e-12);
    }

    fn basis_b(dim: usize) -> Vec<Complex64> {
        let mut b = vec![ZERO; dim];
        b[0] = c(1.0);
        b
    }

    #[test]
    fn norm_symmetry_reduction_equals_naive_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for round in 0..5 {
            let problem = random_problem(&mut rng, 2, 3);
            let form = LayeredAnsatz::new(2);
            let angles = AnsatzParams::random(2, 1, &mut ChaCha8Rng::seed_from_u64(round))
                .angles()
                .to_vec();

            let mut ev = evaluator(&problem, &form, CostKind::Global, Method::Hadamard);
            let reduced = ev.norm_psi(&angles).unwrap();

            // naive double sum over fully evaluated complex β values
            let coeffs = problem.coefficients();
            let mut naive = Complex64::new(0.0, 0.0);
            for k in 0..coeffs.len() {
                for l in 0..coeffs.len() {
                    let beta = ev.beta(&angles, k, l).unwrap();
                    naive += coeffs[k] * coeffs[l].conj() * beta;
                }
            }
            assert!(naive.im.abs() < 1e-10);
            assert!((reduced - naive.re).abs() < 1e-10, "{reduced} vs {naive}");

            let mut direct = evaluator(&problem, &form, CostKind::Global, Method::Direct);
            let exact = direct.norm_psi(&angles).unwrap();
            assert!((reduced - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn mu_values_at_identity_ansatz() {
        let problem = reference_problem();
        let form = LayeredAnsatz::new(3);
        let mut ev = evaluator(&problem, &form, CostKind::Global, Method::Hadamard);
        let angles = identity_angles(3);
        let expected = 1.0 / 8f64.sqrt();
        for k in 0..3 {
            let mu = ev.mu(&angles, k).unwrap();
            assert!((mu - c(expected)).norm() < 1e-10, "μ_{k} = {mu}");
        }
        let coeffs = problem.coefficients();
        let total: Complex64 = (0..3).map(|k| coeffs[k] * ev.mu(&angles, k).unwrap()).sum();
        assert!((total.norm_sqr() - 0.245).abs() < 1e-10);
    }

    #[test]
    fn mu_identity_term_on_basis_rhs() {
        let problem =
            LseProblem::from_pauli(&[("II", c(1.0))], RightHandSide::Vector(basis_b(4))).unwrap();
        let form = LayeredAnsatz::new(2);
        let mut ev = evaluator(&problem, &form, CostKind::Global, Method::Hadamard);
        let mu = ev.mu(&identity_angles(2), 0).unwrap();
        assert!((mu - c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn raw_global_agrees_across_methods_at_identity() {
        let problem = reference_problem();
        let form = LayeredAnsatz::new(3);
        let angles = identity_angles(3);
        for method in [
            Method::Direct,
            Method::Hadamard,
            Method::Overlap,
            Method::Coherent,
        ] {
            let mut ev = evaluator(&problem, &form, CostKind::Global, method);
            let raw = ev.raw_global(&angles).unwrap();
            assert!((raw - 0.245).abs() < 1e-10, "{method}: {raw}");
        }
    }

    #[test]
    fn raw_global_perfect_overlap_is_one() {
        // A = I and b = V|0⟩ for a non-trivial V
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let form = LayeredAnsatz::new(2);
        let angles = AnsatzParams::random(2, 1, &mut rng).angles().to_vec();
        let prepared = form.prepare(&angles).unwrap();
        let problem = LseProblem::from_pauli(
            &[("II", c(1.0))],
            RightHandSide::Vector(prepared.amplitudes().to_vec()),
        )
        .unwrap();
        for method in [Method::Direct, Method::Hadamard, Method::Coherent] {
            let mut ev = evaluator(&problem, &form, CostKind::Global, method);
            let raw = ev.raw_global(&angles).unwrap();
            assert!((raw - 1.0).abs() < 1e-10, "{method}: {raw}");
        }
    }

    #[test]
    fn coherent_register_width_for_three_terms() {
        let problem = reference_problem();
        let form = LayeredAnsatz::new(3);
        let mut ev = evaluator(&problem, &form, CostKind::Global, Method::Coherent);
        ev.raw_global(&identity_angles(3)).unwrap();
        assert_eq!(ev.stats().widest_register, 5);
        assert_eq!(ev.stats().circuits, 1);
    }

    #[test]
    fn overlap_test_values_at_identity() {
        let problem = reference_problem();
        let form = LayeredAnsatz::new(3);
        let mut ev = evaluator(&problem, &form, CostKind::Global, Method::Overlap);
        let angles = identity_angles(3);
        let diag = ev.overlap_test(&angles, 0, 0, false).unwrap();
        assert!((diag - 0.125).abs() < 1e-10, "γ_00 = {diag}");
        let off = ev.overlap_test(&angles, 0, 1, false).unwrap();
        assert!((off - 0.125).abs() < 1e-10, "Re γ_01 = {off}");
    }

    #[test]
    fn overlap_test_equals_mu_products() {
        // normative correctness check for the gate-level construction
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for round in 0..3 {
            let problem = random_problem(&mut rng, 2, 3);
            let form = LayeredAnsatz::new(2);
            let angles = AnsatzParams::random(2, 1, &mut ChaCha8Rng::seed_from_u64(100 + round))
                .angles()
                .to_vec();
            let mut ev = evaluator(&problem, &form, CostKind::Global, Method::Overlap);
            let mus: Vec<Complex64> = (0..3).map(|k| ev.mu(&angles, k).unwrap()).collect();
            for k in 0..3 {
                for l in 0..3 {
                    let re = ev.overlap_test(&angles, k, l, false).unwrap();
                    let im = ev.overlap_test(&angles, k, l, true).unwrap();
                    let expected = mus[k] * mus[l].conj();
                    let got = Complex64::new(re, im);
                    assert!(
                        (got - expected).norm() < 1e-10,
                        "γ_{k}{l}: {got} vs {expected}"
                    );
                }
            }
        }
    }

    #[test]
    fn raw_local_is_one_at_solution_of_identity_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let form = LayeredAnsatz::new(2);
        let angles = AnsatzParams::random(2, 0, &mut rng).angles().to_vec();
        let prepared = form.prepare(&angles).unwrap();
        let problem = LseProblem::from_pauli(
            &[("II", c(1.0))],
            RightHandSide::Vector(prepared.amplitudes().to_vec()),
        )
        .unwrap();
        for method in [Method::Direct, Method::Hadamard] {
            let mut ev = evaluator(&problem, &form, CostKind::Local, method);
            let raw = ev.raw_local(&angles).unwrap();
            assert!((raw - 1.0).abs() < 1e-10, "{method}: {raw}");
            let breakdown = ev.evaluate(&angles).unwrap();
            assert!(breakdown.cost.abs() < 1e-10);
        }
    }

    #[test]
    fn delta_first_term_vanishes_at_identity() {
        // with the circuit-realized rhs, U_b = H⊗³ exactly, so
        // δ_00^(0) = ⟨000|H⊗³ Z₀ H⊗³|000⟩ = ⟨000|X₀|000⟩ = 0
        let problem = crate::test_support::reference_problem_circuit_rhs();
        let form = LayeredAnsatz::new(3);
        let mut ev = evaluator(&problem, &form, CostKind::Local, Method::Hadamard);
        let estimates = ev.term_estimates(&identity_angles(3)).unwrap();
        assert!(estimates.delta[0][0][0].norm() < 1e-10);
    }

    #[test]
    fn raw_local_direct_and_hadamard_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for round in 0..4 {
            let problem = random_problem(&mut rng, 2, 3);
            let form = LayeredAnsatz::new(2);
            let angles = AnsatzParams::random(2, 1, &mut ChaCha8Rng::seed_from_u64(50 + round))
                .angles()
                .to_vec();
            let mut direct = evaluator(&problem, &form, CostKind::Local, Method::Direct);
            let mut hadamard = evaluator(&problem, &form, CostKind::Local, Method::Hadamard);
            let a = direct.raw_local(&angles).unwrap();
            let b = hadamard.raw_local(&angles).unwrap();
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn local_circuit_count_for_reference_problem() {
        let problem = reference_problem();
        let form = LayeredAnsatz::new(3);
        let mut ev = evaluator(&problem, &form, CostKind::Local, Method::Hadamard);
        let angles = identity_angles(3);
        let norm = ev.norm_psi(&angles).unwrap();
        ev.reset_stats();
        ev.raw_local_with_norm(&angles, norm).unwrap();
        // n/2·(m²+m) = 3/2·12 = 18 real circuits, no imaginary ones
        assert_eq!(ev.stats().circuits, 18);
    }

    #[test]
    fn composed_cost_at_identity_and_solution() {
        let problem = reference_problem();
        let form = LayeredAnsatz::new(3);
        let mut ev = evaluator(&problem, &form, CostKind::Global, Method::Direct);
        let value = ev.cost(&identity_angles(3)).unwrap();
        assert!((value - (1.0 - 0.245 / 1.16)).abs() < 1e-12);

        let solution = problem.classical_solution().unwrap();
        let fixed = FixedState::preparing(&solution);
        let mut at_solution = CostEvaluator::new(&problem, &fixed, ev.spec(), 0).unwrap();
        let cost = at_solution.cost(&[]).unwrap();
        assert!(cost.abs() < 1e-10, "cost at solution = {cost}");
    }

    #[test]
    fn compose_cost_rejects_degenerate_norm() {
        assert!(matches!(
            compose_cost(0.1, 0.0, CostKind::Global),
            Err(CostError::DegenerateNorm { .. })
        ));
    }

    #[test]
    fn budget_spot_values_for_three_terms() {
        let coeffs = [c(1.0), c(0.2), c(0.2)];
        let norm = count_evaluations(Method::Hadamard, CostKind::Global, 3, 3, &coeffs).unwrap();
        assert_eq!(norm.circuits_norm, 3);
        assert_eq!(norm.norm_imaginary, 0);
        assert_eq!(norm.raw_base(), 3);
        assert_eq!(norm.circuits_raw_cost, 6);
        assert_eq!(norm.qubits_required, 4);

        let overlap = count_evaluations(Method::Overlap, CostKind::Global, 3, 3, &coeffs).unwrap();
        assert_eq!(overlap.circuits_raw_cost, 6);
        assert_eq!(overlap.qubits_required, 7);

        let local = count_evaluations(Method::Hadamard, CostKind::Local, 3, 3, &coeffs).unwrap();
        assert_eq!(local.circuits_raw_cost, 18);
        assert_eq!(local.qubits_required, 4);

        let coherent =
            count_evaluations(Method::Coherent, CostKind::Global, 3, 3, &coeffs).unwrap();
        assert_eq!(coherent.circuits_raw_cost, 1);
        assert_eq!(coherent.qubits_required, 5);

        let direct = count_evaluations(Method::Direct, CostKind::Global, 3, 3, &coeffs).unwrap();
        assert_eq!(direct.circuits_norm, 1);
        assert_eq!(direct.circuits_raw_cost, 1);
        assert_eq!(direct.qubits_required, 3);
    }

    #[test]
    fn budget_counts_imaginary_pairs_per_coefficient() {
        // one complex coefficient: pairs (0,1) and (0,2) become non-real
        let coeffs = [Complex64::new(0.5, 0.3), c(1.0), c(0.7)];
        let norm = count_evaluations(Method::Hadamard, CostKind::Global, 3, 3, &coeffs).unwrap();
        assert_eq!(norm.norm_base(), 3);
        assert_eq!(norm.norm_imaginary, 2);
        assert_eq!(norm.circuits_norm, 5);
        assert!(norm.imaginary_doubling_applied);
    }

    #[test]
    fn budget_single_term() {
        let coeffs = [c(1.0)];
        let b = count_evaluations(Method::Hadamard, CostKind::Global, 1, 3, &coeffs).unwrap();
        assert_eq!(b.circuits_norm, 0);
        assert_eq!(b.circuits_raw_cost, 2);
        let o = count_evaluations(Method::Overlap, CostKind::Global, 1, 3, &coeffs).unwrap();
        assert_eq!(o.circuits_raw_cost, 1);
        let co = count_evaluations(Method::Coherent, CostKind::Global, 1, 3, &coeffs).unwrap();
        assert_eq!(co.qubits_required, 3);
    }

    #[test]
    fn budget_rejects_overlap_local() {
        assert!(matches!(
            count_evaluations(Method::Overlap, CostKind::Local, 3, 3, &[c(1.0)]),
            Err(CostError::MethodRequiresGlobal(Method::Overlap))
        ));
    }

    #[test]
    fn instrumented_counts_match_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let problem = random_problem(&mut rng, 2, 3);
        let form = LayeredAnsatz::new(2);
        let angles = AnsatzParams::random(2, 1, &mut rng).angles().to_vec();
        for (kind, method) in [
            (CostKind::Global, Method::Direct),
            (CostKind::Global, Method::Hadamard),
            (CostKind::Global, Method::Overlap),
            (CostKind::Global, Method::Coherent),
            (CostKind::Local, Method::Direct),
            (CostKind::Local, Method::Hadamard),
        ] {
            let mut ev = evaluator(&problem, &form, kind, method);
            let budget = ev.budget();

            ev.reset_stats();
            ev.norm_psi(&angles).unwrap();
            assert_eq!(
                ev.stats().circuits,
                budget.circuits_norm,
                "{kind}/{method} norm"
            );

            ev.reset_stats();
            ev.evaluate(&angles).unwrap();
            assert_eq!(
                ev.stats().circuits,
                budget.total(),
                "{kind}/{method} full evaluation"
            );
            assert_eq!(ev.stats().widest_register, budget.qubits_required);
        }
    }

    #[test]
    fn hermitian_symmetry_of_estimates() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let problem = random_problem(&mut rng, 2, 3);
        let form = LayeredAnsatz::new(2);
        let angles = AnsatzParams::random(2, 1, &mut rng).angles().to_vec();
        let mut ev = evaluator(&problem, &form, CostKind::Global, Method::Overlap);
        let estimates = ev.term_estimates(&angles).unwrap();
        for k in 0..3 {
            for l in 0..3 {
                assert_eq!(estimates.beta[k][l], estimates.beta[l][k].conj());
                assert_eq!(estimates.gamma[k][l], estimates.gamma[l][k].conj());
            }
        }
    }

    #[test]
    fn matrix_mode_restricted_to_direct() {
        let mut m = CMatrix::eye(2);
        m[(1, 1)] = c(2.0);
        let problem =
            LseProblem::from_matrix(m, RightHandSide::Vector(vec![c(1.0), ZERO])).unwrap();
        let form = LayeredAnsatz::new(1);
        let err = CostEvaluator::new(
            &problem,
            &form,
            CostSpec::new(CostKind::Global, Method::Hadamard, Shots::Analytic),
            0,
        );
        assert!(matches!(err, Err(CostError::MatrixModeRequiresDirect)));

        let mut ok = CostEvaluator::new(
            &problem,
            &form,
            CostSpec::new(CostKind::Global, Method::Direct, Shots::Analytic),
            0,
        )
        .unwrap();
        // non-unitary A changes the norm: |0⟩ maps to itself, |1⟩ doubles
        let mut angles = identity_angles(1);
        angles[1] = std::f64::consts::PI; // Ry(π): |0⟩ ↦ |1⟩
        let norm = ok.norm_psi(&angles).unwrap();
        assert!((norm - 4.0).abs() < 1e-10);
    }

    #[test]
    fn overlap_with_local_kind_rejected() {
        let problem = reference_problem();
        let form = LayeredAnsatz::new(3);
        let err = CostEvaluator::new(
            &problem,
            &form,
            CostSpec::new(CostKind::Local, Method::Overlap, Shots::Analytic),
            0,
        );
        assert!(matches!(
            err,
            Err(CostError::MethodRequiresGlobal(Method::Overlap))
        ));
    }

    #[test]
    fn local_cost_bounds_global_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for round in 0..10 {
            let problem = random_problem(&mut rng, 3, 3);
            let form = LayeredAnsatz::new(3);
            let angles = AnsatzParams::random(3, 1, &mut ChaCha8Rng::seed_from_u64(900 + round))
                .angles()
                .to_vec();
            let mut global = evaluator(&problem, &form, CostKind::Global, Method::Direct);
            let mut local = evaluator(&problem, &form, CostKind::Local, Method::Direct);
            let cg = global.cost(&angles).unwrap();
            let cl = local.cost(&angles).unwrap();
            assert!((0.0..=1.0 + 1e-12).contains(&cg), "C_G = {cg}");
            assert!(cl <= cg + 1e-10, "C_L = {cl} > C_G = {cg}");
            assert!(cg <= 3.0 * cl + 1e-10, "C_G = {cg} > n·C_L = {}", 3.0 * cl);
        }
    }

    #[test]
    fn shot_noise_scales_with_inverse_sqrt_shots() {
        let problem = reference_problem();
        let form = LayeredAnsatz::new(3);
        let angles = identity_angles(3);
        let spread = |shots: u64| {
            let mut ev = CostEvaluator::new(
                &problem,
                &form,
                CostSpec::new(CostKind::Global, Method::Hadamard, Shots::Count(shots)),
                99,
            )
            .unwrap();
            let runs: Vec<f64> = (0..100).map(|_| ev.cost(&angles).unwrap()).collect();
            let mean = runs.iter().sum::<f64>() / runs.len() as f64;
            (runs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs.len() - 1) as f64).sqrt()
        };
        let ratio = spread(1_000) / spread(4_000);
        assert!(
            (1.6..=2.4).contains(&ratio),
            "shot-noise ratio {ratio} outside [1.6, 2.4]"
        );
    }

    #[test]
    fn cost_is_identical_across_loading_modes() {
        // the same system loaded as Pauli labels, explicit unitaries, and
        // gate sequences yields the same analytic costs
        use crate::problem::{GateOp, TermRealization};
        let pauli = reference_problem();
        let rhs = || RightHandSide::Vector(vec![c(1.0 / 8f64.sqrt()); 8]);
        let mats: Vec<(CMatrix, Complex64)> = pauli
            .terms()
            .iter()
            .map(|t| (t.matrix().clone(), t.coeff))
            .collect();
        let unitary = LseProblem::from_unitaries(&mats, rhs()).unwrap();
        let circuits: Vec<(Vec<GateOp>, Complex64)> = pauli
            .terms()
            .iter()
            .map(|t| {
                let label = match &t.realization {
                    TermRealization::Pauli(l) => l,
                    _ => unreachable!(),
                };
                let (_, ops) = crate::problem::parse_pauli(label).unwrap();
                (ops, t.coeff)
            })
            .collect();
        let circuit = LseProblem::from_circuits(3, &circuits, rhs()).unwrap();

        let form = LayeredAnsatz::new(3);
        let angles = AnsatzParams::random(3, 1, &mut ChaCha8Rng::seed_from_u64(60))
            .angles()
            .to_vec();
        for (kind, method) in [
            (CostKind::Global, Method::Hadamard),
            (CostKind::Global, Method::Coherent),
            (CostKind::Local, Method::Hadamard),
        ] {
            let mut values = Vec::new();
            for problem in [&pauli, &unitary, &circuit] {
                let mut ev = evaluator(problem, &form, kind, method);
                values.push(ev.cost(&angles).unwrap());
            }
            assert!((values[0] - values[1]).abs() < 1e-8, "{kind}/{method}");
            assert!((values[0] - values[2]).abs() < 1e-8, "{kind}/{method}");
        }
    }

    #[test]
    fn shot_mode_is_seed_deterministic() {
        let problem = reference_problem();
        let form = LayeredAnsatz::new(3);
        let angles = identity_angles(3);
        let run = || {
            let mut ev = CostEvaluator::new(
                &problem,
                &form,
                CostSpec::new(CostKind::Global, Method::Hadamard, Shots::Count(500)),
                7,
            )
            .unwrap();
            ev.cost(&angles).unwrap()
        };
        assert_eq!(run(), run());
    }
}
