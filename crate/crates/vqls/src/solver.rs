//! High-level entry point: build a solver from a term decomposition and a
//! right-hand side, train it, and read back the solution distribution.
//!
//! ```no_run
//! use vqls::solver::VariationalSolver;
//! use vqls::cost::Method;
//! use num_complex::Complex64;
//!
//! let b = vec![Complex64::new(1.0 / 8f64.sqrt(), 0.0); 8];
//! let (solution, _trace) = VariationalSolver::builder()
//!     .pauli_terms(&["III", "XZI", "XII"], &[1.0.into(), 0.2.into(), 0.2.into()])
//!     .rhs_vector(b)
//!     .method(Method::Hadamard)
//!     .local(false)
//!     .learning_rate(0.01)
//!     .steps(50)
//!     .build()
//!     .unwrap()
//!     .solve()
//!     .unwrap();
//! ```

use crate::ansatz::GrowthPolicy;
use crate::cost::{CostKind, Method, Shots};
use crate::problem::{GateOp, LseProblem, ProblemError, RightHandSide};
use crate::qsim::CMatrix;
use crate::trainer::{solve, GradientMode, TrainConfig, TrainError, TrainingTrace};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("solver is missing {0}")]
    Missing(&'static str),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

enum TermsSpec {
    Pauli(Vec<(String, Complex64)>),
    Unitary(Vec<(CMatrix, Complex64)>),
    Circuit(usize, Vec<(Vec<GateOp>, Complex64)>),
    Matrix(CMatrix),
}

/// Builder mirroring the solver constructor: terms, right-hand side,
/// evaluation method, cost kind, and training hyperparameters.
pub struct SolverBuilder {
    terms: Option<TermsSpec>,
    rhs: Option<RightHandSide>,
    config: TrainConfig,
}

impl SolverBuilder {
    fn new() -> Self {
        Self {
            terms: None,
            rhs: None,
            config: TrainConfig::default(),
        }
    }

    pub fn pauli_terms<S: AsRef<str>>(mut self, labels: &[S], coeffs: &[Complex64]) -> Self {
        self.terms = Some(TermsSpec::Pauli(
            labels
                .iter()
                .zip(coeffs)
                .map(|(l, &coeff)| (l.as_ref().to_string(), coeff))
                .collect(),
        ));
        self
    }

    pub fn unitary_terms(mut self, terms: Vec<(CMatrix, Complex64)>) -> Self {
        self.terms = Some(TermsSpec::Unitary(terms));
        self
    }

    pub fn circuit_terms(mut self, n_qubits: usize, terms: Vec<(Vec<GateOp>, Complex64)>) -> Self {
        self.terms = Some(TermsSpec::Circuit(n_qubits, terms));
        self
    }

    /// Raw, possibly non-unitary system matrix; restricts the method to
    /// direct evaluation.
    pub fn matrix(mut self, matrix: CMatrix) -> Self {
        self.terms = Some(TermsSpec::Matrix(matrix));
        self.config.cost.method = Method::Direct;
        self
    }

    pub fn rhs_vector(mut self, b: Vec<Complex64>) -> Self {
        self.rhs = Some(RightHandSide::Vector(b));
        self
    }

    pub fn rhs_circuit(mut self, gates: Vec<GateOp>) -> Self {
        self.rhs = Some(RightHandSide::Circuit(gates));
        self
    }

    pub fn method(mut self, method: Method) -> Self {
        self.config.cost.method = method;
        self
    }

    pub fn local(mut self, local: bool) -> Self {
        self.config.cost.kind = if local {
            CostKind::Local
        } else {
            CostKind::Global
        };
        self
    }

    pub fn learning_rate(mut self, lr: f64) -> Self {
        self.config.learning_rate = lr;
        self
    }

    pub fn steps(mut self, steps: usize) -> Self {
        self.config.steps = steps;
        self
    }

    /// Shot count for training-time estimators; analytic when unset.
    pub fn shots(mut self, shots: Option<u64>) -> Self {
        self.config.cost.shots = match shots {
            Some(count) => Shots::Count(count),
            None => Shots::Analytic,
        };
        self
    }

    /// Shot count for sampling the final distribution.
    pub fn final_shots(mut self, shots: Option<u64>) -> Self {
        self.config.final_shots = shots;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.config.seed = seed;
        self
    }

    pub fn growth(mut self, policy: GrowthPolicy) -> Self {
        self.config.growth = policy;
        self
    }

    pub fn initial_depth(mut self, depth: usize) -> Self {
        self.config.initial_depth = depth;
        self
    }

    pub fn abort_loss(mut self, threshold: Option<f64>) -> Self {
        self.config.abort_loss = threshold;
        self
    }

    pub fn gradient_mode(mut self, mode: GradientMode) -> Self {
        self.config.gradient = mode;
        self
    }

    pub fn build(self) -> Result<VariationalSolver, SolverError> {
        let rhs = self.rhs.ok_or(SolverError::Missing("a right-hand side"))?;
        let terms = self
            .terms
            .ok_or(SolverError::Missing("a system decomposition"))?;
        let problem = match terms {
            TermsSpec::Pauli(list) => LseProblem::from_pauli(&list, rhs)?,
            TermsSpec::Unitary(list) => LseProblem::from_unitaries(&list, rhs)?,
            TermsSpec::Circuit(n, list) => LseProblem::from_circuits(n, &list, rhs)?,
            TermsSpec::Matrix(matrix) => LseProblem::from_matrix(matrix, rhs)?,
        };
        Ok(VariationalSolver {
            problem,
            config: self.config,
        })
    }
}

pub struct VariationalSolver {
    problem: LseProblem,
    config: TrainConfig,
}

impl VariationalSolver {
    pub fn builder() -> SolverBuilder {
        SolverBuilder::new()
    }

    pub fn problem(&self) -> &LseProblem {
        &self.problem
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Train and return the solution distribution (per-basis-state
    /// probabilities of the trained state) along with the full trace.
    pub fn solve(&self) -> Result<(Vec<f64>, TrainingTrace), SolverError> {
        let trace = solve(&self.problem, &self.config)?;
        Ok((trace.final_probabilities.clone(), trace))
    }
}
