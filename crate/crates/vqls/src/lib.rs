//! Variational solver for linear systems of equations `A·x = b` on a dense
//! statevector simulator.
//!
//! The system matrix is given as a coefficient-weighted sum of unitary terms
//! (Pauli labels, explicit unitaries, or gate sequences) or as a raw matrix;
//! a layered variational circuit is trained so that its output state is
//! proportional to the solution. Costs can be evaluated by direct state
//! evolution, Hadamard tests, Hadamard-overlap tests, or a single coherent
//! circuit over the term decomposition, with exact accounting of the circuit
//! evaluations each method needs.
//!
//! Modules:
//! - [`qsim`]: dense statevector engine (gates, controlled operators,
//!   sampling).
//! - [`problem`]: system loading and validation, Pauli decomposition, the
//!   classical ground-truth solve.
//! - [`ansatz`]: the layered circuit and its loss-preserving depth growth.
//! - [`cost`]: term estimators, the four evaluation methods, budgets.
//! - [`trainer`]: parameter-shift gradients, Adam, the training loop.
//! - [`solver`]: one-stop builder mirroring typical usage.

pub mod ansatz;
pub mod cost;
pub mod problem;
pub mod qsim;
pub mod solver;
pub mod trainer;

#[doc(hidden)]
pub mod test_support;

pub use ansatz::{AnsatzParams, GrowthPolicy, LayeredAnsatz, VariationalForm};
pub use cost::{
    compose_cost, count_evaluations, CostEvaluator, CostKind, CostSpec, EvaluationBudget, Method,
    Shots,
};
pub use problem::{LseProblem, PauliTerm, ProblemMode, RightHandSide};
pub use qsim::{Gate, StateVector};
pub use solver::VariationalSolver;
pub use trainer::{solve, GradientMode, TrainConfig, TrainingTrace};
