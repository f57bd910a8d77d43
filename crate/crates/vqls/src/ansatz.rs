//! Layered variational circuit with dynamic, loss-preserving depth growth.
//!
//! A depth-`d` circuit applies one rotation layer (a `Rot_zyz` triple per
//! qubit), followed by `d` blocks of [nearest-neighbor CZ chain, rotation
//! layer], for `3n(d+1)` trainable angles in total.
//!
//! Growing the circuit inserts a fresh block at the *front*: a rotation layer
//! with per-qubit triples `(−α, 0, α)` (an exact identity) followed by a CZ
//! chain. Acting first, the new block sees the `|0…0⟩` input, on which the CZ
//! chain is also the identity, so the prepared state — and therefore any loss
//! evaluated from it — is unchanged until training moves the new angles.

use crate::qsim::Gate;
use crate::qsim::{QsimError, QsimResult, StateVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnsatzError {
    #[error("angle vector of length {found} is not 3·{n_qubits}·(d+1) for any depth d")]
    BadParameterCount { found: usize, n_qubits: usize },
    #[error("maximum ansatz depth {0} reached")]
    MaxDepthReached(usize),
    #[error("simulation error: {0}")]
    Qsim(#[from] QsimError),
}

/// Depth-indexed rotation-angle triples for the layered ansatz. Layer 0 is
/// applied first; within a layer, qubit-major triples `(α₀, α₁, α₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzParams {
    n_qubits: usize,
    angles: Vec<f64>,
}

impl AnsatzParams {
    /// Draw every angle independently and uniformly from `[0, 2π)`.
    pub fn random(n_qubits: usize, depth: usize, rng: &mut ChaCha8Rng) -> Self {
        let angles = (0..3 * n_qubits * (depth + 1))
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        Self { n_qubits, angles }
    }

    /// All-zero angles: the circuit acts as the identity.
    pub fn zeroed(n_qubits: usize, depth: usize) -> Self {
        Self {
            n_qubits,
            angles: vec![0.0; 3 * n_qubits * (depth + 1)],
        }
    }

    pub fn from_angles(n_qubits: usize, angles: Vec<f64>) -> Result<Self, AnsatzError> {
        let layer = 3 * n_qubits;
        if layer == 0 || angles.is_empty() || !angles.len().is_multiple_of(layer) {
            return Err(AnsatzError::BadParameterCount {
                found: angles.len(),
                n_qubits,
            });
        }
        Ok(Self { n_qubits, angles })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn depth(&self) -> usize {
        self.angles.len() / (3 * self.n_qubits) - 1
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn angles_mut(&mut self) -> &mut [f64] {
        &mut self.angles
    }

    pub fn triple(&self, layer: usize, qubit: usize) -> [f64; 3] {
        let base = 3 * (layer * self.n_qubits + qubit);
        [
            self.angles[base],
            self.angles[base + 1],
            self.angles[base + 2],
        ]
    }

    /// Add one layer, preserving the prepared state exactly. A single fresh
    /// `α` is drawn uniformly from `[0, 2π)` and every qubit's new triple is
    /// `(−α, 0, α)`; all existing angles are kept.
    pub fn grow(&self, max_depth: usize, rng: &mut ChaCha8Rng) -> Result<Self, AnsatzError> {
        if self.depth() >= max_depth {
            return Err(AnsatzError::MaxDepthReached(max_depth));
        }
        let alpha = rng.random_range(0.0..std::f64::consts::TAU);
        let mut angles = Vec::with_capacity(self.angles.len() + 3 * self.n_qubits);
        for _ in 0..self.n_qubits {
            angles.extend_from_slice(&[-alpha, 0.0, alpha]);
        }
        angles.extend_from_slice(&self.angles);
        Ok(Self {
            n_qubits: self.n_qubits,
            angles,
        })
    }
}

/// Stagnation-triggered growth settings used by the trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthPolicy {
    pub enabled: bool,
    /// Window length `w` in steps; stagnation compares the best loss of the
    /// last `w` steps against the best of the `w` steps before that.
    pub window: usize,
    /// Minimum relative improvement below which the loss counts as stagnant.
    pub threshold: f64,
    pub max_depth: usize,
}

impl Default for GrowthPolicy {
    fn default() -> Self {
        Self {
            enabled: true,
            window: 10,
            threshold: 1e-3,
            max_depth: 10,
        }
    }
}

/// State preparation driven by a flat angle vector. Implementations beyond
/// the built-in [`LayeredAnsatz`] let callers plug custom circuit layouts
/// into the cost functions and the trainer, which only require `apply` and,
/// when growth is wanted, `grow`.
pub trait VariationalForm {
    fn n_qubits(&self) -> usize;

    /// Apply the circuit for `angles` to `state` (any state of matching
    /// dimension; the map must be linear in the state).
    fn apply(&self, angles: &[f64], state: &mut StateVector) -> QsimResult<()>;

    /// Extend `angles` by one identity-acting block, keeping the existing
    /// angles as the suffix of the returned vector (new parameters are
    /// front-inserted, which is what keeps optimizer state aligned). `None`
    /// disables dynamic growth for this form.
    fn grow(
        &self,
        angles: &[f64],
        max_depth: usize,
        rng: &mut ChaCha8Rng,
    ) -> Option<Result<Vec<f64>, AnsatzError>> {
        let _ = (angles, max_depth, rng);
        None
    }

    /// Prepare `V(angles)|0…0⟩`.
    fn prepare(&self, angles: &[f64]) -> QsimResult<StateVector> {
        let mut state = StateVector::zero_state(self.n_qubits())?;
        self.apply(angles, &mut state)?;
        Ok(state)
    }
}

/// The built-in hardware-efficient layered circuit.
#[derive(Debug, Clone, Copy)]
pub struct LayeredAnsatz {
    pub n_qubits: usize,
}

impl LayeredAnsatz {
    pub fn new(n_qubits: usize) -> Self {
        Self { n_qubits }
    }

    fn apply_rotation_layer(
        &self,
        params: &AnsatzParams,
        layer: usize,
        state: &mut StateVector,
    ) -> QsimResult<()> {
        for qubit in 0..self.n_qubits {
            let [a0, a1, a2] = params.triple(layer, qubit);
            state.apply_gate(&Gate::RotZyz(a0, a1, a2), &[qubit])?;
        }
        Ok(())
    }

    fn apply_cz_chain(&self, state: &mut StateVector) -> QsimResult<()> {
        for qubit in 0..self.n_qubits.saturating_sub(1) {
            state.apply_gate(&Gate::Cz, &[qubit, qubit + 1])?;
        }
        Ok(())
    }
}

impl VariationalForm for LayeredAnsatz {
    fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    fn apply(&self, angles: &[f64], state: &mut StateVector) -> QsimResult<()> {
        let params = AnsatzParams::from_angles(self.n_qubits, angles.to_vec()).map_err(|_| {
            QsimError::DimensionMismatch {
                found: angles.len(),
                expected: 3 * self.n_qubits,
            }
        })?;
        if state.n_qubits() != self.n_qubits {
            return Err(QsimError::DimensionMismatch {
                found: state.dim(),
                expected: 1 << self.n_qubits,
            });
        }
        self.apply_rotation_layer(&params, 0, state)?;
        for layer in 1..=params.depth() {
            self.apply_cz_chain(state)?;
            self.apply_rotation_layer(&params, layer, state)?;
        }
        Ok(())
    }

    fn grow(
        &self,
        angles: &[f64],
        max_depth: usize,
        rng: &mut ChaCha8Rng,
    ) -> Option<Result<Vec<f64>, AnsatzError>> {
        let params = match AnsatzParams::from_angles(self.n_qubits, angles.to_vec()) {
            Ok(p) => p,
            Err(e) => return Some(Err(e)),
        };
        Some(params.grow(max_depth, rng).map(|p| p.angles))
    }
}
