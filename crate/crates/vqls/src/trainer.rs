//! Gradient-based minimization of the composed cost: parameter-shift
//! gradients, Adam updates, stagnation-triggered ansatz growth, and stopping
//! criteria.
//!
//! The composed cost is a ratio `C = 1 − N/D` of two separately estimated
//! expectation values, so the shift rule is applied to `N` and `D` (where it
//! is exact for the rotation-generated angles) and combined through the
//! quotient rule: `dC = −N'/D + N·D'/D²`. Shifting the composed value
//! directly would not differentiate the ratio.

use crate::ansatz::{AnsatzError, AnsatzParams, GrowthPolicy, LayeredAnsatz, VariationalForm};
use crate::cost::{CostBreakdown, CostError, CostEvaluator, CostKind, CostSpec, Method, Shots};
use crate::problem::LseProblem;
use crate::qsim::QsimError;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("loss diverged to a non-finite value at step {step}")]
    Diverged { step: usize },
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Ansatz(#[from] AnsatzError),
    #[error("simulation error: {0}")]
    Qsim(#[from] QsimError),
}

pub type TrainResult<T> = Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMode {
    ParameterShift,
    FiniteDifference { step: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    /// Optimizer rate, measured as a fraction of the 2π rotation period: at
    /// unit moment ratio one update moves an angle by `learning_rate·2π`
    /// radians. The default 0.01 converges on few-qubit systems within tens
    /// of steps.
    pub learning_rate: f64,
    pub cost: CostSpec,
    pub growth: GrowthPolicy,
    pub seed: u64,
    pub abort_loss: Option<f64>,
    pub gradient: GradientMode,
    pub initial_depth: usize,
    /// Sample the trained state with this many shots for the reported final
    /// distribution; `None` reports analytic probabilities.
    pub final_shots: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            learning_rate: 0.01,
            cost: CostSpec::new(CostKind::Global, Method::Direct, Shots::Analytic),
            growth: GrowthPolicy::default(),
            seed: 0,
            abort_loss: None,
            gradient: GradientMode::ParameterShift,
            initial_depth: 1,
            final_shots: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> TrainResult<()> {
        if self.steps == 0 {
            return Err(TrainError::BadConfig("steps must be at least 1".into()));
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::BadConfig(
                "learning rate must be positive".into(),
            ));
        }
        if self.growth.enabled && self.growth.window == 0 {
            return Err(TrainError::BadConfig(
                "growth window must be at least 1".into(),
            ));
        }
        if self.growth.enabled && self.growth.max_depth < self.initial_depth {
            return Err(TrainError::BadConfig(format!(
                "max depth {} is below the initial depth {}",
                self.growth.max_depth, self.initial_depth
            )));
        }
        Ok(())
    }
}

/// Per-step loss values, depth-growth events, and the final solution state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub losses: Vec<f64>,
    /// Step indices at which a layer was added.
    pub growth_events: Vec<usize>,
    pub final_params: AnsatzParams,
    pub final_probabilities: Vec<f64>,
    pub circuit_count_total: u64,
}

/// Trace of a run with a caller-supplied circuit form, carrying the raw
/// angle vector instead of structured parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrace {
    pub losses: Vec<f64>,
    pub growth_events: Vec<usize>,
    pub final_angles: Vec<f64>,
    pub final_probabilities: Vec<f64>,
    pub circuit_count_total: u64,
}

/// First/second-moment state of the Adam optimizer with bias correction.
/// Defaults: β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl AdamState {
    pub fn new(parameter_count: usize) -> Self {
        Self {
            first: vec![0.0; parameter_count],
            second: vec![0.0; parameter_count],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// Align the moments with front-inserted parameters: new entries start
    /// with zero moments, existing ones are preserved.
    fn grow_front(&mut self, added: usize) {
        let mut first = vec![0.0; added];
        first.extend_from_slice(&self.first);
        self.first = first;
        let mut second = vec![0.0; added];
        second.extend_from_slice(&self.second);
        self.second = second;
    }
}

/// One Adam update in place.
pub fn adam_step(angles: &mut [f64], gradient: &[f64], state: &mut AdamState, learning_rate: f64) {
    debug_assert_eq!(angles.len(), gradient.len());
    debug_assert_eq!(angles.len(), state.first.len());
    state.step += 1;
    let bias1 = 1.0 - state.beta1.powi(state.step as i32);
    let bias2 = 1.0 - state.beta2.powi(state.step as i32);
    for i in 0..angles.len() {
        state.first[i] = state.beta1 * state.first[i] + (1.0 - state.beta1) * gradient[i];
        state.second[i] =
            state.beta2 * state.second[i] + (1.0 - state.beta2) * gradient[i] * gradient[i];
        let first_hat = state.first[i] / bias1;
        let second_hat = state.second[i] / bias2;
        angles[i] -= learning_rate * first_hat / (second_hat.sqrt() + state.epsilon);
    }
}

/// Gradient of the composed cost with respect to every angle.
pub fn gradient(
    evaluator: &mut CostEvaluator,
    angles: &[f64],
    mode: GradientMode,
) -> TrainResult<Vec<f64>> {
    let base = evaluator.evaluate(angles)?;
    gradient_with_base(evaluator, angles, mode, &base)
}

fn gradient_with_base(
    evaluator: &mut CostEvaluator,
    angles: &[f64],
    mode: GradientMode,
    base: &CostBreakdown,
) -> TrainResult<Vec<f64>> {
    let mut shifted = angles.to_vec();
    let mut grad = Vec::with_capacity(angles.len());
    match mode {
        GradientMode::ParameterShift => {
            let shift = std::f64::consts::FRAC_PI_2;
            for p in 0..angles.len() {
                let original = shifted[p];
                shifted[p] = original + shift;
                let plus = evaluator.evaluate(&shifted)?;
                shifted[p] = original - shift;
                let minus = evaluator.evaluate(&shifted)?;
                shifted[p] = original;
                let raw_derivative = (plus.raw - minus.raw) / 2.0;
                let norm_derivative = (plus.norm - minus.norm) / 2.0;
                grad.push(
                    -raw_derivative / base.norm
                        + base.raw * norm_derivative / (base.norm * base.norm),
                );
            }
        }
        GradientMode::FiniteDifference { step } => {
            for p in 0..angles.len() {
                let original = shifted[p];
                shifted[p] = original + step;
                let plus = evaluator.cost(&shifted)?;
                shifted[p] = original - step;
                let minus = evaluator.cost(&shifted)?;
                shifted[p] = original;
                grad.push((plus - minus) / (2.0 * step));
            }
        }
    }
    Ok(grad)
}

/// Best loss of the last `window` steps versus the best of the `window`
/// before that; stagnant when the relative improvement falls below the
/// threshold.
fn stagnated(history: &[f64], window: usize, threshold: f64) -> bool {
    if history.len() < 2 * window {
        return false;
    }
    let recent = &history[history.len() - window..];
    let previous = &history[history.len() - 2 * window..history.len() - window];
    let recent_best = recent.iter().cloned().fold(f64::INFINITY, f64::min);
    let previous_best = previous.iter().cloned().fold(f64::INFINITY, f64::min);
    previous_best - recent_best < threshold * previous_best.abs()
}

/// Train the built-in layered ansatz on `problem`.
pub fn solve(problem: &LseProblem, config: &TrainConfig) -> TrainResult<TrainingTrace> {
    config.validate()?;
    let n = problem.n_qubits();
    let form = LayeredAnsatz::new(n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let initial = AnsatzParams::random(n, config.initial_depth, &mut rng);
    let raw = run_loop(problem, config, &form, initial.angles().to_vec(), rng)?;
    let final_params = AnsatzParams::from_angles(n, raw.final_angles)?;
    Ok(TrainingTrace {
        losses: raw.losses,
        growth_events: raw.growth_events,
        final_params,
        final_probabilities: raw.final_probabilities,
        circuit_count_total: raw.circuit_count_total,
    })
}

/// Train a caller-supplied circuit form from the given starting angles.
/// Growth is used only when the form supports it.
pub fn solve_with_form(
    problem: &LseProblem,
    config: &TrainConfig,
    form: &dyn VariationalForm,
    initial_angles: Vec<f64>,
) -> TrainResult<RawTrace> {
    config.validate()?;
    let rng = ChaCha8Rng::seed_from_u64(config.seed);
    run_loop(problem, config, form, initial_angles, rng)
}

fn run_loop(
    problem: &LseProblem,
    config: &TrainConfig,
    form: &dyn VariationalForm,
    mut angles: Vec<f64>,
    mut rng: ChaCha8Rng,
) -> TrainResult<RawTrace> {
    let evaluator_seed = rng.next_u64();
    let mut evaluator = CostEvaluator::new(problem, form, config.cost, evaluator_seed)?;
    let mut adam = AdamState::new(angles.len());
    let mut losses: Vec<f64> = Vec::with_capacity(config.steps);
    let mut growth_events = Vec::new();
    let mut growth_exhausted = false;
    // stagnation is measured from the last growth event onwards
    let mut window_start = 0usize;

    for step in 0..config.steps {
        let breakdown = evaluator.evaluate(&angles)?;
        if !breakdown.cost.is_finite() {
            return Err(TrainError::Diverged { step });
        }
        losses.push(breakdown.cost);

        if let Some(threshold) = config.abort_loss {
            if breakdown.cost <= threshold {
                break;
            }
        }

        if config.growth.enabled
            && !growth_exhausted
            && stagnated(
                &losses[window_start..],
                config.growth.window,
                config.growth.threshold,
            )
        {
            match form.grow(&angles, config.growth.max_depth, &mut rng) {
                Some(Ok(grown)) => {
                    adam.grow_front(grown.len() - angles.len());
                    angles = grown;
                    growth_events.push(step);
                    window_start = losses.len();
                }
                Some(Err(AnsatzError::MaxDepthReached(_))) => {
                    growth_exhausted = true;
                }
                Some(Err(other)) => return Err(other.into()),
                None => {
                    growth_exhausted = true;
                }
            }
        }

        let grad = gradient_with_base(&mut evaluator, &angles, config.gradient, &breakdown)?;
        // the configured rate is per rotation period; Adam steps in radians
        adam_step(
            &mut angles,
            &grad,
            &mut adam,
            config.learning_rate * std::f64::consts::TAU,
        );
    }

    let final_state = form.prepare(&angles)?;
    let final_probabilities = match config.final_shots {
        None => final_state.probabilities()?,
        Some(shots) => {
            let histogram = final_state.sample(shots, &mut rng)?;
            histogram
                .into_iter()
                .map(|count| count as f64 / shots as f64)
                .collect()
        }
    };

    Ok(RawTrace {
        losses,
        growth_events,
        final_angles: angles,
        final_probabilities,
        circuit_count_total: evaluator.stats().circuits,
    })
}
