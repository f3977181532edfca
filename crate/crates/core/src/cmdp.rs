//! Finite episodic CMDPs, deterministic timed policies, and rollouts.
//!
//! States and actions are dense indices. Steps are zero-based: an episode
//! visits steps `0..horizon`. Environments own the mapping from semantic
//! states to indices and report which actions are feasible in each state.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Random source used by every simulation in the crate.
pub type SimRng = ChaCha8Rng;

/// Returns an independent, reproducible random stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Tolerance on transition row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CmdpDims {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub num_constraints: usize,
}

impl CmdpDims {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        num_constraints: usize,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(Error::InvalidParameter(format!(
                "states, actions and horizon must be positive (got S={num_states}, A={num_actions}, H={horizon})"
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            num_constraints,
        })
    }

    pub fn state_action_count(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub(crate) fn check_state(&self, state: usize) -> Result<()> {
        if state >= self.num_states {
            return Err(Error::IndexOutOfRange {
                what: "state",
                index: state,
                bound: self.num_states,
            });
        }
        Ok(())
    }

    pub(crate) fn check_action(&self, action: usize) -> Result<()> {
        if action >= self.num_actions {
            return Err(Error::IndexOutOfRange {
                what: "action",
                index: action,
                bound: self.num_actions,
            });
        }
        Ok(())
    }

    pub(crate) fn check_step(&self, step: usize) -> Result<()> {
        if step >= self.horizon {
            return Err(Error::IndexOutOfRange {
                what: "step",
                index: step,
                bound: self.horizon,
            });
        }
        Ok(())
    }
}

/// Transition kernel, either shared by all steps or given per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transitions {
    probs: Vec<f64>,
    stationary: bool,
}

impl Transitions {
    /// One `S x A x S` table used at every step.
    pub fn stationary(probs: Vec<f64>) -> Self {
        Self {
            probs,
            stationary: true,
        }
    }

    /// An `H x S x A x S` table.
    pub fn per_step(probs: Vec<f64>) -> Self {
        Self {
            probs,
            stationary: false,
        }
    }

    pub fn is_stationary(&self) -> bool {
        self.stationary
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// A fully known finite CMDP.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownCmdp {
    dims: CmdpDims,
    transitions: Transitions,
    reward: Vec<f64>,
    constraints: Vec<f64>,
    initial: Vec<f64>,
    feasible: Vec<bool>,
}

impl KnownCmdp {
    /// Builds a model after checking table shapes. Value ranges are checked
    /// separately by [`validate_known_cmdp`].
    ///
    /// `reward` is indexed `[s * A + a]`, `constraints` `[(i * S + s) * A + a]`
    /// and `initial` is a distribution over states.
    pub fn new(
        dims: CmdpDims,
        transitions: Transitions,
        reward: Vec<f64>,
        constraints: Vec<f64>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let (s, a, h, i) = (
            dims.num_states,
            dims.num_actions,
            dims.horizon,
            dims.num_constraints,
        );
        let steps = if transitions.stationary { 1 } else { h };
        expect_len("transitions", steps * s * a * s, transitions.probs.len())?;
        expect_len("reward", s * a, reward.len())?;
        expect_len("constraints", i * s * a, constraints.len())?;
        expect_len("initial distribution", s, initial.len())?;
        Ok(Self {
            dims,
            transitions,
            reward,
            constraints,
            initial,
            feasible: vec![true; s * a],
        })
    }

    /// Same as [`KnownCmdp::new`] with a point-mass initial state.
    pub fn with_initial_state(
        dims: CmdpDims,
        transitions: Transitions,
        reward: Vec<f64>,
        constraints: Vec<f64>,
        initial_state: usize,
    ) -> Result<Self> {
        dims.check_state(initial_state)?;
        let mut initial = vec![0.0; dims.num_states];
        initial[initial_state] = 1.0;
        Self::new(dims, transitions, reward, constraints, initial)
    }

    /// Restricts the action set per state; `mask` is indexed `[s * A + a]`.
    pub fn with_feasibility(mut self, mask: Vec<bool>) -> Result<Self> {
        expect_len("feasibility mask", self.dims.state_action_count(), mask.len())?;
        self.feasible = mask;
        Ok(self)
    }

    pub fn dims(&self) -> CmdpDims {
        self.dims
    }

    pub fn transitions(&self) -> &Transitions {
        &self.transitions
    }

    /// Next-state distribution `P_h(. | s, a)`.
    pub fn transition_row(&self, step: usize, state: usize, action: usize) -> &[f64] {
        let CmdpDims {
            num_states: s,
            num_actions: a,
            ..
        } = self.dims;
        let step = if self.transitions.stationary { 0 } else { step };
        let start = ((step * s + state) * a + action) * s;
        &self.transitions.probs[start..start + s]
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.reward[state * self.dims.num_actions + action]
    }

    pub fn constraint(&self, index: usize, state: usize, action: usize) -> f64 {
        let d = self.dims;
        self.constraints[(index * d.num_states + state) * d.num_actions + action]
    }

    /// All constraint values observed at `(state, action)`.
    pub fn constraint_vector(&self, state: usize, action: usize) -> Vec<f64> {
        (0..self.dims.num_constraints)
            .map(|i| self.constraint(i, state, action))
            .collect()
    }

    pub fn initial_distribution(&self) -> &[f64] {
        &self.initial
    }

    pub fn is_feasible(&self, state: usize, action: usize) -> bool {
        self.feasible[state * self.dims.num_actions + action]
    }

    pub fn feasible_mask(&self, state: usize) -> &[bool] {
        let a = self.dims.num_actions;
        &self.feasible[state * a..(state + 1) * a]
    }
}

fn expect_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}

/// One breached model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelViolation {
    /// `step` is `None` for stationary kernels.
    RowSum {
        step: Option<usize>,
        state: usize,
        action: usize,
        sum: f64,
    },
    NegativeProbability {
        step: Option<usize>,
        state: usize,
        action: usize,
        next_state: usize,
        value: f64,
    },
    RewardOutOfRange {
        state: usize,
        action: usize,
        value: f64,
    },
    ConstraintOutOfRange {
        index: usize,
        state: usize,
        action: usize,
        value: f64,
    },
    InitialDistribution {
        sum: f64,
    },
    NoFeasibleAction {
        state: usize,
    },
}

impl fmt::Display for ModelViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let step_label = |step: &Option<usize>| match step {
            Some(h) => h.to_string(),
            None => "*".to_string(),
        };
        match self {
            ModelViolation::RowSum {
                step,
                state,
                action,
                sum,
            } => write!(
                f,
                "transition row (h={}, s={state}, a={action}) sums to {sum} (deficit {})",
                step_label(step),
                1.0 - sum
            ),
            ModelViolation::NegativeProbability {
                step,
                state,
                action,
                next_state,
                value,
            } => write!(
                f,
                "transition (h={}, s={state}, a={action}) -> {next_state} has negative probability {value}",
                step_label(step)
            ),
            ModelViolation::RewardOutOfRange {
                state,
                action,
                value,
            } => {
                if *value < 0.0 {
                    write!(
                        f,
                        "reward(s={state}, a={action}) = {value} violates non-negativity (rewards must lie in [0, 1])"
                    )
                } else {
                    write!(
                        f,
                        "reward(s={state}, a={action}) = {value} exceeds the unit bound (rewards must lie in [0, 1])"
                    )
                }
            }
            ModelViolation::ConstraintOutOfRange {
                index,
                state,
                action,
                value,
            } => write!(
                f,
                "constraint {index} at (s={state}, a={action}) = {value} is outside [-1, 1]"
            ),
            ModelViolation::InitialDistribution { sum } => {
                write!(f, "initial distribution sums to {sum}")
            }
            ModelViolation::NoFeasibleAction { state } => {
                write!(f, "state {state} has no feasible action")
            }
        }
    }
}

/// Lists every invariant breach of `model`; an empty report means the model
/// is valid.
pub fn validate_known_cmdp(model: &KnownCmdp) -> Vec<ModelViolation> {
    let mut report = Vec::new();
    let d = model.dims;
    let stationary = model.transitions.stationary;
    let steps = if stationary { 1 } else { d.horizon };
    for h in 0..steps {
        let step = (!stationary).then_some(h);
        for s in 0..d.num_states {
            for a in 0..d.num_actions {
                let row = model.transition_row(h, s, a);
                for (next_state, &value) in row.iter().enumerate() {
                    if value < 0.0 || !value.is_finite() {
                        report.push(ModelViolation::NegativeProbability {
                            step,
                            state: s,
                            action: a,
                            next_state,
                            value,
                        });
                    }
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    report.push(ModelViolation::RowSum {
                        step,
                        state: s,
                        action: a,
                        sum,
                    });
                }
            }
        }
    }
    for s in 0..d.num_states {
        for a in 0..d.num_actions {
            let value = model.reward(s, a);
            if !(0.0..=1.0).contains(&value) {
                report.push(ModelViolation::RewardOutOfRange {
                    state: s,
                    action: a,
                    value,
                });
            }
            for i in 0..d.num_constraints {
                let value = model.constraint(i, s, a);
                if !(-1.0..=1.0).contains(&value) {
                    report.push(ModelViolation::ConstraintOutOfRange {
                        index: i,
                        state: s,
                        action: a,
                        value,
                    });
                }
            }
        }
        if !model.feasible_mask(s).iter().any(|&ok| ok) {
            report.push(ModelViolation::NoFeasibleAction { state: s });
        }
    }
    let sum: f64 = model.initial.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE || model.initial.iter().any(|&p| p < 0.0) {
        report.push(ModelViolation::InitialDistribution { sum });
    }
    report
}

/// Draws an index from a discrete distribution given as probabilities.
pub(crate) fn sample_index(probs: &[f64], rng: &mut SimRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive
}

/// What one environment step reports back to the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: usize,
    /// Reward on the learner's scale, in `[0, 1]`.
    pub reward: f64,
    /// Raw constraint values `f_i(s, a)`, in `[-1, 1]`.
    pub constraints: Vec<f64>,
    /// Reward on the environment's reporting scale (equal to `reward` unless
    /// the environment normalizes).
    pub report: f64,
}

/// Episodic interaction contract. `step` must only be called with actions
/// allowed by `feasible_actions`.
pub trait Environment {
    fn dims(&self) -> CmdpDims;

    fn reset(&mut self, rng: &mut SimRng) -> usize;

    fn step(&mut self, step: usize, state: usize, action: usize, rng: &mut SimRng)
        -> Result<StepOutcome>;

    fn feasible_actions(&self, state: usize) -> &[bool];
}

/// Simulates a [`KnownCmdp`] by sampling its transition rows.
#[derive(Debug, Clone, Copy)]
pub struct ModelEnv<'a> {
    model: &'a KnownCmdp,
}

impl<'a> ModelEnv<'a> {
    pub fn new(model: &'a KnownCmdp) -> Self {
        Self { model }
    }
}

impl Environment for ModelEnv<'_> {
    fn dims(&self) -> CmdpDims {
        self.model.dims
    }

    fn reset(&mut self, rng: &mut SimRng) -> usize {
        sample_index(&self.model.initial, rng)
    }

    fn step(
        &mut self,
        step: usize,
        state: usize,
        action: usize,
        rng: &mut SimRng,
    ) -> Result<StepOutcome> {
        let d = self.model.dims;
        d.check_step(step)?;
        d.check_state(state)?;
        d.check_action(action)?;
        if !self.model.is_feasible(state, action) {
            return Err(Error::InfeasibleAction {
                step,
                state,
                action,
            });
        }
        let next_state = sample_index(self.model.transition_row(step, state, action), rng);
        let reward = self.model.reward(state, action);
        Ok(StepOutcome {
            next_state,
            reward,
            constraints: self.model.constraint_vector(state, action),
            report: reward,
        })
    }

    fn feasible_actions(&self, state: usize) -> &[bool] {
        self.model.feasible_mask(state)
    }
}

/// Deterministic non-stationary policy: one action per `(step, state)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TimedPolicy {
    horizon: usize,
    num_states: usize,
    actions: Vec<usize>,
}

impl TimedPolicy {
    /// `actions` is indexed `[h * S + s]`.
    pub fn new(horizon: usize, num_states: usize, actions: Vec<usize>) -> Result<Self> {
        expect_len("policy table", horizon * num_states, actions.len())?;
        Ok(Self {
            horizon,
            num_states,
            actions,
        })
    }

    pub fn from_fn(
        horizon: usize,
        num_states: usize,
        mut choose: impl FnMut(usize, usize) -> usize,
    ) -> Self {
        let mut actions = Vec::with_capacity(horizon * num_states);
        for h in 0..horizon {
            for s in 0..num_states {
                actions.push(choose(h, s));
            }
        }
        Self {
            horizon,
            num_states,
            actions,
        }
    }

    /// The same action everywhere.
    pub fn constant(horizon: usize, num_states: usize, action: usize) -> Self {
        Self::from_fn(horizon, num_states, |_, _| action)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn action(&self, step: usize, state: usize) -> usize {
        self.actions[step * self.num_states + state]
    }

    pub fn set_action(&mut self, step: usize, state: usize, action: usize) {
        self.actions[step * self.num_states + state] = action;
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.actions
    }

    /// Checks table shape against `dims` and every entry against the action
    /// range and, through `mask`, against state feasibility.
    pub fn check<'m>(&self, dims: CmdpDims, mask: impl Fn(usize) -> &'m [bool]) -> Result<()> {
        expect_len("policy horizon", dims.horizon, self.horizon)?;
        expect_len("policy states", dims.num_states, self.num_states)?;
        for h in 0..self.horizon {
            for s in 0..self.num_states {
                let a = self.action(h, s);
                dims.check_action(a)?;
                if !mask(s)[a] {
                    return Err(Error::InfeasibleAction {
                        step: h,
                        state: s,
                        action: a,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Uniform mixture over deterministic policies: one component is drawn
/// before each episode, each with probability `1/K`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePolicy {
    components: Vec<TimedPolicy>,
}

impl MixturePolicy {
    pub fn new(components: Vec<TimedPolicy>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyMixture);
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[TimedPolicy] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.components.len() as f64
    }

    pub fn weights(&self) -> Vec<f64> {
        vec![self.weight(); self.components.len()]
    }

    pub fn sample_component(&self, rng: &mut SimRng) -> &TimedPolicy {
        if self.components.len() == 1 {
            return &self.components[0];
        }
        &self.components[rng.random_range(0..self.components.len())]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub report: f64,
    pub constraints: Vec<f64>,
    /// `violated[i]` is `f_i(s, a) < 0`.
    pub violated: Vec<bool>,
}

impl StepRecord {
    pub fn any_violated(&self) -> bool {
        self.violated.iter().any(|&v| v)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|r| r.reward).sum()
    }

    pub fn total_report(&self) -> f64 {
        self.steps.iter().map(|r| r.report).sum()
    }

    /// Number of steps at which at least one constraint was negative.
    pub fn violation_count(&self) -> usize {
        self.steps.iter().filter(|r| r.any_violated()).count()
    }
}

/// Runs one episode of `policy` in `env`.
pub fn rollout<E: Environment + ?Sized>(
    env: &mut E,
    policy: &TimedPolicy,
    rng: &mut SimRng,
) -> Result<Trajectory> {
    let dims = env.dims();
    expect_len("policy horizon", dims.horizon, policy.horizon)?;
    expect_len("policy states", dims.num_states, policy.num_states)?;
    let mut state = env.reset(rng);
    let mut steps = Vec::with_capacity(dims.horizon);
    for h in 0..dims.horizon {
        let action = policy.action(h, state);
        dims.check_action(action)?;
        if !env.feasible_actions(state)[action] {
            return Err(Error::InfeasibleAction {
                step: h,
                state,
                action,
            });
        }
        let outcome = env.step(h, state, action, rng)?;
        let violated = outcome.constraints.iter().map(|&f| f < 0.0).collect();
        steps.push(StepRecord {
            step: h,
            state,
            action,
            reward: outcome.reward,
            report: outcome.report,
            constraints: outcome.constraints,
            violated,
        });
        state = outcome.next_state;
    }
    Ok(Trajectory { steps })
}

/// Draws a component of `mixture` and runs one episode with it.
pub fn rollout_mixture<E: Environment + ?Sized>(
    env: &mut E,
    mixture: &MixturePolicy,
    rng: &mut SimRng,
) -> Result<Trajectory> {
    let policy = mixture.sample_component(rng);
    rollout(env, policy, rng)
}

#[cfg(test)]
#[allow(clippy::identity_op, clippy::erasing_op)]
mod tests {
    use super::*;

    fn uniform_model() -> KnownCmdp {
        let dims = CmdpDims::new(2, 2, 2, 1).unwrap();
        KnownCmdp::with_initial_state(
            dims,
            Transitions::per_step(vec![0.5; 2 * 2 * 2 * 2]),
            vec![0.1, 0.2, 0.3, 0.4],
            vec![1.0, -0.5, 0.0, 0.25],
            0,
        )
        .unwrap()
    }

    #[test]
    fn valid_model_has_empty_report() {
        assert!(validate_known_cmdp(&uniform_model()).is_empty());
    }

    #[test]
    fn short_row_is_reported_with_its_deficit() {
        let dims = CmdpDims::new(2, 2, 2, 1).unwrap();
        let mut probs = vec![0.5; 16];
        // (h=1, s=0, a=1) -> [0.5, 0.4]
        probs[((2 + 0) * 2 + 1) * 2 + 1] = 0.4;
        let model = KnownCmdp::with_initial_state(
            dims,
            Transitions::per_step(probs),
            vec![0.1; 4],
            vec![0.0; 4],
            0,
        )
        .unwrap();
        let report = validate_known_cmdp(&model);
        assert_eq!(report.len(), 1);
        match &report[0] {
            ModelViolation::RowSum {
                step,
                state,
                action,
                sum,
            } => {
                assert_eq!((*step, *state, *action), (Some(1), 0, 1));
                assert!((1.0 - sum - 0.1).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(report[0].to_string().contains("deficit"));
    }

    #[test]
    fn negative_reward_is_reported() {
        let dims = CmdpDims::new(2, 2, 2, 1).unwrap();
        let model = KnownCmdp::with_initial_state(
            dims,
            Transitions::stationary(vec![0.5; 8]),
            vec![0.1, -0.2, 0.3, 0.4],
            vec![0.0; 4],
            0,
        )
        .unwrap();
        let report = validate_known_cmdp(&model);
        assert_eq!(
            report,
            vec![ModelViolation::RewardOutOfRange {
                state: 0,
                action: 1,
                value: -0.2
            }]
        );
        assert!(report[0].to_string().contains("non-negativity"));
    }

    #[test]
    fn constraint_and_initial_breaches_are_reported() {
        let dims = CmdpDims::new(1, 2, 1, 1).unwrap();
        let model = KnownCmdp::new(
            dims,
            Transitions::stationary(vec![1.0, 1.0]),
            vec![0.5, 0.5],
            vec![1.5, 0.0],
            vec![0.7],
        )
        .unwrap();
        let report = validate_known_cmdp(&model);
        assert_eq!(report.len(), 2);
    }

    #[test]
    fn shape_errors_are_rejected_up_front() {
        let dims = CmdpDims::new(2, 2, 2, 1).unwrap();
        let err = KnownCmdp::with_initial_state(
            dims,
            Transitions::per_step(vec![0.5; 8]),
            vec![0.0; 4],
            vec![0.0; 4],
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { what: "transitions", .. }));
    }

    #[test]
    fn degenerate_chain_stays_put() {
        let dims = CmdpDims::new(1, 2, 3, 0).unwrap();
        let model = KnownCmdp::with_initial_state(
            dims,
            Transitions::stationary(vec![1.0, 1.0]),
            vec![0.2, 0.3],
            vec![],
            0,
        )
        .unwrap();
        let mut env = ModelEnv::new(&model);
        let policy = TimedPolicy::from_fn(3, 1, |h, _| h % 2);
        let traj = rollout(&mut env, &policy, &mut stream_rng(3, 0)).unwrap();
        assert_eq!(traj.steps.len(), 3);
        assert!(traj.steps.iter().all(|r| r.state == 0));
        assert_eq!(
            traj.steps.iter().map(|r| r.step).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert!((traj.total_reward() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn rollout_is_deterministic_and_matches_tables() {
        let model = uniform_model();
        let policy = TimedPolicy::from_fn(2, 2, |h, s| (h + s) % 2);
        let a = rollout(&mut ModelEnv::new(&model), &policy, &mut stream_rng(9, 1)).unwrap();
        let b = rollout(&mut ModelEnv::new(&model), &policy, &mut stream_rng(9, 1)).unwrap();
        assert_eq!(a, b);
        for rec in &a.steps {
            assert_eq!(rec.reward, model.reward(rec.state, rec.action));
            assert_eq!(rec.constraints, model.constraint_vector(rec.state, rec.action));
            assert_eq!(rec.violated[0], rec.constraints[0] < 0.0);
        }
    }

    #[test]
    fn infeasible_policy_action_is_a_hard_error() {
        let model = uniform_model()
            .with_feasibility(vec![true, true, true, false])
            .unwrap();
        // Only state 1 forbids action 1; a constant-1 policy hits it eventually.
        let policy = TimedPolicy::constant(2, 2, 1);
        let mut hit = false;
        for seed in 0..50 {
            match rollout(&mut ModelEnv::new(&model), &policy, &mut stream_rng(seed, 0)) {
                Err(Error::InfeasibleAction { state, action, .. }) => {
                    assert_eq!((state, action), (1, 1));
                    hit = true;
                }
                Err(e) => panic!("unexpected {e}"),
                Ok(_) => {}
            }
        }
        assert!(hit);
    }

    #[test]
    fn single_component_mixture_behaves_like_its_policy() {
        let model = uniform_model();
        let policy = TimedPolicy::from_fn(2, 2, |_, s| s);
        let mixture = MixturePolicy::new(vec![policy.clone()]).unwrap();
        for seed in 0..10 {
            let a = rollout(&mut ModelEnv::new(&model), &policy, &mut stream_rng(seed, 0)).unwrap();
            let b = rollout_mixture(&mut ModelEnv::new(&model), &mixture, &mut stream_rng(seed, 0))
                .unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn mixture_weights_are_uniform() {
        let p = TimedPolicy::constant(1, 1, 0);
        let q = TimedPolicy::constant(1, 1, 1);
        let mixture = MixturePolicy::new(vec![p, q]).unwrap();
        assert_eq!(mixture.weights(), vec![0.5, 0.5]);
        assert_eq!(MixturePolicy::new(vec![]).unwrap_err(), Error::EmptyMixture);
    }
}
