//! Small models for tests, self-checks and the acceptance suite.

use rand::Rng;

use crate::cmdp::{CmdpDims, KnownCmdp, SimRng, TimedPolicy, Transitions};
use crate::error::Result;

/// Options for [`random_cmdp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomCmdpSpec {
    pub dims: CmdpDims,
    /// Every state gets one action whose constraint values are all at least
    /// this large, so always playing it is strictly feasible with this slack.
    pub slack: f64,
    /// One-hot transition rows instead of random distributions.
    pub deterministic: bool,
}

impl RandomCmdpSpec {
    pub fn new(dims: CmdpDims, slack: f64) -> Self {
        Self {
            dims,
            slack,
            deterministic: false,
        }
    }

    pub fn deterministic(mut self) -> Self {
        self.deterministic = true;
        self
    }
}

/// Random model with rewards in `[0, 1]`, constraint values in `[-1, 1]`,
/// per-step transitions and initial state 0. Returns the model and the
/// safe action chosen for each state.
pub fn random_cmdp(spec: &RandomCmdpSpec, rng: &mut SimRng) -> Result<(KnownCmdp, Vec<usize>)> {
    let d = spec.dims;
    let (s_count, a_count) = (d.num_states, d.num_actions);
    let safe: Vec<usize> = (0..s_count).map(|_| rng.random_range(0..a_count)).collect();
    let reward: Vec<f64> = (0..s_count * a_count).map(|_| rng.random::<f64>()).collect();
    let mut constraints = vec![0.0; d.num_constraints * s_count * a_count];
    for i in 0..d.num_constraints {
        for s in 0..s_count {
            for a in 0..a_count {
                constraints[(i * s_count + s) * a_count + a] = if a == safe[s] {
                    rng.random_range(spec.slack..=1.0)
                } else {
                    rng.random_range(-1.0..=1.0)
                };
            }
        }
    }
    let rows = d.horizon * s_count * a_count;
    let mut probs = vec![0.0; rows * s_count];
    for row in probs.chunks_mut(s_count) {
        if spec.deterministic {
            row[rng.random_range(0..s_count)] = 1.0;
        } else {
            for p in row.iter_mut() {
                *p = rng.random::<f64>() + 1e-3;
            }
            let total: f64 = row.iter().sum();
            for p in row.iter_mut() {
                *p /= total;
            }
        }
    }
    let model = KnownCmdp::with_initial_state(
        d,
        Transitions::per_step(probs),
        reward,
        constraints,
        0,
    )?;
    Ok((model, safe))
}

/// Uniformly random deterministic timed policy over feasible actions.
pub fn random_policy(model: &KnownCmdp, rng: &mut SimRng) -> TimedPolicy {
    let d = model.dims();
    TimedPolicy::from_fn(d.horizon, d.num_states, |_, s| {
        let allowed: Vec<usize> = model
            .feasible_mask(s)
            .iter()
            .enumerate()
            .filter_map(|(a, &ok)| ok.then_some(a))
            .collect();
        allowed[rng.random_range(0..allowed.len())]
    })
}

/// One state, two actions, one step: action 0 earns 0.3 safely, action 1
/// earns 0.9 with constraint value -0.5.
pub fn constrained_bandit() -> KnownCmdp {
    KnownCmdp::with_initial_state(
        CmdpDims::new(1, 2, 1, 1).expect("static dims"),
        Transitions::stationary(vec![1.0, 1.0]),
        vec![0.3, 0.9],
        vec![0.5, -0.5],
        0,
    )
    .expect("static model")
}

/// Two steps over two states. From state 0, action 1 moves to state 1
/// where the only rewarding action breaks the constraint.
pub fn two_step_chain() -> KnownCmdp {
    let dims = CmdpDims::new(2, 2, 2, 1).expect("static dims");
    #[rustfmt::skip]
    let probs = vec![
        1.0, 0.0,   0.0, 1.0,
        0.0, 1.0,   0.0, 1.0,
    ];
    KnownCmdp::with_initial_state(
        dims,
        Transitions::stationary(probs),
        vec![0.2, 0.4, 0.1, 1.0],
        vec![1.0, 0.5, 0.3, -0.8],
        0,
    )
    .expect("static model")
}

/// A stochastic model where the relaxed optimum uses a violating action on
/// a rarely reached state. The relaxed problem only asks the expected
/// relaxed constraint to be non-negative, while the modified reward
/// penalizes every visit, so the relaxed optimum exceeds the modified
/// optimum here.
///
/// Step 0 moves from state 0 to state 1 with probability `reach` and to
/// state 2 otherwise. In state 1, action 1 earns 1 with constraint value
/// -1; every other choice earns 0 with constraint value 1.
pub fn rare_violation_model(reach: f64) -> KnownCmdp {
    let dims = CmdpDims::new(3, 2, 2, 1).expect("static dims");
    #[rustfmt::skip]
    let probs = vec![
        0.0, reach, 1.0 - reach,   0.0, reach, 1.0 - reach,
        0.0, 1.0, 0.0,             0.0, 1.0, 0.0,
        0.0, 0.0, 1.0,             0.0, 0.0, 1.0,
    ];
    KnownCmdp::with_initial_state(
        dims,
        Transitions::stationary(probs),
        vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        vec![1.0, 1.0, 1.0, -1.0, 1.0, 1.0],
        0,
    )
    .expect("static model")
}

/// The shipped tiny models with their names.
pub fn builtin_models() -> Vec<(&'static str, KnownCmdp)> {
    vec![
        ("constrained-bandit", constrained_bandit()),
        ("two-step-chain", two_step_chain()),
        ("rare-violation", rare_violation_model(0.05)),
    ]
}
