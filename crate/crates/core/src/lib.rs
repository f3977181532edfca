//! Optimistic Q-learning for episodic MDPs with peak constraints, exact
//! evaluators and brute-force oracles for small models, and an
//! energy-harvesting transmitter with its classical baselines.

pub mod baselines;
pub mod cmdp;
pub mod energy;
pub mod error;
pub mod eval;
pub mod instances;
pub mod learner;
pub mod oracle;
pub mod shaping;

pub use cmdp::{
    rollout, rollout_mixture, stream_rng, validate_known_cmdp, CmdpDims, Environment, KnownCmdp,
    MixturePolicy, ModelEnv, SimRng, TimedPolicy, Trajectory, Transitions,
};
pub use error::{Error, Result};
pub use eval::{exact_evaluate, exact_evaluate_mixture, monte_carlo_value, ExactEvaluation};
pub use learner::{train, LearnerConfig, LearnerState, Trainer, TrainingOutput};
pub use oracle::{brute_force_constrained, FeasibilityMode, OracleOutcome};
pub use shaping::{modified_reward, ShapingParams};
