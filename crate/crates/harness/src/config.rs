//! Flat `section.key=value` experiment configuration.
//!
//! Lines are trimmed; blank lines and lines starting with `#` are ignored.
//! Unknown keys are rejected.
//!
//! | key | meaning |
//! |-----|---------|
//! | `env.horizon` | slots per episode `H` |
//! | `env.battery_cap` | battery capacity `B_cap` |
//! | `env.power_cap` | peak power `P_cap` |
//! | `env.arrival_cap` | largest arrival `E_cap` |
//! | `env.arrival_mean` | arrival mean `mu` |
//! | `env.arrival_std` | arrival deviation `sigma` |
//! | `env.initial_battery` | battery at the first slot `B_1` |
//! | `env.arrival_sampler` | `exact` (bin masses) or `continuous` (rounded draws) |
//! | `learner.episodes` | training episodes `K` |
//! | `learner.c1`, `learner.c2` | bonus constants |
//! | `learner.failure_prob` | confidence parameter `p` in the log factor |
//! | `learner.bonus` | `bernstein` or `hoeffding` |
//! | `learner.variance` | `empirical` or `verbatim` |
//! | `shaping.gamma` | slack lower bound `gamma` |
//! | `shaping.xi` | relaxation `xi` |
//! | `shaping.target_epsilon` | sets `xi = epsilon / (2 H I)` instead of `shaping.xi` |
//! | `shaping.eta` | overrides the penalty weight `eta = 2 H I / gamma` |
//! | `experiment.trajectories` | independent runs or evaluation sequences `M` |
//! | `experiment.sweep` | comma-separated arrival means |
//! | `experiment.balanced` | `uncapped` or `capped` balanced schedule in the comparison table |
//! | `experiment.output_dir` | directory for output files |
//! | `experiment.master_seed` | seed all run seeds derive from |

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use peakq_core::baselines::BalancedVariant;
use peakq_core::energy::{ArrivalMode, EnergyParams};
use peakq_core::learner::{BonusKind, VarianceEstimate};
use peakq_core::shaping::ShapingParams;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected key=value, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ArrivalSampler {
    #[default]
    Exact,
    Continuous,
}

impl ArrivalSampler {
    pub fn mode(self) -> ArrivalMode {
        match self {
            ArrivalSampler::Exact => ArrivalMode::ExactMass,
            ArrivalSampler::Continuous => ArrivalMode::RoundedContinuous,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnergyParams,
    pub arrival_sampler: ArrivalSampler,
    pub episodes: usize,
    pub c1: f64,
    pub c2: f64,
    pub failure_prob: f64,
    pub bonus: BonusKind,
    pub variance: VarianceEstimate,
    pub gamma: f64,
    pub xi: Option<f64>,
    pub target_epsilon: Option<f64>,
    pub eta: Option<f64>,
    pub trajectories: usize,
    pub sweep: Vec<f64>,
    pub balanced: BalancedVariant,
    pub output_dir: PathBuf,
    pub master_seed: u64,
}

/// Relaxation used when neither `shaping.xi` nor `shaping.target_epsilon`
/// is given.
pub const DEFAULT_XI: f64 = 0.01;

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: EnergyParams::default(),
            arrival_sampler: ArrivalSampler::Exact,
            episodes: 12_000,
            c1: 0.01,
            c2: 0.01,
            failure_prob: 0.05,
            bonus: BonusKind::Bernstein,
            variance: VarianceEstimate::Empirical,
            gamma: 1.0,
            xi: None,
            target_epsilon: None,
            eta: None,
            trajectories: 1000,
            sweep: vec![8.0, 9.0, 10.0, 11.0, 12.0],
            balanced: BalancedVariant::Uncapped,
            output_dir: PathBuf::from("out"),
            master_seed: 0,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn bad_choice(key: &str, value: &str, choices: &str) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: format!("expected one of {choices}"),
    }
}

impl ExperimentConfig {
    /// Reads and applies a config file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::default();
        config.apply_text(&text)?;
        Ok(config)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: n + 1,
                text: raw.to_string(),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax {
                line: 0,
                text: assignment.to_string(),
            })?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "env.horizon" => self.env.horizon = parse_num(key, value)?,
            "env.battery_cap" => self.env.battery_cap = parse_num(key, value)?,
            "env.power_cap" => self.env.power_cap = parse_num(key, value)?,
            "env.arrival_cap" => self.env.arrival_cap = parse_num(key, value)?,
            "env.arrival_mean" => self.env.arrival_mean = parse_num(key, value)?,
            "env.arrival_std" => self.env.arrival_std = parse_num(key, value)?,
            "env.initial_battery" => self.env.initial_battery = parse_num(key, value)?,
            "env.arrival_sampler" => {
                self.arrival_sampler = match value {
                    "exact" => ArrivalSampler::Exact,
                    "continuous" => ArrivalSampler::Continuous,
                    _ => return Err(bad_choice(key, value, "exact, continuous")),
                }
            }
            "learner.episodes" => self.episodes = parse_num(key, value)?,
            "learner.c1" => self.c1 = parse_num(key, value)?,
            "learner.c2" => self.c2 = parse_num(key, value)?,
            "learner.failure_prob" => self.failure_prob = parse_num(key, value)?,
            "learner.bonus" => {
                self.bonus = match value {
                    "bernstein" => BonusKind::Bernstein,
                    "hoeffding" => BonusKind::HoeffdingOnly,
                    _ => return Err(bad_choice(key, value, "bernstein, hoeffding")),
                }
            }
            "learner.variance" => {
                self.variance = match value {
                    "empirical" => VarianceEstimate::Empirical,
                    "verbatim" => VarianceEstimate::Verbatim,
                    _ => return Err(bad_choice(key, value, "empirical, verbatim")),
                }
            }
            "shaping.gamma" => self.gamma = parse_num(key, value)?,
            "shaping.xi" => self.xi = Some(parse_num(key, value)?),
            "shaping.target_epsilon" => self.target_epsilon = Some(parse_num(key, value)?),
            "shaping.eta" => self.eta = Some(parse_num(key, value)?),
            "experiment.trajectories" => self.trajectories = parse_num(key, value)?,
            "experiment.sweep" => {
                self.sweep = value
                    .split(',')
                    .map(|v| parse_num(key, v.trim()))
                    .collect::<Result<_, _>>()?
            }
            "experiment.balanced" => {
                self.balanced = match value {
                    "uncapped" => BalancedVariant::Uncapped,
                    "capped" => BalancedVariant::Capped,
                    _ => return Err(bad_choice(key, value, "uncapped, capped")),
                }
            }
            "experiment.output_dir" => self.output_dir = PathBuf::from(value),
            "experiment.master_seed" => self.master_seed = parse_num(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Shaping parameters for an environment with `horizon` steps and one
    /// constraint.
    pub fn shaping(&self, horizon: usize) -> Result<ShapingParams, ConfigError> {
        let invalid = |e: peakq_core::Error| ConfigError::Invalid(e.to_string());
        let xi = match (self.xi, self.target_epsilon) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "set either shaping.xi or shaping.target_epsilon, not both".into(),
                ))
            }
            (Some(xi), None) => xi,
            (None, Some(eps)) => {
                return match self.eta {
                    None => ShapingParams::for_target_epsilon(eps, self.gamma, horizon, 1)
                        .map_err(invalid),
                    Some(eta) => {
                        let xi = eps / (2.0 * horizon as f64);
                        ShapingParams::with_eta(xi, self.gamma, eta, horizon, 1).map_err(invalid)
                    }
                };
            }
            (None, None) => DEFAULT_XI,
        };
        match self.eta {
            None => ShapingParams::new(xi, self.gamma, horizon, 1),
            Some(eta) => ShapingParams::with_eta(xi, self.gamma, eta, horizon, 1),
        }
        .map_err(invalid)
    }

    /// Checks everything that can be checked before running.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: peakq_core::Error| ConfigError::Invalid(e.to_string());
        self.env.validate().map_err(invalid)?;
        for &mu in &self.sweep {
            let mut p = self.env;
            p.arrival_mean = mu;
            p.validate().map_err(invalid)?;
            peakq_core::energy::ArrivalDistribution::from_params(&p).map_err(invalid)?;
        }
        if self.sweep.is_empty() {
            return Err(ConfigError::Invalid("experiment.sweep is empty".into()));
        }
        if self.trajectories == 0 {
            return Err(ConfigError::Invalid(
                "experiment.trajectories must be positive".into(),
            ));
        }
        self.shaping(self.env.horizon)?;
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(ConfigError::Invalid("learner.c1 and learner.c2 must be positive".into()));
        }
        if !(self.failure_prob > 0.0 && self.failure_prob < 1.0) {
            return Err(ConfigError::Invalid("learner.failure_prob must lie in (0, 1)".into()));
        }
        Ok(())
    }
}
