//! Exact and sampled evaluation of policies.
//!
//! On a known model, values come from backward induction and constraint
//! expectations from forward state-occupancy recursion, so no quantity used
//! by the optimality criteria carries sampling error.

use std::collections::HashMap;

use crate::cmdp::{rollout, Environment, KnownCmdp, MixturePolicy, SimRng, TimedPolicy};
use crate::error::{Error, Result};
use crate::shaping::{clip_neg, modified_reward, relaxed_constraint, ShapingParams};

/// Slack allowed when comparing optimal values computed by different routes.
pub const VALUE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactEvaluation {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    num_constraints: usize,
    penalty_scale: f64,
    initial: Vec<f64>,
    v: Vec<f64>,
    w_mod: Vec<f64>,
    q_mod: Vec<f64>,
    occupancy: Vec<f64>,
    f_neg: Vec<f64>,
    g: Vec<f64>,
    g_neg: Vec<f64>,
}

impl ExactEvaluation {
    /// `V_h(s)` on the raw reward, `h` in `0..=H`.
    pub fn v(&self, step: usize, state: usize) -> f64 {
        self.v[step * self.num_states + state]
    }

    /// `W_h(s)` on the modified reward, `h` in `0..=H`.
    pub fn w(&self, step: usize, state: usize) -> f64 {
        self.w_mod[step * self.num_states + state]
    }

    /// `Q_h(s, a)` of the policy on the modified reward.
    pub fn q(&self, step: usize, state: usize, action: usize) -> f64 {
        self.q_mod[(step * self.num_states + state) * self.num_actions + action]
    }

    /// Probability of being in `state` at `step`.
    pub fn occupancy(&self, step: usize, state: usize) -> f64 {
        self.occupancy[step * self.num_states + state]
    }

    /// `E[min(f_i, 0)]` at `step`.
    pub fn constraint_expectation(&self, step: usize, index: usize) -> f64 {
        self.f_neg[step * self.num_constraints + index]
    }

    /// `E[g_i]` at `step`, with `g_i = min(f_i, 0) + xi`.
    pub fn relaxed_expectation(&self, step: usize, index: usize) -> f64 {
        self.g[step * self.num_constraints + index]
    }

    /// `E[min(g_i, 0)]` at `step`.
    pub fn relaxed_negative_expectation(&self, step: usize, index: usize) -> f64 {
        self.g_neg[step * self.num_constraints + index]
    }

    /// Expected raw return from the initial distribution.
    pub fn start_value(&self) -> f64 {
        dot(&self.initial, &self.v[..self.num_states])
    }

    /// Expected modified return from the initial distribution.
    pub fn start_modified_value(&self) -> f64 {
        dot(&self.initial, &self.w_mod[..self.num_states])
    }

    /// `(eta / I) * sum_{h,i} E[min(g_i, 0)]`.
    pub fn penalty_total(&self) -> f64 {
        if self.num_constraints == 0 {
            return 0.0;
        }
        self.penalty_scale * self.g_neg.iter().sum::<f64>()
    }

    /// `sum_{h,i} |E[min(f_i, 0)]|`.
    pub fn violation_total(&self) -> f64 {
        self.f_neg.iter().map(|x| x.abs()).sum()
    }

    /// Modified start value minus raw start value minus the penalty total;
    /// zero up to rounding for every policy.
    pub fn penalty_identity_residual(&self) -> f64 {
        self.start_modified_value() - self.start_value() - self.penalty_total()
    }

    /// Whether `E[min(f_i, 0)] >= -tol` at every step and constraint.
    pub fn is_strictly_feasible(&self, tol: f64) -> bool {
        self.f_neg.iter().all(|&x| x >= -tol)
    }

    /// Whether `E[g_i] >= -tol` at every step and constraint.
    pub fn is_relaxed_feasible(&self, tol: f64) -> bool {
        self.g.iter().all(|&x| x >= -tol)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_policy_shape(model: &KnownCmdp, policy: &TimedPolicy) -> Result<()> {
    let d = model.dims();
    if policy.horizon() != d.horizon {
        return Err(Error::DimensionMismatch {
            what: "policy horizon",
            expected: d.horizon,
            actual: policy.horizon(),
        });
    }
    if policy.num_states() != d.num_states {
        return Err(Error::DimensionMismatch {
            what: "policy states",
            expected: d.num_states,
            actual: policy.num_states(),
        });
    }
    if let Some(&a) = policy.as_slice().iter().find(|&&a| a >= d.num_actions) {
        return Err(Error::IndexOutOfRange {
            what: "action",
            index: a,
            bound: d.num_actions,
        });
    }
    Ok(())
}

/// State distribution at each step under `policy`, `[h * S + s]`.
pub(crate) fn state_occupancy(model: &KnownCmdp, policy: &TimedPolicy) -> Vec<f64> {
    let d = model.dims();
    let s_count = d.num_states;
    let mut occ = vec![0.0; d.horizon * s_count];
    occ[..s_count].copy_from_slice(model.initial_distribution());
    for h in 0..d.horizon - 1 {
        let (cur, next) = occ[h * s_count..(h + 2) * s_count].split_at_mut(s_count);
        for (s, &mass) in cur.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let row = model.transition_row(h, s, policy.action(h, s));
            for (n, p) in next.iter_mut().zip(row) {
                *n += mass * p;
            }
        }
    }
    occ
}

/// Backward induction for raw and modified values plus exact constraint
/// expectations of `policy`.
pub fn exact_evaluate(
    model: &KnownCmdp,
    policy: &TimedPolicy,
    shaping: &ShapingParams,
) -> Result<ExactEvaluation> {
    check_policy_shape(model, policy)?;
    let d = model.dims();
    let (s_count, a_count, horizon, i_count) =
        (d.num_states, d.num_actions, d.horizon, d.num_constraints);

    let shaped: Vec<f64> = (0..s_count * a_count)
        .map(|sa| {
            let (s, a) = (sa / a_count, sa % a_count);
            modified_reward(model.reward(s, a), &model.constraint_vector(s, a), shaping)
        })
        .collect();

    let mut v = vec![0.0; (horizon + 1) * s_count];
    let mut w_mod = vec![0.0; (horizon + 1) * s_count];
    let mut q_mod = vec![0.0; horizon * s_count * a_count];
    for h in (0..horizon).rev() {
        let (v_now, v_next) = v[h * s_count..(h + 2) * s_count].split_at_mut(s_count);
        let (w_now, w_next) = w_mod[h * s_count..(h + 2) * s_count].split_at_mut(s_count);
        for s in 0..s_count {
            for a in 0..a_count {
                let row = model.transition_row(h, s, a);
                q_mod[(h * s_count + s) * a_count + a] = shaped[s * a_count + a] + dot(row, w_next);
            }
            let a = policy.action(h, s);
            let row = model.transition_row(h, s, a);
            v_now[s] = model.reward(s, a) + dot(row, v_next);
            w_now[s] = q_mod[(h * s_count + s) * a_count + a];
        }
    }

    let occupancy = state_occupancy(model, policy);
    let mut f_neg = vec![0.0; horizon * i_count];
    let mut g = vec![0.0; horizon * i_count];
    let mut g_neg = vec![0.0; horizon * i_count];
    for h in 0..horizon {
        for s in 0..s_count {
            let mass = occupancy[h * s_count + s];
            let a = policy.action(h, s);
            for i in 0..i_count {
                let f = model.constraint(i, s, a);
                let relaxed = relaxed_constraint(f, shaping.xi());
                f_neg[h * i_count + i] += mass * clip_neg(f);
                g[h * i_count + i] += mass * relaxed;
                g_neg[h * i_count + i] += mass * clip_neg(relaxed);
            }
        }
    }

    let penalty_scale = if i_count == 0 {
        0.0
    } else {
        shaping.eta() / i_count as f64
    };
    Ok(ExactEvaluation {
        num_states: s_count,
        num_actions: a_count,
        horizon,
        num_constraints: i_count,
        penalty_scale,
        initial: model.initial_distribution().to_vec(),
        v,
        w_mod,
        q_mod,
        occupancy,
        f_neg,
        g,
        g_neg,
    })
}

/// Exact value and constraint accounting of a uniform mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureEvaluation {
    /// Expected raw return of the mixture.
    pub v1: f64,
    /// Expected modified return of the mixture.
    pub w1: f64,
    /// `sum_{h,i} |E[min(f_i, 0)]|` with the expectation also taken over
    /// the choice of component.
    pub violation_total: f64,
    /// Component-wise absolute violations averaged over components; never
    /// smaller than `violation_total`.
    pub pointwise_violation_total: f64,
    /// Mixture `E[min(f_i, 0)]`, `[h * I + i]`.
    pub constraint_expectations: Vec<f64>,
}

/// Evaluates a mixture through its averaged state-action occupancy measure.
///
/// Identical components are evaluated once and weighted by multiplicity.
pub fn exact_evaluate_mixture(
    model: &KnownCmdp,
    mixture: &MixturePolicy,
    shaping: &ShapingParams,
) -> Result<MixtureEvaluation> {
    if mixture.is_empty() {
        return Err(Error::EmptyMixture);
    }
    let d = model.dims();
    let (s_count, a_count, horizon, i_count) =
        (d.num_states, d.num_actions, d.horizon, d.num_constraints);

    let mut counts: HashMap<&TimedPolicy, usize> = HashMap::new();
    let mut order = Vec::new();
    for policy in mixture.components() {
        check_policy_shape(model, policy)?;
        let n = counts.entry(policy).or_insert(0);
        if *n == 0 {
            order.push(policy);
        }
        *n += 1;
    }

    let total = mixture.len() as f64;
    let mut sa_occ = vec![0.0; horizon * s_count * a_count];
    let mut pointwise = 0.0;
    let mut component_f = vec![0.0; horizon * i_count];
    for policy in order {
        let weight = counts[policy] as f64 / total;
        let occ = state_occupancy(model, policy);
        component_f.fill(0.0);
        for h in 0..horizon {
            for s in 0..s_count {
                let mass = occ[h * s_count + s];
                let a = policy.action(h, s);
                sa_occ[(h * s_count + s) * a_count + a] += weight * mass;
                for i in 0..i_count {
                    component_f[h * i_count + i] += mass * clip_neg(model.constraint(i, s, a));
                }
            }
        }
        pointwise += weight * component_f.iter().map(|x| x.abs()).sum::<f64>();
    }

    let mut v1 = 0.0;
    let mut w1 = 0.0;
    let mut constraint_expectations = vec![0.0; horizon * i_count];
    for h in 0..horizon {
        for s in 0..s_count {
            for a in 0..a_count {
                let x = sa_occ[(h * s_count + s) * a_count + a];
                if x == 0.0 {
                    continue;
                }
                let f = model.constraint_vector(s, a);
                v1 += x * model.reward(s, a);
                w1 += x * modified_reward(model.reward(s, a), &f, shaping);
                for (i, &fv) in f.iter().enumerate() {
                    constraint_expectations[h * i_count + i] += x * clip_neg(fv);
                }
            }
        }
    }
    Ok(MixtureEvaluation {
        v1,
        w1,
        violation_total: constraint_expectations.iter().map(|x| x.abs()).sum(),
        pointwise_violation_total: pointwise,
        constraint_expectations,
    })
}

/// How violations of a mixture are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ViolationAggregation {
    /// Average constraint expectations over components, then take absolute
    /// values.
    #[default]
    Averaged,
    /// Average the per-component absolute violations.
    Pointwise,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonReport {
    pub reward_gap: f64,
    pub violation_total: f64,
}

impl EpsilonReport {
    /// Both the reward gap and the total violation are at most `epsilon`.
    pub fn is_eps_optimal(&self, epsilon: f64) -> bool {
        self.reward_gap <= epsilon && self.violation_total <= epsilon
    }
}

/// Reward gap to `v_star` and total expected violation of `candidate`.
pub fn epsilon_optimality(
    model: &KnownCmdp,
    candidate: &MixturePolicy,
    v_star: f64,
    shaping: &ShapingParams,
    aggregation: ViolationAggregation,
) -> Result<EpsilonReport> {
    let eval = exact_evaluate_mixture(model, candidate, shaping)?;
    Ok(EpsilonReport {
        reward_gap: v_star - eval.v1,
        violation_total: match aggregation {
            ViolationAggregation::Averaged => eval.violation_total,
            ViolationAggregation::Pointwise => eval.pointwise_violation_total,
        },
    })
}

/// Whether the relaxed constrained optimum is at most the unconstrained
/// optimum of the modified reward.
pub fn relaxed_within_modified(v_star_relaxed: f64, w_star: f64) -> bool {
    v_star_relaxed <= w_star + VALUE_TOLERANCE
}

/// Sample statistics over independent rollouts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloSummary {
    pub episodes: usize,
    pub mean_return: f64,
    pub std_error: f64,
    pub mean_report: f64,
    pub report_std_error: f64,
    pub mean_violation_count: f64,
    pub violation_std_error: f64,
}

/// Mean and standard error of a sample (zero error for a single value).
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Averages `episodes` independent rollouts of `policy`.
pub fn monte_carlo_value<E: Environment + ?Sized>(
    env: &mut E,
    policy: &TimedPolicy,
    episodes: usize,
    rng: &mut SimRng,
) -> Result<MonteCarloSummary> {
    if episodes == 0 {
        return Err(Error::InvalidParameter(
            "Monte-Carlo evaluation needs at least one episode".into(),
        ));
    }
    let mut returns = Vec::with_capacity(episodes);
    let mut reports = Vec::with_capacity(episodes);
    let mut violations = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let traj = rollout(env, policy, rng)?;
        returns.push(traj.total_reward());
        reports.push(traj.total_report());
        violations.push(traj.violation_count() as f64);
    }
    let (mean_return, std_error) = mean_and_std_error(&returns);
    let (mean_report, report_std_error) = mean_and_std_error(&reports);
    let (mean_violation_count, violation_std_error) = mean_and_std_error(&violations);
    Ok(MonteCarloSummary {
        episodes,
        mean_return,
        std_error,
        mean_report,
        report_std_error,
        mean_violation_count,
        violation_std_error,
    })
}
