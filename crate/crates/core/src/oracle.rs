//! Ground truth on small known models.
//!
//! Peak-constrained problems admit a deterministic optimal policy, so the
//! constrained optimum is found by enumerating every deterministic timed
//! policy and evaluating it exactly.

use rayon::prelude::*;

use crate::cmdp::{KnownCmdp, TimedPolicy};
use crate::error::{Error, Result};
use crate::shaping::{clip_neg, modified_reward, ShapingParams};

/// Largest number of policies [`brute_force_constrained`] will enumerate.
pub const ENUMERATION_LIMIT: u64 = 10_000_000;

/// Tolerance below zero accepted for a constraint expectation to count as
/// satisfied.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeasibilityMode {
    /// `E[min(f_i, 0)] >= 0` at every step.
    Strict,
    /// `E[min(f_i, 0) + xi] >= 0` at every step.
    Relaxed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub v_star: f64,
    pub optimal_policy: TimedPolicy,
    pub feasible_count: u64,
    pub searched: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutcome {
    Optimal(OracleResult),
    /// No deterministic policy meets the constraints.
    Infeasible { searched: u64 },
}

impl OracleOutcome {
    pub fn optimal(&self) -> Option<&OracleResult> {
        match self {
            OracleOutcome::Optimal(r) => Some(r),
            OracleOutcome::Infeasible { .. } => None,
        }
    }

    pub fn searched(&self) -> u64 {
        match self {
            OracleOutcome::Optimal(r) => r.searched,
            OracleOutcome::Infeasible { searched } => *searched,
        }
    }
}

/// Number of deterministic timed policies respecting the feasibility masks.
pub fn policy_count(model: &KnownCmdp) -> u128 {
    let d = model.dims();
    let mut count: u128 = 1;
    for _ in 0..d.horizon {
        for s in 0..d.num_states {
            let choices = model.feasible_mask(s).iter().filter(|&&ok| ok).count() as u128;
            count = count.saturating_mul(choices);
        }
    }
    count
}

#[derive(Clone, Copy)]
struct Best {
    value: f64,
    index: u64,
}

#[derive(Clone, Copy, Default)]
struct Tally {
    best: Option<Best>,
    feasible: u64,
}

impl Tally {
    fn merge(self, other: Tally) -> Tally {
        let best = match (self.best, other.best) {
            (Some(a), Some(b)) => {
                if b.value > a.value || (b.value == a.value && b.index < a.index) {
                    Some(b)
                } else {
                    Some(a)
                }
            }
            (a, b) => a.or(b),
        };
        Tally {
            best,
            feasible: self.feasible + other.feasible,
        }
    }
}

struct Scratch {
    actions: Vec<usize>,
    occ: Vec<f64>,
    next: Vec<f64>,
}

/// Enumerates every deterministic timed policy and returns the feasible one
/// with the largest expected raw return; ties go to the lexicographically
/// smallest action table.
pub fn brute_force_constrained(
    model: &KnownCmdp,
    shaping: &ShapingParams,
    mode: FeasibilityMode,
) -> Result<OracleOutcome> {
    let total = policy_count(model);
    if total > ENUMERATION_LIMIT as u128 {
        return Err(Error::EnumerationTooLarge {
            count: total,
            limit: ENUMERATION_LIMIT,
        });
    }
    let total = total as u64;
    let d = model.dims();
    let (s_count, horizon, i_count) = (d.num_states, d.horizon, d.num_constraints);
    let choices: Vec<Vec<usize>> = (0..s_count)
        .map(|s| {
            model
                .feasible_mask(s)
                .iter()
                .enumerate()
                .filter(|(_, &ok)| ok)
                .map(|(a, _)| a)
                .collect()
        })
        .collect();
    let slack = match mode {
        FeasibilityMode::Strict => 0.0,
        FeasibilityMode::Relaxed => shaping.xi(),
    };

    let decode = |mut index: u64, actions: &mut [usize]| {
        for j in (0..horizon * s_count).rev() {
            let options = &choices[j % s_count];
            let radix = options.len() as u64;
            actions[j] = options[(index % radix) as usize];
            index /= radix;
        }
    };

    // Returns the expected raw return when the policy is feasible.
    let evaluate = |scratch: &mut Scratch| -> Option<f64> {
        let Scratch { actions, occ, next } = scratch;
        occ.copy_from_slice(model.initial_distribution());
        let mut value = 0.0;
        for h in 0..horizon {
            for i in 0..i_count {
                let mut expect = 0.0;
                for s in 0..s_count {
                    if occ[s] != 0.0 {
                        expect += occ[s] * clip_neg(model.constraint(i, s, actions[h * s_count + s]));
                    }
                }
                if expect + slack < -FEASIBILITY_TOLERANCE {
                    return None;
                }
            }
            next.fill(0.0);
            for s in 0..s_count {
                let mass = occ[s];
                if mass == 0.0 {
                    continue;
                }
                let a = actions[h * s_count + s];
                value += mass * model.reward(s, a);
                if h + 1 < horizon {
                    for (n, p) in next.iter_mut().zip(model.transition_row(h, s, a)) {
                        *n += mass * p;
                    }
                }
            }
            std::mem::swap(occ, next);
        }
        Some(value)
    };

    let tally = (0..total)
        .into_par_iter()
        .map_init(
            || Scratch {
                actions: vec![0; horizon * s_count],
                occ: vec![0.0; s_count],
                next: vec![0.0; s_count],
            },
            |scratch, index| {
                decode(index, &mut scratch.actions);
                match evaluate(scratch) {
                    Some(value) => Tally {
                        best: Some(Best { value, index }),
                        feasible: 1,
                    },
                    None => Tally::default(),
                }
            },
        )
        .reduce(Tally::default, Tally::merge);

    Ok(match tally.best {
        None => OracleOutcome::Infeasible { searched: total },
        Some(best) => {
            let mut actions = vec![0; horizon * s_count];
            decode(best.index, &mut actions);
            OracleOutcome::Optimal(OracleResult {
                v_star: best.value,
                optimal_policy: TimedPolicy::new(horizon, s_count, actions)?,
                feasible_count: tally.feasible,
                searched: total,
            })
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedOptimum {
    /// Optimal expected modified return from the initial distribution.
    pub w_star: f64,
    /// `Q*_h(s, a)`, `[(h * S + s) * A + a]`; infeasible actions hold
    /// `-inf`.
    pub q_star: Vec<f64>,
    /// `W*_h(s)` for `h` in `0..=H`.
    pub w: Vec<f64>,
    pub policy: TimedPolicy,
}

/// Finite-horizon backward induction on the modified reward, ignoring the
/// constraints otherwise. Ties go to the smallest action.
pub fn unconstrained_modified_optimum(model: &KnownCmdp, shaping: &ShapingParams) -> ModifiedOptimum {
    let d = model.dims();
    let (s_count, a_count, horizon) = (d.num_states, d.num_actions, d.horizon);
    let mut w = vec![0.0; (horizon + 1) * s_count];
    let mut q_star = vec![f64::NEG_INFINITY; horizon * s_count * a_count];
    let mut actions = vec![0; horizon * s_count];
    for h in (0..horizon).rev() {
        for s in 0..s_count {
            let mut best: Option<(usize, f64)> = None;
            for a in 0..a_count {
                if !model.is_feasible(s, a) {
                    continue;
                }
                let r = modified_reward(model.reward(s, a), &model.constraint_vector(s, a), shaping);
                let future: f64 = model
                    .transition_row(h, s, a)
                    .iter()
                    .zip(&w[(h + 1) * s_count..(h + 2) * s_count])
                    .map(|(p, v)| p * v)
                    .sum();
                let q = r + future;
                q_star[(h * s_count + s) * a_count + a] = q;
                if best.is_none_or(|(_, bq)| q > bq) {
                    best = Some((a, q));
                }
            }
            // Models with an empty mask are rejected by validation; fall
            // back to action 0 with value -inf rather than panic.
            let (a, q) = best.unwrap_or((0, f64::NEG_INFINITY));
            actions[h * s_count + s] = a;
            w[h * s_count + s] = q;
        }
    }
    let w_star = model
        .initial_distribution()
        .iter()
        .zip(&w[..s_count])
        .map(|(p, v)| p * v)
        .sum();
    ModifiedOptimum {
        w_star,
        q_star,
        w,
        policy: TimedPolicy::new(horizon, s_count, actions).expect("shape built above"),
    }
}
