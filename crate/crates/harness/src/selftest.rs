//! Shipped self-checks on the built-in tiny models and random small
//! instances.

use peakq_core::cmdp::{stream_rng, CmdpDims, MixturePolicy, ModelEnv, SimRng};
use peakq_core::eval::{relaxed_within_modified, exact_evaluate, exact_evaluate_mixture, VALUE_TOLERANCE};
use peakq_core::instances::{
    constrained_bandit, random_cmdp, random_policy, two_step_chain, RandomCmdpSpec,
};
use peakq_core::learner::{train, LearnerConfig};
use peakq_core::oracle::{brute_force_constrained, unconstrained_modified_optimum, FeasibilityMode};
use peakq_core::shaping::{modified_reward, ShapingParams};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of sampling the modified-reward bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundCheck {
    pub samples: usize,
    pub failures: usize,
}

/// Samples `(r, f, xi, gamma, H, I)` with `gamma < min(xi, 2 H I (1 - xi))`
/// and counts samples where `|modified_reward| > eta`.
pub fn sample_reward_bound(samples: usize, rng: &mut SimRng) -> BoundCheck {
    let mut failures = 0;
    for _ in 0..samples {
        let horizon = rng.random_range(1..=20usize);
        let i_count = rng.random_range(1..=3usize);
        let xi = loop {
            let x: f64 = rng.random();
            if x > 0.0 {
                break x;
            }
        };
        let limit = xi.min(2.0 * (horizon * i_count) as f64 * (1.0 - xi));
        let gamma = limit * rng.random_range(1e-6..1.0);
        let shaping = ShapingParams::new(xi, gamma, horizon, i_count).expect("valid sample");
        debug_assert!(shaping.bound_hypothesis_holds());
        let r: f64 = rng.random();
        let f: Vec<f64> = (0..i_count).map(|_| rng.random_range(-1.0..=1.0)).collect();
        if modified_reward(r, &f, &shaping).abs() > shaping.eta() {
            failures += 1;
        }
    }
    BoundCheck { samples, failures }
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail,
    }
}

pub fn run_selftest(seed: u64) -> Vec<CheckResult> {
    let mut results = Vec::new();

    let bound = sample_reward_bound(10_000, &mut stream_rng(seed, 0));
    results.push(check(
        "modified reward bounded by eta",
        bound.failures == 0,
        format!("{} samples, {} failures", bound.samples, bound.failures),
    ));

    let mut rng = stream_rng(seed, 1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s = rng.random_range(1..5);
        let a = rng.random_range(1..4);
        let h = rng.random_range(1..5);
        let i = rng.random_range(1..3);
        let dims = CmdpDims::new(s, a, h, i).expect("positive dims");
        let (model, _) = random_cmdp(&RandomCmdpSpec::new(dims, 0.2), &mut rng).expect("valid");
        let policy = random_policy(&model, &mut rng);
        let shaping = ShapingParams::new(rng.random_range(0.0..0.5), rng.random_range(0.05..2.0), h, i)
            .expect("valid");
        let eval = exact_evaluate(&model, &policy, &shaping).expect("shapes match");
        worst = worst.max(eval.penalty_identity_residual().abs());
    }
    results.push(check(
        "modified value = raw value + penalty",
        worst <= VALUE_TOLERANCE,
        format!("largest residual {worst:e} over 100 policies"),
    ));

    let mut rng = stream_rng(seed, 2);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let dims = CmdpDims::new(3, 3, 3, 1).expect("positive dims");
        let (model, _) = random_cmdp(&RandomCmdpSpec::new(dims, 0.2), &mut rng).expect("valid");
        let shaping = ShapingParams::new(0.1, 0.5, 3, 1).expect("valid");
        let n = rng.random_range(1..=10);
        let policies: Vec<_> = (0..n).map(|_| random_policy(&model, &mut rng)).collect();
        let mean = policies
            .iter()
            .map(|p| exact_evaluate(&model, p, &shaping).expect("shapes match").start_value())
            .sum::<f64>()
            / n as f64;
        let mix = exact_evaluate_mixture(&model, &MixturePolicy::new(policies).expect("non-empty"), &shaping)
            .expect("shapes match");
        worst = worst.max((mix.v1 - mean).abs());
    }
    results.push(check(
        "mixture value = mean component value",
        worst <= VALUE_TOLERANCE,
        format!("largest gap {worst:e} over 50 mixtures"),
    ));

    let mut rng = stream_rng(seed, 3);
    let mut breaches = 0;
    for _ in 0..50 {
        let dims = CmdpDims::new(3, 2, 3, 1).expect("positive dims");
        let spec = RandomCmdpSpec::new(dims, 0.2).deterministic();
        let (model, _) = random_cmdp(&spec, &mut rng).expect("valid");
        let shaping = ShapingParams::new(0.1, 0.1, 3, 1).expect("valid");
        let relaxed = brute_force_constrained(&model, &shaping, FeasibilityMode::Relaxed)
            .expect("small model");
        let w_star = unconstrained_modified_optimum(&model, &shaping).w_star;
        if let Some(r) = relaxed.optimal() {
            if !relaxed_within_modified(r.v_star, w_star) {
                breaches += 1;
            }
        }
    }
    results.push(check(
        "relaxed optimum <= modified optimum (deterministic moves)",
        breaches == 0,
        format!("{breaches} of 50 models breach"),
    ));

    let shaping = ShapingParams::new(0.1, 0.5, 1, 1).expect("valid");
    let bandit = brute_force_constrained(&constrained_bandit(), &shaping, FeasibilityMode::Strict)
        .expect("small model");
    let v = bandit.optimal().map(|r| r.v_star);
    results.push(check(
        "oracle on constrained bandit",
        v == Some(0.3),
        format!("strict optimum {v:?}, expected 0.3"),
    ));
    let shaping = ShapingParams::new(0.1, 0.5, 2, 1).expect("valid");
    let chain = brute_force_constrained(&two_step_chain(), &shaping, FeasibilityMode::Strict)
        .expect("small model");
    let v = chain.optimal().map(|r| r.v_star);
    results.push(check(
        "oracle on two-step chain",
        v.is_some_and(|v| (v - 0.6).abs() < 1e-12),
        format!("strict optimum {v:?}, expected 0.6"),
    ));

    let model = constrained_bandit();
    let shaping = ShapingParams::new(0.1, 0.5, 1, 1).expect("valid");
    let out = train(&mut ModelEnv::new(&model), &LearnerConfig::new(2000, shaping, seed))
        .expect("bandit training");
    let action = out.final_policy.action(0, 0);
    results.push(check(
        "learner avoids the violating bandit arm",
        action == 0,
        format!("final action {action}"),
    ));

    results
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_checks_pass() {
        for r in run_selftest(0) {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
