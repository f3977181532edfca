//! Penalty shaping that turns peak constraints into a modified reward.
//!
//! A constraint value `f` is relaxed to `g = min(f, 0) + xi`; the modified
//! reward adds `(eta / I) * sum_i min(g_i, 0)` to the raw reward, so it equals
//! the raw reward whenever every `f_i >= -xi`.

use crate::cmdp::KnownCmdp;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapingParams {
    xi: f64,
    gamma: f64,
    eta: f64,
    horizon: usize,
    num_constraints: usize,
    eta_overridden: bool,
}

impl ShapingParams {
    /// Relaxation `xi` and slack bound `gamma`, with the penalty weight set to
    /// `eta = 2 H I / gamma`.
    ///
    /// `xi = 0` is accepted and gives the unrelaxed problem.
    pub fn new(xi: f64, gamma: f64, horizon: usize, num_constraints: usize) -> Result<Self> {
        check_common(xi, gamma, horizon)?;
        let eta = 2.0 * horizon as f64 * num_constraints as f64 / gamma;
        Ok(Self {
            xi,
            gamma,
            eta,
            horizon,
            num_constraints,
            eta_overridden: false,
        })
    }

    /// Sets `eta` directly instead of deriving it from `gamma`.
    pub fn with_eta(
        xi: f64,
        gamma: f64,
        eta: f64,
        horizon: usize,
        num_constraints: usize,
    ) -> Result<Self> {
        check_common(xi, gamma, horizon)?;
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "penalty weight eta must be finite and non-negative, got {eta}"
            )));
        }
        Ok(Self {
            xi,
            gamma,
            eta,
            horizon,
            num_constraints,
            eta_overridden: true,
        })
    }

    /// Picks `xi = epsilon / (2 H I)` for a target accuracy `epsilon`.
    pub fn for_target_epsilon(
        epsilon: f64,
        gamma: f64,
        horizon: usize,
        num_constraints: usize,
    ) -> Result<Self> {
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "target epsilon must be positive, got {epsilon}"
            )));
        }
        let xi = if num_constraints == 0 {
            0.0
        } else {
            epsilon / (2.0 * horizon as f64 * num_constraints as f64)
        };
        Self::new(xi, gamma, horizon, num_constraints)
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_constraints(&self) -> usize {
        self.num_constraints
    }

    /// True when `eta` was set explicitly rather than as `2 H I / gamma`.
    pub fn eta_overridden(&self) -> bool {
        self.eta_overridden
    }

    /// Whether `gamma < min(xi, 2 H I (1 - xi))`, the condition under which
    /// the modified reward is bounded by `eta` in absolute value.
    pub fn bound_hypothesis_holds(&self) -> bool {
        let hi = 2.0 * self.horizon as f64 * self.num_constraints as f64;
        self.gamma < self.xi.min(hi * (1.0 - self.xi))
    }

    /// Bound on `|modified_reward|` usable without a model: `eta` when the
    /// hypothesis holds, otherwise the conservative `1 + eta`.
    pub fn reward_bound(&self) -> f64 {
        if self.bound_hypothesis_holds() {
            self.eta
        } else {
            1.0 + self.eta
        }
    }
}

fn check_common(xi: f64, gamma: f64, horizon: usize) -> Result<()> {
    if !(xi >= 0.0 && xi.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "relaxation xi must be finite and non-negative, got {xi}"
        )));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "slack bound gamma must be positive, got {gamma}"
        )));
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    Ok(())
}

/// `min(x, 0)`.
pub fn clip_neg(x: f64) -> f64 {
    x.min(0.0)
}

/// Relaxed constraint value `g = min(f, 0) + xi`.
pub fn relaxed_constraint(f_value: f64, xi: f64) -> f64 {
    clip_neg(f_value) + xi
}

/// Raw reward plus the averaged penalty over negative relaxed constraints.
pub fn modified_reward(raw_reward: f64, f_values: &[f64], params: &ShapingParams) -> f64 {
    if f_values.is_empty() {
        return raw_reward;
    }
    let penalty: f64 = f_values
        .iter()
        .map(|&f| clip_neg(relaxed_constraint(f, params.xi)))
        .sum();
    if penalty == 0.0 {
        return raw_reward;
    }
    raw_reward + params.eta / f_values.len() as f64 * penalty
}

/// Exact range of the modified reward over every feasible `(s, a)` of
/// `model`.
pub fn modified_reward_range(model: &KnownCmdp, params: &ShapingParams) -> (f64, f64) {
    let d = model.dims();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in 0..d.num_states {
        for a in 0..d.num_actions {
            if !model.is_feasible(s, a) {
                continue;
            }
            let r = modified_reward(model.reward(s, a), &model.constraint_vector(s, a), params);
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(xi: f64, eta: f64, i: usize) -> ShapingParams {
        ShapingParams::with_eta(xi, 1.0, eta, 20, i).unwrap()
    }

    #[test]
    fn clip_neg_cases() {
        assert_eq!(clip_neg(0.4), 0.0);
        assert_eq!(clip_neg(-0.3), -0.3);
        assert_eq!(clip_neg(0.0), 0.0);
    }

    #[test]
    fn relaxed_constraint_cases() {
        assert!((relaxed_constraint(0.5, 0.1) - 0.1).abs() < 1e-15);
        assert!((relaxed_constraint(-0.3, 0.1) - (-0.2)).abs() < 1e-15);
        assert!((relaxed_constraint(0.0, 0.1) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn modified_reward_cases() {
        assert_eq!(modified_reward(0.5, &[0.2], &params(0.1, 4.0, 1)), 0.5);
        assert_eq!(modified_reward(0.5, &[0.2], &params(0.7, 123.0, 1)), 0.5);
        let one = modified_reward(0.5, &[-0.3], &params(0.1, 4.0, 1));
        assert!((one - (-0.3)).abs() < 1e-12, "{one}");
        let two = modified_reward(0.5, &[-0.3, 0.2], &params(0.1, 4.0, 2));
        assert!((two - 0.1).abs() < 1e-12, "{two}");
        assert_eq!(modified_reward(0.5, &[], &params(0.1, 4.0, 0)), 0.5);
    }

    #[test]
    fn default_eta_is_two_h_i_over_gamma() {
        let p = ShapingParams::new(0.1, 0.5, 20, 3).unwrap();
        assert_eq!(p.eta(), 240.0);
        assert!(!p.eta_overridden());
        assert!(params(0.1, 4.0, 1).eta_overridden());
    }

    #[test]
    fn target_epsilon_sets_xi() {
        let p = ShapingParams::for_target_epsilon(0.4, 1.0, 20, 1).unwrap();
        assert!((p.xi() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(ShapingParams::new(-0.1, 1.0, 5, 1).is_err());
        assert!(ShapingParams::new(0.1, 0.0, 5, 1).is_err());
        assert!(ShapingParams::with_eta(0.1, 1.0, -1.0, 5, 1).is_err());
    }

    #[test]
    fn bound_hypothesis_cases() {
        assert!(ShapingParams::new(0.5, 0.4, 20, 1).unwrap().bound_hypothesis_holds());
        let energy = ShapingParams::new(0.01, 1.0, 20, 1).unwrap();
        assert!(!energy.bound_hypothesis_holds());
        assert_eq!(energy.reward_bound(), 1.0 + energy.eta());
        for gamma in [1e-6, 0.3, 0.99, 5.0] {
            assert!(!ShapingParams::new(1.0, gamma, 20, 1).unwrap().bound_hypothesis_holds());
        }
    }

    // Term-by-term evaluation of the same formula, kept deliberately naive.
    fn naive(r: f64, f: &[f64], xi: f64, eta: f64) -> f64 {
        let mut sum = 0.0;
        for &v in f {
            let neg = if v < 0.0 { v } else { 0.0 };
            let g = neg + xi;
            if g < 0.0 {
                sum += g;
            }
        }
        r + eta / f.len() as f64 * sum
    }

    proptest! {
        #[test]
        fn bounded_by_eta_under_hypothesis(
            r in 0.0f64..=1.0,
            f in prop::collection::vec(-1.0f64..=1.0, 1..4),
            xi in 0.0f64..1.0,
            gamma_frac in 0.001f64..1.0,
            h in 1usize..25,
        ) {
            let i = f.len();
            let limit = xi.min(2.0 * (h * i) as f64 * (1.0 - xi));
            prop_assume!(limit > 0.0);
            let p = ShapingParams::new(xi, gamma_frac * limit, h, i).unwrap();
            prop_assume!(p.bound_hypothesis_holds());
            prop_assert!(modified_reward(r, &f, &p).abs() <= p.eta());
        }

        #[test]
        fn monotone_in_reward_and_constraints(
            r in 0.0f64..=0.9,
            dr in 0.0f64..0.1,
            f in prop::collection::vec(-1.0f64..=1.0, 1..4),
            bump in 0.0f64..0.5,
            which in 0usize..4,
            xi in 0.0f64..1.0,
            eta in 0.0f64..100.0,
        ) {
            let p = params(xi, eta, f.len());
            let base = modified_reward(r, &f, &p);
            prop_assert!(modified_reward(r + dr, &f, &p) >= base);
            let mut g = f.clone();
            let k = which % g.len();
            g[k] = (g[k] + bump).min(1.0);
            prop_assert!(modified_reward(r, &g, &p) >= base);
        }

        #[test]
        fn penalty_inactive_within_relaxation(
            r in 0.0f64..=1.0,
            xi in 0.0f64..1.0,
            fracs in prop::collection::vec(0.0f64..=1.0, 1..4),
            eta in 0.0f64..100.0,
        ) {
            let f: Vec<f64> = fracs.iter().map(|u| -xi + u * (1.0 + xi)).collect();
            prop_assert_eq!(modified_reward(r, &f, &params(xi, eta, f.len())), r);
        }

        #[test]
        fn agrees_with_naive_evaluation(
            r in 0.0f64..=1.0,
            f in prop::collection::vec(-1.0f64..=1.0, 1..5),
            xi in 0.0f64..1.0,
            eta in 0.0f64..100.0,
        ) {
            let got = modified_reward(r, &f, &params(xi, eta, f.len()));
            prop_assert!((got - naive(r, &f, xi, eta)).abs() <= 1e-12 * (1.0 + eta));
        }
    }
}
