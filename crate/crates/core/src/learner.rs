//! Optimistic Q-learning on the penalty-shaped reward.
//!
//! Tables start at `eta * H`. Each visit to `(h, s, a)` blends the old value
//! toward `R + W_{h+1}(s') + b_t` with step size `(H + 1) / (H + t)`, where
//! `b_t` is derived from a Bernstein-style confidence width `beta_t` built on
//! running moments of the observed next-step values. `W_h(s)` is the best
//! feasible `Q_h(s, .)` clipped at `eta * H`, and `W_{H+1} = 0`.

use crate::cmdp::{stream_rng, CmdpDims, Environment, MixturePolicy, TimedPolicy};
use crate::error::{Error, Result};
use crate::shaping::{modified_reward, ShapingParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BonusKind {
    /// `min(bernstein, hoeffding)`.
    Bernstein,
    /// Only the variance-free term `c2 * eta * sqrt(H^3 l / t)`.
    HoeffdingOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceEstimate {
    /// `moment2 / t - (moment1 / t)^2`, clamped at zero.
    Empirical,
    /// `(moment2 - moment1^2) / t` on the running sums, as literally written
    /// in the original update; kept for comparison.
    Verbatim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotMode {
    /// The greedy policy at the start of every episode.
    Full,
    /// Only the greedy policy after the last episode.
    Final,
    /// Episode-start policies of the last `n` episodes.
    Tail(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    pub episodes: usize,
    pub c1: f64,
    pub c2: f64,
    pub failure_prob: f64,
    pub shaping: ShapingParams,
    pub seed: u64,
    pub snapshot_mode: SnapshotMode,
    pub bonus: BonusKind,
    pub variance: VarianceEstimate,
}

impl LearnerConfig {
    pub const DEFAULT_C1: f64 = 0.01;
    pub const DEFAULT_C2: f64 = 0.01;
    pub const DEFAULT_FAILURE_PROB: f64 = 0.05;

    pub fn new(episodes: usize, shaping: ShapingParams, seed: u64) -> Self {
        Self {
            episodes,
            c1: Self::DEFAULT_C1,
            c2: Self::DEFAULT_C2,
            failure_prob: Self::DEFAULT_FAILURE_PROB,
            shaping,
            seed,
            snapshot_mode: SnapshotMode::Final,
            bonus: BonusKind::Bernstein,
            variance: VarianceEstimate::Empirical,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bonus constants must be positive (c1={}, c2={})",
                self.c1, self.c2
            )));
        }
        if !(self.failure_prob > 0.0 && self.failure_prob < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "failure probability must lie in (0, 1), got {}",
                self.failure_prob
            )));
        }
        Ok(())
    }

    /// `l = ln(S A T / p)` with `T = K H` (at least one step).
    pub fn log_factor(&self, dims: CmdpDims) -> f64 {
        let steps = (self.episodes * dims.horizon).max(1) as f64;
        (dims.state_action_count() as f64 * steps / self.failure_prob).ln()
    }
}

/// `alpha_t = (H + 1) / (H + t)`.
pub fn learning_rate(t: u64, horizon: usize) -> f64 {
    let h = horizon as f64;
    (h + 1.0) / (h + t as f64)
}

/// Constants entering the confidence width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BonusParams {
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub eta: f64,
    pub log_factor: f64,
    pub c1: f64,
    pub c2: f64,
    pub kind: BonusKind,
    pub variance: VarianceEstimate,
}

impl BonusParams {
    pub fn from_config(dims: CmdpDims, config: &LearnerConfig) -> Self {
        Self {
            horizon: dims.horizon,
            num_states: dims.num_states,
            num_actions: dims.num_actions,
            eta: config.shaping.eta(),
            log_factor: config.log_factor(dims),
            c1: config.c1,
            c2: config.c2,
            kind: config.bonus,
            variance: config.variance,
        }
    }
}

/// Confidence width `beta_t` after `t` visits whose next-step values have
/// running sum `moment1` and running sum of squares `moment2`.
pub fn bernstein_beta(t: u64, moment1: f64, moment2: f64, p: &BonusParams) -> f64 {
    let t = t as f64;
    let h = p.horizon as f64;
    let ell = p.log_factor;
    let hoeffding = p.c2 * p.eta * (h.powi(3) * ell / t).sqrt();
    if p.kind == BonusKind::HoeffdingOnly {
        return hoeffding;
    }
    let variance = match p.variance {
        VarianceEstimate::Empirical => {
            let mean = moment1 / t;
            (moment2 / t - mean * mean).max(0.0)
        }
        VarianceEstimate::Verbatim => (moment2 - moment1 * moment1) / t,
    };
    let spread = ((h / t) * (variance + p.eta * h) * ell).max(0.0).sqrt();
    let lower_order = p.eta * (h.powi(7) * (p.num_states * p.num_actions) as f64).sqrt() * ell / t;
    (p.c1 * (spread + lower_order)).min(hoeffding)
}

/// `b_t = (beta_t - (1 - alpha_t) beta_{t-1}) / (2 alpha_t)`. May be negative.
pub fn bonus_b(beta_t: f64, beta_prev: f64, alpha_t: f64) -> f64 {
    (beta_t - (1.0 - alpha_t) * beta_prev) / (2.0 * alpha_t)
}

/// One observed transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<'a> {
    pub step: usize,
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub reward: f64,
    pub constraints: &'a [f64],
}

/// What a single update did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub visit: u64,
    pub alpha: f64,
    pub beta: f64,
    pub bonus: f64,
    pub modified_reward: f64,
    pub q: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    dims: CmdpDims,
    eta: f64,
    q: Vec<f64>,
    w: Vec<f64>,
    visits: Vec<u64>,
    moment1: Vec<f64>,
    moment2: Vec<f64>,
    beta_prev: Vec<f64>,
}

impl LearnerState {
    /// Fresh tables: `Q` and `W_{1..H}` at `eta * H`, everything else zero.
    pub fn new(dims: CmdpDims, eta: f64) -> Self {
        let sa = dims.horizon * dims.state_action_count();
        let optimistic = eta * dims.horizon as f64;
        let mut w = vec![optimistic; (dims.horizon + 1) * dims.num_states];
        w[dims.horizon * dims.num_states..].fill(0.0);
        Self {
            dims,
            eta,
            q: vec![optimistic; sa],
            w,
            visits: vec![0; sa],
            moment1: vec![0.0; sa],
            moment2: vec![0.0; sa],
            beta_prev: vec![0.0; sa],
        }
    }

    /// Reassembles a state from raw tables, checking their shapes.
    #[allow(clippy::too_many_arguments)]
    pub fn from_tables(
        dims: CmdpDims,
        eta: f64,
        q: Vec<f64>,
        w: Vec<f64>,
        visits: Vec<u64>,
        moment1: Vec<f64>,
        moment2: Vec<f64>,
        beta_prev: Vec<f64>,
    ) -> Result<Self> {
        let sa = dims.horizon * dims.state_action_count();
        for (what, len) in [
            ("q table", q.len()),
            ("visit table", visits.len()),
            ("moment1 table", moment1.len()),
            ("moment2 table", moment2.len()),
            ("beta table", beta_prev.len()),
        ] {
            if len != sa {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: sa,
                    actual: len,
                });
            }
        }
        let ws = (dims.horizon + 1) * dims.num_states;
        if w.len() != ws {
            return Err(Error::DimensionMismatch {
                what: "w table",
                expected: ws,
                actual: w.len(),
            });
        }
        Ok(Self {
            dims,
            eta,
            q,
            w,
            visits,
            moment1,
            moment2,
            beta_prev,
        })
    }

    pub fn dims(&self) -> CmdpDims {
        self.dims
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// The clip level `eta * H` applied to `W`.
    pub fn value_cap(&self) -> f64 {
        self.eta * self.dims.horizon as f64
    }

    fn idx(&self, step: usize, state: usize, action: usize) -> usize {
        (step * self.dims.num_states + state) * self.dims.num_actions + action
    }

    pub fn q(&self, step: usize, state: usize, action: usize) -> f64 {
        self.q[self.idx(step, state, action)]
    }

    /// `W_h(s)` for `h` in `0..=H`.
    pub fn w(&self, step: usize, state: usize) -> f64 {
        self.w[step * self.dims.num_states + state]
    }

    pub fn visits(&self, step: usize, state: usize, action: usize) -> u64 {
        self.visits[self.idx(step, state, action)]
    }

    pub fn moment1(&self, step: usize, state: usize, action: usize) -> f64 {
        self.moment1[self.idx(step, state, action)]
    }

    pub fn moment2(&self, step: usize, state: usize, action: usize) -> f64 {
        self.moment2[self.idx(step, state, action)]
    }

    pub fn beta_prev(&self, step: usize, state: usize, action: usize) -> f64 {
        self.beta_prev[self.idx(step, state, action)]
    }

    pub fn q_table(&self) -> &[f64] {
        &self.q
    }

    pub fn w_table(&self) -> &[f64] {
        &self.w
    }

    pub fn visit_table(&self) -> &[u64] {
        &self.visits
    }

    pub fn moment1_table(&self) -> &[f64] {
        &self.moment1
    }

    pub fn moment2_table(&self) -> &[f64] {
        &self.moment2
    }

    pub fn beta_table(&self) -> &[f64] {
        &self.beta_prev
    }

    fn q_row(&self, step: usize, state: usize) -> &[f64] {
        let start = self.idx(step, state, 0);
        &self.q[start..start + self.dims.num_actions]
    }

    /// Feasible action with the largest `Q_h(s, .)`; ties go to the smallest
    /// index.
    pub fn select_action(&self, step: usize, state: usize, feasible: &[bool]) -> Result<usize> {
        self.dims.check_step(step)?;
        self.dims.check_state(state)?;
        argmax_feasible(self.q_row(step, state), feasible).ok_or(Error::EmptyActionMask { state })
    }

    /// Greedy policy of the current tables under per-state feasibility masks.
    pub fn greedy_policy<'m>(&self, mask: impl Fn(usize) -> &'m [bool]) -> Result<TimedPolicy> {
        let d = self.dims;
        let mut actions = Vec::with_capacity(d.horizon * d.num_states);
        for h in 0..d.horizon {
            for s in 0..d.num_states {
                let a = argmax_feasible(self.q_row(h, s), mask(s))
                    .ok_or(Error::EmptyActionMask { state: s })?;
                actions.push(a);
            }
        }
        TimedPolicy::new(d.horizon, d.num_states, actions)
    }

    /// Applies one learning update for `obs`. `feasible` is the action mask
    /// of `obs.state`, used for the maximum defining `W_h(s)`.
    pub fn update(
        &mut self,
        obs: &Observation<'_>,
        feasible: &[bool],
        bonus: &BonusParams,
        shaping: &ShapingParams,
    ) -> Result<StepLog> {
        let d = self.dims;
        d.check_step(obs.step)?;
        d.check_state(obs.state)?;
        d.check_state(obs.next_state)?;
        d.check_action(obs.action)?;
        if feasible.len() != d.num_actions {
            return Err(Error::DimensionMismatch {
                what: "action mask",
                expected: d.num_actions,
                actual: feasible.len(),
            });
        }
        let i = self.idx(obs.step, obs.state, obs.action);

        self.visits[i] += 1;
        let t = self.visits[i];
        let next_w = self.w(obs.step + 1, obs.next_state);
        self.moment1[i] += next_w;
        self.moment2[i] += next_w * next_w;

        let alpha = learning_rate(t, d.horizon);
        let beta = bernstein_beta(t, self.moment1[i], self.moment2[i], bonus);
        let b = bonus_b(beta, self.beta_prev[i], alpha);
        self.beta_prev[i] = beta;

        let r = modified_reward(obs.reward, obs.constraints, shaping);
        self.q[i] = (1.0 - alpha) * self.q[i] + alpha * (r + next_w + b);

        let best = self
            .q_row(obs.step, obs.state)
            .iter()
            .zip(feasible)
            .filter(|(_, &ok)| ok)
            .map(|(&q, _)| q)
            .fold(f64::NEG_INFINITY, f64::max);
        let w = self.value_cap().min(best);
        let wi = obs.step * d.num_states + obs.state;
        self.w[wi] = w;

        Ok(StepLog {
            visit: t,
            alpha,
            beta,
            bonus: b,
            modified_reward: r,
            q: self.q[i],
            w,
        })
    }
}

fn argmax_feasible(values: &[f64], feasible: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (a, (&v, &ok)) in values.iter().zip(feasible).enumerate() {
        if ok && best.is_none_or(|(_, bv)| v > bv) {
            best = Some((a, v));
        }
    }
    best.map(|(a, _)| a)
}

/// Per-episode training statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeLog {
    /// Zero-based episode index.
    pub episode: usize,
    pub total_reward: f64,
    pub total_modified_reward: f64,
    /// Sum of the environment's reporting-scale reward.
    pub total_report: f64,
    /// Steps at which any constraint value was negative.
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySnapshot {
    /// Episode whose start the snapshot was taken at; equals the number of
    /// training episodes for the post-training snapshot.
    pub episode: usize,
    pub policy: TimedPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutput {
    pub log: Vec<EpisodeLog>,
    pub snapshots: Vec<PolicySnapshot>,
    pub final_policy: TimedPolicy,
    pub state: LearnerState,
}

impl TrainingOutput {
    /// Uniform mixture over the recorded snapshots.
    pub fn mixture(&self) -> Result<MixturePolicy> {
        build_mixture(self.snapshots.iter().map(|s| s.policy.clone()).collect())
    }
}

/// Drives training episode by episode. Episode `k` draws all of its
/// randomness from stream `k` of the configured seed, so a run can be split
/// and resumed without changing its outcome.
pub struct Trainer<'e, E: Environment + ?Sized> {
    env: &'e mut E,
    config: LearnerConfig,
    bonus: BonusParams,
    state: LearnerState,
    episodes_done: usize,
    log: Vec<EpisodeLog>,
    snapshots: Vec<PolicySnapshot>,
}

impl<'e, E: Environment + ?Sized> Trainer<'e, E> {
    pub fn new(env: &'e mut E, config: LearnerConfig) -> Result<Self> {
        let dims = env.dims();
        let state = LearnerState::new(dims, config.shaping.eta());
        Self::resume(env, config, state, 0)
    }

    /// Continues from `state` after `episodes_done` episodes.
    pub fn resume(
        env: &'e mut E,
        config: LearnerConfig,
        state: LearnerState,
        episodes_done: usize,
    ) -> Result<Self> {
        config.validate()?;
        let dims = env.dims();
        if state.dims != dims {
            return Err(Error::InvalidParameter(format!(
                "learner tables have dims {:?} but the environment has {:?}",
                state.dims, dims
            )));
        }
        check_shaping_dims(&config.shaping, dims)?;
        let bonus = BonusParams::from_config(dims, &config);
        Ok(Self {
            env,
            config,
            bonus,
            state,
            episodes_done,
            log: Vec::new(),
            snapshots: Vec::new(),
        })
    }

    pub fn state(&self) -> &LearnerState {
        &self.state
    }

    pub fn episodes_done(&self) -> usize {
        self.episodes_done
    }

    fn wants_snapshot(&self, episode: usize) -> bool {
        match self.config.snapshot_mode {
            SnapshotMode::Full => true,
            SnapshotMode::Final => false,
            SnapshotMode::Tail(n) => episode + n >= self.config.episodes,
        }
    }

    fn greedy(&self) -> Result<TimedPolicy> {
        let env = &*self.env;
        self.state.greedy_policy(|s| env.feasible_actions(s))
    }

    /// Runs one episode and returns its statistics.
    pub fn run_episode(&mut self) -> Result<EpisodeLog> {
        let k = self.episodes_done;
        if self.wants_snapshot(k) {
            let policy = self.greedy()?;
            self.snapshots.push(PolicySnapshot { episode: k, policy });
        }
        let mut rng = stream_rng(self.config.seed, k as u64);
        let horizon = self.state.dims.horizon;
        let mut state = self.env.reset(&mut rng);
        let mut entry = EpisodeLog {
            episode: k,
            total_reward: 0.0,
            total_modified_reward: 0.0,
            total_report: 0.0,
            violations: 0,
        };
        for h in 0..horizon {
            let action = self
                .state
                .select_action(h, state, self.env.feasible_actions(state))?;
            let outcome = self.env.step(h, state, action, &mut rng)?;
            let obs = Observation {
                step: h,
                state,
                action,
                next_state: outcome.next_state,
                reward: outcome.reward,
                constraints: &outcome.constraints,
            };
            let step = self.state.update(
                &obs,
                self.env.feasible_actions(state),
                &self.bonus,
                &self.config.shaping,
            )?;
            entry.total_reward += outcome.reward;
            entry.total_modified_reward += step.modified_reward;
            entry.total_report += outcome.report;
            if outcome.constraints.iter().any(|&f| f < 0.0) {
                entry.violations += 1;
            }
            state = outcome.next_state;
        }
        self.episodes_done += 1;
        self.log.push(entry);
        Ok(entry)
    }

    /// Runs `n` more episodes.
    pub fn run(&mut self, n: usize) -> Result<()> {
        for _ in 0..n {
            self.run_episode()?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<TrainingOutput> {
        let final_policy = self.greedy()?;
        let mut snapshots = self.snapshots;
        if self.config.snapshot_mode == SnapshotMode::Final {
            snapshots.push(PolicySnapshot {
                episode: self.episodes_done,
                policy: final_policy.clone(),
            });
        }
        Ok(TrainingOutput {
            log: self.log,
            snapshots,
            final_policy,
            state: self.state,
        })
    }
}

fn check_shaping_dims(shaping: &ShapingParams, dims: CmdpDims) -> Result<()> {
    if shaping.horizon() != dims.horizon || shaping.num_constraints() != dims.num_constraints {
        return Err(Error::InvalidParameter(format!(
            "shaping parameters built for H={}, I={} but the environment has H={}, I={}",
            shaping.horizon(),
            shaping.num_constraints(),
            dims.horizon,
            dims.num_constraints
        )));
    }
    Ok(())
}

/// Trains for `config.episodes` episodes from fresh tables.
pub fn train<E: Environment + ?Sized>(env: &mut E, config: &LearnerConfig) -> Result<TrainingOutput> {
    let mut trainer = Trainer::new(env, *config)?;
    trainer.run(config.episodes)?;
    trainer.finish()
}

/// Uniform mixture over per-episode policies.
pub fn build_mixture(snapshots: Vec<TimedPolicy>) -> Result<MixturePolicy> {
    MixturePolicy::new(snapshots)
}
