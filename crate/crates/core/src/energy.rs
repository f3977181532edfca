//! Energy-harvesting transmitter.
//!
//! The state at a slot is the battery level and the energy that just
//! arrived, both integers. The action is the transmit power `P`, feasible
//! when `P <= B + E`. The battery evolves as `min(B_cap, B + E - P)` and the
//! slot earns rate `ln(1 + P)`. The peak constraint `P <= P_cap` is observed
//! as a scaled slack in `[-1, 1]`. Arrivals are i.i.d. across slots, drawn
//! from a Gaussian truncated to `[0, E_cap]` and rounded to the nearest
//! integer.

use statrs::distribution::{ContinuousCDF, Normal};

use rand::Rng;

use crate::cmdp::{
    sample_index, CmdpDims, Environment, KnownCmdp, SimRng, StepOutcome, Transitions,
};
use crate::error::{Error, Result};

/// Largest transition tensor [`build_known_model`] will materialize.
pub const MODEL_ENTRY_LIMIT: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    pub horizon: usize,
    pub battery_cap: u32,
    pub power_cap: u32,
    pub arrival_cap: u32,
    pub arrival_mean: f64,
    pub arrival_std: f64,
    pub initial_battery: u32,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            horizon: 20,
            battery_cap: 20,
            power_cap: 8,
            arrival_cap: 20,
            arrival_mean: 10.0,
            arrival_std: 5.0,
            initial_battery: 0,
        }
    }
}

impl EnergyParams {
    /// The small instance used for quick experiments: `H = 5`, battery and
    /// arrival caps 4, power cap 2, arrivals around 2 with deviation 1.
    pub fn reduced() -> Self {
        Self {
            horizon: 5,
            battery_cap: 4,
            power_cap: 2,
            arrival_cap: 4,
            arrival_mean: 2.0,
            arrival_std: 1.0,
            initial_battery: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if self.battery_cap == 0 || self.power_cap == 0 || self.arrival_cap == 0 {
            return bad(format!(
                "battery, power and arrival caps must be positive (got {}, {}, {})",
                self.battery_cap, self.power_cap, self.arrival_cap
            ));
        }
        if self.initial_battery > self.battery_cap {
            return bad(format!(
                "initial battery {} exceeds the capacity {}",
                self.initial_battery, self.battery_cap
            ));
        }
        if self.power_cap >= self.battery_cap + self.arrival_cap {
            return bad(format!(
                "power cap {} must be below battery cap + arrival cap = {}",
                self.power_cap,
                self.battery_cap + self.arrival_cap
            ));
        }
        if !(self.arrival_std >= 0.0 && self.arrival_std.is_finite() && self.arrival_mean.is_finite())
        {
            return bad(format!(
                "arrival mean/deviation must be finite with non-negative deviation (got {}, {})",
                self.arrival_mean, self.arrival_std
            ));
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        (self.battery_cap as usize + 1) * (self.arrival_cap as usize + 1)
    }

    /// Powers `0..=B_cap + E_cap`.
    pub fn num_actions(&self) -> usize {
        (self.battery_cap + self.arrival_cap) as usize + 1
    }

    pub fn max_power(&self) -> u32 {
        self.battery_cap + self.arrival_cap
    }

    pub fn dims(&self) -> CmdpDims {
        CmdpDims {
            num_states: self.num_states(),
            num_actions: self.num_actions(),
            horizon: self.horizon,
            num_constraints: 1,
        }
    }

    pub fn encode(&self, state: EnergyState) -> usize {
        state.battery as usize * (self.arrival_cap as usize + 1) + state.arrival as usize
    }

    pub fn decode(&self, index: usize) -> EnergyState {
        let width = self.arrival_cap as usize + 1;
        EnergyState {
            battery: (index / width) as u32,
            arrival: (index % width) as u32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EnergyState {
    pub battery: u32,
    pub arrival: u32,
}

/// `min(B_cap, B + E - P)`; errors when `P > B + E`.
pub fn battery_step(battery: u32, arrival: u32, power: u32, params: &EnergyParams) -> Result<u32> {
    let available = battery + arrival;
    if power > available {
        return Err(Error::InsufficientEnergy { power, available });
    }
    Ok((available - power).min(params.battery_cap))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOutcome {
    /// `ln(1 + P)`.
    pub raw_rate: f64,
    /// `ln(1 + P) / ln(1 + B_cap + E_cap)`, in `[0, 1]`.
    pub normalized_reward: f64,
    /// `(P_cap - P) / (B_cap + E_cap - P_cap)` clamped to `[-1, 1]`;
    /// non-negative exactly when `P <= P_cap`.
    pub f_value: f64,
}

pub fn reward_and_constraint(power: u32, params: &EnergyParams) -> PowerOutcome {
    let raw_rate = (power as f64).ln_1p();
    let normalized_reward = raw_rate / (params.max_power() as f64).ln_1p();
    let slack_range = (params.max_power() - params.power_cap) as f64;
    let f_value = ((params.power_cap as f64 - power as f64) / slack_range).clamp(-1.0, 1.0);
    PowerOutcome {
        raw_rate,
        normalized_reward,
        f_value,
    }
}

/// Integer arrivals from a Gaussian truncated to `[0, E_cap]`, rounded to
/// the nearest integer.
///
/// The probability of `e` is the truncated density integrated over
/// `[e - 1/2, e + 1/2]` intersected with `[0, E_cap]`, which is exactly the
/// law of a rounded continuous draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalDistribution {
    mass: Vec<f64>,
    cap: u32,
    mean: f64,
    std: f64,
}

impl ArrivalDistribution {
    pub fn new(mean: f64, std: f64, cap: u32) -> Result<Self> {
        if std == 0.0 {
            let point = mean.round().clamp(0.0, cap as f64) as usize;
            let mut mass = vec![0.0; cap as usize + 1];
            mass[point] = 1.0;
            return Ok(Self {
                mass,
                cap,
                mean,
                std,
            });
        }
        let normal = Normal::new(mean, std)
            .map_err(|e| Error::InvalidParameter(format!("arrival distribution: {e}")))?;
        let lo_cdf = normal.cdf(0.0);
        let total = normal.cdf(cap as f64) - lo_cdf;
        if total.is_nan() || total <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "arrival distribution N({mean}, {std}) has no mass on [0, {cap}]"
            )));
        }
        let mut mass: Vec<f64> = (0..=cap)
            .map(|e| {
                let lo = (e as f64 - 0.5).max(0.0);
                let hi = (e as f64 + 0.5).min(cap as f64);
                (normal.cdf(hi) - normal.cdf(lo)) / total
            })
            .collect();
        let sum: f64 = mass.iter().sum();
        for m in &mut mass {
            *m /= sum;
        }
        Ok(Self {
            mass,
            cap,
            mean,
            std,
        })
    }

    pub fn from_params(params: &EnergyParams) -> Result<Self> {
        Self::new(params.arrival_mean, params.arrival_std, params.arrival_cap)
    }

    /// Probability of each arrival `0..=E_cap`.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Draws from the discrete mass directly.
    pub fn sample(&self, rng: &mut SimRng) -> u32 {
        sample_index(&self.mass, rng) as u32
    }

    /// Draws a continuous truncated Gaussian by inverse CDF, then rounds and
    /// clamps to `[0, E_cap]`.
    pub fn sample_continuous(&self, rng: &mut SimRng) -> u32 {
        let cap = self.cap as f64;
        if self.std == 0.0 {
            return self.mean.round().clamp(0.0, cap) as u32;
        }
        let normal = Normal::new(self.mean, self.std).expect("validated at construction");
        let lo = normal.cdf(0.0);
        let hi = normal.cdf(cap);
        let u: f64 = rng.random();
        let x = normal.inverse_cdf(lo + u * (hi - lo));
        x.round().clamp(0.0, cap) as u32
    }

    /// Mean of the rounded distribution.
    pub fn mean(&self) -> f64 {
        self.mass.iter().enumerate().map(|(e, p)| e as f64 * p).sum()
    }
}

/// How a live environment draws arrivals.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ArrivalMode {
    /// From the discrete mass used by the known model.
    #[default]
    ExactMass,
    /// Continuous truncated Gaussian draws, rounded.
    RoundedContinuous,
    /// A fixed arrival sequence of length `H`.
    Scripted(Vec<u32>),
}

/// Live simulator of the transmitter.
#[derive(Debug, Clone)]
pub struct EnergyEnv {
    params: EnergyParams,
    dist: ArrivalDistribution,
    mode: ArrivalMode,
    masks: Vec<bool>,
    outcomes: Vec<PowerOutcome>,
}

impl EnergyEnv {
    pub fn new(params: EnergyParams) -> Result<Self> {
        params.validate()?;
        let dist = ArrivalDistribution::from_params(&params)?;
        let a_count = params.num_actions();
        let mut masks = vec![false; params.num_states() * a_count];
        for s in 0..params.num_states() {
            let st = params.decode(s);
            let available = (st.battery + st.arrival) as usize;
            for p in 0..=available.min(a_count - 1) {
                masks[s * a_count + p] = true;
            }
        }
        let outcomes = (0..=params.max_power())
            .map(|p| reward_and_constraint(p, &params))
            .collect();
        Ok(Self {
            params,
            dist,
            mode: ArrivalMode::ExactMass,
            masks,
            outcomes,
        })
    }

    pub fn with_mode(mut self, mode: ArrivalMode) -> Result<Self> {
        self.set_mode(mode)?;
        Ok(self)
    }

    pub fn set_mode(&mut self, mode: ArrivalMode) -> Result<()> {
        if let ArrivalMode::Scripted(seq) = &mode {
            if seq.len() != self.params.horizon {
                return Err(Error::DimensionMismatch {
                    what: "arrival sequence",
                    expected: self.params.horizon,
                    actual: seq.len(),
                });
            }
            if let Some(&e) = seq.iter().find(|&&e| e > self.params.arrival_cap) {
                return Err(Error::InvalidParameter(format!(
                    "arrival {e} exceeds the cap {}",
                    self.params.arrival_cap
                )));
            }
        }
        self.mode = mode;
        Ok(())
    }

    pub fn params(&self) -> &EnergyParams {
        &self.params
    }

    pub fn arrivals(&self) -> &ArrivalDistribution {
        &self.dist
    }

    fn draw(&self, step: usize, rng: &mut SimRng) -> u32 {
        match &self.mode {
            ArrivalMode::ExactMass => self.dist.sample(rng),
            ArrivalMode::RoundedContinuous => self.dist.sample_continuous(rng),
            ArrivalMode::Scripted(seq) => seq[step],
        }
    }
}

impl Environment for EnergyEnv {
    fn dims(&self) -> CmdpDims {
        self.params.dims()
    }

    fn reset(&mut self, rng: &mut SimRng) -> usize {
        let arrival = self.draw(0, rng);
        self.params.encode(EnergyState {
            battery: self.params.initial_battery,
            arrival,
        })
    }

    fn step(
        &mut self,
        step: usize,
        state: usize,
        action: usize,
        rng: &mut SimRng,
    ) -> Result<StepOutcome> {
        let dims = self.params.dims();
        dims.check_step(step)?;
        dims.check_state(state)?;
        dims.check_action(action)?;
        let EnergyState { battery, arrival } = self.params.decode(state);
        let power = action as u32;
        let next_battery = battery_step(battery, arrival, power, &self.params).map_err(|_| {
            Error::InfeasibleAction {
                step,
                state,
                action,
            }
        })?;
        // No arrival is drawn after the last slot.
        let next_arrival = if step + 1 < self.params.horizon {
            self.draw(step + 1, rng)
        } else {
            0
        };
        let out = self.outcomes[action];
        Ok(StepOutcome {
            next_state: self.params.encode(EnergyState {
                battery: next_battery,
                arrival: next_arrival,
            }),
            reward: out.normalized_reward,
            constraints: vec![out.f_value],
            report: out.raw_rate,
        })
    }

    fn feasible_actions(&self, state: usize) -> &[bool] {
        let a = self.params.num_actions();
        &self.masks[state * a..(state + 1) * a]
    }
}

/// Materializes the transmitter as a known model with a stationary kernel.
///
/// Infeasible `(s, P)` pairs are masked out and carry a self-loop with
/// reward 0 and constraint value -1. The initial distribution puts the
/// arrival mass on `(B_1, e)`.
pub fn build_known_model(params: &EnergyParams) -> Result<KnownCmdp> {
    params.validate()?;
    let s_count = params.num_states();
    let a_count = params.num_actions();
    let entries = s_count * a_count * s_count;
    if entries > MODEL_ENTRY_LIMIT {
        return Err(Error::ModelTooLarge {
            entries,
            limit: MODEL_ENTRY_LIMIT,
        });
    }
    let dist = ArrivalDistribution::from_params(params)?;
    let mut probs = vec![0.0; entries];
    let mut reward = vec![0.0; s_count * a_count];
    let mut constraint = vec![-1.0; s_count * a_count];
    let mut feasible = vec![false; s_count * a_count];
    for s in 0..s_count {
        let EnergyState { battery, arrival } = params.decode(s);
        for p in 0..a_count {
            let row = &mut probs[(s * a_count + p) * s_count..(s * a_count + p + 1) * s_count];
            match battery_step(battery, arrival, p as u32, params) {
                Ok(next_battery) => {
                    for (e, &m) in dist.mass().iter().enumerate() {
                        let next = params.encode(EnergyState {
                            battery: next_battery,
                            arrival: e as u32,
                        });
                        row[next] += m;
                    }
                    let out = reward_and_constraint(p as u32, params);
                    reward[s * a_count + p] = out.normalized_reward;
                    constraint[s * a_count + p] = out.f_value;
                    feasible[s * a_count + p] = true;
                }
                Err(_) => row[s] = 1.0,
            }
        }
    }
    let mut initial = vec![0.0; s_count];
    for (e, &m) in dist.mass().iter().enumerate() {
        initial[params.encode(EnergyState {
            battery: params.initial_battery,
            arrival: e as u32,
        })] += m;
    }
    KnownCmdp::new(
        params.dims(),
        Transitions::stationary(probs),
        reward,
        constraint,
        initial,
    )?
    .with_feasibility(feasible)
}
