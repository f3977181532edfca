//! Reference power schedules for the energy-harvesting transmitter: greedy,
//! balanced (spends the average arrival each slot) and the non-causal
//! optimum computed with the full arrival sequence known in advance.

use crate::cmdp::{SimRng, TimedPolicy};
use crate::energy::{battery_step, ArrivalDistribution, EnergyParams, EnergyState};
use crate::error::{Error, Result};

/// One episode's arrivals, `E_1..E_H`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ArrivalSequence {
    arrivals: Vec<u32>,
}

impl ArrivalSequence {
    pub fn new(arrivals: Vec<u32>, params: &EnergyParams) -> Result<Self> {
        if arrivals.len() != params.horizon {
            return Err(Error::DimensionMismatch {
                what: "arrival sequence",
                expected: params.horizon,
                actual: arrivals.len(),
            });
        }
        if let Some(&e) = arrivals.iter().find(|&&e| e > params.arrival_cap) {
            return Err(Error::InvalidParameter(format!(
                "arrival {e} exceeds the cap {}",
                params.arrival_cap
            )));
        }
        Ok(Self { arrivals })
    }

    pub fn sample(params: &EnergyParams, dist: &ArrivalDistribution, rng: &mut SimRng) -> Self {
        Self {
            arrivals: (0..params.horizon).map(|_| dist.sample(rng)).collect(),
        }
    }

    pub fn arrivals(&self) -> &[u32] {
        &self.arrivals
    }

    pub fn len(&self) -> usize {
        self.arrivals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrivals.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.arrivals.iter().map(|&e| e as u64).sum()
    }
}

/// `min(P_cap, B + E)`.
pub fn greedy_power(battery: u32, arrival: u32, params: &EnergyParams) -> u32 {
    params.power_cap.min(battery + arrival)
}

/// Per-slot target of the balanced schedule: the average arrival rounded to
/// the nearest integer.
pub fn balanced_target(seq: &ArrivalSequence) -> u32 {
    if seq.is_empty() {
        return 0;
    }
    (seq.total() as f64 / seq.len() as f64).round() as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BalancedVariant {
    /// Limited only by the available energy; may exceed the power cap.
    #[default]
    Uncapped,
    /// Additionally limited by the power cap.
    Capped,
}

/// `min(target, B + E)`, and also `<= P_cap` for the capped variant.
pub fn balanced_power(
    target: u32,
    battery: u32,
    arrival: u32,
    variant: BalancedVariant,
    params: &EnergyParams,
) -> u32 {
    let p = target.min(battery + arrival);
    match variant {
        BalancedVariant::Uncapped => p,
        BalancedVariant::Capped => p.min(params.power_cap),
    }
}

/// Powers chosen along one arrival sequence and the realized rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSchedule {
    pub powers: Vec<u32>,
    /// `sum ln(1 + P_h)`.
    pub total_rate: f64,
    /// Slots with `P_h > P_cap`.
    pub violations: usize,
}

/// Runs `choose(h, battery, arrival)` along `seq` from the initial battery.
pub fn simulate_schedule<F>(seq: &ArrivalSequence, params: &EnergyParams, mut choose: F) -> Result<PowerSchedule>
where
    F: FnMut(usize, u32, u32) -> u32,
{
    let mut battery = params.initial_battery;
    let mut powers = Vec::with_capacity(seq.len());
    let mut total_rate = 0.0;
    let mut violations = 0;
    for (h, &arrival) in seq.arrivals().iter().enumerate() {
        let p = choose(h, battery, arrival);
        battery = battery_step(battery, arrival, p, params)?;
        total_rate += (p as f64).ln_1p();
        if p > params.power_cap {
            violations += 1;
        }
        powers.push(p);
    }
    Ok(PowerSchedule {
        powers,
        total_rate,
        violations,
    })
}

pub fn simulate_greedy(seq: &ArrivalSequence, params: &EnergyParams) -> PowerSchedule {
    simulate_schedule(seq, params, |_, b, e| greedy_power(b, e, params))
        .expect("greedy power never exceeds the available energy")
}

pub fn simulate_balanced(
    seq: &ArrivalSequence,
    variant: BalancedVariant,
    params: &EnergyParams,
) -> PowerSchedule {
    let target = balanced_target(seq);
    simulate_schedule(seq, params, |_, b, e| balanced_power(target, b, e, variant, params))
        .expect("balanced power never exceeds the available energy")
}

/// Plays a timed policy over the energy state space along `seq`.
pub fn simulate_policy(
    policy: &TimedPolicy,
    seq: &ArrivalSequence,
    params: &EnergyParams,
) -> Result<PowerSchedule> {
    if policy.horizon() != params.horizon || policy.num_states() != params.num_states() {
        return Err(Error::DimensionMismatch {
            what: "policy shape",
            expected: params.horizon * params.num_states(),
            actual: policy.horizon() * policy.num_states(),
        });
    }
    simulate_schedule(seq, params, |h, battery, arrival| {
        policy.action(h, params.encode(EnergyState { battery, arrival })) as u32
    })
}

/// Best power path with the whole arrival sequence known, by backward
/// induction over battery levels. Ties go to the smallest power.
pub fn noncausal_optimal(seq: &ArrivalSequence, params: &EnergyParams) -> PowerSchedule {
    let h_count = seq.len();
    let b_count = params.battery_cap as usize + 1;
    let rate: Vec<f64> = (0..=params.power_cap).map(|p| (p as f64).ln_1p()).collect();
    let mut value = vec![0.0; (h_count + 1) * b_count];
    let mut choice = vec![0u32; h_count * b_count];
    for h in (0..h_count).rev() {
        let e = seq.arrivals()[h];
        for b in 0..b_count {
            let available = b as u32 + e;
            let mut best = f64::NEG_INFINITY;
            let mut best_p = 0;
            for p in 0..=params.power_cap.min(available) {
                let next = (available - p).min(params.battery_cap) as usize;
                let v = rate[p as usize] + value[(h + 1) * b_count + next];
                if v > best {
                    best = v;
                    best_p = p;
                }
            }
            value[h * b_count + b] = best;
            choice[h * b_count + b] = best_p;
        }
    }
    let mut battery = params.initial_battery;
    let mut powers = Vec::with_capacity(h_count);
    let mut total_rate = 0.0;
    for (h, &e) in seq.arrivals().iter().enumerate() {
        let p = choice[h * b_count + battery as usize];
        total_rate += rate[p as usize];
        battery = (battery + e - p).min(params.battery_cap);
        powers.push(p);
    }
    PowerSchedule {
        powers,
        total_rate,
        violations: 0,
    }
}
