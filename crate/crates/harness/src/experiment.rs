//! Convergence runs and the baseline comparison sweep.
//!
//! Every run owns its environment, learner and random streams. Work fans
//! out over a fixed-size worker pool and results are merged in run-index
//! order, so output files do not depend on the number of workers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use peakq_core::baselines::{
    noncausal_optimal, simulate_balanced, simulate_greedy, simulate_policy, ArrivalSequence,
    BalancedVariant,
};
use peakq_core::cmdp::{stream_rng, Environment, SimRng, TimedPolicy};
use peakq_core::energy::{ArrivalDistribution, EnergyEnv, EnergyParams};
use peakq_core::eval::mean_and_std_error;
use peakq_core::learner::{EpisodeLog, LearnerConfig, LearnerState, SnapshotMode, Trainer};
use peakq_core::shaping::ShapingParams;
use rand::RngCore;
use rayon::prelude::*;

use crate::config::{ArrivalSampler, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::snapshot::{load_snapshot, save_snapshot, SnapshotMeta};

const CONVERGENCE_STREAM: u64 = 1;
const SWEEP_TRAIN_STREAM: u64 = 2;
const SWEEP_EVAL_STREAM: u64 = 3;
const EVAL_STREAM: u64 = 4;

/// Runs merged per batch in convergence experiments; bounds memory
/// without affecting results.
const BATCH: usize = 32;

/// Seed of run `index` in family `stream`, derived from the master seed.
pub fn derive_seed(master_seed: u64, stream: u64, index: u64) -> u64 {
    let mut rng = stream_rng(master_seed, stream);
    rng.set_word_pos(index as u128 * 2);
    rng.next_u64()
}

pub fn worker_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))
}

fn warn_on_shaping(shaping: &ShapingParams) {
    if !shaping.bound_hypothesis_holds() {
        warn!(
            "gamma={} is not below min(xi, 2HI(1 - xi)) for xi={}; modified rewards are only bounded by 1 + eta = {}",
            shaping.gamma(),
            shaping.xi(),
            shaping.reward_bound()
        );
    }
}

fn learner_config(
    config: &ExperimentConfig,
    shaping: ShapingParams,
    seed: u64,
) -> LearnerConfig {
    let mut lc = LearnerConfig::new(config.episodes, shaping, seed);
    lc.c1 = config.c1;
    lc.c2 = config.c2;
    lc.failure_prob = config.failure_prob;
    lc.bonus = config.bonus;
    lc.variance = config.variance;
    lc.snapshot_mode = SnapshotMode::Final;
    lc
}

fn make_env(params: EnergyParams, sampler: ArrivalSampler) -> Result<EnergyEnv> {
    Ok(EnergyEnv::new(params)?.with_mode(sampler.mode())?)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

/// Per-episode averages over all runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    /// One-based episode number.
    pub episode: usize,
    pub mean_total_raw_reward: f64,
    pub mean_total_rate: f64,
    pub mean_violation_count: f64,
}

/// Options for splitting a single training run across invocations.
#[derive(Debug, Clone, Default)]
pub struct ResumeOptions {
    /// Continue from this snapshot instead of fresh tables.
    pub resume: Option<PathBuf>,
    /// Stop once this many episodes in total have been played.
    pub stop_after: Option<usize>,
    /// Write the learner tables here at the end.
    pub save_snapshot: Option<PathBuf>,
}

impl ResumeOptions {
    fn is_active(&self) -> bool {
        self.resume.is_some() || self.stop_after.is_some() || self.save_snapshot.is_some()
    }
}

fn train_trajectory(
    config: &ExperimentConfig,
    shaping: ShapingParams,
    index: usize,
) -> Result<Vec<EpisodeLog>> {
    let seed = derive_seed(config.master_seed, CONVERGENCE_STREAM, index as u64);
    let mut env = make_env(config.env, config.arrival_sampler)?;
    let mut trainer = Trainer::new(&mut env, learner_config(config, shaping, seed))?;
    trainer.run(config.episodes)?;
    Ok(trainer.finish()?.log)
}

/// Trains `M` independent learners and averages their episode statistics.
pub fn convergence_rows(config: &ExperimentConfig, jobs: usize) -> Result<Vec<ConvergenceRow>> {
    config.validate()?;
    let shaping = config.shaping(config.env.horizon)?;
    warn_on_shaping(&shaping);
    let k = config.episodes;
    let mut raw = vec![0.0; k];
    let mut rate = vec![0.0; k];
    let mut violations = vec![0.0; k];
    let pool = worker_pool(jobs)?;
    let m = config.trajectories;
    for start in (0..m).step_by(BATCH) {
        let end = (start + BATCH).min(m);
        let logs: Vec<Vec<EpisodeLog>> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|j| train_trajectory(config, shaping, j))
                .collect::<Result<_>>()
        })?;
        for log in &logs {
            for (i, e) in log.iter().enumerate() {
                raw[i] += e.total_reward;
                rate[i] += e.total_report;
                violations[i] += e.violations as f64;
            }
        }
        info!("convergence: {end}/{m} runs done");
    }
    let mf = m as f64;
    Ok((0..k)
        .map(|i| ConvergenceRow {
            episode: i + 1,
            mean_total_raw_reward: raw[i] / mf,
            mean_total_rate: rate[i] / mf,
            mean_violation_count: violations[i] / mf,
        })
        .collect())
}

/// A single run that can start from and end in a snapshot file.
pub fn resumable_rows(config: &ExperimentConfig, opts: &ResumeOptions) -> Result<Vec<ConvergenceRow>> {
    config.validate()?;
    if config.trajectories != 1 {
        return Err(HarnessError::Usage(
            "snapshots and resuming need experiment.trajectories=1".into(),
        ));
    }
    let shaping = config.shaping(config.env.horizon)?;
    warn_on_shaping(&shaping);
    let seed = derive_seed(config.master_seed, CONVERGENCE_STREAM, 0);
    let stop = opts.stop_after.unwrap_or(config.episodes).min(config.episodes);
    let mut env = make_env(config.env, config.arrival_sampler)?;
    let lc = learner_config(config, shaping, seed);
    let (state, done) = match &opts.resume {
        Some(path) => {
            let (state, meta) = load_snapshot(path)?;
            if meta.seed != seed || meta.eta != shaping.eta() || meta.xi != shaping.xi() {
                return Err(HarnessError::Usage(format!(
                    "snapshot {} was written with seed {}, xi {}, eta {}; this run uses seed {seed}, xi {}, eta {}",
                    path.display(),
                    meta.seed,
                    meta.xi,
                    meta.eta,
                    shaping.xi(),
                    shaping.eta()
                )));
            }
            (state, meta.episodes)
        }
        None => (LearnerState::new(env.dims(), shaping.eta()), 0),
    };
    let mut trainer = Trainer::resume(&mut env, lc, state, done)?;
    trainer.run(stop.saturating_sub(done))?;
    let out = trainer.finish()?;
    if let Some(path) = &opts.save_snapshot {
        let meta = SnapshotMeta {
            xi: shaping.xi(),
            gamma: shaping.gamma(),
            eta: shaping.eta(),
            episodes: done + out.log.len(),
            seed,
        };
        save_snapshot(&out.state, &meta, path)?;
    }
    Ok(out
        .log
        .iter()
        .map(|e| ConvergenceRow {
            episode: e.episode + 1,
            mean_total_raw_reward: e.total_reward,
            mean_total_rate: e.total_report,
            mean_violation_count: e.violations as f64,
        })
        .collect())
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("episode,mean_total_raw_reward,mean_total_rate,mean_violation_count\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.episode, r.mean_total_raw_reward, r.mean_total_rate, r.mean_violation_count
        );
    }
    out
}

/// Runs the convergence experiment and writes `convergence.csv` into the
/// output directory.
pub fn run_convergence(
    config: &ExperimentConfig,
    jobs: usize,
    opts: &ResumeOptions,
) -> Result<PathBuf> {
    let rows = if opts.is_active() {
        resumable_rows(config, opts)?
    } else {
        convergence_rows(config, jobs)?
    };
    let path = config.output_dir.join("convergence.csv");
    write_file(&path, &convergence_csv(&rows))?;
    Ok(path)
}

/// Mean and standard error of a per-sequence quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    fn of(values: &[f64]) -> Self {
        let (mean, std_error) = mean_and_std_error(values);
        Self { mean, std_error }
    }
}

/// Scores of every schedule on the same arrival sequences for one mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub arrival_mean: f64,
    pub sequences: usize,
    pub greedy: Estimate,
    pub balanced_uncapped: Estimate,
    pub balanced_uncapped_violations: f64,
    pub balanced_capped: Estimate,
    pub noncausal: Estimate,
    pub learned: Estimate,
    pub learned_violations: f64,
    /// Paired difference greedy minus capped balanced.
    pub greedy_minus_capped: Estimate,
    /// Paired difference non-causal minus learned.
    pub noncausal_minus_learned: Estimate,
}

impl SweepRow {
    pub fn balanced(&self, variant: BalancedVariant) -> Estimate {
        match variant {
            BalancedVariant::Uncapped => self.balanced_uncapped,
            BalancedVariant::Capped => self.balanced_capped,
        }
    }
}

fn draw_sequence(
    params: &EnergyParams,
    dist: &ArrivalDistribution,
    sampler: ArrivalSampler,
    rng: &mut SimRng,
) -> Result<ArrivalSequence> {
    let arrivals = (0..params.horizon)
        .map(|_| match sampler {
            ArrivalSampler::Exact => dist.sample(rng),
            ArrivalSampler::Continuous => dist.sample_continuous(rng),
        })
        .collect();
    Ok(ArrivalSequence::new(arrivals, params)?)
}

struct Scores {
    greedy: f64,
    uncapped: f64,
    uncapped_violations: f64,
    capped: f64,
    noncausal: f64,
    learned: f64,
    learned_violations: f64,
}

fn score_sequence(
    params: &EnergyParams,
    policy: &TimedPolicy,
    seq: &ArrivalSequence,
) -> Result<Scores> {
    let uncapped = simulate_balanced(seq, BalancedVariant::Uncapped, params);
    let learned = simulate_policy(policy, seq, params)?;
    Ok(Scores {
        greedy: simulate_greedy(seq, params).total_rate,
        uncapped: uncapped.total_rate,
        uncapped_violations: uncapped.violations as f64,
        capped: simulate_balanced(seq, BalancedVariant::Capped, params).total_rate,
        noncausal: noncausal_optimal(seq, params).total_rate,
        learned: learned.total_rate,
        learned_violations: learned.violations as f64,
    })
}

fn train_for_sweep(config: &ExperimentConfig, params: EnergyParams, index: usize) -> Result<TimedPolicy> {
    let shaping = config.shaping(params.horizon)?;
    let seed = derive_seed(config.master_seed, SWEEP_TRAIN_STREAM, index as u64);
    let mut env = make_env(params, config.arrival_sampler)?;
    let mut trainer = Trainer::new(&mut env, learner_config(config, shaping, seed))?;
    trainer.run(config.episodes)?;
    Ok(trainer.finish()?.final_policy)
}

/// For each arrival mean: trains a fresh learner, then scores it and the
/// three baselines on the same `M` arrival sequences.
pub fn sweep_rows(config: &ExperimentConfig, jobs: usize) -> Result<Vec<SweepRow>> {
    config.validate()?;
    warn_on_shaping(&config.shaping(config.env.horizon)?);
    let pool = worker_pool(jobs)?;
    pool.install(|| {
        let params: Vec<EnergyParams> = config
            .sweep
            .iter()
            .map(|&mu| EnergyParams {
                arrival_mean: mu,
                ..config.env
            })
            .collect();
        let policies: Vec<TimedPolicy> = params
            .par_iter()
            .enumerate()
            .map(|(j, &p)| train_for_sweep(config, p, j))
            .collect::<Result<_>>()?;
        let mut rows = Vec::with_capacity(params.len());
        for (j, (p, policy)) in params.iter().zip(&policies).enumerate() {
            let dist = ArrivalDistribution::from_params(p)?;
            let eval_seed = derive_seed(config.master_seed, SWEEP_EVAL_STREAM, j as u64);
            let scores: Vec<Scores> = (0..config.trajectories)
                .into_par_iter()
                .map(|m| {
                    let mut rng = stream_rng(eval_seed, m as u64);
                    let seq = draw_sequence(p, &dist, config.arrival_sampler, &mut rng)?;
                    score_sequence(p, policy, &seq)
                })
                .collect::<Result<_>>()?;
            let col = |f: &dyn Fn(&Scores) -> f64| scores.iter().map(f).collect::<Vec<f64>>();
            let n = scores.len() as f64;
            rows.push(SweepRow {
                arrival_mean: p.arrival_mean,
                sequences: scores.len(),
                greedy: Estimate::of(&col(&|s| s.greedy)),
                balanced_uncapped: Estimate::of(&col(&|s| s.uncapped)),
                balanced_uncapped_violations: col(&|s| s.uncapped_violations).iter().sum::<f64>() / n,
                balanced_capped: Estimate::of(&col(&|s| s.capped)),
                noncausal: Estimate::of(&col(&|s| s.noncausal)),
                learned: Estimate::of(&col(&|s| s.learned)),
                learned_violations: col(&|s| s.learned_violations).iter().sum::<f64>() / n,
                greedy_minus_capped: Estimate::of(&col(&|s| s.greedy - s.capped)),
                noncausal_minus_learned: Estimate::of(&col(&|s| s.noncausal - s.learned)),
            });
            info!("sweep: mean {} done", p.arrival_mean);
        }
        Ok(rows)
    })
}

pub fn comparison_csv(rows: &[SweepRow], variant: BalancedVariant) -> String {
    let mut out = String::from(
        "arrival_mean,greedy_rate,balanced_rate,noncausal_rate,learned_rate,learned_violations\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.arrival_mean,
            r.greedy.mean,
            r.balanced(variant).mean,
            r.noncausal.mean,
            r.learned.mean,
            r.learned_violations
        );
    }
    out
}

pub fn comparison_detail_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "arrival_mean,sequences,greedy_rate,greedy_se,balanced_uncapped_rate,balanced_uncapped_se,\
balanced_uncapped_violations,balanced_capped_rate,balanced_capped_se,noncausal_rate,noncausal_se,\
learned_rate,learned_se,learned_violations,greedy_minus_capped,greedy_minus_capped_se,\
noncausal_minus_learned,noncausal_minus_learned_se\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.arrival_mean,
            r.sequences,
            r.greedy.mean,
            r.greedy.std_error,
            r.balanced_uncapped.mean,
            r.balanced_uncapped.std_error,
            r.balanced_uncapped_violations,
            r.balanced_capped.mean,
            r.balanced_capped.std_error,
            r.noncausal.mean,
            r.noncausal.std_error,
            r.learned.mean,
            r.learned.std_error,
            r.learned_violations,
            r.greedy_minus_capped.mean,
            r.greedy_minus_capped.std_error,
            r.noncausal_minus_learned.mean,
            r.noncausal_minus_learned.std_error
        );
    }
    out
}

/// Runs the sweep and writes `comparison.csv` and `comparison_detail.csv`.
pub fn run_sweep(config: &ExperimentConfig, jobs: usize) -> Result<Vec<PathBuf>> {
    let rows = sweep_rows(config, jobs)?;
    let main = config.output_dir.join("comparison.csv");
    let detail = config.output_dir.join("comparison_detail.csv");
    write_file(&main, &comparison_csv(&rows, config.balanced))?;
    write_file(&detail, &comparison_detail_csv(&rows))?;
    Ok(vec![main, detail])
}

/// A schedule the `eval` command can score.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalTarget {
    Greedy,
    Balanced(BalancedVariant),
    Noncausal,
    Snapshot(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub sequences: usize,
    pub rate: Estimate,
    pub violations: f64,
    /// Exact expected normalized return and total expected violation, for
    /// causal policies when the model fits in memory.
    pub exact: Option<(f64, f64)>,
}

/// Scores `target` on `M` arrival sequences at the configured mean.
pub fn evaluate_target(config: &ExperimentConfig, target: &EvalTarget, jobs: usize) -> Result<EvalReport> {
    config.validate()?;
    let params = config.env;
    let env = make_env(params, config.arrival_sampler)?;
    let policy = match target {
        EvalTarget::Snapshot(path) => {
            let (state, _) = load_snapshot(path)?;
            if state.dims() != params.dims() {
                return Err(HarnessError::Usage(format!(
                    "snapshot {} has dims {:?}, the configured environment has {:?}",
                    path.display(),
                    state.dims(),
                    params.dims()
                )));
            }
            Some(state.greedy_policy(|s| env.feasible_actions(s))?)
        }
        EvalTarget::Greedy => Some(TimedPolicy::from_fn(
            params.horizon,
            params.num_states(),
            |_, s| {
                let st = params.decode(s);
                peakq_core::baselines::greedy_power(st.battery, st.arrival, &params) as usize
            },
        )),
        _ => None,
    };
    let dist = ArrivalDistribution::from_params(&params)?;
    let seed = derive_seed(config.master_seed, EVAL_STREAM, 0);
    let pool = worker_pool(jobs)?;
    let results: Vec<(f64, f64)> = pool.install(|| {
        (0..config.trajectories)
            .into_par_iter()
            .map(|m| {
                let mut rng = stream_rng(seed, m as u64);
                let seq = draw_sequence(&params, &dist, config.arrival_sampler, &mut rng)?;
                let run = match target {
                    EvalTarget::Balanced(v) => simulate_balanced(&seq, *v, &params),
                    EvalTarget::Noncausal => noncausal_optimal(&seq, &params),
                    _ => simulate_policy(policy.as_ref().expect("causal target"), &seq, &params)?,
                };
                Ok((run.total_rate, run.violations as f64))
            })
            .collect::<Result<_>>()
    })?;
    let rates: Vec<f64> = results.iter().map(|r| r.0).collect();
    let violations = results.iter().map(|r| r.1).sum::<f64>() / results.len() as f64;
    let exact = match &policy {
        Some(p) => match peakq_core::energy::build_known_model(&params) {
            Ok(model) => {
                let shaping = config.shaping(params.horizon)?;
                let e = peakq_core::eval::exact_evaluate(&model, p, &shaping)?;
                Some((e.start_value(), e.violation_total()))
            }
            Err(peakq_core::Error::ModelTooLarge { .. }) => None,
            Err(e) => return Err(e.into()),
        },
        None => None,
    };
    Ok(EvalReport {
        sequences: results.len(),
        rate: Estimate::of(&rates),
        violations,
        exact,
    })
}
