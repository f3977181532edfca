//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use peakq_core::baselines::{noncausal_optimal, ArrivalSequence};
use peakq_core::cmdp::{stream_rng, CmdpDims, MixturePolicy, ModelEnv};
use peakq_core::energy::EnergyParams;
use peakq_core::eval::{
    epsilon_optimality, exact_evaluate, exact_evaluate_mixture, ViolationAggregation,
};
use peakq_core::instances::{random_cmdp, random_policy, RandomCmdpSpec};
use peakq_core::learner::{train, LearnerConfig, SnapshotMode};
use peakq_core::oracle::{brute_force_constrained, unconstrained_modified_optimum, FeasibilityMode};
use peakq_core::shaping::ShapingParams;
use peakq_harness::config::ExperimentConfig;
use peakq_harness::experiment::{convergence_rows, sweep_rows, ConvergenceRow};
use peakq_harness::selftest::sample_reward_bound;
use rand::Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn small_random_dims() -> CmdpDims {
    CmdpDims::new(3, 2, 3, 1).unwrap()
}

fn oracle_equivalence() -> Outcome {
    let shaping = ShapingParams::new(0.1, 0.1, 3, 1).unwrap();
    let instances = 20;
    let mut good = 0;
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_violation: f64 = 0.0;
    for j in 0..instances {
        let mut rng = stream_rng(2024, j);
        let (model, _) = random_cmdp(&RandomCmdpSpec::new(small_random_dims(), 0.2), &mut rng).unwrap();
        let truth = brute_force_constrained(&model, &shaping, FeasibilityMode::Strict).unwrap();
        let v_star = truth.optimal().expect("slack action keeps the model feasible").v_star;
        let mut config = LearnerConfig::new(50_000, shaping, 1000 + j);
        config.snapshot_mode = SnapshotMode::Full;
        let out = train(&mut ModelEnv::new(&model), &config).unwrap();
        let report = epsilon_optimality(
            &model,
            &out.mixture().unwrap(),
            v_star,
            &shaping,
            ViolationAggregation::Averaged,
        )
        .unwrap();
        worst_gap = worst_gap.max(report.reward_gap);
        worst_violation = worst_violation.max(report.violation_total);
        if report.is_eps_optimal(0.1) {
            good += 1;
        }
    }
    outcome(
        good * 10 >= instances * 9,
        format!(
            "{good}/{instances} mixtures within 0.1 (largest gap {worst_gap:.4}, largest violation {worst_violation:.4})"
        ),
    )
}

fn penalty_identity() -> Outcome {
    let mut rng = stream_rng(7, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let s = rng.random_range(1..=5);
        let a = rng.random_range(1..=4);
        let h = rng.random_range(1..=5);
        let i = rng.random_range(1..=3);
        let dims = CmdpDims::new(s, a, h, i).unwrap();
        let (model, _) = random_cmdp(&RandomCmdpSpec::new(dims, 0.2), &mut rng).unwrap();
        let policy = random_policy(&model, &mut rng);
        let shaping =
            ShapingParams::new(rng.random_range(0.0..0.9), rng.random_range(0.01..2.0), h, i).unwrap();
        let eval = exact_evaluate(&model, &policy, &shaping).unwrap();
        worst = worst.max(eval.penalty_identity_residual().abs());
    }
    outcome(worst <= 1e-9, format!("largest residual {worst:e} over 200 triples"))
}

fn relaxed_below_modified() -> Outcome {
    let shaping = ShapingParams::new(0.1, 0.1, 3, 1).unwrap();
    let mut breaches = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for j in 0..100 {
        let mut rng = stream_rng(3030, j);
        let (model, _) = random_cmdp(&RandomCmdpSpec::new(small_random_dims(), 0.2), &mut rng).unwrap();
        let relaxed = brute_force_constrained(&model, &shaping, FeasibilityMode::Relaxed).unwrap();
        let v = relaxed.optimal().expect("relaxation keeps feasibility").v_star;
        let w_star = unconstrained_modified_optimum(&model, &shaping).w_star;
        worst = worst.max(v - w_star);
        if v > w_star + 1e-9 {
            breaches.push(j);
        }
    }
    outcome(
        breaches.is_empty(),
        format!(
            "{} of 100 instances with relaxed optimum above modified optimum (largest excess {worst:.4}; instances {breaches:?})",
            breaches.len()
        ),
    )
}

fn reward_bound() -> Outcome {
    let check = sample_reward_bound(100_000, &mut stream_rng(4, 0));
    outcome(
        check.failures == 0,
        format!("{} samples, {} failures", check.samples, check.failures),
    )
}

fn mixture_linearity() -> Outcome {
    let mut rng = stream_rng(5, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let dims = CmdpDims::new(rng.random_range(1..=4), rng.random_range(1..=3), rng.random_range(1..=4), 1).unwrap();
        let (model, _) = random_cmdp(&RandomCmdpSpec::new(dims, 0.2), &mut rng).unwrap();
        let shaping = ShapingParams::new(0.1, 0.5, dims.horizon, 1).unwrap();
        let n = rng.random_range(1..=10);
        let policies: Vec<_> = (0..n).map(|_| random_policy(&model, &mut rng)).collect();
        let mean = policies
            .iter()
            .map(|p| exact_evaluate(&model, p, &shaping).unwrap().start_value())
            .sum::<f64>()
            / n as f64;
        let mix = exact_evaluate_mixture(&model, &MixturePolicy::new(policies).unwrap(), &shaping).unwrap();
        worst = worst.max((mix.v1 - mean).abs());
    }
    outcome(worst <= 1e-9, format!("largest gap {worst:e} over 100 mixtures"))
}

struct ConvergenceSummary {
    tail_violations: f64,
    tail_rate: f64,
    best_window_rate: f64,
}

fn summarize(rows: &[ConvergenceRow], window: usize) -> ConvergenceSummary {
    let mean = |xs: &[ConvergenceRow], f: fn(&ConvergenceRow) -> f64| {
        xs.iter().map(f).sum::<f64>() / xs.len() as f64
    };
    let tail = &rows[rows.len() - window..];
    let mut running: f64 = rows[..window].iter().map(|r| r.mean_total_rate).sum();
    let mut best = running;
    for i in window..rows.len() {
        running += rows[i].mean_total_rate - rows[i - window].mean_total_rate;
        best = best.max(running);
    }
    ConvergenceSummary {
        tail_violations: mean(tail, |r| r.mean_violation_count),
        tail_rate: mean(tail, |r| r.mean_total_rate),
        best_window_rate: best / window as f64,
    }
}

fn convergence_config(env: EnergyParams, episodes: usize) -> ExperimentConfig {
    ExperimentConfig {
        env,
        episodes,
        trajectories: 100,
        gamma: 1.0,
        master_seed: 6,
        ..ExperimentConfig::default()
    }
}

fn describe(s: &ConvergenceSummary, elapsed: Duration) -> String {
    format!(
        "final-1000 violations {:.4}, final-1000 rate {:.4} vs best window {:.4} ({:.1}%), {:.1}s",
        s.tail_violations,
        s.tail_rate,
        s.best_window_rate,
        100.0 * s.tail_rate / s.best_window_rate,
        elapsed.as_secs_f64()
    )
}

fn meets_convergence(s: &ConvergenceSummary) -> bool {
    s.tail_violations <= 0.5 && s.tail_rate >= 0.95 * s.best_window_rate
}

fn convergence() -> Outcome {
    let start = Instant::now();
    let rows = convergence_rows(&convergence_config(EnergyParams::reduced(), 3000), 4).unwrap();
    let elapsed = start.elapsed();
    let reduced = summarize(&rows, 1000);
    let passed = meets_convergence(&reduced) && elapsed <= Duration::from_secs(120);

    let start = Instant::now();
    let rows = convergence_rows(&convergence_config(EnergyParams::default(), 12_000), 4).unwrap();
    let full = summarize(&rows, 1000);
    let full_note = format!(
        "full-size reference run ({}): {}",
        if meets_convergence(&full) { "meets the thresholds" } else { "misses the thresholds" },
        describe(&full, start.elapsed())
    );
    outcome(
        passed,
        format!("reduced instance: {}; {full_note}", describe(&reduced, elapsed)),
    )
}

fn sweep_structure() -> Outcome {
    let config = ExperimentConfig {
        env: EnergyParams::reduced(),
        episodes: 30_000,
        trajectories: 100,
        sweep: vec![2.0, 2.5, 3.0],
        gamma: 1.0,
        master_seed: 7,
        ..ExperimentConfig::default()
    };
    let rows = sweep_rows(&config, 4).unwrap();
    let mut passed = true;
    let mut parts = Vec::new();
    for r in &rows {
        let greedy_ok = r.greedy_minus_capped.mean <= 2.0 * r.greedy_minus_capped.std_error;
        let capped_ok = r.balanced_capped.mean <= r.noncausal.mean;
        let learned_ok = r.learned.mean <= r.noncausal.mean;
        let ratio = r.learned.mean / r.noncausal.mean;
        let ratio_ok = ratio >= 0.97;
        passed &= greedy_ok && capped_ok && learned_ok && ratio_ok;
        parts.push(format!(
            "mu={}: greedy-capped {:.4}+-{:.4} [{}], capped {:.4} <= noncausal {:.4} [{}], learned {:.4} [{}], ratio {:.4} [{}]",
            r.arrival_mean,
            r.greedy_minus_capped.mean,
            r.greedy_minus_capped.std_error,
            ok(greedy_ok),
            r.balanced_capped.mean,
            r.noncausal.mean,
            ok(capped_ok),
            r.learned.mean,
            ok(learned_ok),
            ratio,
            ok(ratio_ok)
        ));
    }
    outcome(passed, parts.join("; "))
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "x"
    }
}

// Enumerates every power path; the reference for the dynamic program.
fn exhaustive_rate(arrivals: &[u32], p: &EnergyParams) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut stack = vec![(0usize, p.initial_battery, 0.0f64)];
    while let Some((h, battery, rate)) = stack.pop() {
        if h == arrivals.len() {
            best = best.max(rate);
            continue;
        }
        let available = battery + arrivals[h];
        for power in 0..=available.min(p.power_cap) {
            let next = (available - power).min(p.battery_cap);
            stack.push((h + 1, next, rate + (power as f64).ln_1p()));
        }
    }
    best
}

fn dp_exactness() -> Outcome {
    let mut rng = stream_rng(8, 0);
    let mut mismatches = 0;
    let cases = 600;
    for _ in 0..cases {
        let battery_cap = rng.random_range(1..=6);
        let arrival_cap = rng.random_range(1..=6);
        let p = EnergyParams {
            horizon: rng.random_range(1..=4),
            battery_cap,
            arrival_cap,
            power_cap: rng.random_range(1..battery_cap + arrival_cap),
            initial_battery: rng.random_range(0..=battery_cap),
            ..EnergyParams::default()
        };
        let arrivals: Vec<u32> = (0..p.horizon).map(|_| rng.random_range(0..=arrival_cap)).collect();
        let seq = ArrivalSequence::new(arrivals.clone(), &p).unwrap();
        let dp = noncausal_optimal(&seq, &p).total_rate;
        if (dp - exhaustive_rate(&arrivals, &p)).abs() > 1e-12 {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{cases} sequences, {mismatches} mismatches"))
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_peakq"))
        .args(args)
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn read_dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let sets = [
        "--set", "env.horizon=5", "--set", "env.battery_cap=4", "--set", "env.arrival_cap=4",
        "--set", "env.power_cap=2", "--set", "env.arrival_mean=2", "--set", "env.arrival_std=1",
        "--set", "learner.episodes=500", "--set", "experiment.trajectories=16",
        "--set", "experiment.sweep=2,2.5,3",
    ];
    let mut outputs = Vec::new();
    for (run, jobs) in [("a", "1"), ("b", "1"), ("c", "4")] {
        let out = dir.path().join(run);
        let out = out.to_str().unwrap();
        for cmd in ["train", "sweep"] {
            let mut args = vec![cmd, "--seed", "99", "--jobs", jobs, "--out", out];
            args.extend_from_slice(&sets);
            if !run_cli(&args) {
                return outcome(false, format!("`peakq {cmd}` failed in run {run}"));
            }
        }
        outputs.push(read_dir_files(Path::new(out)));
    }
    let names: Vec<&str> = outputs[0].iter().map(|(n, _)| n.as_str()).collect();
    let same = outputs[0] == outputs[1] && outputs[0] == outputs[2];
    outcome(
        same && names.len() == 3,
        format!("files {names:?} identical across two runs and --jobs 1 vs 4: {same}"),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 oracle equivalence", oracle_equivalence),
        ("2 penalty identity", penalty_identity),
        ("3 relaxed optimum below modified optimum", relaxed_below_modified),
        ("4 modified reward bound", reward_bound),
        ("5 mixture linearity", mixture_linearity),
        ("6 convergence", convergence),
        ("7 comparison structure", sweep_structure),
        ("8 non-causal DP exactness", dp_exactness),
        ("9 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let o = run();
        println!(
            "{} criterion {name} ({:.1}s): {}",
            if o.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
