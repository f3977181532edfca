//! Command-line entry point.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use peakq_core::baselines::BalancedVariant;
use peakq_core::eval::relaxed_within_modified;
use peakq_core::oracle::{brute_force_constrained, unconstrained_modified_optimum, FeasibilityMode, OracleOutcome};
use peakq_core::shaping::ShapingParams;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiment::{evaluate_target, run_convergence, run_sweep, EvalTarget, ResumeOptions};
use crate::model_file::load_model;
use crate::selftest::run_selftest;

#[derive(Debug, Parser)]
#[command(name = "peakq", version, about = "Peak-constrained Q-learning experiments")]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Config file with `section.key=value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set env.power_cap=8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed (experiment.master_seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (experiment.output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train M learners and write per-episode averages to convergence.csv.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue a single run from a snapshot.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many episodes in total.
        #[arg(long)]
        stop_after: Option<usize>,
        /// Save the learner tables of a single run.
        #[arg(long)]
        save_snapshot: Option<PathBuf>,
    },
    /// Compare the learner with the baselines across arrival means.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Score a saved learner or a baseline on fresh arrival sequences.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "snapshot", required_unless_present = "snapshot")]
        baseline: Option<Baseline>,
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Brute-force optimum and modified optimum of a small model file.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Run the shipped self-checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Baseline {
    Greedy,
    Balanced,
    BalancedCapped,
    Noncausal,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, usize)> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        for o in &self.overrides {
            config.apply_override(o)?;
        }
        if let Some(seed) = self.seed {
            config.master_seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        let jobs = match self.jobs {
            Some(0) => return Err(HarnessError::Usage("--jobs must be positive".into())),
            Some(j) => j,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        config.validate()?;
        Ok((config, jobs))
    }
}

fn print_outcome(label: &str, outcome: &OracleOutcome) {
    match outcome {
        OracleOutcome::Optimal(r) => {
            println!("{label}_v_star={}", r.v_star);
            println!("{label}_feasible_policies={}", r.feasible_count);
            println!("{label}_policy={:?}", r.optimal_policy.as_slice());
        }
        OracleOutcome::Infeasible { .. } => println!("{label}_v_star=infeasible"),
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            common,
            resume,
            stop_after,
            save_snapshot,
        } => {
            let (config, jobs) = common.load()?;
            let opts = ResumeOptions {
                resume,
                stop_after,
                save_snapshot,
            };
            let path = run_convergence(&config, jobs, &opts)?;
            println!("wrote {}", path.display());
        }
        Command::Sweep { common } => {
            let (config, jobs) = common.load()?;
            for path in run_sweep(&config, jobs)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Eval {
            common,
            baseline,
            snapshot,
        } => {
            let (config, jobs) = common.load()?;
            let target = match (baseline, snapshot) {
                (_, Some(path)) => EvalTarget::Snapshot(path),
                (Some(Baseline::Greedy), None) => EvalTarget::Greedy,
                (Some(Baseline::Balanced), None) => EvalTarget::Balanced(BalancedVariant::Uncapped),
                (Some(Baseline::BalancedCapped), None) => EvalTarget::Balanced(BalancedVariant::Capped),
                (Some(Baseline::Noncausal), None) => EvalTarget::Noncausal,
                (None, None) => unreachable!("clap requires one target"),
            };
            let report = evaluate_target(&config, &target, jobs)?;
            println!("sequences={}", report.sequences);
            println!("mean_rate={}", report.rate.mean);
            println!("rate_std_error={}", report.rate.std_error);
            println!("mean_violations={}", report.violations);
            if let Some((value, violation)) = report.exact {
                println!("exact_normalized_value={value}");
                println!("exact_violation_total={violation}");
            }
        }
        Command::Oracle { common, model } => {
            let (config, _) = common.load()?;
            let model = load_model(&model)?;
            let issues = peakq_core::cmdp::validate_known_cmdp(&model);
            if !issues.is_empty() {
                let text: Vec<String> = issues.iter().map(|v| v.to_string()).collect();
                return Err(HarnessError::Usage(format!("invalid model: {}", text.join("; "))));
            }
            let d = model.dims();
            let xi = config.xi.unwrap_or(crate::config::DEFAULT_XI);
            let shaping = match config.eta {
                None => ShapingParams::new(xi, config.gamma, d.horizon, d.num_constraints),
                Some(eta) => ShapingParams::with_eta(xi, config.gamma, eta, d.horizon, d.num_constraints),
            }?;
            let strict = brute_force_constrained(&model, &shaping, FeasibilityMode::Strict)?;
            let relaxed = brute_force_constrained(&model, &shaping, FeasibilityMode::Relaxed)?;
            let modified = unconstrained_modified_optimum(&model, &shaping);
            println!("policies_searched={}", strict.searched());
            print_outcome("strict", &strict);
            print_outcome("relaxed", &relaxed);
            println!("modified_w_star={}", modified.w_star);
            if let Some(r) = relaxed.optimal() {
                println!("relaxed_below_modified={}", relaxed_within_modified(r.v_star, modified.w_star));
            }
        }
        Command::Selftest { seed } => {
            let results = run_selftest(seed);
            let mut failed = 0;
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                failed += usize::from(!r.passed);
            }
            if failed > 0 {
                return Err(HarnessError::Usage(format!("{failed} self-checks failed")));
            }
        }
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
