use std::path::Path;
use std::process::{Command, Output};

use peakq_core::instances::two_step_chain;
use peakq_harness::model_file::model_text;

fn peakq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_peakq"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn reduced_config(dir: &Path) -> String {
    let path = dir.join("reduced.cfg");
    std::fs::write(
        &path,
        "# reduced transmitter\nenv.horizon=5\nenv.battery_cap=4\nenv.arrival_cap=4\n\
env.power_cap=2\nenv.arrival_mean=2\nenv.arrival_std=1\nlearner.episodes=60\n\
experiment.trajectories=1\nexperiment.sweep=2\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn selftest_passes() {
    let out = peakq(&["selftest"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
}

#[test]
fn validation_errors_exit_with_one() {
    assert_eq!(peakq(&["train", "--config", "missing.cfg"]).status.code(), Some(1));
    let out = peakq(&["train", "--set", "env.bogus=1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("env.bogus"));
    let out = peakq(&["train", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--no-such-flag"));
    assert_eq!(peakq(&["train", "--set", "env.power_cap=99"]).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.snap");
    let cfg = reduced_config(dir.path());
    let out = peakq(&["eval", "--config", &cfg, "--snapshot", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_with_defaults_writes_five_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = peakq(&["sweep", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "arrival_mean,greedy_rate,balanced_rate,noncausal_rate,learned_rate,learned_violations"
    );
    assert_eq!(lines.len(), 6);
}

#[test]
fn train_writes_one_row_per_episode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reduced_config(dir.path());
    let out = peakq(&["train", "--config", &cfg, "--set", "learner.episodes=2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "episode,mean_total_raw_reward,mean_total_rate,mean_violation_count");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,"));
}

#[test]
fn resumed_training_continues_the_same_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reduced_config(dir.path());
    let whole = dir.path().join("whole");
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let snap = dir.path().join("run.snap");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    assert_eq!(peakq(&["train", "--config", &cfg, "--out", &s(&whole)]).status.code(), Some(0));
    let out = peakq(&["train", "--config", &cfg, "--out", &s(&first), "--stop-after", "25", "--save-snapshot", &s(&snap)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = peakq(&["train", "--config", &cfg, "--out", &s(&second), "--resume", &s(&snap)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let read = |d: &Path| std::fs::read_to_string(d.join("convergence.csv")).unwrap();
    let whole = read(&whole);
    let first = read(&first);
    let second = read(&second);
    let stitched: Vec<&str> = first.lines().chain(second.lines().skip(1)).collect();
    assert_eq!(stitched, whole.lines().collect::<Vec<_>>());
}

#[test]
fn eval_and_oracle_report_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reduced_config(dir.path());
    let out = peakq(&["eval", "--config", &cfg, "--baseline", "greedy", "--set", "experiment.trajectories=200"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("sequences=200"));
    assert!(text.contains("exact_normalized_value="));
    assert!(text.contains("mean_violations=0\n"));

    let model = dir.path().join("chain.model");
    std::fs::write(&model, model_text(&two_step_chain())).unwrap();
    let out = peakq(&["oracle", "--model", model.to_str().unwrap(), "--set", "shaping.xi=0.1", "--set", "shaping.gamma=0.5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("strict_v_star=0.6"), "{text}");
    assert!(text.contains("relaxed_below_modified=true"), "{text}");
}
