use peakq_core::cmdp::{stream_rng, CmdpDims, KnownCmdp, ModelEnv, Transitions};
use peakq_core::instances::{random_cmdp, RandomCmdpSpec};
use peakq_core::learner::{train, LearnerConfig, SnapshotMode, Trainer};
use peakq_core::shaping::ShapingParams;
use proptest::prelude::*;

fn random_model(seed: u64) -> KnownCmdp {
    let mut rng = stream_rng(seed, 0);
    random_cmdp(
        &RandomCmdpSpec::new(CmdpDims::new(3, 2, 3, 1).unwrap(), 0.2),
        &mut rng,
    )
    .unwrap()
    .0
}

fn config(episodes: usize, seed: u64) -> LearnerConfig {
    LearnerConfig::new(episodes, ShapingParams::new(0.1, 0.1, 3, 1).unwrap(), seed)
}

#[test]
fn same_seed_replays_exactly() {
    let model = random_model(1);
    let cfg = config(500, 9);
    let a = train(&mut ModelEnv::new(&model), &cfg).unwrap();
    let b = train(&mut ModelEnv::new(&model), &cfg).unwrap();
    assert_eq!(a, b);
    let c = train(&mut ModelEnv::new(&model), &config(500, 10)).unwrap();
    assert_ne!(a.log, c.log);
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let model = random_model(2);
    let mut cfg = config(700, 4);
    cfg.snapshot_mode = SnapshotMode::Full;
    let whole = train(&mut ModelEnv::new(&model), &cfg).unwrap();

    let mut env = ModelEnv::new(&model);
    let mut first = Trainer::new(&mut env, cfg).unwrap();
    first.run(300).unwrap();
    let head = first.finish().unwrap();
    let mut env = ModelEnv::new(&model);
    let mut second = Trainer::resume(&mut env, cfg, head.state.clone(), 300).unwrap();
    second.run(400).unwrap();
    let tail = second.finish().unwrap();

    assert_eq!(tail.state, whole.state);
    let mut log = head.log.clone();
    log.extend(tail.log.iter().copied());
    assert_eq!(log, whole.log);
    let mut snaps = head.snapshots.clone();
    snaps.extend(tail.snapshots.iter().cloned());
    assert_eq!(snaps, whole.snapshots);
}

// With every constraint value non-negative the penalty never fires, so the
// constrained learner must behave exactly like one with no constraints and
// the same penalty weight.
#[test]
fn satisfied_constraints_reduce_to_unconstrained_learning() {
    let mut rng = stream_rng(3, 0);
    let dims = CmdpDims::new(3, 2, 3, 1).unwrap();
    let (model, _) = random_cmdp(&RandomCmdpSpec::new(dims, 0.2), &mut rng).unwrap();
    let d = model.dims();
    let mut probs = Vec::new();
    for h in 0..d.horizon {
        for s in 0..d.num_states {
            for a in 0..d.num_actions {
                probs.extend_from_slice(model.transition_row(h, s, a));
            }
        }
    }
    let reward: Vec<f64> = (0..d.num_states)
        .flat_map(|s| (0..d.num_actions).map(move |a| (s, a)))
        .map(|(s, a)| model.reward(s, a))
        .collect();
    let positive: Vec<f64> = reward.iter().map(|r| (r * 0.9).abs()).collect();
    let constrained = KnownCmdp::with_initial_state(
        dims,
        Transitions::per_step(probs.clone()),
        reward.clone(),
        positive,
        0,
    )
    .unwrap();
    let free_dims = CmdpDims::new(3, 2, 3, 0).unwrap();
    let free =
        KnownCmdp::with_initial_state(free_dims, Transitions::per_step(probs), reward, vec![], 0)
            .unwrap();
    let eta = 60.0;
    let with = LearnerConfig::new(800, ShapingParams::with_eta(0.1, 0.1, eta, 3, 1).unwrap(), 5);
    let without =
        LearnerConfig::new(800, ShapingParams::with_eta(0.1, 0.1, eta, 3, 0).unwrap(), 5);
    let a = train(&mut ModelEnv::new(&constrained), &with).unwrap();
    let b = train(&mut ModelEnv::new(&free), &without).unwrap();
    assert_eq!(a.state.q_table(), b.state.q_table());
    assert_eq!(a.state.w_table(), b.state.w_table());
    assert_eq!(a.final_policy, b.final_policy);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tables_respect_their_invariants(seed in any::<u64>(), episodes in 1usize..300) {
        let model = random_model(seed);
        let cfg = config(episodes, seed ^ 0x5a5a);
        let out = train(&mut ModelEnv::new(&model), &cfg).unwrap();
        let st = &out.state;
        let d = model.dims();
        let cap = cfg.shaping.eta() * d.horizon as f64;
        for h in 0..d.horizon {
            let visits: u64 = (0..d.num_states)
                .flat_map(|s| (0..d.num_actions).map(move |a| (s, a)))
                .map(|(s, a)| st.visits(h, s, a))
                .sum();
            prop_assert_eq!(visits, episodes as u64);
            for s in 0..d.num_states {
                prop_assert!(st.w(h, s) <= cap);
                for a in 0..d.num_actions {
                    if st.visits(h, s, a) == 0 {
                        prop_assert_eq!(st.q(h, s, a), cap);
                    }
                }
            }
        }
        for s in 0..d.num_states {
            prop_assert_eq!(st.w(d.horizon, s), 0.0);
        }
        prop_assert_eq!(out.log.len(), episodes);
        prop_assert!(out.log.iter().all(|e| e.violations <= d.horizon));
    }
}
