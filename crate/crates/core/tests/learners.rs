mod common;

use approx::assert_abs_diff_eq;
use horizonlab::algorithms::SqirlRun;
use horizonlab::algorithms::Simulator;
use horizonlab::analysis::optimal_return;
use horizonlab::envs::{make_random_mdp, make_random_tree, reference_two_step, RandomMdpConfig};
use horizonlab::mdp::exact_return;
use horizonlab::oracles::{LinearLsq, OracleError, QEstimate, RegressionDataset, Regressor, DEFAULT_RIDGE};
use horizonlab::oracles::FeatureMap;
use horizonlab::{collect_batch, gorp_train, optimal_q, sqirl_train, QTable, SampleLedger, TabularMdp, TabularMean, TabularSimulator};
use proptest::prelude::*;

/// Ignores the data and answers with a fixed table per timestep.
struct Exact {
    q: QTable,
}

impl Regressor for Exact {
    fn name(&self) -> String {
        "exact".into()
    }

    fn fit(&self, data: &RegressionDataset) -> Result<QEstimate, OracleError> {
        for r in data.records() {
            assert!((-1e-9..=1.0 + 1e-9).contains(&r.target));
        }
        Ok(QEstimate::from_table(self.q.step(data.timestep).clone()))
    }
}

#[test]
fn exact_oracle_with_full_lookahead_is_optimal() {
    for i in 0..10 {
        let mdp = common::small_random_mdp(i, 300 + i as u64);
        let oracle = Exact { q: optimal_q(&mdp) };
        let sim = TabularSimulator::new(mdp.clone());
        let out = sqirl_train(&sim, &oracle, mdp.horizon(), 4, i as u64).unwrap();
        let policy = out.policy.to_timed_policy();
        assert_abs_diff_eq!(common::policy_return(&mdp, &policy), common::optimal_value(&mdp), epsilon = 1e-10);
    }
}

#[test]
fn ledger_counts_exactly() {
    let mdp = common::small_random_mdp(2, 5);
    let sim = TabularSimulator::new(mdp.clone());
    let out = sqirl_train(&sim, &TabularMean::default(), 2, 37, 1).unwrap();
    let t = mdp.horizon() as u64;
    assert_eq!(out.ledger.training_steps, t * 37 * t);
    assert_eq!(out.ledger.training_episodes, t * 37);
    assert_eq!(sim.steps_served(), t * 37 * t);
    assert_eq!(out.ledger.eval_steps, 0);
}

#[test]
fn frozen_prefix_batches_are_stationary() {
    let mdp = common::small_random_mdp(1, 12);
    let sim = TabularSimulator::new(mdp.clone());
    let oracle = TabularMean::default();
    let mut run = SqirlRun::new(&sim, &oracle, 1, 25, 8).unwrap();
    let mut early = Vec::new();
    while !run.is_done() {
        early.push(run.replay_batch(run.iteration()).unwrap());
        run.step().unwrap();
    }
    for (i, batch) in early.iter().enumerate() {
        assert_eq!(&run.replay_batch(i).unwrap(), batch, "iteration {i}");
    }
    let mut ledger = SampleLedger::new(mdp.horizon());
    let direct = collect_batch(&sim, run.policy(), 0, 25, 8, &mut ledger).unwrap();
    assert_eq!(&direct, &early[0]);
}

#[test]
fn reference_needs_two_steps_of_lookahead() {
    let mdp = reference_two_step();
    let sim = TabularSimulator::new(mdp.clone());
    let k1 = sqirl_train(&sim, &TabularMean::default(), 1, 2000, 3).unwrap();
    let k2 = sqirl_train(&sim, &TabularMean::default(), 2, 2000, 3).unwrap();
    assert_abs_diff_eq!(exact_return(&mdp, &k1.policy.to_timed_policy()), 0.6, epsilon = 1e-12);
    assert_abs_diff_eq!(exact_return(&mdp, &k2.policy.to_timed_policy()), 0.8, epsilon = 1e-12);
}

#[test]
fn one_hot_linear_oracle_agrees_with_tabular() {
    let mdp = make_random_mdp(&RandomMdpConfig {
        num_states: 4,
        num_actions: 3,
        horizon: 3,
        reward_density: 0.6,
        deterministic: false,
        branching: None,
        seed: 2,
    })
    .unwrap();
    let sim = TabularSimulator::new(mdp.clone());
    let linear = LinearLsq::new(FeatureMap::one_hot(4, 3), DEFAULT_RIDGE);
    let a = sqirl_train(&sim, &TabularMean::default(), 2, 400, 6).unwrap();
    let b = sqirl_train(&sim, &linear, 2, 400, 6).unwrap();
    for (x, y) in a.policy.deciders().iter().zip(b.policy.deciders()) {
        assert_eq!(x.actions(), y.actions());
    }
}

#[test]
fn gorp_full_lookahead_is_optimal_on_trees() {
    for seed in 0..10 {
        let mdp = make_random_tree(2, 4, 0.5, seed).unwrap();
        let sim = TabularSimulator::new(mdp.clone());
        let out = gorp_train(&sim, mdp.horizon(), 1, seed).unwrap();
        assert!(!out.stochastic);
        let policy = out.to_timed_policy(mdp.num_states());
        assert_abs_diff_eq!(exact_return(&mdp, &policy), optimal_return(&mdp), epsilon = 1e-12);
        assert_eq!(out.ledger.training_episodes, 16 + 8 + 4 + 2);
    }
}

/// Whether the first SQIRL batch visits every leaf of a tree.
fn covers_all_paths(mdp: &TabularMdp, sim: &TabularSimulator, m: usize, seed: u64) -> bool {
    let oracle = TabularMean::default();
    let run = SqirlRun::new(sim, &oracle, mdp.horizon(), m, seed).unwrap();
    let batch = run.replay_batch(0).unwrap();
    let mut seen = std::collections::BTreeSet::new();
    for ep in &batch.episodes {
        seen.insert(ep.actions.clone());
    }
    seen.len() == mdp.num_actions().pow(mdp.horizon() as u32)
}

#[test]
fn sqirl_and_gorp_agree_on_trees() {
    for seed in 0..10 {
        let mdp = make_random_tree(2, 3, 0.6, 100 + seed).unwrap();
        let sim = TabularSimulator::new(mdp.clone());
        let m = 64;
        if !covers_all_paths(&mdp, &sim, m, seed) {
            continue;
        }
        let sqirl = sqirl_train(&sim, &TabularMean::default(), 3, m, seed).unwrap();
        let gorp = gorp_train(&sim, 3, 1, seed).unwrap();
        let start = (0..mdp.num_states()).find(|&s| mdp.initial()[s] > 0.0).unwrap();
        assert_eq!(sqirl.policy.deciders()[0].act(start), gorp.actions[0], "seed {seed}");
    }
}

#[test]
fn gorp_flags_stochastic_environments() {
    let mdp = common::small_random_mdp(0, 1);
    let sim = TabularSimulator::new(mdp);
    let out = gorp_train(&sim, 1, 8, 0).unwrap();
    assert!(out.stochastic);
}

#[test]
fn lookahead_is_checked() {
    let sim = TabularSimulator::new(reference_two_step());
    assert!(sqirl_train(&sim, &TabularMean::default(), 0, 5, 0).is_err());
    assert!(sqirl_train(&sim, &TabularMean::default(), 3, 5, 0).is_err());
    assert!(sqirl_train(&sim, &TabularMean::default(), 1, 0, 0).is_err());
    assert!(gorp_train(&sim, 3, 1, 0).is_err());
}

fn strip_tests(src: &str) -> &str {
    src.split("#[cfg(test)]").next().unwrap()
}

#[test]
fn learners_only_touch_the_simulator() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("src/algorithms");
    for file in ["mod.rs", "sqirl.rs", "gorp.rs"] {
        let text = std::fs::read_to_string(dir.join(file)).unwrap();
        let body = strip_tests(&text);
        for needle in [".transition(", ".successors(", ".reward(", ".initial(", "TabularMdp", "exact_"] {
            assert!(!body.contains(needle), "{file} uses {needle}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ledger_is_t_squared_m(
        ns in 1usize..5,
        horizon in 1usize..5,
        k in 1usize..5,
        m in 1usize..30,
        seed in any::<u64>(),
    ) {
        let k = k.min(horizon);
        let mdp = make_random_mdp(&RandomMdpConfig {
            num_states: ns,
            num_actions: 2,
            horizon,
            reward_density: 0.5,
            deterministic: false,
            branching: None,
            seed,
        })
        .unwrap();
        let sim = TabularSimulator::new(mdp);
        let out = sqirl_train(&sim, &TabularMean::default(), k, m, seed).unwrap();
        let t = horizon as u64;
        prop_assert_eq!(out.ledger.training_steps, t * m as u64 * t);
        prop_assert_eq!(out.policy.learned_steps(), horizon);
        for d in out.policy.deciders() {
            for s in 0..ns {
                let v: Vec<f64> = d.estimate().state_values(s).collect();
                prop_assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
            }
        }
    }

    #[test]
    fn sqirl_is_seed_deterministic(seed in any::<u64>()) {
        let mdp = common::small_random_mdp(seed as usize % 10, seed);
        let sim = TabularSimulator::new(mdp);
        let a = sqirl_train(&sim, &TabularMean::default(), 2, 20, seed).unwrap();
        let b = sqirl_train(&sim, &TabularMean::default(), 2, 20, seed).unwrap();
        prop_assert_eq!(a.policy.to_timed_policy(), b.policy.to_timed_policy());
    }
}
