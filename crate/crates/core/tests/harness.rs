use horizonlab::envs::GeneratorSpec;
use horizonlab::harness::{
    digest, read_runs_csv, run_experiment, run_experiment_with_mdp, sweep, tune_m, write_curves_csv, write_runs_csv,
    AlgoConfig, AlgoKind, EnvSource, EvalConfig, ExperimentSpec, OracleConfig, RunRecord, SolveRule, TuneConfig,
    CURVES_COLUMNS, RUNS_COLUMNS,
};

fn spec(env: GeneratorSpec, algo: AlgoKind, k: usize, m: usize) -> ExperimentSpec {
    ExperimentSpec {
        env: EnvSource::Generator(env),
        algo: AlgoConfig { algo, k, m, oracle: OracleConfig::default(), seed: 11 },
        eval: EvalConfig { interval: None, episodes: 50, rule: SolveRule::ExactEpsilon { epsilon: 1e-9 } },
        budget: 20_000,
        seeds: (0..4).collect(),
    }
}

fn records() -> Vec<RunRecord> {
    run_experiment(&spec(GeneratorSpec::Reference, AlgoKind::Sqirl, 2, 200)).unwrap()
}

#[test]
fn runs_are_consistent() {
    for r in records() {
        assert!(r.evaluations.windows(2).all(|w| w[0].timesteps < w[1].timesteps));
        assert!(r.training_timesteps <= r.budget);
        assert_eq!(r.eval_timesteps, r.evaluations.len() as u64 * 50 * 2);
        let first = r.evaluations.iter().find(|e| e.solved).map(|e| e.timesteps);
        assert_eq!(r.sample_complexity, first);
        assert_eq!(r.solved, first.is_some());
        assert_eq!(r.evaluations[0].timesteps, 0);
    }
}

#[test]
fn evaluation_never_counts_as_training() {
    let a = run_experiment(&spec(GeneratorSpec::Reference, AlgoKind::Sqirl, 2, 100)).unwrap();
    let mut more_eval = spec(GeneratorSpec::Reference, AlgoKind::Sqirl, 2, 100);
    more_eval.eval.episodes = 500;
    let b = run_experiment(&more_eval).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.training_timesteps, y.training_timesteps);
        assert_eq!(x.sample_complexity, y.sample_complexity);
        assert!(y.eval_timesteps > x.eval_timesteps);
    }
}

#[test]
fn records_round_trip_bit_exactly() {
    for r in records() {
        let text = serde_json::to_string(&r).unwrap();
        let back: RunRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }
}

#[test]
fn csv_outputs_have_documented_columns() {
    let recs = records();
    let mut runs = Vec::new();
    write_runs_csv(&recs, &mut runs).unwrap();
    let text = String::from_utf8(runs.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), RUNS_COLUMNS.join(","));
    assert_eq!(text.lines().count(), recs.len() + 1);
    let rows = read_runs_csv(runs.as_slice()).unwrap();
    assert_eq!(rows.len(), recs.len());

    let mut curves = Vec::new();
    write_curves_csv(&recs, &mut curves).unwrap();
    let text = String::from_utf8(curves).unwrap();
    assert_eq!(text.lines().next().unwrap(), CURVES_COLUMNS.join(","));
    let points: usize = recs.iter().map(|r| r.evaluations.len()).sum();
    assert_eq!(text.lines().count(), points + 1);
}

#[test]
fn sweeps_are_reproducible() {
    let template = spec(GeneratorSpec::Reference, AlgoKind::Sqirl, 1, 1);
    let mdp = GeneratorSpec::Reference.build().unwrap();
    let cfg = TuneConfig { m_lo: 1, m_hi: 64, threshold: 0.75 };
    let a = sweep(&template, &mdp, &[1, 2, 3], cfg).unwrap();
    let b = sweep(&template, &mdp, &[1, 2, 3], cfg).unwrap();
    assert_eq!(digest(&a).unwrap(), digest(&b).unwrap());
    assert_eq!(a.results[2].m_star, None);
    assert!(sweep(&template, &mdp, &[], cfg).is_err());
}

#[test]
fn tuning_finds_the_smallest_passing_m() {
    let template = spec(GeneratorSpec::Reference, AlgoKind::Sqirl, 2, 1);
    let mdp = GeneratorSpec::Reference.build().unwrap();
    let cfg = TuneConfig { m_lo: 1, m_hi: 128, threshold: 1.0 };
    let r = tune_m(&template, &mdp, 2, cfg).unwrap();
    let m = r.m_star.unwrap();
    assert!(r.probes.iter().all(|p| p.success == (p.solved_seeds == p.total_seeds)));
    if !r.anomaly {
        assert!(r.probes.iter().filter(|p| p.m < m).all(|p| !p.success));
    }
    assert!(r.probes.len() <= 1 + (128f64).log2().ceil() as usize + 1);
}

#[test]
fn gorp_runs_through_the_harness() {
    let s = spec(GeneratorSpec::Needle { horizon: 3, num_actions: 2 }, AlgoKind::Gorp, 3, 1);
    let mdp = s.env.load().unwrap();
    for r in run_experiment_with_mdp(&s, &mdp).unwrap() {
        assert!(r.solved);
        assert!(r.warnings.is_empty());
    }
}

#[test]
fn invalid_specs_are_rejected() {
    let mut s = spec(GeneratorSpec::Reference, AlgoKind::Sqirl, 0, 10);
    assert!(s.validate().is_err());
    s.algo.k = 1;
    s.eval.interval = Some(0);
    assert!(s.validate().is_err());
    s.eval.interval = Some(100);
    s.budget = 50;
    assert!(s.validate().is_err());
    s.budget = 500;
    s.seeds.clear();
    assert!(s.validate().is_err());
}

#[test]
fn specs_parse_from_json() {
    let text = r#"{
        "env": {"generator": {"family": "chain", "length": 3, "decoys": [0.1, 0.2, 0.3]}},
        "algo": {"algo": "sqirl", "k": 2, "m": 50, "oracle": {"kind": "linear", "lambda": 0.001}},
        "eval": {"episodes": 20, "rule": {"rule": "exact_epsilon", "epsilon": 0.001}},
        "budget": 5000
    }"#;
    let s: ExperimentSpec = serde_json::from_str(text).unwrap();
    assert_eq!(s.seeds, vec![0, 1, 2, 3, 4]);
    assert!(s.validate().is_ok());
    let back: ExperimentSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
    assert_eq!(back, s);
}
