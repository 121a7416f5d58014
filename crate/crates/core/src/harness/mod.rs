//! Experiment driver: trains learners, evaluates them between iterations,
//! detects solves and searches for the smallest working batch size.

mod output;
mod tune;

pub use output::{digest, read_runs_csv, write_curves_csv, write_runs_csv, CurveRow, RunRow, RUNS_COLUMNS, CURVES_COLUMNS};
pub use tune::{sweep, tune_m, Probe, SweepDocument, SweepSummary, TuneConfig, TuneResult};

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{run_episode, GorpRun, Learner, SqirlRun, TabularSimulator};
use crate::analysis::optimal_return;
use crate::envs::GeneratorSpec;
use crate::error::{Error, Result};
use crate::mdp::{exact_return, TabularMdp, TimedPolicy};
use crate::oracles::{FeatureKind, FeatureMap, LinearLsq, Regressor, TabularMean, DEFAULT_RIDGE};
use crate::rng::{domain, RngStreams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvSource {
    File(PathBuf),
    Generator(GeneratorSpec),
}

impl EnvSource {
    pub fn load(&self) -> Result<TabularMdp> {
        Ok(match self {
            EnvSource::File(path) => TabularMdp::load(path)?,
            EnvSource::Generator(g) => g.build()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgoKind {
    Sqirl,
    Gorp,
}

impl std::fmt::Display for AlgoKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AlgoKind::Sqirl => "sqirl",
            AlgoKind::Gorp => "gorp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    #[default]
    Tabular,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    #[serde(default)]
    pub kind: OracleKind,
    /// `one-hot`, `state-x-action`, `additive`, or a path to a feature file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<String>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

fn default_lambda() -> f64 {
    DEFAULT_RIDGE
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { kind: OracleKind::Tabular, features: None, lambda: DEFAULT_RIDGE }
    }
}

impl OracleConfig {
    pub fn build(&self, num_states: usize, num_actions: usize) -> Result<Box<dyn Regressor>> {
        match self.kind {
            OracleKind::Tabular => Ok(Box::new(TabularMean::default())),
            OracleKind::Linear => {
                let kind = match self.features.as_deref().unwrap_or("one-hot") {
                    "one-hot" | "state-x-action" => Some(FeatureKind::OneHot),
                    "additive" => Some(FeatureKind::Additive),
                    _ => None,
                };
                let features = match kind {
                    Some(kind) => FeatureMap::new(kind, num_states, num_actions)?,
                    None => FeatureMap::load(self.features.as_deref().expect("path given"))?,
                };
                Ok(Box::new(LinearLsq::new(features, self.lambda)))
            }
        }
    }
}

/// Learner configuration echoed into every record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub algo: AlgoKind,
    pub k: usize,
    pub m: usize,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SolveRule {
    /// Monte Carlo mean return at least `J* - epsilon`; `epsilon` defaults to
    /// `1e-6 * max(1, J*)`.
    MeanReachesOptimal {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon: Option<f64>,
    },
    /// Exact return of the current policy at least `J* - epsilon`.
    ExactEpsilon { epsilon: f64 },
}

impl Default for SolveRule {
    fn default() -> Self {
        SolveRule::MeanReachesOptimal { epsilon: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Training timesteps between evaluations; `None` evaluates after every
    /// iteration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<u64>,
    #[serde(default = "default_eval_episodes")]
    pub episodes: usize,
    #[serde(default)]
    pub rule: SolveRule,
}

fn default_eval_episodes() -> usize {
    100
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { interval: None, episodes: default_eval_episodes(), rule: SolveRule::default() }
    }
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub env: EnvSource,
    pub algo: AlgoConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    /// Maximum training timesteps per run.
    pub budget: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.algo.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.algo.m == 0 {
            return bad("m must be at least 1".into());
        }
        if self.eval.episodes == 0 {
            return bad("evaluation needs at least one episode".into());
        }
        if let Some(interval) = self.eval.interval {
            if interval == 0 {
                return bad("evaluation interval must be positive".into());
            }
            if self.budget < interval {
                return bad(format!("budget {} is below the evaluation interval {interval}", self.budget));
            }
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        match self.eval.rule {
            SolveRule::ExactEpsilon { epsilon } | SolveRule::MeanReachesOptimal { epsilon: Some(epsilon) }
                if !(epsilon >= 0.0 && epsilon.is_finite()) =>
            {
                bad(format!("solve tolerance {epsilon} must be a nonnegative number"))
            }
            _ => Ok(()),
        }
    }

    fn with_m(&self, k: usize, m: usize) -> Self {
        let mut spec = self.clone();
        spec.algo.k = k;
        spec.algo.m = m;
        spec
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Training timesteps consumed before this evaluation.
    pub timesteps: u64,
    pub mean_return: f64,
    pub return_std: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_return: Option<f64>,
    /// Mean above `J*` by more than five standard errors.
    pub suspicious: bool,
    pub solved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub env: String,
    pub algo: AlgoConfig,
    pub eval: EvalConfig,
    pub budget: u64,
    pub seed: u64,
    pub optimal_return: f64,
    pub evaluations: Vec<Evaluation>,
    pub solved: bool,
    /// Training timesteps at the first solving evaluation.
    pub sample_complexity: Option<u64>,
    pub training_timesteps: u64,
    pub eval_timesteps: u64,
    pub warnings: Vec<String>,
    pub wall_clock_secs: f64,
}

impl RunRecord {
    pub fn final_return(&self) -> Option<f64> {
        self.evaluations.last().map(|e| e.mean_return)
    }
}

fn mix_seed(base: u64, seed: u64) -> u64 {
    base.rotate_left(32) ^ seed
}

struct Evaluator<'a> {
    mdp: &'a TabularMdp,
    sim: &'a TabularSimulator,
    optimal: f64,
    cfg: EvalConfig,
    streams: RngStreams,
    count: u64,
}

impl Evaluator<'_> {
    fn evaluate(&mut self, policy: &TimedPolicy, timesteps: u64) -> Result<Evaluation> {
        let streams = self.streams.fork(self.count);
        self.count += 1;
        let na = self.mdp.num_actions();
        let returns = (0..self.cfg.episodes as u64)
            .into_par_iter()
            .map(|j| {
                let mut rng = streams.stream(j);
                run_episode(self.sim, &mut rng, |t, s, r| policy.sample(t, s, na, r)).map(|ep| ep.total_reward())
            })
            .collect::<std::result::Result<Vec<f64>, _>>()?;
        let n = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let std = if returns.len() > 1 {
            (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let suspicious = mean > self.optimal + 5.0 * std / n.sqrt() + 1e-9;
        let (solved, exact) = match self.cfg.rule {
            SolveRule::MeanReachesOptimal { epsilon } => {
                let eps = epsilon.unwrap_or(1e-6 * self.optimal.max(1.0));
                (mean >= self.optimal - eps && !suspicious, None)
            }
            SolveRule::ExactEpsilon { epsilon } => {
                let j = exact_return(self.mdp, policy);
                (j >= self.optimal - epsilon, Some(j))
            }
        };
        Ok(Evaluation { timesteps, mean_return: mean, return_std: std, exact_return: exact, suspicious, solved })
    }
}

/// One seed of an experiment on an already loaded model.
pub fn run_single(spec: &ExperimentSpec, mdp: &TabularMdp, optimal: f64, seed: u64) -> Result<RunRecord> {
    let started = Instant::now();
    let sim = TabularSimulator::new(mdp.clone());
    let run_seed = mix_seed(spec.algo.seed, seed);
    let oracle: Arc<dyn Regressor> = spec.algo.oracle.build(mdp.num_states(), mdp.num_actions())?.into();
    let mut learner: Box<dyn Learner + '_> = match spec.algo.algo {
        AlgoKind::Sqirl => Box::new(SqirlRun::new(&sim, oracle.as_ref(), spec.algo.k, spec.algo.m, run_seed)?),
        AlgoKind::Gorp => Box::new(GorpRun::new(&sim, spec.algo.k, spec.algo.m, run_seed)?),
    };
    let mut evaluator = Evaluator {
        mdp,
        sim: &sim,
        optimal,
        cfg: spec.eval,
        streams: RngStreams::new(run_seed).fork(domain::EVAL),
        count: 0,
    };
    let mut eval_steps = 0u64;
    let mut evaluations = vec![evaluator.evaluate(&learner.current_policy(), 0)?];
    eval_steps += (spec.eval.episodes * mdp.horizon()) as u64;
    let mut last_eval = 0u64;
    while !evaluations.last().expect("initial evaluation").solved {
        let Some(cost) = learner.next_iteration_cost() else { break };
        let used = learner.ledger().training_steps;
        if used + cost > spec.budget {
            break;
        }
        learner.advance()?;
        let used = learner.ledger().training_steps;
        let due = match spec.eval.interval {
            None => true,
            Some(interval) => used - last_eval >= interval || learner.next_iteration_cost().is_none(),
        };
        if due {
            evaluations.push(evaluator.evaluate(&learner.current_policy(), used)?);
            eval_steps += (spec.eval.episodes * mdp.horizon()) as u64;
            last_eval = used;
        }
    }
    let sample_complexity = evaluations.iter().find(|e| e.solved).map(|e| e.timesteps);
    let mut algo = spec.algo.clone();
    algo.seed = run_seed;
    Ok(RunRecord {
        env: mdp.name().to_string(),
        algo,
        eval: spec.eval,
        budget: spec.budget,
        seed,
        optimal_return: optimal,
        solved: sample_complexity.is_some(),
        sample_complexity,
        training_timesteps: learner.ledger().training_steps,
        eval_timesteps: eval_steps,
        warnings: learner.warnings(),
        evaluations,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

/// Runs every seed of `spec` on a loaded model. Records are sorted by seed.
pub fn run_experiment_with_mdp(spec: &ExperimentSpec, mdp: &TabularMdp) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    if spec.algo.k > mdp.horizon() {
        return Err(Error::Config(format!("k = {} exceeds the horizon {}", spec.algo.k, mdp.horizon())));
    }
    let optimal = optimal_return(mdp);
    let mut records = spec
        .seeds
        .par_iter()
        .map(|&seed| run_single(spec, mdp, optimal, seed))
        .collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| r.seed);
    Ok(records)
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunRecord>> {
    let mdp = spec.env.load()?.validated()?;
    run_experiment_with_mdp(spec, &mdp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::GeneratorSpec;

    pub(crate) fn spec(generator: GeneratorSpec, algo: AlgoKind, k: usize, m: usize, budget: u64) -> ExperimentSpec {
        ExperimentSpec {
            env: EnvSource::Generator(generator),
            algo: AlgoConfig { algo, k, m, oracle: OracleConfig::default(), seed: 0 },
            eval: EvalConfig::default(),
            budget,
            seeds: (0..5).collect(),
        }
    }

    #[test]
    fn solvable_reference_solves_after_training() {
        let mut s = spec(GeneratorSpec::ReferenceSolvable, AlgoKind::Sqirl, 1, 200, 100_000);
        s.eval.rule = SolveRule::ExactEpsilon { epsilon: 1e-9 };
        for r in run_experiment(&s).unwrap() {
            assert_eq!(r.evaluations[0].timesteps, 0);
            if r.solved {
                assert!(r.sample_complexity.unwrap() <= 800);
            }
            assert!(r.evaluations.windows(2).all(|w| w[0].timesteps < w[1].timesteps));
            assert_eq!(r.eval_timesteps, r.evaluations.len() as u64 * 100 * 2);
        }
    }

    #[test]
    fn tiny_budget_only_evaluates_once() {
        let r = run_experiment(&spec(GeneratorSpec::Reference, AlgoKind::Sqirl, 1, 200, 399)).unwrap();
        for rec in r {
            assert_eq!(rec.evaluations.len(), 1);
            assert_eq!(rec.training_timesteps, 0);
            assert!(!rec.solved);
        }
    }

    #[test]
    fn spec_validation() {
        let mut s = spec(GeneratorSpec::Reference, AlgoKind::Sqirl, 1, 10, 100);
        s.eval.interval = Some(0);
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        s.eval.interval = Some(1000);
        assert!(s.validate().is_err());
        s.eval.interval = Some(50);
        assert!(s.validate().is_ok());
        s.seeds.clear();
        assert!(s.validate().is_err());
    }

    #[test]
    fn records_round_trip() {
        let recs = run_experiment(&spec(GeneratorSpec::Reference, AlgoKind::Gorp, 2, 1, 1000)).unwrap();
        let text = serde_json::to_string(&recs).unwrap();
        let back: Vec<RunRecord> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, recs);
        assert!(recs.iter().all(|r| r.solved));
    }
}
