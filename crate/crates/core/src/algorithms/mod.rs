//! Model-free learners that interact with an MDP only through a [`Simulator`].

mod gorp;
mod simulator;
mod sqirl;

pub use gorp::{gorp_train, GorpOutcome, GorpRun};
pub use simulator::{Simulator, StepOutcome, TabularSimulator};
pub use sqirl::{sqirl_train, SqirlOutcome, SqirlRun};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::TIE_TOL;
use crate::mdp::{Episode, EpisodeBatch, StepRule, TimedPolicy};
use crate::oracles::{OracleError, QEstimate};
use crate::rng::{domain, RngStreams, StreamRng};

#[derive(Debug, Error)]
pub enum AlgoError {
    #[error("simulator episode ended after {got} steps, expected {expected}")]
    EpisodeLength { expected: usize, got: usize },
    #[error("lookahead k = {k} must lie in 1..={horizon}")]
    Lookahead { k: usize, horizon: usize },
    #[error("episodes per iteration must be at least 1")]
    EmptyBatch,
    #[error("iteration {iteration} is outside 0..{horizon}")]
    Iteration { iteration: usize, horizon: usize },
    #[error("{sequences} action sequences per iteration is too many")]
    TooManySequences { sequences: u128 },
    #[error("oracle failed at iteration {iteration}, timestep {timestep}: {source}")]
    Oracle {
        iteration: usize,
        timestep: usize,
        #[source]
        source: OracleError,
    },
}

/// Counts of simulator usage. Training and evaluation are kept apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SampleLedger {
    pub horizon: usize,
    pub training_episodes: u64,
    pub training_steps: u64,
    pub eval_episodes: u64,
    pub eval_steps: u64,
}

impl SampleLedger {
    pub fn new(horizon: usize) -> Self {
        Self { horizon, ..Self::default() }
    }

    pub fn record_training(&mut self, episodes: u64) {
        self.training_episodes += episodes;
        self.training_steps += episodes * self.horizon as u64;
    }

    pub fn record_eval(&mut self, episodes: u64) {
        self.eval_episodes += episodes;
        self.eval_steps += episodes * self.horizon as u64;
    }
}

/// Lowest-index action within `TIE_TOL` of `max_a q(s, a)`.
pub fn greedy_action(q: &QEstimate, s: usize) -> usize {
    let top = q.state_max(s);
    q.state_values(s).position(|v| v >= top - TIE_TOL).unwrap_or(0)
}

/// Greedy decider frozen at one iteration.
#[derive(Debug, Clone)]
pub struct Decider {
    estimate: QEstimate,
    actions: Vec<usize>,
}

impl Decider {
    pub fn new(estimate: QEstimate) -> Self {
        let actions = (0..estimate.num_states()).map(|s| greedy_action(&estimate, s)).collect();
        Self { estimate, actions }
    }

    pub fn act(&self, s: usize) -> usize {
        self.actions[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn estimate(&self) -> &QEstimate {
        &self.estimate
    }
}

/// Frozen greedy deciders for a prefix of timesteps, uniform random after.
#[derive(Debug, Clone)]
pub struct LearnedPolicy {
    horizon: usize,
    num_actions: usize,
    deciders: Vec<Decider>,
}

impl LearnedPolicy {
    pub fn new(horizon: usize, num_actions: usize) -> Self {
        Self { horizon, num_actions, deciders: Vec::new() }
    }

    /// Appends the decider for the next timestep. Earlier deciders are never
    /// touched.
    pub fn freeze(&mut self, decider: Decider) {
        assert!(self.deciders.len() < self.horizon, "every timestep already has a decider");
        self.deciders.push(decider);
    }

    pub fn learned_steps(&self) -> usize {
        self.deciders.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn deciders(&self) -> &[Decider] {
        &self.deciders
    }

    /// Action at `(t, s)`, using at most the first `prefix` deciders.
    pub fn act_with_prefix(&self, prefix: usize, t: usize, s: usize, rng: &mut StreamRng) -> usize {
        if t < prefix.min(self.deciders.len()) {
            self.deciders[t].act(s)
        } else {
            rng.random_range(0..self.num_actions)
        }
    }

    pub fn act(&self, t: usize, s: usize, rng: &mut StreamRng) -> usize {
        self.act_with_prefix(self.horizon, t, s, rng)
    }

    pub fn to_timed_policy(&self) -> TimedPolicy {
        TimedPolicy::from_rules(
            (0..self.horizon)
                .map(|t| match self.deciders.get(t) {
                    Some(d) => StepRule::Deterministic(d.actions.clone()),
                    None => StepRule::UniformRandom,
                })
                .collect(),
        )
    }
}

/// Plays one full episode, checking that the simulator ends it at step `T`.
pub fn run_episode(
    sim: &dyn Simulator,
    rng: &mut StreamRng,
    mut policy: impl FnMut(usize, usize, &mut StreamRng) -> usize,
) -> Result<Episode, AlgoError> {
    let horizon = sim.horizon();
    let mut ep = Episode {
        states: Vec::with_capacity(horizon),
        actions: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
    };
    let mut s = sim.reset(rng);
    for t in 0..horizon {
        let a = policy(t, s, rng);
        let out = sim.step(t, s, a, rng);
        ep.states.push(s);
        ep.actions.push(a);
        ep.rewards.push(out.reward);
        match (out.done, out.next_state) {
            (false, Some(next)) if t + 1 < horizon => s = next,
            (true, _) if t + 1 == horizon => {}
            _ => return Err(AlgoError::EpisodeLength { expected: horizon, got: t + 1 }),
        }
    }
    Ok(ep)
}

/// `m` episodes following the first `iteration` frozen deciders, uniform
/// random afterwards. Episode `j` draws from its own stream, so the batch does
/// not depend on thread scheduling.
pub fn collect_batch(
    sim: &dyn Simulator,
    learned: &LearnedPolicy,
    iteration: usize,
    m: usize,
    seed: u64,
    ledger: &mut SampleLedger,
) -> Result<EpisodeBatch, AlgoError> {
    if iteration >= sim.horizon() {
        return Err(AlgoError::Iteration { iteration, horizon: sim.horizon() });
    }
    if m == 0 {
        return Err(AlgoError::EmptyBatch);
    }
    let streams = RngStreams::new(seed).fork(domain::COLLECT).fork(iteration as u64);
    let episodes = (0..m as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = streams.stream(j);
            run_episode(sim, &mut rng, |t, s, r| learned.act_with_prefix(iteration, t, s, r))
        })
        .collect::<Result<Vec<_>, _>>()?;
    ledger.record_training(m as u64);
    Ok(EpisodeBatch { iteration, episodes })
}

/// Iteration-at-a-time view of a learner, used by the experiment harness.
pub trait Learner {
    fn horizon(&self) -> usize;
    /// Training timesteps the next iteration will consume, `None` once done.
    fn next_iteration_cost(&self) -> Option<u64>;
    fn advance(&mut self) -> Result<(), AlgoError>;
    /// Learned prefix followed by uniform random actions.
    fn current_policy(&self) -> TimedPolicy;
    fn ledger(&self) -> &SampleLedger;
    /// Non-fatal warnings raised so far.
    fn warnings(&self) -> Vec<String> {
        Vec::new()
    }
}

fn check_k(k: usize, horizon: usize) -> Result<(), AlgoError> {
    if k == 0 || k > horizon {
        Err(AlgoError::Lookahead { k, horizon })
    } else {
        Ok(())
    }
}
