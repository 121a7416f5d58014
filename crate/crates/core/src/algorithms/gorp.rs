use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::TIE_TOL;
use crate::mdp::{StepRule, TimedPolicy};
use crate::rng::{domain, RngStreams};

use super::{check_k, run_episode, AlgoError, Learner, SampleLedger, Simulator};

const MAX_SEQUENCES: u128 = 1 << 20;

/// Result of a full GORP run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GorpOutcome {
    /// Open-loop action sequence, one action per timestep.
    pub actions: Vec<usize>,
    pub ledger: SampleLedger,
    /// Set when replaying the same actions reached different states.
    pub stochastic: bool,
}

impl GorpOutcome {
    pub fn to_timed_policy(&self, num_states: usize) -> TimedPolicy {
        TimedPolicy::deterministic(self.actions.iter().map(|&a| vec![a; num_states]).collect())
    }
}

/// GORP state between iterations.
pub struct GorpRun<'a> {
    sim: &'a dyn Simulator,
    k: usize,
    m: usize,
    seed: u64,
    actions: Vec<usize>,
    ledger: SampleLedger,
    stochastic: bool,
}

fn decode(mut index: usize, len: usize, num_actions: usize) -> Vec<usize> {
    let mut seq = vec![0; len];
    for slot in seq.iter_mut().rev() {
        *slot = index % num_actions;
        index /= num_actions;
    }
    seq
}

impl<'a> GorpRun<'a> {
    pub fn new(sim: &'a dyn Simulator, k: usize, m: usize, seed: u64) -> Result<Self, AlgoError> {
        check_k(k, sim.horizon())?;
        if m == 0 {
            return Err(AlgoError::EmptyBatch);
        }
        let sequences = (sim.num_actions() as u128).saturating_pow(k as u32);
        if sequences > MAX_SEQUENCES {
            return Err(AlgoError::TooManySequences { sequences });
        }
        Ok(Self {
            sim,
            k,
            m,
            seed,
            actions: Vec::with_capacity(sim.horizon()),
            ledger: SampleLedger::new(sim.horizon()),
            stochastic: false,
        })
    }

    pub fn is_done(&self) -> bool {
        self.actions.len() == self.sim.horizon()
    }

    fn lookahead(&self) -> usize {
        self.k.min(self.sim.horizon() - self.actions.len())
    }

    fn sequences(&self) -> usize {
        self.sim.num_actions().pow(self.lookahead() as u32)
    }

    /// Runs one iteration; returns the mean score of every sequence in
    /// lexicographic order.
    pub fn step(&mut self) -> Result<Vec<f64>, AlgoError> {
        let i = self.actions.len();
        let horizon = self.sim.horizon();
        if i >= horizon {
            return Err(AlgoError::Iteration { iteration: i, horizon });
        }
        let (len, na, m) = (self.lookahead(), self.sim.num_actions(), self.m);
        let streams = RngStreams::new(self.seed).fork(domain::GORP).fork(i as u64);
        let prefix = &self.actions;
        let sim = self.sim;
        let results = (0..self.sequences())
            .into_par_iter()
            .map(|q| {
                let seq = decode(q, len, na);
                let seq_streams = streams.fork(q as u64);
                let mut total = 0.0;
                let mut path: Option<Vec<usize>> = None;
                let mut stochastic = false;
                for j in 0..m as u64 {
                    let mut rng = seq_streams.stream(j);
                    let ep = run_episode(sim, &mut rng, |t, _, r| {
                        if t < i {
                            prefix[t]
                        } else if t < i + len {
                            seq[t - i]
                        } else {
                            rand::Rng::random_range(r, 0..na)
                        }
                    })?;
                    total += ep.rewards[i..].iter().sum::<f64>();
                    let fixed = &ep.states[..(i + len + 1).min(horizon)];
                    match &path {
                        None => path = Some(fixed.to_vec()),
                        Some(p) => stochastic |= p.as_slice() != fixed,
                    }
                }
                Ok((total / m as f64, path.unwrap_or_default(), stochastic))
            })
            .collect::<Result<Vec<_>, AlgoError>>()?;
        self.ledger.record_training((results.len() * m) as u64);

        let first = &results[0].1[..=i];
        self.stochastic |= results.iter().any(|(_, p, s)| *s || &p[..=i] != first);
        let scores: Vec<f64> = results.iter().map(|r| r.0).collect();
        let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let best = scores.iter().position(|&v| v >= top - TIE_TOL).unwrap_or(0);
        self.actions.push(decode(best, len, na)[0]);
        Ok(scores)
    }

    pub fn finish(mut self) -> Result<GorpOutcome, AlgoError> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(GorpOutcome { actions: self.actions, ledger: self.ledger, stochastic: self.stochastic })
    }
}

impl Learner for GorpRun<'_> {
    fn horizon(&self) -> usize {
        self.sim.horizon()
    }

    fn next_iteration_cost(&self) -> Option<u64> {
        (!self.is_done()).then(|| (self.sequences() * self.m * self.sim.horizon()) as u64)
    }

    fn advance(&mut self) -> Result<(), AlgoError> {
        self.step().map(|_| ())
    }

    fn current_policy(&self) -> TimedPolicy {
        let ns = self.sim.num_states();
        TimedPolicy::from_rules(
            (0..self.sim.horizon())
                .map(|t| match self.actions.get(t) {
                    Some(&a) => StepRule::Deterministic(vec![a; ns]),
                    None => StepRule::UniformRandom,
                })
                .collect(),
        )
    }

    fn ledger(&self) -> &SampleLedger {
        &self.ledger
    }

    fn warnings(&self) -> Vec<String> {
        if self.stochastic {
            vec!["stochastic transitions detected; GORP assumes a deterministic environment".into()]
        } else {
            Vec::new()
        }
    }
}

/// Trains GORP with lookahead `k` and `m` rollouts per action sequence.
pub fn gorp_train(sim: &dyn Simulator, k: usize, m: usize, seed: u64) -> Result<GorpOutcome, AlgoError> {
    GorpRun::new(sim, k, m, seed)?.finish()
}
