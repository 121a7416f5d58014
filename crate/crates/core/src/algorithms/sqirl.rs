use crate::mdp::{EpisodeBatch, TimedPolicy};
use crate::oracles::{fqi_targets, monte_carlo_targets, QEstimate, Regressor};

use super::{check_k, collect_batch, AlgoError, Decider, LearnedPolicy, Learner, SampleLedger, Simulator};

/// Result of a full SQIRL run.
#[derive(Debug, Clone)]
pub struct SqirlOutcome {
    pub policy: LearnedPolicy,
    pub ledger: SampleLedger,
}

/// SQIRL state between iterations.
pub struct SqirlRun<'a> {
    sim: &'a dyn Simulator,
    oracle: &'a dyn Regressor,
    k: usize,
    m: usize,
    seed: u64,
    policy: LearnedPolicy,
    ledger: SampleLedger,
}

impl<'a> SqirlRun<'a> {
    pub fn new(
        sim: &'a dyn Simulator,
        oracle: &'a dyn Regressor,
        k: usize,
        m: usize,
        seed: u64,
    ) -> Result<Self, AlgoError> {
        check_k(k, sim.horizon())?;
        if m == 0 {
            return Err(AlgoError::EmptyBatch);
        }
        Ok(Self {
            sim,
            oracle,
            k,
            m,
            seed,
            policy: LearnedPolicy::new(sim.horizon(), sim.num_actions()),
            ledger: SampleLedger::new(sim.horizon()),
        })
    }

    pub fn iteration(&self) -> usize {
        self.policy.learned_steps()
    }

    pub fn is_done(&self) -> bool {
        self.iteration() == self.sim.horizon()
    }

    pub fn policy(&self) -> &LearnedPolicy {
        &self.policy
    }

    /// Re-collects the batch iteration `i` used (or would use).
    pub fn replay_batch(&self, i: usize) -> Result<EpisodeBatch, AlgoError> {
        let mut scratch = SampleLedger::new(self.sim.horizon());
        collect_batch(self.sim, &self.policy, i, self.m, self.seed, &mut scratch)
    }

    /// Runs one iteration and returns the estimate behind the new decider.
    pub fn step(&mut self) -> Result<&Decider, AlgoError> {
        let i = self.iteration();
        let horizon = self.sim.horizon();
        if i >= horizon {
            return Err(AlgoError::Iteration { iteration: i, horizon });
        }
        let (ns, na) = (self.sim.num_states(), self.sim.num_actions());
        let batch = collect_batch(self.sim, &self.policy, i, self.m, self.seed, &mut self.ledger)?;
        let top = (i + self.k - 1).min(horizon - 1);
        let ctx = |timestep: usize| move |source| AlgoError::Oracle { iteration: i, timestep, source };

        let data = monte_carlo_targets(&batch, top, ns, na).map_err(ctx(top))?;
        let mut q: QEstimate = self.oracle.fit(&data).map_err(ctx(top))?;
        for t in (i..top).rev() {
            let data = fqi_targets(&batch, t, &q).map_err(ctx(t))?;
            q = self.oracle.fit(&data).map_err(ctx(t))?;
        }
        self.policy.freeze(Decider::new(q));
        Ok(&self.policy.deciders()[i])
    }

    pub fn finish(mut self) -> Result<SqirlOutcome, AlgoError> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(SqirlOutcome { policy: self.policy, ledger: self.ledger })
    }
}

impl Learner for SqirlRun<'_> {
    fn horizon(&self) -> usize {
        self.sim.horizon()
    }

    fn next_iteration_cost(&self) -> Option<u64> {
        (!self.is_done()).then(|| (self.m * self.sim.horizon()) as u64)
    }

    fn advance(&mut self) -> Result<(), AlgoError> {
        self.step().map(|_| ())
    }

    fn current_policy(&self) -> TimedPolicy {
        self.policy.to_timed_policy()
    }

    fn ledger(&self) -> &SampleLedger {
        &self.ledger
    }
}

/// Trains SQIRL with lookahead `k` and `m` episodes per iteration.
pub fn sqirl_train(
    sim: &dyn Simulator,
    oracle: &dyn Regressor,
    k: usize,
    m: usize,
    seed: u64,
) -> Result<SqirlOutcome, AlgoError> {
    SqirlRun::new(sim, oracle, k, m, seed)?.finish()
}
