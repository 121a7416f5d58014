use std::sync::atomic::{AtomicU64, Ordering};

use crate::mdp::{sample_index, TabularMdp};
use crate::rng::StreamRng;

/// Result of one simulator step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// `None` once the episode is over.
    pub next_state: Option<usize>,
    pub reward: f64,
    pub done: bool,
}

/// Episodic sampler. Learners see only this interface.
///
/// Steps take the current timestep and state explicitly so one simulator can
/// serve many episodes concurrently; randomness comes from the caller's
/// stream.
pub trait Simulator: Send + Sync {
    fn horizon(&self) -> usize;
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn reset(&self, rng: &mut StreamRng) -> usize;
    fn step(&self, t: usize, state: usize, action: usize, rng: &mut StreamRng) -> StepOutcome;
    /// Total steps served so far.
    fn steps_served(&self) -> u64;
}

/// Simulator backed by an explicit model.
#[derive(Debug)]
pub struct TabularSimulator {
    mdp: TabularMdp,
    served: AtomicU64,
}

impl TabularSimulator {
    pub fn new(mdp: TabularMdp) -> Self {
        Self { mdp, served: AtomicU64::new(0) }
    }
}

impl Simulator for TabularSimulator {
    fn horizon(&self) -> usize {
        self.mdp.horizon()
    }

    fn num_states(&self) -> usize {
        self.mdp.num_states()
    }

    fn num_actions(&self) -> usize {
        self.mdp.num_actions()
    }

    fn reset(&self, rng: &mut StreamRng) -> usize {
        sample_index(self.mdp.initial().view(), rng)
    }

    fn step(&self, t: usize, state: usize, action: usize, rng: &mut StreamRng) -> StepOutcome {
        self.served.fetch_add(1, Ordering::Relaxed);
        let reward = self.mdp.reward(t)[[state, action]];
        if t + 1 < self.mdp.horizon() {
            let next = sample_index(self.mdp.successors(t, state, action), rng);
            StepOutcome { next_state: Some(next), reward, done: false }
        } else {
            StepOutcome { next_state: None, reward, done: true }
        }
    }

    fn steps_served(&self) -> u64 {
        self.served.load(Ordering::Relaxed)
    }
}
