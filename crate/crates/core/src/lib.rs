//! Exact effective-horizon analysis of finite-horizon tabular MDPs, plus the
//! SQIRL and GORP random-exploration learners and an experiment harness that
//! measures their empirical sample complexity.
//!
//! Timesteps are zero-based throughout: an MDP with horizon `T` has decision
//! steps `0..T`, and the last step `T - 1` has no successor state.

pub mod algorithms;
pub mod analysis;
pub mod envs;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod oracles;
pub mod rng;

pub use algorithms::{
    collect_batch, gorp_train, greedy_action, sqirl_train, GorpOutcome, LearnedPolicy, SampleLedger,
    Simulator, SqirlOutcome, TabularSimulator,
};
pub use analysis::{effective_horizon, optimal_q, q_sequence, qvi_step, HorizonReport};
pub use error::{Error, Result};
pub use mdp::{Episode, EpisodeBatch, QTable, TabularMdp, TimedPolicy, VTable};
pub use oracles::{LinearLsq, QEstimate, RegressionDataset, Regressor, TabularMean};
pub use rng::{RngStreams, StreamRng};
