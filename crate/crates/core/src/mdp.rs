//! Explicit finite-horizon tabular MDPs.
//!
//! An MDP stores a time-indexed reward matrix `R_t[s, a]` for every step and a
//! transition tensor `p_t[s, a, s']` for every step except the last. Returns
//! are undiscounted sums of rewards and are expected to lie in `[0, 1]`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2, Array3, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::StreamRng;

/// Tolerance for stochasticity and return-normalization checks.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Upper bound on `S * A * S * T` for dense storage.
pub const MAX_DENSE_ENTRIES: u128 = 100_000_000;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("model too large: {entries} dense transition entries exceed the limit of {MAX_DENSE_ENTRIES}")]
    TooLarge { entries: u128 },
    #[error("model violates MDP invariants: {0}")]
    Invalid(ValidationReport),
    #[error("policy does not fit the model: {0}")]
    Policy(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed MDP document: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MdpMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    initial: Array1<f64>,
    // Stationary models share one allocation across steps.
    transitions: Vec<Arc<Array3<f64>>>,
    rewards: Vec<Arc<Array2<f64>>>,
    metadata: MdpMetadata,
}

fn check_size(horizon: usize, num_states: usize, num_actions: usize) -> Result<(), MdpError> {
    let entries = (num_states as u128) * (num_actions as u128) * (num_states as u128) * (horizon as u128);
    if entries > MAX_DENSE_ENTRIES {
        return Err(MdpError::TooLarge { entries });
    }
    Ok(())
}

impl TabularMdp {
    /// Builds a model from dense arrays, checking shapes only.
    ///
    /// Use [`TabularMdp::validate`] (or [`TabularMdp::validated`]) to check
    /// the probabilistic and reward-normalization invariants.
    pub fn new(
        initial: Array1<f64>,
        transitions: Vec<Array3<f64>>,
        rewards: Vec<Array2<f64>>,
    ) -> Result<Self, MdpError> {
        Self::from_shared(
            initial,
            transitions.into_iter().map(Arc::new).collect(),
            rewards.into_iter().map(Arc::new).collect(),
        )
    }

    /// Time-invariant model: one transition tensor and reward matrix reused
    /// at every step.
    pub fn stationary(
        horizon: usize,
        initial: Array1<f64>,
        transition: Array3<f64>,
        reward: Array2<f64>,
    ) -> Result<Self, MdpError> {
        if horizon == 0 {
            return Err(MdpError::Shape("horizon must be at least 1".into()));
        }
        let transition = Arc::new(transition);
        let reward = Arc::new(reward);
        Self::from_shared(
            initial,
            vec![transition; horizon - 1],
            vec![reward; horizon],
        )
    }

    fn from_shared(
        initial: Array1<f64>,
        transitions: Vec<Arc<Array3<f64>>>,
        rewards: Vec<Arc<Array2<f64>>>,
    ) -> Result<Self, MdpError> {
        let horizon = rewards.len();
        if horizon == 0 {
            return Err(MdpError::Shape("horizon must be at least 1".into()));
        }
        let num_states = initial.len();
        if num_states == 0 {
            return Err(MdpError::Shape("at least one state is required".into()));
        }
        let num_actions = rewards[0].ncols();
        if num_actions < 2 {
            return Err(MdpError::Shape(format!(
                "at least two actions are required, got {num_actions}"
            )));
        }
        check_size(horizon, num_states, num_actions)?;
        if transitions.len() != horizon - 1 {
            return Err(MdpError::Shape(format!(
                "expected {} transition tensors for horizon {horizon}, got {}",
                horizon - 1,
                transitions.len()
            )));
        }
        for (t, r) in rewards.iter().enumerate() {
            if r.dim() != (num_states, num_actions) {
                return Err(MdpError::Shape(format!(
                    "reward at step {t} has shape {:?}, expected ({num_states}, {num_actions})",
                    r.dim()
                )));
            }
        }
        for (t, p) in transitions.iter().enumerate() {
            if p.dim() != (num_states, num_actions, num_states) {
                return Err(MdpError::Shape(format!(
                    "transition at step {t} has shape {:?}, expected ({num_states}, {num_actions}, {num_states})",
                    p.dim()
                )));
            }
        }
        Ok(Self {
            horizon,
            num_states,
            num_actions,
            initial,
            transitions,
            rewards,
            metadata: MdpMetadata::default(),
        })
    }

    pub fn with_metadata(mut self, metadata: MdpMetadata) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.metadata.name = Some(name.into());
        self
    }

    /// Returns the model if it passes [`TabularMdp::validate`].
    pub fn validated(self) -> Result<Self, MdpError> {
        let report = self.validate();
        if report.is_empty() {
            Ok(self)
        } else {
            Err(MdpError::Invalid(report))
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn initial(&self) -> &Array1<f64> {
        &self.initial
    }

    pub fn metadata(&self) -> &MdpMetadata {
        &self.metadata
    }

    pub fn name(&self) -> &str {
        self.metadata.name.as_deref().unwrap_or("unnamed")
    }

    /// Rewards at step `t`, shape `(S, A)`.
    pub fn reward(&self, t: usize) -> &Array2<f64> {
        &self.rewards[t]
    }

    /// Transitions out of step `t` (`t < T - 1`), shape `(S, A, S)`.
    pub fn transition(&self, t: usize) -> &Array3<f64> {
        &self.transitions[t]
    }

    /// Successor distribution `p_t(. | s, a)`.
    pub fn successors(&self, t: usize, s: usize, a: usize) -> ArrayView1<'_, f64> {
        self.transitions[t].slice(ndarray::s![s, a, ..])
    }

    /// Checks every model invariant and reports the first offending index of
    /// each violation class.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();

        let non_finite = self
            .initial
            .iter()
            .any(|p| !p.is_finite())
            || self.rewards.iter().any(|r| r.iter().any(|x| !x.is_finite()))
            || self.transitions.iter().any(|p| p.iter().any(|x| !x.is_finite()));
        if non_finite {
            violations.push(Violation::NonFinite);
            return ValidationReport { violations };
        }

        if let Some(s) = self.initial.iter().position(|&p| p < 0.0) {
            violations.push(Violation::InitialNegative { state: s, value: self.initial[s] });
        }
        let total: f64 = self.initial.sum();
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            violations.push(Violation::InitialSum { sum: total });
        }

        let mut negative = None;
        let mut row_sum = None;
        'outer: for (t, p) in self.transitions.iter().enumerate() {
            for s in 0..self.num_states {
                for a in 0..self.num_actions {
                    let row = p.slice(ndarray::s![s, a, ..]);
                    if negative.is_none() {
                        if let Some(next) = row.iter().position(|&x| x < 0.0) {
                            negative = Some(Violation::TransitionNegative {
                                step: t,
                                state: s,
                                action: a,
                                next,
                                value: row[next],
                            });
                        }
                    }
                    let sum = row.sum();
                    if row_sum.is_none() && (sum - 1.0).abs() > STOCHASTIC_TOL {
                        row_sum = Some(Violation::TransitionRowSum { step: t, state: s, action: a, sum });
                    }
                    if negative.is_some() && row_sum.is_some() {
                        break 'outer;
                    }
                }
            }
        }
        violations.extend(negative);
        violations.extend(row_sum);

        // Return bounds only make sense once the transitions are sane.
        if violations.is_empty() {
            let ext = return_extremes(self);
            if ext.almost_sure_max > 1.0 + STOCHASTIC_TOL {
                violations.push(Violation::ReturnAboveOne { max: ext.almost_sure_max });
            }
            if ext.almost_sure_min < -STOCHASTIC_TOL {
                violations.push(Violation::ReturnBelowZero { min: ext.almost_sure_min });
            }
        }
        ValidationReport { violations }
    }

    pub fn to_document(&self) -> MdpDocument {
        MdpDocument {
            horizon: self.horizon,
            num_states: self.num_states,
            num_actions: self.num_actions,
            initial_dist: self.initial.to_vec(),
            transitions: self
                .transitions
                .iter()
                .map(|p| {
                    p.outer_iter()
                        .map(|sa| sa.outer_iter().map(|row| row.to_vec()).collect())
                        .collect()
                })
                .collect(),
            rewards: self
                .rewards
                .iter()
                .map(|r| r.outer_iter().map(|row| row.to_vec()).collect())
                .collect(),
            metadata: if self.metadata == MdpMetadata::default() {
                None
            } else {
                Some(self.metadata.clone())
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("MDP documents always serialize")
    }

    /// Parses an MDP document. Shapes are checked; invariants are not.
    pub fn from_json(text: &str) -> Result<Self, MdpError> {
        let doc: MdpDocument = serde_json::from_str(text)?;
        doc.into_mdp()
    }

    /// Loads and validates an MDP document from disk.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, MdpError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| MdpError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)?.validated()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MdpError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| MdpError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// On-disk representation. Transitions are omitted for the final step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpDocument {
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub initial_dist: Vec<f64>,
    /// `transitions[t][s][a][s']` for `t < horizon - 1`.
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    /// `rewards[t][s][a]`.
    pub rewards: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<MdpMetadata>,
}

impl MdpDocument {
    pub fn into_mdp(self) -> Result<TabularMdp, MdpError> {
        let (h, ns, na) = (self.horizon, self.num_states, self.num_actions);
        if h == 0 || ns == 0 {
            return Err(MdpError::Shape("horizon and num_states must be positive".into()));
        }
        check_size(h, ns, na)?;
        if self.initial_dist.len() != ns {
            return Err(MdpError::Shape(format!(
                "initial_dist has {} entries, expected {ns}",
                self.initial_dist.len()
            )));
        }
        if self.rewards.len() != h {
            return Err(MdpError::Shape(format!("expected {h} reward matrices, got {}", self.rewards.len())));
        }
        let mut rewards = Vec::with_capacity(h);
        for (t, r) in self.rewards.iter().enumerate() {
            let mut m = Array2::zeros((ns, na));
            if r.len() != ns || r.iter().any(|row| row.len() != na) {
                return Err(MdpError::Shape(format!("reward matrix at step {t} is not {ns}x{na}")));
            }
            for (s, row) in r.iter().enumerate() {
                for (a, &v) in row.iter().enumerate() {
                    m[[s, a]] = v;
                }
            }
            rewards.push(m);
        }
        let mut transitions = Vec::with_capacity(h.saturating_sub(1));
        if self.transitions.len() != h - 1 {
            return Err(MdpError::Shape(format!(
                "expected {} transition tensors, got {}",
                h - 1,
                self.transitions.len()
            )));
        }
        for (t, p) in self.transitions.iter().enumerate() {
            let mut m = Array3::zeros((ns, na, ns));
            if p.len() != ns
                || p.iter().any(|sa| sa.len() != na || sa.iter().any(|row| row.len() != ns))
            {
                return Err(MdpError::Shape(format!("transition tensor at step {t} is not {ns}x{na}x{ns}")));
            }
            for (s, sa) in p.iter().enumerate() {
                for (a, row) in sa.iter().enumerate() {
                    for (n, &v) in row.iter().enumerate() {
                        m[[s, a, n]] = v;
                    }
                }
            }
            transitions.push(m);
        }
        let mdp = TabularMdp::new(Array1::from(self.initial_dist), transitions, rewards)?;
        Ok(mdp.with_metadata(self.metadata.unwrap_or_default()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonFinite,
    InitialNegative { state: usize, value: f64 },
    InitialSum { sum: f64 },
    TransitionNegative { step: usize, state: usize, action: usize, next: usize, value: f64 },
    TransitionRowSum { step: usize, state: usize, action: usize, sum: f64 },
    ReturnAboveOne { max: f64 },
    ReturnBelowZero { min: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite => write!(f, "non-finite entry in the model"),
            Violation::InitialNegative { state, value } => {
                write!(f, "initial probability of state {state} is negative ({value})")
            }
            Violation::InitialSum { sum } => write!(f, "initial distribution sums to {sum}"),
            Violation::TransitionNegative { step, state, action, next, value } => write!(
                f,
                "p_{step}({next} | {state}, {action}) = {value} is negative"
            ),
            Violation::TransitionRowSum { step, state, action, sum } => {
                write!(f, "transition row (step {step}, state {state}, action {action}) sums to {sum}")
            }
            Violation::ReturnAboveOne { max } => write!(f, "maximum achievable return {max} exceeds 1"),
            Violation::ReturnBelowZero { min } => write!(f, "minimum achievable return {min} is below 0"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Action rule at one timestep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "actions", rename_all = "snake_case")]
pub enum StepRule {
    Deterministic(Vec<usize>),
    UniformRandom,
}

/// A non-stationary Markov policy: one [`StepRule`] per timestep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedPolicy {
    rules: Vec<StepRule>,
}

impl TimedPolicy {
    pub fn uniform(horizon: usize) -> Self {
        Self { rules: vec![StepRule::UniformRandom; horizon] }
    }

    pub fn deterministic(actions: Vec<Vec<usize>>) -> Self {
        Self { rules: actions.into_iter().map(StepRule::Deterministic).collect() }
    }

    pub fn from_rules(rules: Vec<StepRule>) -> Self {
        Self { rules }
    }

    pub fn rules(&self) -> &[StepRule] {
        &self.rules
    }

    pub fn horizon(&self) -> usize {
        self.rules.len()
    }

    /// Checks lengths and action ranges against a model.
    pub fn check(&self, mdp: &TabularMdp) -> Result<(), MdpError> {
        if self.rules.len() != mdp.horizon() {
            return Err(MdpError::Policy(format!(
                "policy covers {} steps, model horizon is {}",
                self.rules.len(),
                mdp.horizon()
            )));
        }
        for (t, rule) in self.rules.iter().enumerate() {
            if let StepRule::Deterministic(acts) = rule {
                if acts.len() != mdp.num_states() {
                    return Err(MdpError::Policy(format!(
                        "step {t} maps {} states, model has {}",
                        acts.len(),
                        mdp.num_states()
                    )));
                }
                if let Some(s) = acts.iter().position(|&a| a >= mdp.num_actions()) {
                    return Err(MdpError::Policy(format!(
                        "step {t} state {s} picks action {} of {}",
                        acts[s],
                        mdp.num_actions()
                    )));
                }
            }
        }
        Ok(())
    }

    /// `pi_t(a | s)`.
    pub fn prob(&self, t: usize, s: usize, a: usize, num_actions: usize) -> f64 {
        match &self.rules[t] {
            StepRule::Deterministic(acts) => f64::from(u8::from(acts[s] == a)),
            StepRule::UniformRandom => 1.0 / num_actions as f64,
        }
    }

    pub fn sample(&self, t: usize, s: usize, num_actions: usize, rng: &mut StreamRng) -> usize {
        match &self.rules[t] {
            StepRule::Deterministic(acts) => acts[s],
            StepRule::UniformRandom => rng.random_range(0..num_actions),
        }
    }

    /// Expected value of `q[t][s, .]` under the policy.
    fn state_value(&self, t: usize, s: usize, q_row: ArrayView1<'_, f64>) -> f64 {
        match &self.rules[t] {
            StepRule::Deterministic(acts) => q_row[acts[s]],
            StepRule::UniformRandom => q_row.mean().unwrap_or(0.0),
        }
    }
}

/// Time-indexed action values, one `(S, A)` matrix per step.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable(Vec<Array2<f64>>);

impl QTable {
    pub fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self(vec![Array2::zeros((num_states, num_actions)); horizon])
    }

    pub fn from_steps(steps: Vec<Array2<f64>>) -> Self {
        Self(steps)
    }

    pub fn horizon(&self) -> usize {
        self.0.len()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        let (s, a) = self.0.first().map(|m| m.dim()).unwrap_or((0, 0));
        (self.0.len(), s, a)
    }

    pub fn step(&self, t: usize) -> &Array2<f64> {
        &self.0[t]
    }

    pub fn step_mut(&mut self, t: usize) -> &mut Array2<f64> {
        &mut self.0[t]
    }

    pub fn get(&self, t: usize, s: usize, a: usize) -> f64 {
        self.0[t][[s, a]]
    }

    pub fn row(&self, t: usize, s: usize) -> ArrayView1<'_, f64> {
        self.0[t].row(s)
    }

    pub fn state_max(&self, t: usize, s: usize) -> f64 {
        self.0[t].row(s).fold(f64::NEG_INFINITY, |m, &x| m.max(x))
    }

    /// `V_t(s) = max_a Q_t(s, a)`.
    pub fn greedy_values(&self) -> VTable {
        VTable(
            self.0
                .iter()
                .map(|q| q.rows().into_iter().map(|r| r.fold(f64::NEG_INFINITY, |m, &x| m.max(x))).collect())
                .collect(),
        )
    }

    pub fn max_abs_diff(&self, other: &QTable) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Time-indexed state values.
#[derive(Debug, Clone, PartialEq)]
pub struct VTable(Vec<Array1<f64>>);

impl VTable {
    pub fn from_steps(steps: Vec<Array1<f64>>) -> Self {
        Self(steps)
    }

    pub fn step(&self, t: usize) -> &Array1<f64> {
        &self.0[t]
    }

    pub fn get(&self, t: usize, s: usize) -> f64 {
        self.0[t][s]
    }

    pub fn horizon(&self) -> usize {
        self.0.len()
    }
}

/// One rollout of exactly `T` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Suffix sums `y_t = sum_{t' >= t} r_{t'}`.
    pub fn reward_to_go(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rewards.len()];
        let mut acc = 0.0;
        for t in (0..self.rewards.len()).rev() {
            acc += self.rewards[t];
            out[t] = acc;
        }
        out
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Episodes collected in one learner iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeBatch {
    pub iteration: usize,
    pub episodes: Vec<Episode>,
}

impl EpisodeBatch {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }
}

/// Draws an index from a probability vector.
pub fn sample_index(probs: ArrayView1<'_, f64>, rng: &mut StreamRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Simulates one episode from the explicit model.
pub fn sample_episode(mdp: &TabularMdp, policy: &TimedPolicy, rng: &mut StreamRng) -> Episode {
    let horizon = mdp.horizon();
    let mut states = Vec::with_capacity(horizon);
    let mut actions = Vec::with_capacity(horizon);
    let mut rewards = Vec::with_capacity(horizon);
    let mut s = sample_index(mdp.initial().view(), rng);
    for t in 0..horizon {
        let a = policy.sample(t, s, mdp.num_actions(), rng);
        states.push(s);
        actions.push(a);
        rewards.push(mdp.reward(t)[[s, a]]);
        if t + 1 < horizon {
            s = sample_index(mdp.successors(t, s, a), rng);
        }
    }
    Episode { states, actions, rewards }
}

/// `Q^pi` by backward induction.
///
/// # Panics
/// If the policy does not fit the model (see [`TimedPolicy::check`]).
pub fn exact_policy_q(mdp: &TabularMdp, policy: &TimedPolicy) -> QTable {
    policy.check(mdp).expect("policy must match the model");
    let (horizon, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut q = QTable::zeros(horizon, ns, na);
    *q.step_mut(horizon - 1) = mdp.reward(horizon - 1).clone();
    for t in (0..horizon - 1).rev() {
        let next_v: Array1<f64> = (0..ns).map(|s| policy.state_value(t + 1, s, q.row(t + 1, s))).collect();
        let p = mdp.transition(t);
        let r = mdp.reward(t);
        let qt = q.step_mut(t);
        for s in 0..ns {
            for a in 0..na {
                qt[[s, a]] = r[[s, a]] + p.slice(ndarray::s![s, a, ..]).dot(&next_v);
            }
        }
    }
    q
}

/// `J(pi) = E_{s ~ p_1} V^pi_1(s)`.
pub fn exact_return(mdp: &TabularMdp, policy: &TimedPolicy) -> f64 {
    let q = exact_policy_q(mdp, policy);
    (0..mdp.num_states())
        .map(|s| mdp.initial()[s] * policy.state_value(0, s, q.row(0, s)))
        .sum()
}

/// Marginal state distribution at every step under a policy.
pub fn state_distribution(mdp: &TabularMdp, policy: &TimedPolicy) -> Vec<Array1<f64>> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut dists = Vec::with_capacity(mdp.horizon());
    dists.push(mdp.initial().clone());
    for t in 0..mdp.horizon() - 1 {
        let mut next = Array1::zeros(ns);
        let cur = &dists[t];
        for s in 0..ns {
            if cur[s] == 0.0 {
                continue;
            }
            for a in 0..na {
                let w = cur[s] * policy.prob(t, s, a, na);
                if w > 0.0 {
                    next.scaled_add(w, &mdp.successors(t, s, a));
                }
            }
        }
        dists.push(next);
    }
    dists
}

/// Extreme returns of a model, under two notions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnExtremes {
    /// Smallest total reward any trajectory with positive probability can earn.
    pub almost_sure_min: f64,
    /// Largest total reward any trajectory with positive probability can earn.
    pub almost_sure_max: f64,
    /// Expected return of the worst deterministic policy.
    pub worst_policy: f64,
    /// Expected return of the best deterministic policy, `J*`.
    pub best_policy: f64,
}

pub fn return_extremes(mdp: &TabularMdp) -> ReturnExtremes {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let horizon = mdp.horizon();
    let mut hi = Array1::<f64>::zeros(ns);
    let mut lo = Array1::<f64>::zeros(ns);
    let mut best = Array1::<f64>::zeros(ns);
    let mut worst = Array1::<f64>::zeros(ns);
    for t in (0..horizon).rev() {
        let r = mdp.reward(t);
        let mut n_hi = Array1::from_elem(ns, f64::NEG_INFINITY);
        let mut n_lo = Array1::from_elem(ns, f64::INFINITY);
        let mut n_best = Array1::from_elem(ns, f64::NEG_INFINITY);
        let mut n_worst = Array1::from_elem(ns, f64::INFINITY);
        for s in 0..ns {
            for a in 0..na {
                let (mut c_hi, mut c_lo, mut c_best, mut c_worst) = (0.0, 0.0, 0.0, 0.0);
                if t + 1 < horizon {
                    let row = mdp.successors(t, s, a);
                    c_hi = f64::NEG_INFINITY;
                    c_lo = f64::INFINITY;
                    for (n, &p) in row.iter().enumerate() {
                        if p > 0.0 {
                            c_hi = c_hi.max(hi[n]);
                            c_lo = c_lo.min(lo[n]);
                        }
                    }
                    if !c_hi.is_finite() {
                        // Row with no support; validation reports it separately.
                        c_hi = 0.0;
                        c_lo = 0.0;
                    }
                    c_best = row.dot(&best);
                    c_worst = row.dot(&worst);
                }
                let x = r[[s, a]];
                n_hi[s] = n_hi[s].max(x + c_hi);
                n_lo[s] = n_lo[s].min(x + c_lo);
                n_best[s] = n_best[s].max(x + c_best);
                n_worst[s] = n_worst[s].min(x + c_worst);
            }
        }
        hi = n_hi;
        lo = n_lo;
        best = n_best;
        worst = n_worst;
    }
    let support = || mdp.initial().iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(s, _)| s);
    ReturnExtremes {
        almost_sure_min: support().map(|s| lo[s]).fold(f64::INFINITY, f64::min),
        almost_sure_max: support().map(|s| hi[s]).fold(f64::NEG_INFINITY, f64::max),
        worst_policy: mdp.initial().dot(&worst),
        best_policy: mdp.initial().dot(&best),
    }
}
