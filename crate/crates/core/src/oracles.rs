//! Regression oracles: procedures that turn `(state, action, target)` samples
//! into a bounded Q-estimate, plus an empirical check of how their error
//! shrinks with sample size and propagates through fitted Q-iteration.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{qvi_step, random_policy_q};
use crate::mdp::{sample_episode, state_distribution, EpisodeBatch, QTable, TabularMdp, TimedPolicy};
use crate::rng::{domain, RngStreams};

const TARGET_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("sample ({state}, {action}) is outside {num_states} states x {num_actions} actions")]
    OutOfRange { state: usize, action: usize, num_states: usize, num_actions: usize },
    #[error("target {0} is outside [0, 1]")]
    Target(f64),
    #[error("timestep {t} has no successor in a horizon-{horizon} episode")]
    NoSuccessor { t: usize, horizon: usize },
    #[error("feature map error: {0}")]
    Features(String),
    #[error("sample sizes must be non-empty and strictly increasing")]
    Sizes,
    #[error("invalid compliance setup: {0}")]
    Setup(String),
}

/// One labelled training example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub state: usize,
    pub action: usize,
    pub target: f64,
    /// Successor state, for bootstrapped targets.
    pub next_state: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionDataset {
    pub timestep: usize,
    num_states: usize,
    num_actions: usize,
    records: Vec<Sample>,
}

impl RegressionDataset {
    pub fn new(timestep: usize, num_states: usize, num_actions: usize) -> Self {
        Self { timestep, num_states, num_actions, records: Vec::new() }
    }

    pub fn push(&mut self, sample: Sample) -> Result<(), OracleError> {
        if sample.state >= self.num_states || sample.action >= self.num_actions {
            return Err(OracleError::OutOfRange {
                state: sample.state,
                action: sample.action,
                num_states: self.num_states,
                num_actions: self.num_actions,
            });
        }
        if !(sample.target >= -TARGET_TOL && sample.target <= 1.0 + TARGET_TOL) {
            return Err(OracleError::Target(sample.target));
        }
        self.records.push(sample);
        Ok(())
    }

    pub fn records(&self) -> &[Sample] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
}

/// Warnings raised while fitting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitFlags {
    pub empty_dataset: bool,
    /// The normal equations were singular and a pseudo-inverse was used.
    pub pseudo_inverse: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Table(Array2<f64>),
    Linear { weights: Vec<f64>, features: Arc<FeatureMap> },
}

/// A fitted `Q: S x A -> [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QEstimate {
    repr: Repr,
    num_states: usize,
    num_actions: usize,
    pub flags: FitFlags,
}

impl QEstimate {
    /// Estimate backed by an explicit table; entries are clipped on read.
    pub fn from_table(values: Array2<f64>) -> Self {
        let (num_states, num_actions) = values.dim();
        Self { repr: Repr::Table(values), num_states, num_actions, flags: FitFlags::default() }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn value(&self, s: usize, a: usize) -> f64 {
        let raw = match &self.repr {
            Repr::Table(v) => v[[s, a]],
            Repr::Linear { weights, features } => features.dot(s, a, weights),
        };
        raw.clamp(0.0, 1.0)
    }

    pub fn state_values(&self, s: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_actions).map(move |a| self.value(s, a))
    }

    /// `V(s) = max_a Q(s, a)`.
    pub fn state_max(&self, s: usize) -> f64 {
        self.state_values(s).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_table(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.num_states, self.num_actions), |(s, a)| self.value(s, a))
    }

    /// Linear weights, if this is a linear estimate.
    pub fn weights(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Linear { weights, .. } => Some(weights),
            Repr::Table(_) => None,
        }
    }
}

/// Interface every regression oracle implements.
pub trait Regressor: Send + Sync {
    fn name(&self) -> String;
    fn fit(&self, data: &RegressionDataset) -> Result<QEstimate, OracleError>;
}

/// Per-cell sample mean; the least-squares minimizer over all tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TabularMean {
    /// Value reported for cells with no data.
    pub unseen: f64,
}

impl Default for TabularMean {
    fn default() -> Self {
        Self { unseen: 0.0 }
    }
}

impl Regressor for TabularMean {
    fn name(&self) -> String {
        "tabular".into()
    }

    fn fit(&self, data: &RegressionDataset) -> Result<QEstimate, OracleError> {
        let (ns, na) = (data.num_states(), data.num_actions());
        let mut sums = Array2::<f64>::zeros((ns, na));
        let mut counts = Array2::<u64>::zeros((ns, na));
        for r in data.records() {
            sums[[r.state, r.action]] += r.target;
            counts[[r.state, r.action]] += 1;
        }
        let values = Array2::from_shape_fn((ns, na), |(s, a)| match counts[[s, a]] {
            0 => self.unseen,
            n => sums[[s, a]] / n as f64,
        });
        let mut est = QEstimate::from_table(values);
        est.flags.empty_dataset = data.is_empty();
        Ok(est)
    }
}

/// Convenience wrapper: [`TabularMean`] with the zero default.
pub fn tabular_mean_regress(data: &RegressionDataset) -> QEstimate {
    TabularMean::default().fit(data).expect("tabular fitting cannot fail")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureKind {
    /// Indicator of the `(s, a)` pair, `d = S * A`. Also accepted as
    /// `state-x-action`, since the outer product of a state indicator and an
    /// action indicator is the same vector.
    #[serde(alias = "state-x-action")]
    OneHot,
    /// State indicator concatenated with action indicator, `d = S + A`.
    Additive,
    /// Explicit vectors `phi[s][a]`.
    Custom { vectors: Vec<Vec<Vec<f64>>> },
}

/// Feature map `phi: S x A -> R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    num_states: usize,
    num_actions: usize,
    dim: usize,
    kind: FeatureKind,
    dense: Option<Array3<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FeatureDocument {
    num_states: usize,
    num_actions: usize,
    #[serde(flatten)]
    kind: FeatureKind,
}

impl FeatureMap {
    pub fn new(kind: FeatureKind, num_states: usize, num_actions: usize) -> Result<Self, OracleError> {
        let (dim, dense) = match &kind {
            FeatureKind::OneHot => (num_states * num_actions, None),
            FeatureKind::Additive => (num_states + num_actions, None),
            FeatureKind::Custom { vectors } => {
                let dim = vectors.first().and_then(|r| r.first()).map_or(0, |v| v.len());
                if dim == 0
                    || vectors.len() != num_states
                    || vectors.iter().any(|row| row.len() != num_actions || row.iter().any(|v| v.len() != dim))
                {
                    return Err(OracleError::Features(format!(
                        "custom features must be a non-empty {num_states} x {num_actions} x d array"
                    )));
                }
                if vectors.iter().flatten().flatten().any(|x| !x.is_finite()) {
                    return Err(OracleError::Features("custom features must be finite".into()));
                }
                let dense = Array3::from_shape_fn((num_states, num_actions, dim), |(s, a, i)| vectors[s][a][i]);
                (dim, Some(dense))
            }
        };
        Ok(Self { num_states, num_actions, dim, kind, dense })
    }

    pub fn one_hot(num_states: usize, num_actions: usize) -> Self {
        Self::new(FeatureKind::OneHot, num_states, num_actions).expect("one-hot features are always valid")
    }

    /// Reads `{"num_states", "num_actions", "kind", ...}`.
    pub fn from_json(text: &str) -> Result<Self, OracleError> {
        let doc: FeatureDocument =
            serde_json::from_str(text).map_err(|e| OracleError::Features(e.to_string()))?;
        Self::new(doc.kind, doc.num_states, doc.num_actions)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OracleError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| OracleError::Features(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &FeatureKind {
        &self.kind
    }

    pub fn fill(&self, s: usize, a: usize, out: &mut [f64]) {
        out.fill(0.0);
        match &self.kind {
            FeatureKind::OneHot => out[s * self.num_actions + a] = 1.0,
            FeatureKind::Additive => {
                out[s] = 1.0;
                out[self.num_states + a] = 1.0;
            }
            FeatureKind::Custom { .. } => {
                let dense = self.dense.as_ref().expect("custom features are densified");
                for (o, &x) in out.iter_mut().zip(dense.slice(ndarray::s![s, a, ..]).iter()) {
                    *o = x;
                }
            }
        }
    }

    fn dot(&self, s: usize, a: usize, w: &[f64]) -> f64 {
        match &self.kind {
            FeatureKind::OneHot => w[s * self.num_actions + a],
            FeatureKind::Additive => w[s] + w[self.num_states + a],
            FeatureKind::Custom { .. } => {
                let dense = self.dense.as_ref().expect("custom features are densified");
                dense.slice(ndarray::s![s, a, ..]).iter().zip(w).map(|(x, y)| x * y).sum()
            }
        }
    }
}

/// Linear least squares, `Q(s, a) = w . phi(s, a)`, with optional ridge.
#[derive(Debug, Clone)]
pub struct LinearLsq {
    pub features: Arc<FeatureMap>,
    pub ridge: f64,
}

/// Default ridge penalty.
pub const DEFAULT_RIDGE: f64 = 1e-6;

impl LinearLsq {
    pub fn new(features: FeatureMap, ridge: f64) -> Self {
        Self { features: Arc::new(features), ridge }
    }
}

impl Regressor for LinearLsq {
    fn name(&self) -> String {
        format!("linear(d={}, ridge={})", self.features.dim(), self.ridge)
    }

    fn fit(&self, data: &RegressionDataset) -> Result<QEstimate, OracleError> {
        linear_lsq_regress(data, &self.features, self.ridge)
    }
}

/// Solves `(X'X + ridge I) w = X'y` by Cholesky, falling back to the
/// minimum-norm pseudo-inverse solution when the system is singular.
pub fn linear_lsq_regress(
    data: &RegressionDataset,
    features: &Arc<FeatureMap>,
    ridge: f64,
) -> Result<QEstimate, OracleError> {
    if features.num_states != data.num_states() || features.num_actions != data.num_actions() {
        return Err(OracleError::Features(format!(
            "feature map covers {} x {}, data has {} x {}",
            features.num_states,
            features.num_actions,
            data.num_states(),
            data.num_actions()
        )));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(OracleError::Features(format!("ridge penalty {ridge} must be a nonnegative number")));
    }
    let d = features.dim();
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    let mut phi = vec![0.0; d];
    for r in data.records() {
        features.fill(r.state, r.action, &mut phi);
        let nz: Vec<usize> = (0..d).filter(|&i| phi[i] != 0.0).collect();
        for &i in &nz {
            rhs[i] += phi[i] * r.target;
            for &j in &nz {
                gram[(i, j)] += phi[i] * phi[j];
            }
        }
    }
    for i in 0..d {
        gram[(i, i)] += ridge;
    }
    let mut flags = FitFlags { empty_dataset: data.is_empty(), pseudo_inverse: false };
    let weights = match gram.clone().cholesky() {
        Some(chol) if ridge > 0.0 || min_pivot_ok(&chol) => chol.solve(&rhs),
        _ => {
            flags.pseudo_inverse = true;
            let svd = gram.svd(true, true);
            let tol = 1e-10 * svd.singular_values.max().max(1.0);
            svd.solve(&rhs, tol).map_err(|e| OracleError::Features(e.to_string()))?
        }
    };
    Ok(QEstimate {
        repr: Repr::Linear { weights: weights.iter().copied().collect(), features: Arc::clone(features) },
        num_states: data.num_states(),
        num_actions: data.num_actions(),
        flags,
    })
}

// An unpenalized Gram matrix can pass Cholesky with a rounding-level pivot;
// treat that as singular.
fn min_pivot_ok(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> bool {
    let l = chol.l_dirty();
    let diag_max = (0..l.nrows()).map(|i| l[(i, i)]).fold(0.0, f64::max);
    (0..l.nrows()).all(|i| l[(i, i)] > 1e-7 * diag_max.max(1.0))
}

/// Monte Carlo targets: reward-to-go from step `t`, clipped to `[0, 1]`.
pub fn monte_carlo_targets(
    batch: &EpisodeBatch,
    t: usize,
    num_states: usize,
    num_actions: usize,
) -> Result<RegressionDataset, OracleError> {
    let mut data = RegressionDataset::new(t, num_states, num_actions);
    for ep in &batch.episodes {
        let y: f64 = ep.rewards[t..].iter().sum();
        data.push(Sample { state: ep.states[t], action: ep.actions[t], target: y.clamp(0.0, 1.0), next_state: None })?;
    }
    Ok(data)
}

/// Bootstrapped targets `R_t + max_a next_q(s_{t+1}, a)`, clipped to `[0, 1]`.
pub fn fqi_targets(batch: &EpisodeBatch, t: usize, next_q: &QEstimate) -> Result<RegressionDataset, OracleError> {
    let mut data = RegressionDataset::new(t, next_q.num_states(), next_q.num_actions());
    for ep in &batch.episodes {
        if t + 1 >= ep.len() {
            return Err(OracleError::NoSuccessor { t, horizon: ep.len() });
        }
        let next = ep.states[t + 1];
        let y = ep.rewards[t] + next_q.state_max(next);
        data.push(Sample { state: ep.states[t], action: ep.actions[t], target: y.clamp(0.0, 1.0), next_state: Some(next) })?;
    }
    Ok(data)
}

/// `E_{s ~ dist, a ~ U(A)}[(qhat(s, a) - q[s, a])^2]`.
pub fn in_distribution_q_mse(qhat: &QEstimate, q: &Array2<f64>, dist: &[f64]) -> f64 {
    let na = q.ncols() as f64;
    dist.iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(s, &p)| p * (0..q.ncols()).map(|a| (qhat.value(s, a) - q[[s, a]]).powi(2)).sum::<f64>() / na)
        .sum()
}

/// `E_{s ~ dist}[(max_a qhat(s, .) - max_a q(s, .))^2]`.
pub fn value_mse(qhat: &Array2<f64>, q: &Array2<f64>, dist: &[f64]) -> f64 {
    let vmax = |m: &Array2<f64>, s: usize| m.row(s).fold(f64::NEG_INFINITY, |x, &y| x.max(y));
    dist.iter()
        .enumerate()
        .map(|(s, &p)| p * (vmax(qhat, s) - vmax(q, s)).powi(2))
        .sum()
}

fn ols_line(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePoint {
    pub m: usize,
    pub median_mse: f64,
    pub mses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPoint {
    pub epsilon: f64,
    pub trial: usize,
    /// RMS error of the perturbed successor values.
    pub value_rms: f64,
    /// RMS error of the regressed Q against the unperturbed backup.
    pub q_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FqiFit {
    pub m: usize,
    pub alpha: f64,
    pub intercept: f64,
    /// `intercept^2 * m / ln m`.
    pub c_g: f64,
    pub perturbation_family: String,
    pub points: Vec<PerturbationPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub oracle: String,
    pub timestep: usize,
    pub sizes: Vec<SizePoint>,
    /// Least-squares slope of `ln(median MSE)` against `ln m`.
    pub slope: Option<f64>,
    /// Largest `median MSE * m / ln m` over the sizes.
    pub c_f: f64,
    /// Present when step `t` has a successor.
    pub fqi: Option<FqiFit>,
}

/// Perturbation scales for the FQI condition check.
pub const PERTURBATION_GRID: [f64; 5] = [0.0, 0.025, 0.05, 0.1, 0.2];

/// Empirical check of the regression and FQI oracle conditions at step `t`.
///
/// Data come from uniformly random rollouts, so `E[y | s_t, a_t] = Q^1_t`.
/// For each size `m`, `trials` datasets are drawn and the in-distribution MSE
/// against the exact `Q^1_t` is measured; the report carries the median per
/// size and a log-log slope. For the FQI condition, successor values
/// `V = max_a Q^1_{t+1}` are perturbed by `+-eps` (a random sign per state,
/// clipped to `[0, 1]`), the oracle is fit on `R_t + Vhat(s')` at the largest
/// `m`, and `RMS(Qhat - QVI(Q^1)_t) = alpha * RMS(Vhat - V) + c` is fit by
/// least squares.
pub fn compliance_check(
    oracle: &dyn Regressor,
    mdp: &TabularMdp,
    t: usize,
    sizes: &[usize],
    trials: usize,
    seed: u64,
) -> Result<ComplianceReport, OracleError> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] == 0 {
        return Err(OracleError::Sizes);
    }
    if t >= mdp.horizon() || trials == 0 {
        return Err(OracleError::Setup(format!("timestep {t} / trials {trials} out of range")));
    }
    let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let random = TimedPolicy::uniform(horizon);
    let q1 = random_policy_q(mdp);
    let dists = state_distribution(mdp, &random);
    let dist_t = dists[t].to_vec();
    let streams = RngStreams::new(seed).fork(domain::COMPLIANCE);

    let draw = |m: usize, label: u64| -> EpisodeBatch {
        let s = streams.fork(label);
        EpisodeBatch {
            iteration: t,
            episodes: (0..m as u64).map(|j| sample_episode(mdp, &random, &mut s.stream(j))).collect(),
        }
    };

    let mut points = Vec::with_capacity(sizes.len());
    for &m in sizes {
        let mses: Result<Vec<f64>, OracleError> = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let batch = draw(m, ((m as u64) << 20) | trial as u64);
                let data = monte_carlo_targets(&batch, t, ns, na)?;
                let fit = oracle.fit(&data)?;
                Ok(in_distribution_q_mse(&fit, q1.step(t), &dist_t))
            })
            .collect();
        let mses = mses?;
        let median_mse = median(&mut mses.clone());
        points.push(SizePoint { m, median_mse, mses });
    }
    let slope = if points.iter().all(|p| p.median_mse > 0.0) {
        let xs: Vec<f64> = points.iter().map(|p| (p.m as f64).ln()).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.median_mse.ln()).collect();
        ols_line(&xs, &ys).map(|(s, _)| s)
    } else {
        None
    };
    let c_f = points
        .iter()
        .map(|p| p.median_mse * p.m as f64 / (p.m as f64).ln().max(1.0))
        .fold(0.0, f64::max);

    let fqi = if t + 1 < horizon {
        Some(fqi_fit(oracle, mdp, t, *sizes.last().expect("non-empty"), trials, &q1, &dists, &draw)?)
    } else {
        None
    };
    Ok(ComplianceReport { oracle: oracle.name(), timestep: t, sizes: points, slope, c_f, fqi })
}

#[allow(clippy::too_many_arguments)]
fn fqi_fit(
    oracle: &dyn Regressor,
    mdp: &TabularMdp,
    t: usize,
    m: usize,
    trials: usize,
    q1: &QTable,
    dists: &[ndarray::Array1<f64>],
    draw: &(dyn Fn(usize, u64) -> EpisodeBatch + Sync),
) -> Result<FqiFit, OracleError> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let v_next: Vec<f64> = (0..ns).map(|s| q1.state_max(t + 1, s)).collect();
    let backup = qvi_step(mdp, q1).map_err(|e| OracleError::Setup(e.to_string()))?;
    let target_q = backup.step(t);
    let (dist_t, dist_next) = (dists[t].to_vec(), dists[t + 1].to_vec());

    let jobs: Vec<(f64, usize)> =
        PERTURBATION_GRID.iter().flat_map(|&eps| (0..trials).map(move |trial| (eps, trial))).collect();
    let points: Result<Vec<PerturbationPoint>, OracleError> = jobs
        .into_par_iter()
        .map(|(eps, trial)| {
            let batch = draw(m, (1u64 << 62) | trial as u64);
            let mut sign_rng = RngStreams::new(trial as u64).fork(domain::COMPLIANCE).stream(1);
            let vhat: Vec<f64> = v_next
                .iter()
                .map(|&v| {
                    let sign = if sign_rng.random::<bool>() { 1.0 } else { -1.0 };
                    (v + sign * eps).clamp(0.0, 1.0)
                })
                .collect();
            let value_rms = dist_next
                .iter()
                .zip(vhat.iter().zip(&v_next))
                .map(|(p, (a, b))| p * (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let mut data = RegressionDataset::new(t, ns, na);
            for ep in &batch.episodes {
                let next = ep.states[t + 1];
                let y = (ep.rewards[t] + vhat[next]).clamp(0.0, 1.0);
                data.push(Sample { state: ep.states[t], action: ep.actions[t], target: y, next_state: Some(next) })?;
            }
            let fit = oracle.fit(&data)?;
            let q_rms = in_distribution_q_mse(&fit, target_q, &dist_t).sqrt();
            Ok(PerturbationPoint { epsilon: eps, trial, value_rms, q_rms })
        })
        .collect();
    let points = points?;
    let xs: Vec<f64> = points.iter().map(|p| p.value_rms).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.q_rms).collect();
    let (alpha, intercept) = ols_line(&xs, &ys).unwrap_or((0.0, ys.iter().sum::<f64>() / ys.len() as f64));
    Ok(FqiFit {
        m,
        alpha,
        intercept,
        c_g: intercept.powi(2) * m as f64 / (m as f64).ln().max(1.0),
        perturbation_family: "Vhat(s') = clip(V(s') + eps * sign(s'), 0, 1), one random sign per state and trial".into(),
        points,
    })
}
