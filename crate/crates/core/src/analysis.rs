//! Ground-truth dynamic programming over an explicit model: the random
//! policy's Q-function, Q-value iteration, k-QVI-solvability, the k-gap and
//! the stochastic effective horizon.

use std::fmt;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{exact_policy_q, return_extremes, QTable, TabularMdp, TimedPolicy};

/// Absolute tolerance for treating two action values as tied.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("k = {k} is outside [1, {horizon}]")]
    KOutOfRange { k: usize, horizon: usize },
    #[error("Q-table shape {got:?} does not match the model {expected:?}")]
    ShapeMismatch { got: (usize, usize, usize), expected: (usize, usize, usize) },
    #[error("threshold {0} is outside (0, 1]")]
    Threshold(f64),
}

fn check_k(mdp: &TabularMdp, k: usize) -> Result<(), AnalysisError> {
    if k == 0 || k > mdp.horizon() {
        return Err(AnalysisError::KOutOfRange { k, horizon: mdp.horizon() });
    }
    Ok(())
}

fn row_max(row: ArrayView1<'_, f64>) -> f64 {
    row.fold(f64::NEG_INFINITY, |m, &x| m.max(x))
}

/// Indices within [`TIE_TOL`] of the row maximum.
pub fn argmax_set(row: ArrayView1<'_, f64>) -> Vec<usize> {
    let best = row_max(row);
    row.iter()
        .enumerate()
        .filter(|(_, &x)| x >= best - TIE_TOL)
        .map(|(a, _)| a)
        .collect()
}

/// One Bellman-optimality backup applied at every step.
pub fn qvi_step(mdp: &TabularMdp, q: &QTable) -> Result<QTable, AnalysisError> {
    let expected = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    if q.shape() != expected {
        return Err(AnalysisError::ShapeMismatch { got: q.shape(), expected });
    }
    let (horizon, ns, na) = expected;
    let mut out = QTable::zeros(horizon, ns, na);
    *out.step_mut(horizon - 1) = mdp.reward(horizon - 1).clone();
    for t in 0..horizon - 1 {
        let next_v: Array1<f64> = (0..ns).map(|s| q.state_max(t + 1, s)).collect();
        let r = mdp.reward(t);
        let qt = out.step_mut(t);
        for s in 0..ns {
            for a in 0..na {
                qt[[s, a]] = r[[s, a]] + mdp.successors(t, s, a).dot(&next_v);
            }
        }
    }
    Ok(out)
}

/// `Q^1`, the uniform-random policy's Q-function.
pub fn random_policy_q(mdp: &TabularMdp) -> QTable {
    exact_policy_q(mdp, &TimedPolicy::uniform(mdp.horizon()))
}

/// `[Q^1, ..., Q^k_max]` with `Q^{i+1} = QVI(Q^i)`.
pub fn q_sequence(mdp: &TabularMdp, k_max: usize) -> Result<Vec<QTable>, AnalysisError> {
    check_k(mdp, k_max)?;
    let mut seq = Vec::with_capacity(k_max);
    seq.push(random_policy_q(mdp));
    while seq.len() < k_max {
        let next = qvi_step(mdp, seq.last().expect("non-empty"))?;
        seq.push(next);
    }
    Ok(seq)
}

/// `Q*` by backward induction.
pub fn optimal_q(mdp: &TabularMdp) -> QTable {
    let (horizon, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut q = QTable::zeros(horizon, ns, na);
    *q.step_mut(horizon - 1) = mdp.reward(horizon - 1).clone();
    for t in (0..horizon - 1).rev() {
        let next_v: Array1<f64> = (0..ns).map(|s| q.state_max(t + 1, s)).collect();
        for s in 0..ns {
            for a in 0..na {
                let v = mdp.reward(t)[[s, a]] + mdp.successors(t, s, a).dot(&next_v);
                q.step_mut(t)[[s, a]] = v;
            }
        }
    }
    q
}

/// `J* = sum_s p_1(s) max_a Q*_1(s, a)`.
pub fn optimal_return(mdp: &TabularMdp) -> f64 {
    let q = optimal_q(mdp);
    (0..mdp.num_states()).map(|s| mdp.initial()[s] * q.state_max(0, s)).sum()
}

/// Which `(t, s)` pairs a solvability verdict quantifies over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolvabilityMode {
    /// Pairs some greedy policy on `Q^k` can visit.
    #[default]
    GreedyReachable,
    /// Every `(t, s)` pair, reachable or not.
    AllStates,
}

/// Which `(t, s)` pairs the k-gap infimum ranges over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapScope {
    #[default]
    AllStates,
    GreedyReachable,
}

/// `reachable[t][s]`: whether `(t, s)` can be visited by some policy that is
/// greedy with respect to `q`.
pub fn greedy_reachable(mdp: &TabularMdp, q: &QTable) -> Vec<Vec<bool>> {
    let (horizon, ns) = (mdp.horizon(), mdp.num_states());
    let mut reach = vec![vec![false; ns]; horizon];
    for (s, &p) in mdp.initial().iter().enumerate() {
        reach[0][s] = p > 0.0;
    }
    for t in 0..horizon - 1 {
        for s in 0..ns {
            if !reach[t][s] {
                continue;
            }
            for a in argmax_set(q.row(t, s)) {
                for (n, &p) in mdp.successors(t, s, a).iter().enumerate() {
                    if p > 0.0 {
                        reach[t + 1][n] = true;
                    }
                }
            }
        }
    }
    reach
}

fn solvable_from(mdp: &TabularMdp, qk: &QTable, qstar: &QTable, mode: SolvabilityMode) -> bool {
    let reach = match mode {
        SolvabilityMode::GreedyReachable => Some(greedy_reachable(mdp, qk)),
        SolvabilityMode::AllStates => None,
    };
    for t in 0..mdp.horizon() {
        for s in 0..mdp.num_states() {
            if reach.as_ref().is_some_and(|r| !r[t][s]) {
                continue;
            }
            let optimal = argmax_set(qstar.row(t, s));
            if argmax_set(qk.row(t, s)).iter().any(|a| !optimal.contains(a)) {
                return false;
            }
        }
    }
    true
}

/// Whether every policy greedy on `Q^k` is optimal.
pub fn is_k_qvi_solvable(mdp: &TabularMdp, k: usize) -> Result<bool, AnalysisError> {
    is_k_qvi_solvable_with(mdp, k, SolvabilityMode::default())
}

pub fn is_k_qvi_solvable_with(mdp: &TabularMdp, k: usize, mode: SolvabilityMode) -> Result<bool, AnalysisError> {
    check_k(mdp, k)?;
    let seq = q_sequence(mdp, k)?;
    Ok(solvable_from(mdp, &seq[k - 1], &optimal_q(mdp), mode))
}

/// The k-gap of a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KGap {
    /// `None` is the `+inf` sentinel: either the model is not k-QVI-solvable
    /// or every in-scope state has all actions tied.
    pub value: Option<f64>,
    pub solvable: bool,
    /// In-scope `(t, s)` pairs skipped because every action is in the argmax.
    pub skipped: usize,
}

fn gap_from(mdp: &TabularMdp, qk: &QTable, scope: GapScope) -> (Option<f64>, usize) {
    let reach = match scope {
        GapScope::GreedyReachable => Some(greedy_reachable(mdp, qk)),
        GapScope::AllStates => None,
    };
    let mut best: Option<f64> = None;
    let mut skipped = 0;
    for t in 0..mdp.horizon() {
        for s in 0..mdp.num_states() {
            if reach.as_ref().is_some_and(|r| !r[t][s]) {
                continue;
            }
            let row = qk.row(t, s);
            let top = row_max(row);
            let runner_up = row
                .iter()
                .filter(|&&x| x < top - TIE_TOL)
                .fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            if runner_up == f64::NEG_INFINITY {
                skipped += 1;
                continue;
            }
            let gap = top - runner_up;
            best = Some(best.map_or(gap, |b| b.min(gap)));
        }
    }
    (best, skipped)
}

/// `Delta_k`, computed only when the model is k-QVI-solvable (greedy-reachable
/// verdict).
pub fn k_gap(mdp: &TabularMdp, k: usize, scope: GapScope) -> Result<KGap, AnalysisError> {
    check_k(mdp, k)?;
    let seq = q_sequence(mdp, k)?;
    let qk = &seq[k - 1];
    if !solvable_from(mdp, qk, &optimal_q(mdp), SolvabilityMode::default()) {
        return Ok(KGap { value: None, solvable: false, skipped: 0 });
    }
    let (value, skipped) = gap_from(mdp, qk, scope);
    Ok(KGap { value, solvable: true, skipped })
}

/// `H_k = k + log_A(1 / Delta_k^2)`, with gaps of at least 1 (including the
/// all-tied sentinel) clamped so that `H_k = k`. Returns `(H_k, clamped)`,
/// where `clamped` is true only for finite gaps strictly above 1.
pub fn horizon_term(k: usize, gap: Option<f64>, num_actions: usize) -> (f64, bool) {
    match gap {
        Some(d) if d < 1.0 => (k as f64 + (1.0 / (d * d)).ln() / (num_actions as f64).ln(), false),
        Some(d) => (k as f64, d > 1.0),
        None => (k as f64, false),
    }
}

/// Expected return of the worst policy that is greedy on `q`, choosing among
/// tied maximizers the one with the lowest continuation value.
pub fn pessimal_greedy_return(mdp: &TabularMdp, q: &QTable) -> f64 {
    let (horizon, ns) = (mdp.horizon(), mdp.num_states());
    let mut v = Array1::<f64>::zeros(ns);
    for t in (0..horizon).rev() {
        let mut next = Array1::zeros(ns);
        for s in 0..ns {
            next[s] = argmax_set(q.row(t, s))
                .into_iter()
                .map(|a| {
                    let cont = if t + 1 < horizon { mdp.successors(t, s, a).dot(&v) } else { 0.0 };
                    mdp.reward(t)[[s, a]] + cont
                })
                .fold(f64::INFINITY, f64::min);
        }
        v = next;
    }
    mdp.initial().dot(&v)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub solvability: SolvabilityMode,
    pub gap_scope: GapScope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonEntry {
    pub k: usize,
    pub qvi_solvable: bool,
    pub approx_solvable: bool,
    /// Return of the pessimal greedy policy on `Q^k`.
    pub greedy_return: f64,
    /// `None` encodes `+inf` (not solvable, or every in-scope state tied).
    pub gap: Option<f64>,
    pub gap_skipped_states: usize,
    /// `None` encodes `+inf`.
    pub hbar: Option<f64>,
    /// Set when a gap above 1 was clamped to 1.
    pub gap_clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub model: String,
    pub num_actions: usize,
    pub entries: Vec<HorizonEntry>,
    pub min_exact_k: Option<usize>,
    pub min_approx_k: Option<usize>,
    /// Stochastic effective horizon `min_k H_k`; `None` if no k qualifies.
    pub hbar: Option<f64>,
    pub optimal_return: f64,
    pub worst_return: f64,
    pub threshold: f64,
    pub options: AnalysisOptions,
}

/// Full per-k analysis with default options.
pub fn effective_horizon(mdp: &TabularMdp, k_max: usize, threshold: f64) -> Result<HorizonReport, AnalysisError> {
    effective_horizon_with(mdp, k_max, threshold, AnalysisOptions::default())
}

pub fn effective_horizon_with(
    mdp: &TabularMdp,
    k_max: usize,
    threshold: f64,
    options: AnalysisOptions,
) -> Result<HorizonReport, AnalysisError> {
    check_k(mdp, k_max)?;
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(AnalysisError::Threshold(threshold));
    }
    let seq = q_sequence(mdp, k_max)?;
    let qstar = optimal_q(mdp);
    let ext = return_extremes(mdp);
    let (worst, best) = (ext.worst_policy, ext.best_policy);
    let target = worst + threshold * (best - worst);

    let mut entries = Vec::with_capacity(k_max);
    for (i, qk) in seq.iter().enumerate() {
        let k = i + 1;
        let qvi_solvable = solvable_from(mdp, qk, &qstar, options.solvability);
        let greedy_return = pessimal_greedy_return(mdp, qk);
        let approx_solvable = greedy_return >= target - TIE_TOL;
        let (gap, skipped) = if qvi_solvable { gap_from(mdp, qk, options.gap_scope) } else { (None, 0) };
        let (hbar, gap_clamped) = if qvi_solvable {
            let (h, clamped) = horizon_term(k, gap, mdp.num_actions());
            (Some(h), clamped)
        } else {
            (None, false)
        };
        entries.push(HorizonEntry {
            k,
            qvi_solvable,
            approx_solvable,
            greedy_return,
            gap,
            gap_skipped_states: skipped,
            hbar,
            gap_clamped,
        });
    }
    let min_exact_k = entries.iter().find(|e| e.qvi_solvable).map(|e| e.k);
    let min_approx_k = entries.iter().find(|e| e.approx_solvable).map(|e| e.k);
    let hbar = entries.iter().filter_map(|e| e.hbar).reduce(f64::min);
    Ok(HorizonReport {
        model: mdp.name().to_string(),
        num_actions: mdp.num_actions(),
        entries,
        min_exact_k,
        min_approx_k,
        hbar,
        optimal_return: best,
        worst_return: worst,
        threshold,
        options,
    })
}

fn fmt_opt(x: Option<f64>, prec: usize) -> String {
    x.map_or_else(|| "inf".to_string(), |v| format!("{v:.prec$}"))
}

impl fmt::Display for HorizonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model: {}  J* = {:.6}  J_min = {:.6}  threshold = {}", self.model, self.optimal_return, self.worst_return, self.threshold)?;
        writeln!(f, "{:>3} {:>9} {:>7} {:>12} {:>12} {:>10}", "k", "solvable", "approx", "greedy J", "gap", "H_k")?;
        for e in &self.entries {
            writeln!(
                f,
                "{:>3} {:>9} {:>7} {:>12.6} {:>12} {:>10}{}",
                e.k,
                e.qvi_solvable,
                e.approx_solvable,
                e.greedy_return,
                fmt_opt(e.gap, 6),
                fmt_opt(e.hbar, 4),
                if e.gap_clamped { "  (gap > 1 clamped)" } else { "" }
            )?;
        }
        let k = |x: Option<usize>| x.map_or_else(|| "none".to_string(), |k| k.to_string());
        write!(
            f,
            "min exact k: {}  min approx k: {}  H = {}",
            k(self.min_exact_k),
            k(self.min_approx_k),
            fmt_opt(self.hbar, 4)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{reference_two_step, reference_two_step_solvable, two_step};
    use ndarray::array;

    #[test]
    fn qvi_last_step_is_reward() {
        let mdp = reference_two_step();
        let q = QTable::zeros(2, 3, 2);
        let out = qvi_step(&mdp, &q).unwrap();
        assert_eq!(out.step(1), mdp.reward(1));
        let bad = QTable::zeros(2, 4, 2);
        assert!(matches!(qvi_step(&mdp, &bad), Err(AnalysisError::ShapeMismatch { .. })));
    }

    #[test]
    fn reference_q_sequence() {
        let mdp = reference_two_step();
        let seq = q_sequence(&mdp, 2).unwrap();
        assert!((seq[0].get(0, 0, 0) - 0.4).abs() < 1e-12);
        assert!((seq[0].get(0, 0, 1) - 0.5).abs() < 1e-12);
        assert!((seq[1].get(0, 0, 0) - 0.8).abs() < 1e-12);
        assert!((seq[1].get(0, 0, 1) - 0.6).abs() < 1e-12);
        assert!(seq[1].max_abs_diff(&optimal_q(&mdp)) < 1e-12);
        assert!((optimal_return(&mdp) - 0.8).abs() < 1e-12);
        assert!((pessimal_greedy_return(&mdp, &seq[0]) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn balanced_two_step_values() {
        // sA pays [0.8, 0.2], sB pays [0.1, 0.4].
        let mdp = two_step([0.8, 0.2], [0.1, 0.4]);
        let seq = q_sequence(&mdp, 2).unwrap();
        assert!((seq[0].get(0, 0, 0) - 0.5).abs() < 1e-12);
        assert!((seq[0].get(0, 0, 1) - 0.25).abs() < 1e-12);
        assert!((seq[1].get(0, 0, 0) - 0.8).abs() < 1e-12);
        assert!((seq[1].get(0, 0, 1) - 0.4).abs() < 1e-12);
        let ext = return_extremes(&mdp);
        assert!((ext.best_policy - 0.8).abs() < 1e-12);
        assert!((ext.worst_policy - 0.1).abs() < 1e-12);
        // Greedy on Q^1 already goes to sA.
        assert!(is_k_qvi_solvable(&mdp, 1).unwrap());
        let gap = k_gap(&mdp, 2, GapScope::AllStates).unwrap();
        assert!((gap.value.unwrap() - 0.3).abs() < 1e-12);
        assert!((k_gap(&mdp, 1, GapScope::AllStates).unwrap().value.unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn reference_solvability_and_gap() {
        let mdp = reference_two_step();
        assert!(!is_k_qvi_solvable(&mdp, 1).unwrap());
        assert!(is_k_qvi_solvable(&mdp, 2).unwrap());
        let gap = k_gap(&mdp, 2, GapScope::AllStates).unwrap();
        assert!(gap.solvable);
        assert!((gap.value.unwrap() - 0.2).abs() < 1e-12);
        let not = k_gap(&mdp, 1, GapScope::AllStates).unwrap();
        assert_eq!((not.value, not.solvable), (None, false));
        assert_eq!(k_gap(&mdp, 3, GapScope::AllStates), Err(AnalysisError::KOutOfRange { k: 3, horizon: 2 }));
    }

    #[test]
    fn reference_effective_horizon() {
        let report = effective_horizon(&reference_two_step(), 2, 0.95).unwrap();
        assert_eq!(report.min_exact_k, Some(2));
        let expected = 2.0 + (1.0f64 / 0.04).log2();
        assert!((report.hbar.unwrap() - expected).abs() < 1e-12);
        assert!((report.hbar.unwrap() - 6.644).abs() < 1e-3);
        assert!(!report.entries[0].approx_solvable);

        let report = effective_horizon(&reference_two_step_solvable(), 2, 0.95).unwrap();
        assert_eq!(report.min_exact_k, Some(1));
        assert!((report.entries[0].gap.unwrap() - 0.1).abs() < 1e-12);
        assert!((report.entries[0].hbar.unwrap() - 7.644).abs() < 1e-3);
    }

    #[test]
    fn dominated_action_gap() {
        // Action 1 beats action 0 by exactly 0.2 at every state and step.
        let mut p = ndarray::Array3::zeros((2, 2, 2));
        for s in 0..2 {
            for a in 0..2 {
                p[[s, a, 0]] = 0.5;
                p[[s, a, 1]] = 0.5;
            }
        }
        let r = array![[0.0, 0.2], [0.1, 0.3]];
        let mdp = TabularMdp::new(array![0.5, 0.5], vec![p], vec![r.clone() * 0.5, r * 0.5]).unwrap();
        // Scaled rewards give per-step advantage 0.1; with one continuation
        // step Q^1 still differs by exactly 0.1 per step.
        let gap = k_gap(&mdp, 1, GapScope::AllStates).unwrap();
        assert!((gap.value.unwrap() - 0.1).abs() < 1e-12);

        let r = array![[0.0, 0.2], [0.3, 0.5]];
        let mdp = TabularMdp::new(array![0.5, 0.5], vec![], vec![r]).unwrap();
        let gap = k_gap(&mdp, 1, GapScope::AllStates).unwrap();
        assert!((gap.value.unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn all_tied_gap_is_sentinel() {
        let mdp = TabularMdp::new(array![1.0], vec![], vec![array![[0.4, 0.4]]]).unwrap();
        let gap = k_gap(&mdp, 1, GapScope::AllStates).unwrap();
        assert_eq!(gap.value, None);
        assert!(gap.solvable);
        let report = effective_horizon(&mdp, 1, 0.95).unwrap();
        assert_eq!(report.hbar, Some(1.0));
    }

    #[test]
    fn unit_gap_gives_h_equal_k() {
        let mdp = TabularMdp::new(array![1.0], vec![], vec![array![[0.0, 1.0]]]).unwrap();
        let report = effective_horizon(&mdp, 1, 0.95).unwrap();
        assert_eq!(report.hbar, Some(1.0));
        assert!(!report.entries[0].gap_clamped);
    }

    #[test]
    fn clamping_flags_gaps_above_one() {
        assert_eq!(horizon_term(3, Some(1.5), 2), (3.0, true));
        assert_eq!(horizon_term(3, None, 2), (3.0, false));
        let (h, _) = horizon_term(1, Some(0.1), 10);
        assert!((h - 3.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_is_checked() {
        let mdp = reference_two_step();
        assert_eq!(effective_horizon(&mdp, 2, 0.0), Err(AnalysisError::Threshold(0.0)));
        assert!(effective_horizon(&mdp, 2, 1.0).is_ok());
    }
}
