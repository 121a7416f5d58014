use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

use super::{run_experiment_with_mdp, ExperimentSpec, RunRecord};

/// Search bounds and success rule for [`tune_m`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub m_lo: usize,
    pub m_hi: usize,
    /// Fraction of seeds that must solve.
    pub threshold: f64,
}

impl TuneConfig {
    fn validate(&self) -> Result<()> {
        if self.m_lo == 0 || self.m_hi < self.m_lo {
            return Err(Error::Config(format!("invalid m bounds [{}, {}]", self.m_lo, self.m_hi)));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Config(format!("success threshold {} must lie in (0, 1]", self.threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub m: usize,
    pub solved_seeds: usize,
    pub total_seeds: usize,
    pub success: bool,
    pub records: Vec<RunRecord>,
}

impl Probe {
    /// Median sample complexity over solving seeds.
    pub fn median_sample_complexity(&self) -> Option<f64> {
        let mut v: Vec<u64> = self.records.iter().filter_map(|r| r.sample_complexity).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_unstable();
        let n = v.len();
        Some(if n % 2 == 1 { v[n / 2] as f64 } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) as f64 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub k: usize,
    pub config: TuneConfig,
    /// Smallest probed m meeting the success rule.
    pub m_star: Option<usize>,
    /// Probes in the order they ran.
    pub probes: Vec<Probe>,
    /// A smaller m succeeded while a larger one failed.
    pub anomaly: bool,
}

impl TuneResult {
    pub fn best_probe(&self) -> Option<&Probe> {
        self.m_star.and_then(|m| self.probes.iter().find(|p| p.m == m))
    }
}

/// Binary search for the smallest `m` whose runs solve on at least
/// `threshold` of the seeds. `m_lo` is probed first; after that the search
/// bisects `(m_lo, m_hi]`, so at most `ceil(log2(m_hi - m_lo + 1)) + 1` probes
/// run.
pub fn tune_m(template: &ExperimentSpec, mdp: &TabularMdp, k: usize, cfg: TuneConfig) -> Result<TuneResult> {
    cfg.validate()?;
    template.validate()?;
    let mut probes: Vec<Probe> = Vec::new();
    let mut probe = |m: usize| -> Result<bool> {
        let records = run_experiment_with_mdp(&template.with_m(k, m), mdp)?;
        let solved = records.iter().filter(|r| r.solved).count();
        let total = records.len();
        let success = solved as f64 >= cfg.threshold * total as f64 - 1e-12;
        probes.push(Probe { m, solved_seeds: solved, total_seeds: total, success, records });
        Ok(success)
    };
    let m_star = if probe(cfg.m_lo)? {
        Some(cfg.m_lo)
    } else {
        let (mut left, mut right) = (cfg.m_lo + 1, cfg.m_hi + 1);
        while left < right {
            let mid = left + (right - left) / 2;
            if probe(mid)? {
                right = mid;
            } else {
                left = mid + 1;
            }
        }
        (left <= cfg.m_hi).then_some(left)
    };
    let anomaly = probes.iter().any(|ok| ok.success && probes.iter().any(|bad| !bad.success && bad.m > ok.m));
    Ok(TuneResult { k, config: cfg, m_star, probes, anomaly })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub best_k: Option<usize>,
    pub best_m: Option<usize>,
    pub best_sample_complexity: Option<f64>,
    pub total_failure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDocument {
    pub env: String,
    pub optimal_return: f64,
    pub template: ExperimentSpec,
    pub results: Vec<TuneResult>,
    pub summary: SweepSummary,
}

/// Runs [`tune_m`] for each `k` (those beyond the horizon are recorded as
/// failures) and picks the `(k, m)` with the smallest median sample
/// complexity among successes.
pub fn sweep(template: &ExperimentSpec, mdp: &TabularMdp, ks: &[usize], cfg: TuneConfig) -> Result<SweepDocument> {
    if ks.is_empty() {
        return Err(Error::Config("sweep needs at least one k".into()));
    }
    let mut results = Vec::with_capacity(ks.len());
    for &k in ks {
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if k > mdp.horizon() {
            results.push(TuneResult { k, config: cfg, m_star: None, probes: Vec::new(), anomaly: false });
            continue;
        }
        results.push(tune_m(template, mdp, k, cfg)?);
    }
    let best = results
        .iter()
        .filter_map(|r| r.best_probe().and_then(|p| p.median_sample_complexity()).map(|c| (c, r.k, r.m_star)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let summary = SweepSummary {
        best_k: best.map(|b| b.1),
        best_m: best.and_then(|b| b.2),
        best_sample_complexity: best.map(|b| b.0),
        total_failure: best.is_none(),
    };
    Ok(SweepDocument {
        env: mdp.name().to_string(),
        optimal_return: crate::analysis::optimal_return(mdp),
        template: template.clone(),
        results,
        summary,
    })
}
