//! C interface to horizonlab.
//!
//! Objects are handed out as opaque pointers and released with the matching
//! `hl_*_free` function. Every fallible call returns an [`HlStatus`]; on
//! failure `hl_last_error()` describes what went wrong on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use horizonlab::analysis::{effective_horizon, optimal_return, HorizonReport};
use horizonlab::envs::GeneratorSpec;
use horizonlab::mdp::{exact_return, MdpError, StepRule};
use horizonlab::oracles::{FeatureMap, LinearLsq, Regressor, TabularMean, DEFAULT_RIDGE};
use horizonlab::{gorp_train, sqirl_train, TabularMdp, TabularSimulator, TimedPolicy};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// The model or document failed validation.
    Invalid = 3,
    Io = 4,
    /// A learner or analysis routine failed.
    Failed = 5,
    Panic = 6,
}

/// Regression oracle used by `hl_sqirl_train`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HlOracle {
    Tabular = 0,
    LinearOneHot = 1,
}

/// A validated tabular MDP.
pub struct HlMdp {
    mdp: TabularMdp,
}

/// Per-k effective-horizon report.
pub struct HlReport {
    report: HorizonReport,
}

/// A learned non-stationary policy.
pub struct HlPolicy {
    policy: TimedPolicy,
    training_steps: u64,
}

/// One row of a report. Infinite gaps and horizons are `INFINITY`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HlHorizonEntry {
    pub k: usize,
    pub qvi_solvable: bool,
    pub approx_solvable: bool,
    pub greedy_return: f64,
    pub gap: f64,
    pub hbar: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

/// Message for the last failed call on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

fn guard(f: impl FnOnce() -> Result<(), (HlStatus, String)>) -> HlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HlStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            HlStatus::Panic
        }
    }
}

type Fallible<T> = Result<T, (HlStatus, String)>;

fn null(what: &str) -> (HlStatus, String) {
    (HlStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Fallible<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (HlStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Fallible<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Fallible<()> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn mdp_status(e: MdpError) -> (HlStatus, String) {
    let status = match e {
        MdpError::Io { .. } => HlStatus::Io,
        _ => HlStatus::Invalid,
    };
    (status, e.to_string())
}

fn failed(e: impl std::fmt::Display) -> (HlStatus, String) {
    (HlStatus::Failed, e.to_string())
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Loads and validates an MDP document.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hl_mdp_load(path: *const c_char, out: *mut *mut HlMdp) -> HlStatus {
    guard(|| {
        let path = read_str(path, "path")?;
        let mdp = TabularMdp::load(path).map_err(mdp_status)?;
        write_out(out, boxed(HlMdp { mdp }), "out")
    })
}

/// Parses and validates an MDP from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hl_mdp_from_json(json: *const c_char, out: *mut *mut HlMdp) -> HlStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        let mdp = TabularMdp::from_json(text).and_then(TabularMdp::validated).map_err(mdp_status)?;
        write_out(out, boxed(HlMdp { mdp }), "out")
    })
}

/// Builds an MDP from a generator document such as
/// `{"family": "needle", "horizon": 3, "num_actions": 2}`.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hl_mdp_generate(spec: *const c_char, out: *mut *mut HlMdp) -> HlStatus {
    guard(|| {
        let text = read_str(spec, "spec")?;
        let spec: GeneratorSpec = serde_json::from_str(text).map_err(|e| (HlStatus::Invalid, e.to_string()))?;
        let mdp = spec.build().map_err(mdp_status)?;
        write_out(out, boxed(HlMdp { mdp }), "out")
    })
}

/// # Safety
/// `mdp` must come from an `hl_mdp_*` constructor, or be null.
#[no_mangle]
pub unsafe extern "C" fn hl_mdp_free(mdp: *mut HlMdp) {
    if !mdp.is_null() {
        drop(Box::from_raw(mdp));
    }
}

/// # Safety
/// `mdp` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_mdp_dims(
    mdp: *const HlMdp,
    horizon: *mut usize,
    num_states: *mut usize,
    num_actions: *mut usize,
) -> HlStatus {
    guard(|| {
        let m = &borrow(mdp, "mdp")?.mdp;
        write_out(horizon, m.horizon(), "horizon")?;
        write_out(num_states, m.num_states(), "num_states")?;
        write_out(num_actions, m.num_actions(), "num_actions")
    })
}

/// # Safety
/// `mdp` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hl_mdp_optimal_return(mdp: *const HlMdp, out: *mut f64) -> HlStatus {
    guard(|| {
        let m = &borrow(mdp, "mdp")?.mdp;
        write_out(out, optimal_return(m), "out")
    })
}

/// Runs the per-k analysis for `k = 1..=k_max`.
///
/// # Safety
/// `mdp` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hl_analyze(
    mdp: *const HlMdp,
    k_max: usize,
    threshold: f64,
    out: *mut *mut HlReport,
) -> HlStatus {
    guard(|| {
        let m = &borrow(mdp, "mdp")?.mdp;
        let report =
            effective_horizon(m, k_max, threshold).map_err(|e| (HlStatus::InvalidArgument, e.to_string()))?;
        write_out(out, boxed(HlReport { report }), "out")
    })
}

/// # Safety
/// `report` must come from `hl_analyze`, or be null.
#[no_mangle]
pub unsafe extern "C" fn hl_report_free(report: *mut HlReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Number of rows (equal to `k_max`).
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hl_report_len(report: *const HlReport, out: *mut usize) -> HlStatus {
    guard(|| write_out(out, borrow(report, "report")?.report.entries.len(), "out"))
}

/// Smallest k for which the model is k-QVI-solvable, or 0 if none.
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hl_report_min_exact_k(report: *const HlReport, out: *mut usize) -> HlStatus {
    guard(|| write_out(out, borrow(report, "report")?.report.min_exact_k.unwrap_or(0), "out"))
}

/// Stochastic effective horizon, `INFINITY` if no analyzed k qualifies.
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hl_report_hbar(report: *const HlReport, out: *mut f64) -> HlStatus {
    guard(|| write_out(out, borrow(report, "report")?.report.hbar.unwrap_or(f64::INFINITY), "out"))
}

/// Row `index` (zero-based, so row 0 is k = 1).
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hl_report_entry(
    report: *const HlReport,
    index: usize,
    out: *mut HlHorizonEntry,
) -> HlStatus {
    guard(|| {
        let r = &borrow(report, "report")?.report;
        let e = r
            .entries
            .get(index)
            .ok_or_else(|| (HlStatus::InvalidArgument, format!("row {index} of {}", r.entries.len())))?;
        let entry = HlHorizonEntry {
            k: e.k,
            qvi_solvable: e.qvi_solvable,
            approx_solvable: e.approx_solvable,
            greedy_return: e.greedy_return,
            gap: e.gap.unwrap_or(f64::INFINITY),
            hbar: e.hbar.unwrap_or(f64::INFINITY),
        };
        write_out(out, entry, "out")
    })
}

/// Report as a JSON string, to be released with `hl_string_free`.
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hl_report_to_json(report: *const HlReport, out: *mut *mut c_char) -> HlStatus {
    guard(|| {
        let r = &borrow(report, "report")?.report;
        let text = serde_json::to_string(r).map_err(failed)?;
        let c = CString::new(text).map_err(failed)?;
        write_out(out, c.into_raw(), "out")
    })
}

/// # Safety
/// `s` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn hl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Trains SQIRL on a simulator built from `mdp`.
///
/// # Safety
/// `mdp` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hl_sqirl_train(
    mdp: *const HlMdp,
    k: usize,
    m: usize,
    oracle: HlOracle,
    seed: u64,
    out: *mut *mut HlPolicy,
) -> HlStatus {
    guard(|| {
        let model = &borrow(mdp, "mdp")?.mdp;
        let regressor: Box<dyn Regressor> = match oracle {
            HlOracle::Tabular => Box::new(TabularMean::default()),
            HlOracle::LinearOneHot => Box::new(LinearLsq::new(
                FeatureMap::one_hot(model.num_states(), model.num_actions()),
                DEFAULT_RIDGE,
            )),
        };
        let sim = TabularSimulator::new(model.clone());
        let trained = sqirl_train(&sim, regressor.as_ref(), k, m, seed).map_err(failed)?;
        let policy = HlPolicy {
            policy: trained.policy.to_timed_policy(),
            training_steps: trained.ledger.training_steps,
        };
        write_out(out, boxed(policy), "out")
    })
}

/// Trains GORP on a simulator built from `mdp`.
///
/// # Safety
/// `mdp` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hl_gorp_train(
    mdp: *const HlMdp,
    k: usize,
    m: usize,
    seed: u64,
    out: *mut *mut HlPolicy,
) -> HlStatus {
    guard(|| {
        let model = &borrow(mdp, "mdp")?.mdp;
        let sim = TabularSimulator::new(model.clone());
        let trained = gorp_train(&sim, k, m, seed).map_err(failed)?;
        let policy = HlPolicy {
            policy: trained.to_timed_policy(model.num_states()),
            training_steps: trained.ledger.training_steps,
        };
        write_out(out, boxed(policy), "out")
    })
}

/// # Safety
/// `policy` must come from a training call, or be null.
#[no_mangle]
pub unsafe extern "C" fn hl_policy_free(policy: *mut HlPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Action the policy takes in state `s` at zero-based step `t`.
///
/// # Safety
/// `policy` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hl_policy_action(policy: *const HlPolicy, t: usize, s: usize, out: *mut usize) -> HlStatus {
    guard(|| {
        let p = &borrow(policy, "policy")?.policy;
        let rule = p
            .rules()
            .get(t)
            .ok_or_else(|| (HlStatus::InvalidArgument, format!("step {t} is beyond the horizon {}", p.horizon())))?;
        match rule {
            StepRule::Deterministic(actions) => {
                let a = *actions
                    .get(s)
                    .ok_or_else(|| (HlStatus::InvalidArgument, format!("state {s} of {}", actions.len())))?;
                write_out(out, a, "out")
            }
            StepRule::UniformRandom => Err((HlStatus::InvalidArgument, format!("step {t} is not learned"))),
        }
    })
}

/// Training timesteps the policy consumed.
///
/// # Safety
/// `policy` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hl_policy_training_steps(policy: *const HlPolicy, out: *mut u64) -> HlStatus {
    guard(|| write_out(out, borrow(policy, "policy")?.training_steps, "out"))
}

/// Exact expected return of the policy on `mdp`.
///
/// # Safety
/// Both handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hl_policy_exact_return(
    policy: *const HlPolicy,
    mdp: *const HlMdp,
    out: *mut f64,
) -> HlStatus {
    guard(|| {
        let p = &borrow(policy, "policy")?.policy;
        let m = &borrow(mdp, "mdp")?.mdp;
        p.check(m).map_err(|e| (HlStatus::InvalidArgument, e.to_string()))?;
        write_out(out, exact_return(m, p), "out")
    })
}
