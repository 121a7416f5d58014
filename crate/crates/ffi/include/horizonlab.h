#ifndef HORIZONLAB_H
#define HORIZONLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum HlStatus {
  HL_STATUS_OK = 0,
  HL_STATUS_NULL_POINTER = 1,
  HL_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The model or document failed validation.
   */
  HL_STATUS_INVALID = 3,
  HL_STATUS_IO = 4,
  /**
   * A learner or analysis routine failed.
   */
  HL_STATUS_FAILED = 5,
  HL_STATUS_PANIC = 6,
} HlStatus;

/**
 * Regression oracle used by `hl_sqirl_train`.
 */
typedef enum HlOracle {
  HL_ORACLE_TABULAR = 0,
  HL_ORACLE_LINEAR_ONE_HOT = 1,
} HlOracle;

/**
 * A validated tabular MDP.
 */
typedef struct HlMdp HlMdp;

/**
 * A learned non-stationary policy.
 */
typedef struct HlPolicy HlPolicy;

/**
 * Per-k effective-horizon report.
 */
typedef struct HlReport HlReport;

/**
 * One row of a report. Infinite gaps and horizons are `INFINITY`.
 */
typedef struct HlHorizonEntry {
  size_t k;
  bool qvi_solvable;
  bool approx_solvable;
  double greedy_return;
  double gap;
  double hbar;
} HlHorizonEntry;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *hl_last_error(void);

/**
 * Loads and validates an MDP document.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum HlStatus hl_mdp_load(const char *path, struct HlMdp **out);

/**
 * Parses and validates an MDP from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum HlStatus hl_mdp_from_json(const char *json, struct HlMdp **out);

/**
 * Builds an MDP from a generator document such as
 * `{"family": "needle", "horizon": 3, "num_actions": 2}`.
 *
 * # Safety
 * `spec` must be a NUL-terminated string and `out` a writable pointer.
 */
enum HlStatus hl_mdp_generate(const char *spec, struct HlMdp **out);

/**
 * # Safety
 * `mdp` must come from an `hl_mdp_*` constructor, or be null.
 */
void hl_mdp_free(struct HlMdp *mdp);

/**
 * # Safety
 * `mdp` must be a live handle; the out pointers must be writable.
 */
enum HlStatus hl_mdp_dims(const struct HlMdp *mdp,
                          size_t *horizon,
                          size_t *num_states,
                          size_t *num_actions);

/**
 * # Safety
 * `mdp` must be a live handle and `out` writable.
 */
enum HlStatus hl_mdp_optimal_return(const struct HlMdp *mdp, double *out);

/**
 * Runs the per-k analysis for `k = 1..=k_max`.
 *
 * # Safety
 * `mdp` must be a live handle and `out` writable.
 */
enum HlStatus hl_analyze(const struct HlMdp *mdp,
                         size_t k_max,
                         double threshold,
                         struct HlReport **out);

/**
 * # Safety
 * `report` must come from `hl_analyze`, or be null.
 */
void hl_report_free(struct HlReport *report);

/**
 * Number of rows (equal to `k_max`).
 *
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum HlStatus hl_report_len(const struct HlReport *report, size_t *out);

/**
 * Smallest k for which the model is k-QVI-solvable, or 0 if none.
 *
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum HlStatus hl_report_min_exact_k(const struct HlReport *report, size_t *out);

/**
 * Stochastic effective horizon, `INFINITY` if no analyzed k qualifies.
 *
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum HlStatus hl_report_hbar(const struct HlReport *report, double *out);

/**
 * Row `index` (zero-based, so row 0 is k = 1).
 *
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum HlStatus hl_report_entry(const struct HlReport *report,
                              size_t index,
                              struct HlHorizonEntry *out);

/**
 * Report as a JSON string, to be released with `hl_string_free`.
 *
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum HlStatus hl_report_to_json(const struct HlReport *report, char **out);

/**
 * # Safety
 * `s` must come from this library, or be null.
 */
void hl_string_free(char *s);

/**
 * Trains SQIRL on a simulator built from `mdp`.
 *
 * # Safety
 * `mdp` must be a live handle and `out` writable.
 */
enum HlStatus hl_sqirl_train(const struct HlMdp *mdp,
                             size_t k,
                             size_t m,
                             enum HlOracle oracle,
                             uint64_t seed,
                             struct HlPolicy **out);

/**
 * Trains GORP on a simulator built from `mdp`.
 *
 * # Safety
 * `mdp` must be a live handle and `out` writable.
 */
enum HlStatus hl_gorp_train(const struct HlMdp *mdp,
                            size_t k,
                            size_t m,
                            uint64_t seed,
                            struct HlPolicy **out);

/**
 * # Safety
 * `policy` must come from a training call, or be null.
 */
void hl_policy_free(struct HlPolicy *policy);

/**
 * Action the policy takes in state `s` at zero-based step `t`.
 *
 * # Safety
 * `policy` must be a live handle and `out` writable.
 */
enum HlStatus hl_policy_action(const struct HlPolicy *policy, size_t t, size_t s, size_t *out);

/**
 * Training timesteps the policy consumed.
 *
 * # Safety
 * `policy` must be a live handle and `out` writable.
 */
enum HlStatus hl_policy_training_steps(const struct HlPolicy *policy, uint64_t *out);

/**
 * Exact expected return of the policy on `mdp`.
 *
 * # Safety
 * Both handles must be live and `out` writable.
 */
enum HlStatus hl_policy_exact_return(const struct HlPolicy *policy,
                                     const struct HlMdp *mdp,
                                     double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HORIZONLAB_H */
