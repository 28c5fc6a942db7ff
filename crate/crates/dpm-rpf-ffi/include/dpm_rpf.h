#ifndef DPM_RPF_H
#define DPM_RPF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>
#include <stdint.h>
#include <stddef.h>
#include <stdbool.h>


/**
 * Status code returned by every fallible function.
 */
typedef enum DrStatus {
  DR_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  DR_STATUS_NULL_ARGUMENT = 1,
  /**
   * A configuration value was outside its valid domain.
   */
  DR_STATUS_INVALID_CONFIG = 2,
  /**
   * Buffer or sequence lengths disagree.
   */
  DR_STATUS_LENGTH_MISMATCH = 3,
  /**
   * Every particle's likelihood underflowed and the filter was configured
   * to abort on collapse.
   */
  DR_STATUS_WEIGHT_COLLAPSE = 4,
  /**
   * The requested data is not available yet (e.g. diagnostics before the
   * first step).
   */
  DR_STATUS_NOT_READY = 5,
  /**
   * Any other runtime failure.
   */
  DR_STATUS_RUNTIME = 6,
  /**
   * A panic was caught at the boundary.
   */
  DR_STATUS_PANIC = 7,
} DrStatus;

/**
 * Which filter a handle runs.
 */
typedef enum DrAlgorithm {
  DR_ALGORITHM_DPM_RPF = 0,
  DR_ALGORITHM_BASELINE_PF = 1,
} DrAlgorithm;

/**
 * Refinement trigger policy.
 */
typedef enum DrRefineTrigger {
  DR_REFINE_TRIGGER_SIZE_MULTIPLE = 0,
  DR_REFINE_TRIGGER_NEW_CLUSTER_AND_SIZE_MULTIPLE = 1,
} DrRefineTrigger;

/**
 * Opaque filter handle.
 */
typedef struct DrFilter DrFilter;

/**
 * Benchmark scenario description.
 *
 * Leave `outlier_means` null to use the built-in two-component
 * contamination mixture; otherwise `outlier_means`, `outlier_vars` and
 * `outlier_weights` must all point to `outlier_components` doubles.
 */
typedef struct DrScenario {
  double outlier_prob;
  double x1;
  double init_prior_var;
  double standard_noise_mean;
  double standard_noise_var;
  double process_shape;
  double process_scale;
  const double *outlier_means;
  const double *outlier_vars;
  const double *outlier_weights;
  size_t outlier_components;
} DrScenario;

/**
 * Filter configuration.
 */
typedef struct DrFilterOptions {
  enum DrAlgorithm algorithm;
  /**
   * Particle count `J`.
   */
  size_t particles;
  /**
   * Seed of the filter's random stream.
   */
  uint64_t seed;
  /**
   * DPM concentration.
   */
  double alpha;
  /**
   * NIW base-distribution hyper-parameters.
   */
  double mu0;
  double rho;
  double kappa;
  double w;
  /**
   * Gibbs-refinement schedule.
   */
  size_t refine_interval;
  size_t refine_sweeps;
  enum DrRefineTrigger refine_trigger;
  /**
   * Initial mass of the standard-noise hypothesis.
   */
  double noise_pseudo_count;
  /**
   * Fail a step with `DR_STATUS_WEIGHT_COLLAPSE` instead of falling back
   * to uniform weights when every likelihood underflows.
   */
  bool abort_on_collapse;
} DrFilterOptions;

/**
 * Last step's diagnostics.
 */
typedef struct DrDiagnostics {
  /**
   * Time index of the consumed measurement.
   */
  uint64_t t;
  /**
   * Sampled hypothesis (0 = standard noise).
   */
  uint64_t selected_hypothesis;
  /**
   * Active outlier clusters after the step.
   */
  uint64_t active_clusters;
  /**
   * Effective sample size after the weight update.
   */
  double ess;
  /**
   * Whether the step fell back to uniform weights.
   */
  bool fallback;
} DrDiagnostics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string; do not free.
 */
const char *dr_version(void);

/**
 * Human-readable description of a status code; static, do not free.
 */
const char *dr_status_message(enum DrStatus status);

/**
 * Fill `out` with the reference scenario (built-in contamination mixture).
 *
 * # Safety
 * `out` must be valid for writing one `DrScenario`.
 */
enum DrStatus dr_scenario_default(struct DrScenario *out);

/**
 * Fill `out` with the reference filter options for `algorithm`.
 *
 * # Safety
 * `out` must be valid for writing one `DrFilterOptions`.
 */
enum DrStatus dr_filter_options_default(enum DrAlgorithm algorithm, struct DrFilterOptions *out);

/**
 * Simulate `horizon` steps of the scenario into caller-owned buffers.
 *
 * `states_out` and `measurements_out` are required; `outlier_flags_out` and
 * `noise_out` may be null. All provided buffers must hold `horizon` entries.
 *
 * # Safety
 * `scenario` must point to a valid `DrScenario` (with mixture arrays of the
 * declared length, if set) and every non-null output buffer must be valid
 * for writing `horizon` elements.
 */
enum DrStatus dr_simulate(const struct DrScenario *scenario,
                          uint64_t seed,
                          size_t horizon,
                          double *states_out,
                          double *measurements_out,
                          bool *outlier_flags_out,
                          double *noise_out);

/**
 * Create a filter over the scenario's system model.
 *
 * On success `*out` owns the handle; release it with [`dr_filter_free`].
 *
 * # Safety
 * `scenario` and `options` must point to valid structs and `out` must be
 * valid for writing one pointer.
 */
enum DrStatus dr_filter_new(const struct DrScenario *scenario,
                            const struct DrFilterOptions *options,
                            struct DrFilter **out);

/**
 * Consume one measurement and write the state estimate.
 *
 * # Safety
 * `filter` must be a live handle from [`dr_filter_new`]; `estimate_out`
 * must be valid for writing one double.
 */
enum DrStatus dr_filter_step(struct DrFilter *filter, double measurement, double *estimate_out);

/**
 * Fetch the diagnostics of the most recent step.
 *
 * # Safety
 * `filter` must be a live handle; `out` must be valid for writing one
 * `DrDiagnostics`.
 */
enum DrStatus dr_filter_diagnostics(const struct DrFilter *filter, struct DrDiagnostics *out);

/**
 * Serialize the robust filter's outlier model as NUL-terminated JSON.
 *
 * Always writes the required size (including the NUL) to `required` when it
 * is non-null; copies the JSON only when `capacity` suffices. Baseline
 * handles have no outlier model and report `DR_STATUS_NOT_READY`.
 *
 * # Safety
 * `filter` must be a live handle; `buffer` must be valid for `capacity`
 * bytes when non-null.
 */
enum DrStatus dr_filter_snapshot_json(const struct DrFilter *filter,
                                      char *buffer,
                                      size_t capacity,
                                      size_t *required);

/**
 * Run a filter over a whole measurement array in one call.
 *
 * # Safety
 * `scenario` and `options` must point to valid structs; `measurements` must
 * hold `len` doubles and `estimates_out` must be valid for writing `len`
 * doubles.
 */
enum DrStatus dr_run_filter(const struct DrScenario *scenario,
                            const struct DrFilterOptions *options,
                            const double *measurements,
                            size_t len,
                            double *estimates_out);

/**
 * Release a filter handle. Null is a no-op.
 *
 * # Safety
 * `filter` must be null or a handle from [`dr_filter_new`] that has not
 * been freed yet.
 */
void dr_filter_free(struct DrFilter *filter);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DPM_RPF_H */
