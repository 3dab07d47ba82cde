#ifndef STLDDP_FFI_H
#define STLDDP_FFI_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum StlddpSeries {
  STLDDP_SERIES_STATES = 0,
  STLDDP_SERIES_CONTROLS = 1,
  STLDDP_SERIES_OUTPUTS = 2,
} StlddpSeries;

/**
 * Status code returned by every fallible call.
 */
typedef enum StlddpStatus {
  STLDDP_STATUS_OK = 0,
  STLDDP_STATUS_NULL_POINTER = 1,
  STLDDP_STATUS_INVALID_UTF8 = 2,
  /**
   * Scenario schema or value error.
   */
  STLDDP_STATUS_CONFIG = 3,
  STLDDP_STATUS_IO = 4,
  /**
   * Malformed CSV input.
   */
  STLDDP_STATUS_PARSE = 5,
  STLDDP_STATUS_SOLVE = 6,
  /**
   * Specification or predicate error.
   */
  STLDDP_STATUS_SPEC = 7,
  /**
   * Caller buffer too small.
   */
  STLDDP_STATUS_BUFFER_TOO_SMALL = 8,
  STLDDP_STATUS_NOT_FOUND = 9,
  STLDDP_STATUS_INTERNAL = 10,
} StlddpStatus;

/**
 * Opaque result handle.
 */
typedef struct StlddpResult StlddpResult;

/**
 * Opaque scenario handle.
 */
typedef struct StlddpScenario StlddpScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread. Valid until the next
 * failing call on the same thread; never null.
 */
const char *stlddp_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *stlddp_version(void);

/**
 * Parses a scenario from JSON text. Relative file paths inside it resolve
 * against the working directory.
 */
enum StlddpStatus stlddp_scenario_from_json(const char *json, struct StlddpScenario **out);

/**
 * Loads a scenario file.
 */
enum StlddpStatus stlddp_scenario_load(const char *path, struct StlddpScenario **out);

/**
 * One of the scenarios compiled into the library, e.g. `"reach_avoid"`.
 */
enum StlddpStatus stlddp_scenario_bundled(const char *name, struct StlddpScenario **out);

/**
 * Sets the seed of a random initialization; no effect for other policies.
 */
enum StlddpStatus stlddp_scenario_set_seed(struct StlddpScenario *s, uint64_t seed);

enum StlddpStatus stlddp_scenario_set_smoothing(struct StlddpScenario *s, double k1, double k2);

enum StlddpStatus stlddp_scenario_set_max_iterations(struct StlddpScenario *s,
                                                     size_t max_iterations);

enum StlddpStatus stlddp_scenario_set_retries(struct StlddpScenario *s, size_t retries);

void stlddp_scenario_free(struct StlddpScenario *s);

/**
 * Compiles, solves and certifies the scenario, with its retry policy.
 * A result is produced whether or not the trajectory is certified.
 */
enum StlddpStatus stlddp_solve(const struct StlddpScenario *s, struct StlddpResult **out);

/**
 * 1 if the trajectory is certified, 0 if not or on a null handle.
 */
int32_t stlddp_result_satisfied(const struct StlddpResult *r);

/**
 * Exact robustness of the specification on the result; NaN on a null handle.
 */
double stlddp_result_robustness(const struct StlddpResult *r);

size_t stlddp_result_iterations(const struct StlddpResult *r);

/**
 * Number of samples `T + 1`.
 */
size_t stlddp_result_samples(const struct StlddpResult *r);

size_t stlddp_result_state_dim(const struct StlddpResult *r);

size_t stlddp_result_control_dim(const struct StlddpResult *r);

size_t stlddp_result_output_dim(const struct StlddpResult *r);

/**
 * Copies a series row-major (one row per timestep) into `buf`, which must
 * hold `samples * dim` values. `written` receives the count needed.
 */
enum StlddpStatus stlddp_result_copy(const struct StlddpResult *r,
                                     enum StlddpSeries series,
                                     double *buf,
                                     size_t len,
                                     size_t *written);

/**
 * Run report as a JSON string; release with [`stlddp_string_free`].
 * Null on a null handle.
 */
char *stlddp_result_report_json(const struct StlddpResult *r);

void stlddp_string_free(char *s);

void stlddp_result_free(struct StlddpResult *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STLDDP_FFI_H */
