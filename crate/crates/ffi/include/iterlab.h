#ifndef ITERLAB_H
#define ITERLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IterlabStatus {
  ITERLAB_STATUS_OK = 0,
  ITERLAB_STATUS_NULL_POINTER = 1,
  ITERLAB_STATUS_INVALID_ARGUMENT = 2,
  ITERLAB_STATUS_CONFIG = 3,
  ITERLAB_STATUS_UNKNOWN_EXPERIMENT = 4,
  ITERLAB_STATUS_NUMERIC = 5,
  ITERLAB_STATUS_IO = 6,
  ITERLAB_STATUS_UTF8 = 7,
  ITERLAB_STATUS_PANIC = 8,
} IterlabStatus;

/**
 * Streaming kernel density estimate on a uniform grid.
 */
typedef struct IterlabDensity IterlabDensity;

/**
 * Streaming kernel regression estimate on a uniform grid.
 */
typedef struct IterlabRegression IterlabRegression;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Owned by the
 * library; valid until the next call.
 */
const char *iterlab_last_error(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void iterlab_string_free(char *s);

/**
 * Sample size for a Monte Carlo estimate within `epsilon` with the given
 * confidence, under a variance bound.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum IterlabStatus iterlab_mc_plan(double epsilon,
                                   double confidence,
                                   double variance_bound,
                                   uint64_t *out);

/**
 * Runs a registered experiment. `params_json` may be null (defaults).
 * On success `*out_json` holds the JSON summary; free it with
 * [`iterlab_string_free`].
 *
 * # Safety
 * String arguments must be NUL-terminated; `out_json` must be valid.
 */
enum IterlabStatus iterlab_run_experiment(const char *id,
                                          const char *params_json,
                                          uint64_t seed,
                                          char **out_json);

/**
 * Creates a recursive density estimator with bandwidth h_i = c·i^{−β} on
 * `points` grid nodes spanning [lo, hi].
 *
 * # Safety
 * `kernel` must be NUL-terminated; `out` must be valid.
 */
enum IterlabStatus iterlab_density_new(const char *kernel,
                                       double lo,
                                       double hi,
                                       size_t points,
                                       double c,
                                       double beta,
                                       struct IterlabDensity **out);

/**
 * # Safety
 * `h` must be a live handle.
 */
enum IterlabStatus iterlab_density_update(struct IterlabDensity *h, double x);

/**
 * Copies the current estimate into `values[0..len]`; `len` must equal the
 * grid size.
 *
 * # Safety
 * `h` must be live and `values` must hold `len` doubles.
 */
enum IterlabStatus iterlab_density_values(const struct IterlabDensity *h,
                                          double *values,
                                          size_t len);

/**
 * Number of observations absorbed so far (0 on a null handle).
 *
 * # Safety
 * `h` must be live or null.
 */
size_t iterlab_density_count(const struct IterlabDensity *h);

/**
 * # Safety
 * `h` must come from [`iterlab_density_new`] and not be freed twice.
 */
void iterlab_density_free(struct IterlabDensity *h);

/**
 * # Safety
 * `kernel` must be NUL-terminated; `out` must be valid.
 */
enum IterlabStatus iterlab_regression_new(const char *kernel,
                                          double lo,
                                          double hi,
                                          size_t points,
                                          double c,
                                          double beta,
                                          struct IterlabRegression **out);

/**
 * # Safety
 * `h` must be a live handle.
 */
enum IterlabStatus iterlab_regression_update(struct IterlabRegression *h, double x, double y);

/**
 * Writes the ratio estimate into `values` and `defined` (1 where the
 * denominator is large enough, else 0 and the value is NaN).
 *
 * # Safety
 * `h` must be live; both buffers must hold `len` elements.
 */
enum IterlabStatus iterlab_regression_values(const struct IterlabRegression *h,
                                             double *values,
                                             uint8_t *defined,
                                             size_t len);

/**
 * # Safety
 * `h` must come from [`iterlab_regression_new`] and not be freed twice.
 */
void iterlab_regression_free(struct IterlabRegression *h);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ITERLAB_H */
