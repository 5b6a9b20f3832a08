#ifndef ROAR_H
#define ROAR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RoarStatus {
  ROAR_STATUS_OK = 0,
  ROAR_STATUS_NULL_POINTER = 1,
  ROAR_STATUS_INVALID_ARGUMENT = 2,
  ROAR_STATUS_DATA_ERROR = 3,
  ROAR_STATUS_NUMERICAL_ERROR = 4,
  ROAR_STATUS_BUFFER_TOO_SMALL = 5,
  ROAR_STATUS_PANIC = 6,
} RoarStatus;

typedef enum RoarNorm {
  ROAR_NORM_L2 = 0,
  ROAR_NORM_LINF = 1,
  ROAR_NORM_L1 = 2,
  ROAR_NORM_BOX = 3,
} RoarNorm;

/**
 * Opaque model handle.
 */
typedef struct RoarModel RoarModel;

typedef struct RoarRecourseConfig {
  double lambda;
  double learning_rate;
  size_t max_iterations;
  double tolerance;
  double delta_max;
  enum RoarNorm norm;
} RoarRecourseConfig;

typedef struct RoarRecourseInfo {
  double cost;
  double objective;
  size_t iterations;
  bool converged;
  bool valid_on_source;
} RoarRecourseInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL terminated,
 * truncated to `len`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t roar_last_error_message(char *buf, size_t len);

/**
 * Parses a model from its JSON form.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum RoarStatus roar_model_from_json(const char *json, struct RoarModel **out);

/**
 * Loads a model JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RoarStatus roar_model_load(const char *path, struct RoarModel **out);

/**
 * Builds a logistic model from weights and an intercept.
 *
 * # Safety
 * `weights` must point to `dim` values; `out` must be writable.
 */
enum RoarStatus roar_model_linear(const double *weights,
                                  size_t dim,
                                  double intercept,
                                  struct RoarModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from a `roar_model_*` constructor and not be used again.
 */
void roar_model_free(struct RoarModel *model);

/**
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum RoarStatus roar_model_dim(const struct RoarModel *model, size_t *out);

/**
 * Probability of label 1 at `x`.
 *
 * # Safety
 * `x` must point to `dim` values; `out` must be writable.
 */
enum RoarStatus roar_model_predict_proba(const struct RoarModel *model,
                                         const double *x,
                                         size_t dim,
                                         double *out);

/**
 * Defaults matching the library's recourse configuration.
 */
struct RoarRecourseConfig roar_recourse_config_default(void);

/**
 * Counterfactual explanation for `x`. `cost_weights` may be null for the
 * L1 cost, or point to `dim` nonnegative feature weights. `info` may be null.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum RoarStatus roar_cfe(const struct RoarModel *model,
                         const double *x,
                         size_t dim,
                         const double *cost_weights,
                         const struct RoarRecourseConfig *config,
                         double *out_cf,
                         size_t out_len,
                         struct RoarRecourseInfo *info);

/**
 * Recourse robust to model shifts in the configured set; needs a linear model.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum RoarStatus roar_robust_recourse(const struct RoarModel *model,
                                     const double *x,
                                     size_t dim,
                                     const double *cost_weights,
                                     const struct RoarRecourseConfig *config,
                                     double *out_cf,
                                     size_t out_len,
                                     struct RoarRecourseInfo *info);

/**
 * Probability that a recourse drawn from N(mu, sigma) and valid under `w`
 * is invalid under `w + delta`. `sigma` is row-major `dim * dim`.
 *
 * # Safety
 * `w`, `delta`, `mu` must hold `dim` values and `sigma` `dim * dim`.
 */
enum RoarStatus roar_invalidation_probability(const double *w,
                                              const double *delta,
                                              const double *mu,
                                              const double *sigma,
                                              size_t dim,
                                              double *out);

/**
 * Upper bound on the extra cost of robust recourse.
 *
 * # Safety
 * `w`, `delta`, `mu` must hold `dim` values.
 */
enum RoarStatus roar_cost_increase_bound(double lambda,
                                         const double *w,
                                         const double *delta,
                                         const double *mu,
                                         size_t dim,
                                         double diameter,
                                         double eta,
                                         double alpha,
                                         double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROAR_H */
