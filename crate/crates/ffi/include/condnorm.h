#ifndef CONDNORM_H
#define CONDNORM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes returned by every fallible function.
 */
typedef enum CnStatus {
  CN_STATUS_OK = 0,
  CN_STATUS_NULL_POINTER = 1,
  CN_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Input, schema or alignment problem in the data.
   */
  CN_STATUS_INPUT = 3,
  /**
   * A model could not be fitted.
   */
  CN_STATUS_ESTIMATION = 4,
  CN_STATUS_BOOTSTRAP = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  CN_STATUS_INTERNAL = 6,
} CnStatus;

/**
 * Fitted conditional mean and variance model.
 */
typedef struct CnNormalizer CnNormalizer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next call into this library on the same thread.
 */
const char *cn_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *cn_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be null or a pointer obtained from this library and not yet freed.
 */
void cn_string_free(char *s);

/**
 * Correlation link `log((1 + c) / (1 - c))`.
 */
double cn_corr_link(double c);

/**
 * Inverse correlation link, mapping the real line onto `(-1, 1)`.
 */
double cn_corr_link_inv(double u);

/**
 * Fits a conditional normalizer of `y` on the covariates.
 *
 * # Safety
 * `y` must point to `n` doubles, `z` to `n * p` doubles and `out` must be
 * writable. Free the handle with [`cn_normalizer_free`].
 */
enum CnStatus cn_normalizer_fit(const double *y,
                                size_t n,
                                const double *z,
                                size_t p,
                                size_t k,
                                struct CnNormalizer **out);

/**
 * Restores a normalizer from its JSON form.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` writable.
 */
enum CnStatus cn_normalizer_from_json(const char *json, struct CnNormalizer **out);

/**
 * Number of covariate columns the model expects.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
size_t cn_normalizer_covariates(const struct CnNormalizer *h);

/**
 * Writes `(y - m(z)) / sqrt(v(z))` into `out`; NaN where `y` or a covariate is missing.
 *
 * # Safety
 * `h` must be a live handle, `y` and `out` must hold `n` doubles and `z` `n * p`.
 */
enum CnStatus cn_normalizer_normalize(const struct CnNormalizer *h,
                                      const double *y,
                                      size_t n,
                                      const double *z,
                                      size_t p,
                                      double *out);

/**
 * Writes `y* sqrt(v(z)) + m(z)` into `out`.
 *
 * # Safety
 * As for [`cn_normalizer_normalize`].
 */
enum CnStatus cn_normalizer_unnormalize(const struct CnNormalizer *h,
                                        const double *y_star,
                                        size_t n,
                                        const double *z,
                                        size_t p,
                                        double *out);

/**
 * Serializes the model to JSON. Free the string with [`cn_string_free`].
 *
 * # Safety
 * `h` must be a live handle and `out` writable.
 */
enum CnStatus cn_normalizer_to_json(const struct CnNormalizer *h, char **out);

/**
 * Releases a normalizer handle.
 *
 * # Safety
 * `h` must be null or a handle from this library that has not been freed.
 */
void cn_normalizer_free(struct CnNormalizer *h);

/**
 * Fills missing values of `y` by conditional normalization and AR smoothing.
 *
 * `out` receives the filled series (observed values unchanged, NaN where no
 * fill was possible). `lo95` and `hi95` may be null.
 *
 * # Safety
 * `y`, `out` and non-null bound buffers must hold `n` doubles, `z` `n * p`.
 */
enum CnStatus cn_impute(const double *y,
                        size_t n,
                        const double *z,
                        size_t p,
                        size_t k,
                        size_t max_order,
                        double *out,
                        double *lo95,
                        double *hi95);

/**
 * Estimates the lag time from upstream `x` to downstream `y` as the argmax
 * over lags `1..=max_lag` of the conditional cross-correlation.
 *
 * Both series are conditionally normalized first. `lag` receives the lag
 * time per grid row and `c_max` the maximal correlation; rows outside the
 * evaluation set get 0 and NaN.
 *
 * # Safety
 * `x`, `y`, `c_max` must hold `n` doubles, `lag` `n` entries, `z` `n * p`.
 */
enum CnStatus cn_lagtime(const double *x,
                         const double *y,
                         size_t n,
                         const double *z,
                         size_t p,
                         size_t k,
                         size_t max_lag,
                         size_t *lag,
                         double *c_max);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONDNORM_H */
