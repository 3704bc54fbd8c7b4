#ifndef KERNREG_H
#define KERNREG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum KrStatus {
  KR_STATUS_OK = 0,
  KR_STATUS_NULL_POINTER = 1,
  KR_STATUS_INVALID_ARGUMENT = 2,
  KR_STATUS_NUMERICAL = 3,
  KR_STATUS_IO = 4,
  KR_STATUS_BUFFER_TOO_SMALL = 5,
  KR_STATUS_PANIC = 6,
} KrStatus;

/**
 * Function selected by regularized least squares.
 */
typedef struct KrFit KrFit;

/**
 * Observations `(x_i, y_i)`.
 */
typedef struct KrSample KrSample;

/**
 * Eigen-decomposed kernel on `[0, 1]`.
 */
typedef struct KrSpectrum KrSpectrum;

/**
 * Regression problem with a known target.
 */
typedef struct KrTask KrTask;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` as a
 * NUL-terminated string and returns its full length in bytes, excluding
 * the terminator. A null `buf` or zero `len` only reports the length.
 */
size_t kr_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *kr_version(void);

/**
 * Spectrum with decay `p` truncated to `n_terms` eigenvalues, basis bound √2.
 */
enum KrStatus kr_spectrum_new(double p, size_t n_terms, struct KrSpectrum **out);

void kr_spectrum_free(struct KrSpectrum *spec);

size_t kr_spectrum_len(const struct KrSpectrum *spec);

/**
 * Writes the eigenvalues into `out`, which must hold `kr_spectrum_len` values.
 */
enum KrStatus kr_spectrum_eigenvalues(const struct KrSpectrum *spec, double *out, size_t len);

/**
 * `K(x, y)` for `x, y` in `[0, 1]`.
 */
enum KrStatus kr_spectrum_kernel(const struct KrSpectrum *spec, double x, double y, double *out);

/**
 * Smallest positive solution of the localization fixed-point equation.
 */
enum KrStatus kr_fixed_point(const struct KrSpectrum *spec, double n, double c_tilde, double *out);

/**
 * Target with coefficients `λ_i^σ i^{-q}` (1-based `i`) and uniform
 * response noise of half-width `noise`.
 */
enum KrStatus kr_task_new(const struct KrSpectrum *spec,
                          double sigma,
                          double q,
                          double noise,
                          struct KrTask **out);

void kr_task_free(struct KrTask *task);

/**
 * Target value `f(x)`.
 */
enum KrStatus kr_task_eval(const struct KrTask *task, double x, double *out);

/**
 * Draws `n` observations; the same seed gives the same sample.
 */
enum KrStatus kr_task_sample(const struct KrTask *task,
                             size_t n,
                             uint64_t seed,
                             struct KrSample **out);

/**
 * Population excess risk `‖f − f_target‖²` of a fit.
 */
enum KrStatus kr_task_excess(const struct KrTask *task, const struct KrFit *fit, double *out);

/**
 * Sample from caller-owned arrays of length `n`; the data are copied.
 */
enum KrStatus kr_sample_new(const double *xs, const double *ys, size_t n, struct KrSample **out);

void kr_sample_free(struct KrSample *sample);

size_t kr_sample_len(const struct KrSample *sample);

/**
 * Regularized least squares with the named regularizer (`"sublinear"`,
 * `"improved"`, `"quadratic"`, `"ridge_baseline"` or `"null"`) and default
 * constants apart from the multiplier `kappa1`.
 */
enum KrStatus kr_fit(const struct KrSpectrum *spec,
                     const struct KrSample *sample,
                     const char *kind,
                     double kappa1,
                     struct KrFit **out);

void kr_fit_free(struct KrFit *fit);

/**
 * `f(x)` of a fit.
 */
enum KrStatus kr_fit_eval(const struct KrFit *fit, double x, double *out);

/**
 * RKHS norm of a fit; NaN for a null handle.
 */
double kr_fit_norm(const struct KrFit *fit);

/**
 * Mean squared training error of a fit; NaN for a null handle.
 */
double kr_fit_loss(const struct KrFit *fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KERNREG_H */
