#ifndef ARSYSID_H
#define ARSYSID_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum ArsStatus {
  ARS_STATUS_OK = 0,
  ARS_STATUS_NULL_POINTER = 1,
  ARS_STATUS_INVALID_ARGUMENT = 2,
  ARS_STATUS_DIMENSION_MISMATCH = 3,
  ARS_STATUS_NUMERICAL = 4,
  ARS_STATUS_IO = 5,
  ARS_STATUS_PANIC = 6,
} ArsStatus;

typedef enum ArsStability {
  ARS_STABILITY_STRICTLY_STABLE = 0,
  ARS_STABILITY_MARGINALLY_STABLE = 1,
  ARS_STABILITY_EXPLOSIVE = 2,
} ArsStability;

typedef enum ArsNoise {
  ARS_NOISE_GAUSSIAN = 0,
  ARS_NOISE_RADEMACHER = 1,
  ARS_NOISE_UNIFORM = 2,
} ArsNoise;

typedef enum ArsRange {
  /**
   * `t = 1..T` with zero-padded lags.
   */
  ARS_RANGE_FULL = 0,
  /**
   * `t = p'..T`.
   */
  ARS_RANGE_FROM_P = 1,
} ArsRange;

typedef enum ArsEstimator {
  ARS_ESTIMATOR_OLS = 0,
  ARS_ESTIMATOR_CONSTRAINED_PGD = 1,
  ARS_ESTIMATOR_IHT_LOW_RANK = 2,
  ARS_ESTIMATOR_GROUP_NUCLEAR_PROX = 3,
} ArsEstimator;

typedef struct ArsDataset ArsDataset;

typedef struct ArsEstimate ArsEstimate;

typedef struct ArsModel ArsModel;

typedef struct ArsDiagnostics {
  double op_norm_m;
  double kappa;
  double zeta;
  double spectral_radius;
  enum ArsStability stability;
  /**
   * NaN unless `p_student < p`.
   */
  double eta;
  double d_prime;
} ArsDiagnostics;

/**
 * Fit settings. Start from [`ars_fit_config_default`] and override fields.
 */
typedef struct ArsFitConfig {
  enum ArsEstimator estimator;
  size_t p_student;
  /**
   * Budget `D` on `||M_A||_op`.
   */
  double budget;
  /**
   * Target rank for `IhtLowRank`; ignored otherwise.
   */
  size_t rank;
  double lambda;
  /**
   * Values `<= 0` select the automatic step.
   */
  double step_size;
  size_t max_iters;
  double tol;
  enum ArsRange range;
  bool project;
  /**
   * Start from scaled orthogonal blocks instead of zeros.
   */
  bool orthogonal_init;
  double init_alpha;
  uint64_t init_seed;
} ArsFitConfig;

typedef struct ArsEstimateSummary {
  size_t p_student;
  size_t d;
  double final_loss;
  double objective;
  size_t iters;
  bool converged;
  /**
   * Step used by iterative fits, NaN for OLS.
   */
  double step_size;
} ArsEstimateSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next `ars_*` call on the same thread.
 */
const char *ars_last_error_message(void);

const char *ars_version(void);

/**
 * Model from `p` row-major `d × d` blocks.
 *
 * # Safety
 * `coeffs` must point to `len` readable doubles; `out` must be writable.
 */
enum ArsStatus ars_model_new(size_t p,
                             size_t d,
                             const double *coeffs,
                             size_t len,
                             double sigma,
                             struct ArsModel **out);

/**
 * Scaled Haar-orthogonal ground truth; `rank = 0` keeps full rank.
 *
 * # Safety
 * `out` must be writable.
 */
enum ArsStatus ars_model_ground_truth(size_t p,
                                      size_t d,
                                      double alpha,
                                      size_t rank,
                                      uint64_t seed,
                                      struct ArsModel **out);

/**
 * # Safety
 * `model` must be a live handle; `p` and `d` writable.
 */
enum ArsStatus ars_model_dims(const struct ArsModel *model, size_t *p, size_t *d);

/**
 * Copies the `p·d·d` coefficients, row-major per block.
 *
 * # Safety
 * `model` must be a live handle; `buf` must hold `len` doubles.
 */
enum ArsStatus ars_model_copy_blocks(const struct ArsModel *model, double *buf, size_t len);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void ars_model_free(struct ArsModel *model);

/**
 * Diagnostics at horizon `T`; `p_student = 0` skips the misspecification factors.
 *
 * # Safety
 * `model` must be a live handle; `out` writable.
 */
enum ArsStatus ars_diagnostics(const struct ArsModel *model,
                               size_t horizon,
                               size_t p_student,
                               struct ArsDiagnostics *out);

/**
 * Simulates `n` trajectories of length `t`. `noise_sigma < 0` uses the model's sigma.
 *
 * # Safety
 * `model` must be a live handle; `out` writable.
 */
enum ArsStatus ars_simulate(const struct ArsModel *model,
                            size_t n,
                            size_t t,
                            uint64_t seed,
                            enum ArsNoise noise,
                            double noise_sigma,
                            struct ArsDataset **out);

/**
 * Dataset from `n·t·d` values laid out trajectory-major: entry `(n, t, i)`
 * at `(n·T + t)·d + i`.
 *
 * # Safety
 * `data` must hold `len` doubles; `out` writable.
 */
enum ArsStatus ars_dataset_new(size_t n,
                               size_t t,
                               size_t d,
                               const double *data,
                               size_t len,
                               struct ArsDataset **out);

/**
 * # Safety
 * `ds` must be a live handle; outputs writable.
 */
enum ArsStatus ars_dataset_dims(const struct ArsDataset *ds, size_t *n, size_t *t, size_t *d);

/**
 * # Safety
 * `ds` must be a live handle; `buf` must hold `len = n·t·d` doubles.
 */
enum ArsStatus ars_dataset_copy_data(const struct ArsDataset *ds, double *buf, size_t len);

/**
 * Writes the dataset CSV and its `<path>.json` sidecar.
 *
 * # Safety
 * `ds` must be a live handle; `path` a NUL-terminated UTF-8 string.
 */
enum ArsStatus ars_dataset_save(const struct ArsDataset *ds, const char *path_ptr);

/**
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` writable.
 */
enum ArsStatus ars_dataset_load(const char *path_ptr, struct ArsDataset **out);

/**
 * # Safety
 * `ds` must be null or a handle not yet freed.
 */
void ars_dataset_free(struct ArsDataset *ds);

/**
 * Square loss of `p_student` row-major blocks on `ds`.
 *
 * # Safety
 * `ds` must be a live handle; `coeffs` must hold `len` doubles; `out` writable.
 */
enum ArsStatus ars_loss(const struct ArsDataset *ds,
                        const double *coeffs,
                        size_t len,
                        size_t p_student,
                        enum ArsRange range,
                        double *out);

/**
 * Library defaults for `estimator` with `p_student` lags.
 */
struct ArsFitConfig ars_fit_config_default(enum ArsEstimator estimator, size_t p_student);

/**
 * # Safety
 * `ds` must be a live handle; `cfg` readable; `out` writable.
 */
enum ArsStatus ars_fit(const struct ArsDataset *ds,
                       const struct ArsFitConfig *cfg,
                       struct ArsEstimate **out);

/**
 * # Safety
 * `est` must be a live handle; `buf` must hold `len = p'·d·d` doubles.
 */
enum ArsStatus ars_estimate_blocks(const struct ArsEstimate *est, double *buf, size_t len);

/**
 * # Safety
 * `est` must be a live handle; `out` writable.
 */
enum ArsStatus ars_estimate_summary(const struct ArsEstimate *est, struct ArsEstimateSummary *out);

/**
 * # Safety
 * `est` must be null or a handle not yet freed.
 */
void ars_estimate_free(struct ArsEstimate *est);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ARSYSID_H */
