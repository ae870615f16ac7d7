#ifndef CLUSTER_EDGEWORTH_H
#define CLUSTER_EDGEWORTH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum CeStatus {
  CE_STATUS_OK = 0,
  // A required pointer was null.
  CE_STATUS_NULL_POINTER = 1,
  // Bad argument value (dimensions, alpha, draw count, method domain).
  CE_STATUS_INVALID_ARGUMENT = 2,
  // Input data rejected (schema, parse, validation, i/o).
  CE_STATUS_INVALID_DATA = 3,
  // Singular Gram matrix or vanishing variance.
  CE_STATUS_NUMERICAL = 4,
  // Internal error; the library caught a panic.
  CE_STATUS_INTERNAL = 5,
} CeStatus;

// Small-sample adjustment for `ce_student_cv`.
typedef enum CeStudentVariant {
  CE_STUDENT_VARIANT_D1 = 1,
  CE_STUDENT_VARIANT_D2 = 2,
  CE_STUDENT_VARIANT_D3 = 3,
} CeStudentVariant;

// Opaque dataset handle.
typedef struct CeDataset CeDataset;

// Output of `ce_infer`.
typedef struct CeInference {
  size_t num_clusters;
  size_t num_obs;
  size_t num_regressors;
  // `lambda' beta_hat`
  double estimate;
  double sigma_hat;
  // `sigma_hat / sqrt(G)`
  double std_error;
  double t_stat;
  double z0;
  double k1;
  double k2;
  double k3;
  double k4;
  double q2_at_z0;
  // Corrected critical value `z0 - q2(z0) / G`.
  double cv;
  double ci_lower;
  double ci_upper;
  // 1 if `|t| > cv`.
  int32_t reject;
} CeInference;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Builds a dataset from row-major arrays: `y[n]`, `x[n * k]` and one cluster
// identifier per row. Rows sharing an identifier form one cluster, in
// order of first appearance.
//
// # Safety
// `y`, `x` and `cluster_ids` must point to `n`, `n * k` and `n` readable
// values; `out` must be writable.
enum CeStatus ce_dataset_new(const double *y,
                             const double *x,
                             const uint64_t *cluster_ids,
                             size_t n,
                             size_t k,
                             struct CeDataset **out);

// Loads a dataset from a comma-separated file with a header row.
//
// # Safety
// String arguments must be NUL-terminated; `x_cols` must hold `num_x`
// such strings; `out` must be writable.
enum CeStatus ce_dataset_from_csv(const char *path,
                                  const char *cluster_col,
                                  const char *y_col,
                                  const char *const *x_cols,
                                  size_t num_x,
                                  struct CeDataset **out);

// Releases a dataset. Null is ignored.
//
// # Safety
// `dataset` must come from `ce_dataset_new`/`ce_dataset_from_csv` and not
// have been freed.
void ce_dataset_free(struct CeDataset *dataset);

// Number of clusters, or 0 for a null handle.
//
// # Safety
// `dataset` must be null or a live handle.
size_t ce_dataset_num_clusters(const struct CeDataset *dataset);

// Number of observations, or 0 for a null handle.
//
// # Safety
// `dataset` must be null or a live handle.
size_t ce_dataset_num_obs(const struct CeDataset *dataset);

// Number of regressors, or 0 for a null handle.
//
// # Safety
// `dataset` must be null or a live handle.
size_t ce_dataset_num_regressors(const struct CeDataset *dataset);

// Fits OLS, estimates the Edgeworth moments and fills `out` with the
// corrected critical value and interval. `truncation <= 0` disables
// winsorizing of the moment summands.
//
// # Safety
// `dataset` must be a live handle, `lambda` must hold `lambda_len` values
// and `out` must be writable.
enum CeStatus ce_infer(const struct CeDataset *dataset,
                       const double *lambda,
                       size_t lambda_len,
                       double c0,
                       double alpha,
                       double truncation,
                       struct CeInference *out);

// Copies `beta_hat` into `out` (length `k`).
//
// # Safety
// `dataset` must be a live handle and `out` must hold `out_len` writable values.
enum CeStatus ce_beta_hat(const struct CeDataset *dataset, double *out, size_t out_len);

// Adjusted Student critical value `sqrt(d) * t_{G-1, 1 - alpha/2}`.
//
// # Safety
// `out` must be writable.
enum CeStatus ce_student_cv(size_t num_clusters,
                            size_t num_obs,
                            size_t num_regressors,
                            enum CeStudentVariant variant,
                            double alpha,
                            double *out);

// Pairs percentile-t cluster bootstrap critical value for `|t|`. Matches the
// command-line tool for the same seed.
//
// # Safety
// As for `ce_infer`; `out` must be writable.
enum CeStatus ce_pairs_bootstrap_cv(const struct CeDataset *dataset,
                                    const double *lambda,
                                    size_t lambda_len,
                                    double c0,
                                    double alpha,
                                    size_t draws,
                                    uint64_t seed,
                                    double *out);

// Restricted wild cluster bootstrap (Rademacher) critical value for `|t|`.
//
// # Safety
// As for `ce_infer`; `out` must be writable.
enum CeStatus ce_wild_bootstrap_cv(const struct CeDataset *dataset,
                                   const double *lambda,
                                   size_t lambda_len,
                                   double c0,
                                   double alpha,
                                   size_t draws,
                                   uint64_t seed,
                                   double *out);

// Probabilists' Hermite polynomial of order 1, 2, 3 or 5.
//
// # Safety
// `out` must be writable.
enum CeStatus ce_hermite(uint32_t order, double z, double *out);

// Message for the most recent failing call on this thread ("" after a
// success). The pointer stays valid until the next call on the same thread.
const char *ce_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *ce_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLUSTER_EDGEWORTH_H */
