#ifndef SSCLUST_H
#define SSCLUST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SscCovModel {
  SSC_COV_MODEL_EII = 0,
  SSC_COV_MODEL_VII = 1,
  SSC_COV_MODEL_EEE = 2,
  SSC_COV_MODEL_VVV = 3,
} SscCovModel;

typedef enum SscPenaltyKind {
  /**
   * `m = n1`, the number of unlabeled rows.
   */
  SSC_PENALTY_KIND_UNLABELED = 0,
  /**
   * `m = n`, the classical BIC.
   */
  SSC_PENALTY_KIND_TOTAL = 1,
  /**
   * `m = penalty_value`.
   */
  SSC_PENALTY_KIND_FIXED = 2,
} SscPenaltyKind;

typedef enum SscStatus {
  SSC_STATUS_OK = 0,
  SSC_STATUS_NULL_POINTER = 1,
  SSC_STATUS_INVALID_ARGUMENT = 2,
  SSC_STATUS_DIMENSION = 3,
  SSC_STATUS_SINGULAR_MODEL = 4,
  SSC_STATUS_EMPTY_COMPONENT = 5,
  SSC_STATUS_UNDERFLOW = 6,
  SSC_STATUS_INSUFFICIENT_DATA = 7,
  SSC_STATUS_UNDEFINED_PENALTY = 8,
  SSC_STATUS_DOMAIN = 9,
  SSC_STATUS_NO_VIABLE_MODEL = 10,
  SSC_STATUS_DEGENERATE_TEST = 11,
  SSC_STATUS_IO = 12,
  SSC_STATUS_PANIC = 13,
} SscStatus;

typedef struct SscDataset SscDataset;

typedef struct SscSearchResult SscSearchResult;

typedef struct SscSearchOptions {
  size_t g_min;
  size_t g_max;
  /**
   * Bit `k` enables the model with `SscCovModel` value `k`.
   */
  uint32_t model_mask;
  /**
   * An `SscPenaltyKind` value.
   */
  uint32_t penalty_kind;
  /**
   * Used when `penalty_kind` is `SSC_PENALTY_KIND_FIXED`.
   */
  double penalty_value;
  size_t restarts;
  uint64_t seed;
  size_t max_iter;
  double rel_tol;
} SscSearchOptions;

typedef struct SscCandidate {
  size_t g;
  /**
   * An `SscCovModel` value.
   */
  uint32_t model;
  bool failed;
  bool converged;
  size_t iterations;
  /**
   * NaN when `failed`.
   */
  double loglik;
  size_t d;
  /**
   * NaN when `failed` or fewer than two unlabeled rows.
   */
  double bic_star;
} SscCandidate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL if the last
 * call succeeded. Valid until the next call into this library on the same
 * thread.
 */
const char *ssc_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ssc_version(void);

/**
 * Builds a dataset from an `n_rows × n_cols` row-major matrix. `labels`
 * may be NULL (no labeled rows); otherwise it holds one class id per row,
 * negative for unlabeled. Class `c` is generated by component `c`.
 *
 * # Safety
 * `x` must point to `n_rows * n_cols` doubles, `labels` to `n_rows`
 * integers when non-NULL, and `out` must be writable.
 */
enum SscStatus ssc_dataset_new(const double *x,
                               size_t n_rows,
                               size_t n_cols,
                               const int64_t *labels,
                               struct SscDataset **out);

/**
 * # Safety
 * `ds` must come from `ssc_dataset_new` and not be used afterwards.
 */
void ssc_dataset_free(struct SscDataset *ds);

/**
 * # Safety
 * `ds` must be a live dataset handle.
 */
size_t ssc_dataset_n_unlabeled(const struct SscDataset *ds);

/**
 * Defaults: G in 1..=9, all four models, BIC* penalty, 5 restarts.
 */
struct SscSearchOptions ssc_search_options_default(void);

/**
 * Fits every candidate and selects the best under the requested penalty.
 *
 * # Safety
 * `ds` must be a live dataset, `opts` readable, `out` writable.
 */
enum SscStatus ssc_model_search(const struct SscDataset *ds,
                                const struct SscSearchOptions *opts,
                                struct SscSearchResult **out);

/**
 * # Safety
 * `res` must come from `ssc_model_search` and not be used afterwards.
 */
void ssc_search_result_free(struct SscSearchResult *res);

/**
 * # Safety
 * `res` must be a live result handle.
 */
size_t ssc_search_result_n_candidates(const struct SscSearchResult *res);

/**
 * Index of the selected candidate.
 *
 * # Safety
 * `res` must be a live result handle.
 */
size_t ssc_search_result_best(const struct SscSearchResult *res);

/**
 * # Safety
 * `res` must be a live result handle and `out` writable.
 */
enum SscStatus ssc_search_result_candidate(const struct SscSearchResult *res,
                                           size_t index,
                                           struct SscCandidate *out);

/**
 * Re-selects among the fitted candidates with penalty argument `m`.
 *
 * # Safety
 * `res` must be a live result handle and `out_index` writable.
 */
enum SscStatus ssc_search_result_select_with(const struct SscSearchResult *res,
                                             double m,
                                             size_t *out_index);

/**
 * Writes the MAP component (0-based) of every row of the selected fit.
 * `len` must equal the number of rows.
 *
 * # Safety
 * `out` must be valid for `len` writes.
 */
enum SscStatus ssc_search_result_assignments(const struct SscSearchResult *res,
                                             size_t *out,
                                             size_t len);

/**
 * Writes the `n × G` responsibilities of the selected fit, row-major.
 *
 * # Safety
 * `out` must be valid for `len` writes.
 */
enum SscStatus ssc_search_result_responsibilities(const struct SscSearchResult *res,
                                                  double *out,
                                                  size_t len);

/**
 * Free-parameter count `d` for `g` components in `dim` dimensions.
 *
 * # Safety
 * `out` must be writable.
 */
enum SscStatus ssc_count_params(size_t g, size_t dim, uint32_t model, size_t *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum SscStatus ssc_bic_star(double loglik, size_t d, size_t n1, double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum SscStatus ssc_bic_prime(double loglik, size_t d, double m, double *out);

/**
 * Central chi-square CDF; NaN for `df <= 0`.
 */
double ssc_chi2_cdf(double x, double df);

/**
 * Noncentral chi-square CDF; NaN for `df <= 0` or `ncp < 0`.
 */
double ssc_noncentral_chi2_cdf(double x, double df, double ncp);

/**
 * # Safety
 * `out` must be writable.
 */
enum SscStatus ssc_prob_case2a(size_t d, size_t d0, uint64_t n, double m, double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum SscStatus ssc_prob_case2b(size_t d, size_t d0, uint64_t n, double m, double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum SscStatus ssc_prob_nested_limit(size_t d1, size_t d0, uint64_t n, double m, double *out);

/**
 * # Safety
 * `a` and `b` must each hold `n` values; `out` must be writable.
 */
enum SscStatus ssc_ari(const size_t *a, const size_t *b, size_t n, double *out);

/**
 * # Safety
 * `p` and `q` must each hold `k` values; `out` must be writable.
 */
enum SscStatus ssc_hellinger(const double *p, const double *q, size_t k, double *out);

/**
 * Permutation test on `n` items. `lines` holds 0 or 1 per item.
 * `null_samples` may be NULL; otherwise it receives the `permutations`
 * null statistics.
 *
 * # Safety
 * Inputs must hold `n` values, `null_samples` (if non-NULL) room for
 * `permutations` values, and the scalar outputs must be writable.
 */
enum SscStatus ssc_line_difference_test(const size_t *assignments,
                                        const size_t *lines,
                                        size_t n,
                                        size_t permutations,
                                        uint64_t seed,
                                        double *statistic,
                                        double *p_value,
                                        double *null_samples);

/**
 * Answering time from the 29 p-values for `q = 2, ..., 30` in order.
 * Writes `-1` when the test never settles below `alpha`.
 *
 * # Safety
 * `p_values` must hold 29 values; `out` must be writable.
 */
enum SscStatus ssc_answering_time(const double *p_values, double alpha, int64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SSCLUST_H */
