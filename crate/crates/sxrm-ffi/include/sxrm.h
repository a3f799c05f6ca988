/* C interface for the sxrm low-rank matrix recovery library. */

#ifndef SXRM_H
#define SXRM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum SxrmStatus {
  SXRM_STATUS_OK = 0,
  SXRM_STATUS_NULL_POINTER = 1,
  SXRM_STATUS_BAD_PARAMETER = 2,
  SXRM_STATUS_DIMENSION_MISMATCH = 3,
  SXRM_STATUS_NON_FINITE = 4,
  SXRM_STATUS_IO_ERROR = 5,
  SXRM_STATUS_BAD_FILE = 6,
  SXRM_STATUS_SIZE_CAP_EXCEEDED = 7,
  SXRM_STATUS_DECOMPOSITION_FAILED = 8,
  SXRM_STATUS_INTERNAL = 9,
} SxrmStatus;

/**
 * Operator ensembles.
 */
typedef enum SxrmEnsemble {
  SXRM_ENSEMBLE_GAUSSIAN = 0,
  SXRM_ENSEMBLE_SPARSE_ONEHOT = 1,
} SxrmEnsemble;

/**
 * Outcome classification mirrored from the recovery module.
 */
typedef enum SxrmRecoveryOutcome {
  SXRM_RECOVERY_EXACT = 0,
  SXRM_RECOVERY_APPROXIMATE = 1,
  SXRM_RECOVERY_FAILED_INCONSISTENT = 2,
  SXRM_RECOVERY_DEGENERATE_SUBSPACE = 3,
} SxrmRecoveryOutcome;

/**
 * Opaque measurement-operator handle. Create with one of the
 * `sxrm_operator_*` constructors, release with `sxrm_operator_free`.
 */
typedef struct SxrmOperator SxrmOperator;

/**
 * Operator metadata.
 */
typedef struct SxrmOperatorInfo {
  uint32_t n;
  uint32_t m;
  uint32_t d;
  enum SxrmEnsemble ensemble;
  uint64_t seed;
} SxrmOperatorInfo;

/**
 * Options for `sxrm_recover`. Non-positive fields select defaults.
 */
typedef struct SxrmRecoverOptions {
  /**
   * Relative rank-tolerance factor (default: machine epsilon).
   */
  double rank_tol_factor;
  /**
   * Residual threshold classifying the result as exact (default 1e-8).
   */
  double exact_tol;
} SxrmRecoverOptions;

/**
 * Result summary for `sxrm_recover`.
 */
typedef struct SxrmRecoveryInfo {
  enum SxrmRecoveryOutcome outcome;
  uint32_t subspace_dim;
  uint32_t rank_y;
  double residual_rel;
} SxrmRecoveryInfo;

/**
 * Options for `sxrm_trace_min`. Non-positive fields select defaults.
 */
typedef struct SxrmTraceMinOptions {
  /**
   * Iteration budget (default 2000).
   */
  int64_t max_iters;
  /**
   * ADMM penalty parameter (default 1.0).
   */
  double penalty;
  /**
   * Stop tolerance on residual and iterate change (default 1e-7).
   */
  double stop_tol;
  /**
   * Trace objective weight (default 1.0).
   */
  double trace_weight;
} SxrmTraceMinOptions;

/**
 * Result summary for `sxrm_trace_min`.
 */
typedef struct SxrmTraceMinInfo {
  uint64_t iterations;
  bool converged;
  double residual_rel;
} SxrmTraceMinInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Generate a Gaussian-ensemble operator.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one pointer.
 */
enum SxrmStatus sxrm_operator_gen_gaussian(uint32_t n,
                                           uint32_t m,
                                           uint32_t d,
                                           uint64_t seed,
                                           struct SxrmOperator **out);

/**
 * Generate a sparse one-hot-ensemble operator.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one pointer.
 */
enum SxrmStatus sxrm_operator_gen_sparse_onehot(uint32_t n,
                                                uint32_t m,
                                                uint32_t d,
                                                uint64_t seed,
                                                struct SxrmOperator **out);

/**
 * Read an operator from a file in the binary operator format.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` as in the constructors.
 */
enum SxrmStatus sxrm_operator_read(const char *path, struct SxrmOperator **out);

/**
 * Write an operator to a file in the binary operator format.
 *
 * # Safety
 * `op` must be a live handle; `path` a NUL-terminated string.
 */
enum SxrmStatus sxrm_operator_write(const struct SxrmOperator *op, const char *path);

/**
 * Release an operator handle. Passing NULL is a no-op.
 *
 * # Safety
 * `op` must be NULL or a handle returned by a constructor, not yet freed.
 */
void sxrm_operator_free(struct SxrmOperator *op);

/**
 * Fetch operator metadata.
 *
 * # Safety
 * `op` must be a live handle; `info` valid writable storage.
 */
enum SxrmStatus sxrm_operator_info(const struct SxrmOperator *op, struct SxrmOperatorInfo *info);

/**
 * Apply the operator: `Y = A(X)`.
 *
 * # Safety
 * `x` must point to n*n readable f64 values (column-major); `y_out` to
 * m*m writable values. Buffers must not alias.
 */
enum SxrmStatus sxrm_apply(const struct SxrmOperator *op, const double *x, double *y_out);

/**
 * Apply the adjoint: `X = A*(Y)`.
 *
 * # Safety
 * `y` must point to m*m readable f64 values (column-major); `x_out` to
 * n*n writable values. Buffers must not alias.
 */
enum SxrmStatus sxrm_adjoint(const struct SxrmOperator *op, const double *y, double *x_out);

/**
 * Recover X from a measurement by subspace identification.
 *
 * # Safety
 * `y` must point to m*m readable f64 values; `x_out` to n*n writable
 * values. `options` may be NULL for defaults; `info` may be NULL when
 * the caller only wants the matrix.
 */
enum SxrmStatus sxrm_recover(const struct SxrmOperator *op,
                             const double *y,
                             const struct SxrmRecoverOptions *options,
                             double *x_out,
                             struct SxrmRecoveryInfo *info);

/**
 * Approximate the trace-minimal PSD preimage of a measurement.
 *
 * # Safety
 * As for `sxrm_recover`, with `options`/`info` of the trace-min types.
 */
enum SxrmStatus sxrm_trace_min(const struct SxrmOperator *op,
                               const double *y,
                               const struct SxrmTraceMinOptions *options,
                               double *x_out,
                               struct SxrmTraceMinInfo *info);

/**
 * Human-readable description of a status code. The returned string is
 * static; do not free it.
 */
const char *sxrm_strerror(enum SxrmStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SXRM_H */
