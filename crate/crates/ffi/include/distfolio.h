#ifndef DISTFOLIO_H
#define DISTFOLIO_H

/* Generated by cbindgen from distfolio-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every FFI call.
 */
typedef enum DfStatus {
  /**
   * Success.
   */
  DF_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  DF_STATUS_NULL_ARGUMENT = 1,
  /**
   * Invalid configuration or parameter value.
   */
  DF_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Data, shape, or domain violation (including I/O and checkpoints).
   */
  DF_STATUS_DATA_ERROR = 3,
  /**
   * Optimization or numerical failure.
   */
  DF_STATUS_NUMERICAL_ERROR = 4,
  /**
   * A string argument was not valid UTF-8.
   */
  DF_STATUS_UTF8_ERROR = 5,
  /**
   * An internal panic was caught at the boundary.
   */
  DF_STATUS_PANIC = 6,
} DfStatus;

/**
 * Opaque handle to a loaded student checkpoint.
 */
typedef struct DfStudent DfStudent;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *df_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *df_version(void);

/**
 * Solve the long-only CVaR allocation over `n_scenarios` x `n_assets`
 * row-major scenario returns at tail level `alpha`. Writes `n_assets`
 * weights plus the objective (CVaR of loss), the VaR level, and a 0/1
 * convergence-certificate flag.
 *
 * # Safety
 * `scenarios` must hold `n_scenarios * n_assets` doubles;
 * `out_weights` must hold `n_assets` doubles; scalar out-pointers must
 * be valid.
 */
enum DfStatus df_cvar_teacher_solve(const double *scenarios,
                                    size_t n_scenarios,
                                    size_t n_assets,
                                    double alpha,
                                    double *out_weights,
                                    double *out_objective,
                                    double *out_var_level,
                                    int32_t *out_converged);

/**
 * Empirical CVaR of `losses` at tail level `alpha`: the mean of the
 * worst ceil((1-alpha)*len) losses.
 *
 * # Safety
 * `losses` must hold `len` doubles; `out` must be valid.
 */
enum DfStatus df_empirical_cvar(const double *losses, size_t len, double alpha, double *out);

/**
 * Euclidean projection of `len` values onto the probability simplex.
 *
 * # Safety
 * `v` and `out` must each hold `len` doubles.
 */
enum DfStatus df_project_simplex(const double *v, size_t len, double *out);

/**
 * Cap every weight at `w_max` and renormalize to the simplex.
 *
 * # Safety
 * `weights` and `out` must each hold `len` doubles; `weights` must
 * already lie on the simplex.
 */
enum DfStatus df_clip_renormalize(const double *weights, size_t len, double w_max, double *out);

/**
 * Execute a rebalance from `prev` toward `target` under a position cap,
 * a one-way turnover cap, and a proportional cost rate. Writes the
 * executed weights, realized one-way turnover, and cost.
 *
 * # Safety
 * `prev`, `target`, and `out_weights` must each hold `len` doubles;
 * scalar out-pointers must be valid.
 */
enum DfStatus df_execute_rebalance(const double *prev,
                                   const double *target,
                                   size_t len,
                                   double w_max,
                                   double to_max,
                                   double cost_rate,
                                   double *out_weights,
                                   double *out_turnover,
                                   double *out_cost);

/**
 * Annualized Sharpe ratio (weekly mean over sample std, scaled by
 * sqrt(52)). `*out_defined` is 0 when the std is zero; `*out` is then
 * left untouched.
 *
 * # Safety
 * `returns` must hold `len` doubles; out-pointers must be valid.
 */
enum DfStatus df_sharpe_annualized(const double *returns,
                                   size_t len,
                                   double *out,
                                   int32_t *out_defined);

/**
 * Maximum drawdown of compounded wealth, as a positive fraction.
 *
 * # Safety
 * `returns` must hold `len` doubles; `out` must be valid.
 */
enum DfStatus df_max_drawdown(const double *returns, size_t len, double *out);

/**
 * CVaR of weekly returns at `alpha`, reported in return units
 * (negative = tail losses).
 *
 * # Safety
 * `returns` must hold `len` doubles; `out` must be valid.
 */
enum DfStatus df_cvar_report(const double *returns, size_t len, double alpha, double *out);

/**
 * Mean weekly return scaled to a 52-week year.
 *
 * # Safety
 * `returns` must hold `len` doubles; `out` must be valid.
 */
enum DfStatus df_annualized_return(const double *returns, size_t len, double *out);

/**
 * Sample std of weekly returns scaled by sqrt(52).
 *
 * # Safety
 * `returns` must hold `len` doubles; `out` must be valid.
 */
enum DfStatus df_annualized_vol(const double *returns, size_t len, double *out);

/**
 * Load a student checkpoint from a JSON file written by the trainer.
 * On success `*out` owns the handle; release it with `df_student_free`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid.
 */
enum DfStatus df_student_load(const char *path, struct DfStudent **out);

/**
 * Release a handle returned by `df_student_load`. Null is a no-op.
 *
 * # Safety
 * `student` must be a handle from `df_student_load` not yet freed.
 */
void df_student_free(struct DfStudent *student);

/**
 * Flattened feature dimension the student expects; 0 on a null handle.
 *
 * # Safety
 * `student` must be a live handle or null.
 */
size_t df_student_input_dim(const struct DfStudent *student);

/**
 * Number of assets the student allocates over; 0 on a null handle.
 *
 * # Safety
 * `student` must be a live handle or null.
 */
size_t df_student_n_assets(const struct DfStudent *student);

/**
 * Student variant name ("dnn_sup", "bnn_sandwich", ...); a static
 * string, or null on a null handle.
 *
 * # Safety
 * `student` must be a live handle or null.
 */
const char *df_student_kind(const struct DfStudent *student);

/**
 * 1 when the student carries variational layers, else 0.
 *
 * # Safety
 * `student` must be a live handle or null.
 */
int32_t df_student_is_bayesian(const struct DfStudent *student);

/**
 * Deterministic forward pass: raw (unstandardized) features in, simplex
 * weights out. Bayesian students use their mean parameters.
 *
 * # Safety
 * `x` must hold `x_len` doubles and `out_weights` must hold `out_len`
 * doubles; `student` must be a live handle.
 */
enum DfStatus df_student_predict(const struct DfStudent *student,
                                 const double *x,
                                 size_t x_len,
                                 double *out_weights,
                                 size_t out_len);

/**
 * Monte Carlo forward pass averaging `draws` stochastic passes under
 * `seed`; deterministic students return the plain forward pass.
 *
 * # Safety
 * Same as `df_student_predict`.
 */
enum DfStatus df_student_predict_mc(const struct DfStudent *student,
                                    const double *x,
                                    size_t x_len,
                                    size_t draws,
                                    uint64_t seed,
                                    double *out_weights,
                                    size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DISTFOLIO_H */
