#ifndef LSQOPT_H
#define LSQOPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum LsqoptStatus {
  LSQOPT_STATUS_OK = 0,
  LSQOPT_STATUS_NULL_POINTER = 1,
  LSQOPT_STATUS_INVALID_UTF8 = 2,
  LSQOPT_STATUS_CONFIG = 3,
  LSQOPT_STATUS_DOMAIN = 4,
  LSQOPT_STATUS_NUMERICAL = 5,
  LSQOPT_STATUS_RANK_DEFICIENT = 6,
  LSQOPT_STATUS_DIVERGENCE = 7,
  LSQOPT_STATUS_PARSE = 8,
  LSQOPT_STATUS_FORMAT = 9,
  LSQOPT_STATUS_EXPERIMENT = 10,
  LSQOPT_STATUS_IO = 11,
  LSQOPT_STATUS_BUFFER_TOO_SMALL = 12,
  LSQOPT_STATUS_PANIC = 13,
} LsqoptStatus;

typedef enum LsqoptDecay {
  LSQOPT_DECAY_EXPONENTIAL = 0,
  LSQOPT_DECAY_ALGEBRAIC = 1,
} LsqoptDecay;

typedef enum LsqoptAlgorithm {
  LSQOPT_ALGORITHM_SGA_RMSPROP = 0,
  LSQOPT_ALGORITHM_RMSPROP = 1,
  LSQOPT_ALGORITHM_SGD = 2,
  LSQOPT_ALGORITHM_RMSP2SGD = 3,
} LsqoptAlgorithm;

// Opaque instance handle.
typedef struct LsqoptInstance LsqoptInstance;

// Opaque run handle.
typedef struct LsqoptRun LsqoptRun;

// Synthetic instance parameters. `noise_radius > 0` makes the instance inconsistent.
typedef struct LsqoptProblemSpec {
  enum LsqoptDecay decay;
  double kappa;
  double q;
  double lambda_d;
  size_t n;
  size_t d;
  double noise_radius;
  uint64_t seed;
} LsqoptProblemSpec;

// Closed-form bounds for one configuration.
typedef struct LsqoptBounds {
  double sigma;
  double weighted_max;
  double eps_max_theorem;
  double eps_max_corollary;
  uint64_t batch_min;
  double rate_bound;
  double h_bound;
  double confusion_radius;
} LsqoptBounds;

// Options of a single run. Zero or negative values select the defaults noted per field.
typedef struct LsqoptRunOptions {
  enum LsqoptAlgorithm algorithm;
  size_t batch_size;
  // 1, 2 or 3; 0 uses `epsilon` instead.
  uint8_t epsilon_preset;
  double epsilon;
  // ≤ 0: derived from the first gradient with `u_upper_decade`.
  double u_upper;
  // ≤ 0: `u_upper / u_ratio`.
  double u_lower;
  double u_ratio;
  int32_t u_upper_decade;
  // ≤ 0: rule chosen by algorithm and batch regime.
  double eta;
  size_t max_iters;
  // ≤ 0: run all `max_iters` steps.
  double tol;
  uint64_t seed;
} LsqoptRunOptions;

// Scalar results of a run; `-1` marks an absent count.
typedef struct LsqoptRunSummary {
  size_t iterations;
  int64_t iters_to_converge;
  int64_t switch_iter;
  double final_rel_error;
  size_t trace_len;
  double u_lower;
  double u_upper;
  double eta;
  double wall_ms;
} LsqoptRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *lsqopt_version(void);

// Copies the calling thread's last error message into `buf` (NUL-terminated, truncated
// to `len`). Returns the full message length in bytes, excluding the NUL.
//
// # Safety
// `buf` must be null or valid for `len` writes.
size_t lsqopt_last_error(char *buf, size_t len);

// Generates a synthetic instance.
//
// # Safety
// `spec` must point to a valid spec and `out` to writable storage for a handle.
enum LsqoptStatus lsqopt_instance_generate(const struct LsqoptProblemSpec *spec,
                                           struct LsqoptInstance **out);

// Builds an instance from a row-major `n × d` matrix and right-hand side; `x*` is
// the least-squares solution.
//
// # Safety
// `a` must hold `n·d` values, `b` must hold `n`, `out` must be writable.
enum LsqoptStatus lsqopt_instance_from_data(size_t n,
                                            size_t d,
                                            const double *a,
                                            const double *b,
                                            struct LsqoptInstance **out);

// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum LsqoptStatus lsqopt_instance_load(const char *path, struct LsqoptInstance **out);

// # Safety
// `inst` must be a live handle and `path` a NUL-terminated string.
enum LsqoptStatus lsqopt_instance_save(const struct LsqoptInstance *inst, const char *path);

// # Safety
// `inst` must be a live handle; `n` and `d` may be null.
enum LsqoptStatus lsqopt_instance_dims(const struct LsqoptInstance *inst, size_t *n, size_t *d);

// Copies `x*` into `out`, which must hold at least `d` values.
//
// # Safety
// `inst` must be a live handle and `out` valid for `len` writes.
enum LsqoptStatus lsqopt_instance_x_star(const struct LsqoptInstance *inst,
                                         double *out,
                                         size_t len);

// # Safety
// `inst` must be null or a handle returned by this library, not yet freed.
void lsqopt_instance_free(struct LsqoptInstance *inst);

// Evaluates the bounds at squared-norm sampling.
//
// # Safety
// `inst` must be a live handle and `out` writable.
enum LsqoptStatus lsqopt_bounds(const struct LsqoptInstance *inst,
                                size_t batch_size,
                                double u_lower,
                                double u_upper,
                                struct LsqoptBounds *out);

// Defaults: SGA-RMSProp, B = 50, first ε preset, automatic bounds (decade 2, ratio 5),
// 10⁴ iterations, tolerance 10⁻⁴, seed 0.
struct LsqoptRunOptions lsqopt_run_options_default(void);

// Runs one optimization with mini-batches drawn at squared-norm probabilities.
//
// # Safety
// `inst` must be a live handle, `options` valid and `out` writable.
enum LsqoptStatus lsqopt_run(const struct LsqoptInstance *inst,
                             const struct LsqoptRunOptions *options,
                             struct LsqoptRun **out);

// # Safety
// `run` must be a live handle and `out` writable.
enum LsqoptStatus lsqopt_run_summary(const struct LsqoptRun *run, struct LsqoptRunSummary *out);

// Copies the relative-error trace; `len` must be at least `trace_len`.
//
// # Safety
// `run` must be a live handle and `out` valid for `len` writes.
enum LsqoptStatus lsqopt_run_trace(const struct LsqoptRun *run, double *out, size_t len);

// Copies the final iterate; `len` must be at least `d`.
//
// # Safety
// `run` must be a live handle and `out` valid for `len` writes.
enum LsqoptStatus lsqopt_run_final_x(const struct LsqoptRun *run, double *out, size_t len);

// # Safety
// `run` must be null or a handle returned by this library, not yet freed.
void lsqopt_run_free(struct LsqoptRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LSQOPT_H */
