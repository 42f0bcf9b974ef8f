#ifndef VALNORM_H
#define VALNORM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define VN_VW_CLAMP 0

#define VN_VW_TRUNCATE 1

#define VN_NORM_ORACLE 0

#define VN_NORM_MEAN 1

#define VN_METHOD_AR_SS 0

#define VN_METHOD_AR_C 1

#define VN_METHOD_AR_DIRECT 2

typedef enum VnStatus {
  VN_STATUS_OK = 0,
  VN_STATUS_NULL_POINTER = 1,
  VN_STATUS_INVALID_ARGUMENT = 2,
  VN_STATUS_OUT_OF_RANGE = 3,
  VN_STATUS_IO = 4,
  VN_STATUS_INTERNAL = 5,
} VnStatus;

/**
 * Grid estimator with cached value demands.
 */
typedef struct VnEstimator VnEstimator;

/**
 * Game history returned by [`vn_run_game`].
 */
typedef struct VnRunLog VnRunLog;

/**
 * Minimum-fitness grid points.
 */
typedef struct VnSolutionSet VnSolutionSet;

typedef struct VnPopulationParams {
  double mu_di;
  double sigma_di;
  double mu_vw;
  double sigma_vw;
  /**
   * `VN_VW_CLAMP` or `VN_VW_TRUNCATE`.
   */
  uint32_t vw_sampling;
} VnPopulationParams;

typedef struct VnGameConfig {
  uint32_t pie;
  uint32_t rounds;
  uint32_t proposers;
  uint32_t responders;
} VnGameConfig;

typedef struct VnGridSpec {
  double di_min;
  double di_max;
  double vw_min;
  double vw_max;
  double step;
} VnGridSpec;

typedef struct VnRoundRecord {
  uint32_t round;
  uint32_t proposer_id;
  uint32_t responder_id;
  uint32_t demand;
  bool accepted;
  double norm_value;
  /**
   * 0 computed, 1 drawn, 2 counterfactual, 3 probed.
   */
  uint32_t norm_source;
  uint32_t threshold;
} VnRoundRecord;

typedef struct VnReductionReport {
  uint32_t initial_solutions;
  uint32_t final_solutions;
  uint32_t interactions;
  double final_fitness;
} VnReductionReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next `vn_` call on the same thread.
 */
const char *vn_last_error(void);

/**
 * Calibrated population parameters (clamped `vw` sampling).
 */
struct VnPopulationParams vn_default_population(void);

struct VnGameConfig vn_default_game(void);

struct VnGridSpec vn_default_grid(void);

/**
 * Value-only utility of demanding `demand` out of `pie`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum VnStatus vn_utility(uint32_t demand, double di, uint32_t pie, double *out);

/**
 * Utility-maximising demand.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum VnStatus vn_value_demand(double di, uint32_t pie, uint32_t *out);

/**
 * Demand of an agent with profile `(di, vw)` facing `norm`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum VnStatus vn_combined_demand(double di, double vw, double norm, uint32_t pie, uint32_t *out);

/**
 * Plays one game.
 *
 * # Safety
 * `params` and `config` must point to valid structs, `out` must be valid
 * for writes. The handle written to `out` is owned by the caller.
 */
enum VnStatus vn_run_game(const struct VnPopulationParams *params,
                          const struct VnGameConfig *config,
                          uint64_t seed,
                          struct VnRunLog **out);

/**
 * # Safety
 * `log` must be null or a handle from [`vn_run_game`] not yet freed.
 */
void vn_run_log_free(struct VnRunLog *log);

/**
 * Number of records (rounds times proposers).
 *
 * # Safety
 * `log` must be a live handle and `out` valid for writes.
 */
enum VnStatus vn_run_log_len(const struct VnRunLog *log, size_t *out);

/**
 * Copies record `index` in play order.
 *
 * # Safety
 * `log` must be a live handle and `out` valid for writes.
 */
enum VnStatus vn_run_log_record(const struct VnRunLog *log,
                                size_t index,
                                struct VnRoundRecord *out);

/**
 * Writes `runs.csv`-format rows to `path`, with header.
 *
 * # Safety
 * `log` must be a live handle and `path` a nul-terminated string.
 */
enum VnStatus vn_run_log_write_csv(const struct VnRunLog *log, const char *path);

/**
 * # Safety
 * `grid` must point to a valid struct and `out` be valid for writes.
 */
enum VnStatus vn_estimator_new(const struct VnGridSpec *grid,
                               uint32_t pie,
                               double tolerance,
                               struct VnEstimator **out);

/**
 * # Safety
 * `est` must be null or a live handle.
 */
void vn_estimator_free(struct VnEstimator *est);

/**
 * Estimates proposer `proposer_id` from its first `m` rounds of `log`.
 *
 * # Safety
 * Handles must be live and `out` valid for writes.
 */
enum VnStatus vn_estimate(const struct VnEstimator *est,
                          const struct VnRunLog *log,
                          size_t proposer_id,
                          size_t m,
                          uint32_t mode,
                          struct VnSolutionSet **out);

/**
 * Runs one elicitation strategy. `norm_lo`/`norm_hi` bound AR-DIRECT
 * probes and are ignored by the other methods. `out_set` may be null.
 *
 * # Safety
 * Handles must be live, `report` valid for writes, `out_set` null or valid
 * for writes.
 */
enum VnStatus vn_reduce(const struct VnEstimator *est,
                        const struct VnRunLog *log,
                        size_t proposer_id,
                        size_t m,
                        uint32_t mode,
                        uint32_t method_code,
                        size_t max_interactions,
                        uint32_t norm_lo,
                        uint32_t norm_hi,
                        struct VnReductionReport *report,
                        struct VnSolutionSet **out_set);

/**
 * # Safety
 * `set` must be null or a live handle.
 */
void vn_solution_set_free(struct VnSolutionSet *set);

/**
 * # Safety
 * `set` must be a live handle and `out` valid for writes.
 */
enum VnStatus vn_solution_set_len(const struct VnSolutionSet *set, size_t *out);

/**
 * Shared minimum fitness (mean absolute demand error).
 *
 * # Safety
 * `set` must be a live handle and `out` valid for writes.
 */
enum VnStatus vn_solution_set_fitness(const struct VnSolutionSet *set, double *out);

/**
 * # Safety
 * `set` must be a live handle; `di` and `vw` valid for writes.
 */
enum VnStatus vn_solution_set_point(const struct VnSolutionSet *set,
                                    size_t index,
                                    double *di,
                                    double *vw);

/**
 * # Safety
 * `set` must be a live handle and `path` a nul-terminated string.
 */
enum VnStatus vn_solution_set_write_csv(const struct VnSolutionSet *set, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VALNORM_H */
