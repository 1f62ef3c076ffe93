#ifndef ODFLOW_H
#define ODFLOW_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a call.
typedef enum OdflowStatus {
  ODFLOW_STATUS_OK = 0,
  ODFLOW_STATUS_NULL_ARGUMENT = 1,
  ODFLOW_STATUS_INVALID_STRING = 2,
  ODFLOW_STATUS_CONFIG = 3,
  ODFLOW_STATUS_INPUT = 4,
  ODFLOW_STATUS_SOLVER = 5,
  ODFLOW_STATUS_PANIC = 6,
} OdflowStatus;

// A validated instance with its candidate-transfer graph.
typedef struct OdflowInstance OdflowInstance;

// A solved instance: stop-level O-D matrix and solver statistics.
typedef struct OdflowResult OdflowResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *odflow_last_error(void);

// Loads stops, segments and rates from CSV files and builds candidate
// transfers with the given walking (metres) and waiting (seconds) limits.
//
// # Safety
// Path arguments must be null or valid NUL-terminated strings; `out` must
// be a valid pointer.
enum OdflowStatus odflow_instance_load(const char *stops_csv,
                                       const char *segments_csv,
                                       const char *rates_csv,
                                       double max_walk_m,
                                       int64_t max_transfer_s,
                                       struct OdflowInstance **out);

// # Safety
// `inst` must be null or a handle from [`odflow_instance_load`] not yet freed.
void odflow_instance_free(struct OdflowInstance *inst);

// Number of segments, or 0 for a null handle.
//
// # Safety
// `inst` must be null or a live instance handle.
uintptr_t odflow_instance_segment_count(const struct OdflowInstance *inst);

// Number of candidate transfers, or 0 for a null handle.
//
// # Safety
// `inst` must be null or a live instance handle.
uintptr_t odflow_instance_arc_count(const struct OdflowInstance *inst);

// Total observed transfers implied by the rates, or 0 for a null handle.
//
// # Safety
// `inst` must be null or a live instance handle.
uint64_t odflow_instance_observed_transfers(const struct OdflowInstance *inst);

// Solves the exact L1 program.
//
// # Safety
// `inst` must be a live instance handle and `out` a valid pointer.
enum OdflowStatus odflow_solve_ip(const struct OdflowInstance *inst, struct OdflowResult **out);

// Solves the convex relaxation to a certified gap of `tol` and rounds it.
//
// # Safety
// `inst` must be a live instance handle and `out` a valid pointer.
enum OdflowStatus odflow_solve_qcp(const struct OdflowInstance *inst,
                                   double tol,
                                   uintptr_t max_iter,
                                   struct OdflowResult **out);

// # Safety
// `res` must be null or a result handle not yet freed.
void odflow_result_free(struct OdflowResult *res);

// Solver objective; NaN for a null handle.
//
// # Safety
// `res` must be null or a live result handle.
double odflow_result_objective(const struct OdflowResult *res);

// Branch-and-bound nodes or relaxation iterations.
//
// # Safety
// `res` must be null or a live result handle.
uint64_t odflow_result_iterations(const struct OdflowResult *res);

// Solver wall time in seconds.
//
// # Safety
// `res` must be null or a live result handle.
double odflow_result_wall_time(const struct OdflowResult *res);

// Sum of all O-D entries.
//
// # Safety
// `res` must be null or a live result handle.
double odflow_result_total_trips(const struct OdflowResult *res);

// Number of nonzero stop pairs.
//
// # Safety
// `res` must be null or a live result handle.
uintptr_t odflow_result_entry_count(const struct OdflowResult *res);

// Flow between two stops by id; 0 for unknown ids or null arguments.
//
// # Safety
// `res` must be null or a live result handle; the ids must be null or valid
// NUL-terminated strings.
double odflow_result_flow(const struct OdflowResult *res, const char *origin, const char *dest);

// Writes the stop-level matrix as `origin_zone,dest_zone,flow`.
//
// # Safety
// `res` must be a live result handle; `path` a valid NUL-terminated string.
enum OdflowStatus odflow_result_write_csv(const struct OdflowResult *res, const char *path);

// Runs the whole pipeline described by a TOML configuration file.
//
// # Safety
// `config_path` must be a valid NUL-terminated string.
enum OdflowStatus odflow_run_config(const char *config_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ODFLOW_H */
