#ifndef GPUPLAN_H
#define GPUPLAN_H

#pragma once

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GpuplanStatus {
  GPUPLAN_STATUS_OK = 0,
  GPUPLAN_STATUS_NULL_ARGUMENT = 1,
  GPUPLAN_STATUS_INVALID_UTF8 = 2,
  GPUPLAN_STATUS_PARSE_ERROR = 3,
  GPUPLAN_STATUS_INVALID_INPUT = 4,
  GPUPLAN_STATUS_INFEASIBLE = 5,
  GPUPLAN_STATUS_UNSTABLE_QUEUE = 6,
  GPUPLAN_STATUS_PANIC = 99,
} GpuplanStatus;

/**
 * A provisioning plan.
 */
typedef struct GpuplanPlan GpuplanPlan;

/**
 * A loaded problem.
 */
typedef struct GpuplanProblem GpuplanProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses a problem document. Relative file references resolve against
 * `base_dir`, or the working directory when it is null.
 */
enum GpuplanStatus gpuplan_problem_from_json(const char *json,
                                             const char *base_dir,
                                             struct GpuplanProblem **out);

void gpuplan_problem_free(struct GpuplanProblem *problem);

/**
 * Plans with `strategy` (`igniter`, `ffd`, `bestfit` or `oracle`) on
 * `gpu_type`, or on the cheapest type when `gpu_type` is null or `auto`.
 */
enum GpuplanStatus gpuplan_plan(const struct GpuplanProblem *problem,
                                const char *strategy,
                                const char *gpu_type,
                                struct GpuplanPlan **out);

void gpuplan_plan_free(struct GpuplanPlan *plan);

enum GpuplanStatus gpuplan_plan_to_json(const struct GpuplanPlan *plan, char **out);

enum GpuplanStatus gpuplan_plan_from_json(const char *json, struct GpuplanPlan **out);

enum GpuplanStatus gpuplan_plan_gpu_count(const struct GpuplanPlan *plan, size_t *out);

/**
 * Hourly cost in dollars.
 */
enum GpuplanStatus gpuplan_plan_cost(const struct GpuplanPlan *plan, double *out);

/**
 * Number of workloads whose predicted latency or throughput misses its SLO.
 */
enum GpuplanStatus gpuplan_plan_violation_count(const struct GpuplanPlan *plan, size_t *out);

/**
 * Replays `plan` with constant arrivals and writes the report as JSON.
 */
enum GpuplanStatus gpuplan_simulate(const struct GpuplanProblem *problem,
                                    const struct GpuplanPlan *plan,
                                    double duration_ms,
                                    double warmup_ms,
                                    char **out_json);

/**
 * Smallest batch that sustains `rate_rps` when execution takes half of
 * `slo_ms`.
 */
enum GpuplanStatus gpuplan_appropriate_batch(double slo_ms,
                                             double rate_rps,
                                             double d_load_mb,
                                             double pcie_bw_mb_per_ms,
                                             uint32_t b_max,
                                             uint32_t *out);

void gpuplan_string_free(char *s);

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next call into this library on the same thread.
 */
const char *gpuplan_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GPUPLAN_H */
