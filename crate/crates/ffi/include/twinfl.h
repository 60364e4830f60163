/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef TWINFL_H
#define TWINFL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TwinflStatus {
  TWINFL_STATUS_OK = 0,
  TWINFL_STATUS_NULL_POINTER = 1,
  TWINFL_STATUS_INVALID_ARGUMENT = 2,
  TWINFL_STATUS_CONFIG = 3,
  TWINFL_STATUS_INFEASIBLE = 4,
  TWINFL_STATUS_NOT_CONVERGED = 5,
  TWINFL_STATUS_IO = 6,
  TWINFL_STATUS_OUT_OF_RANGE = 7,
  TWINFL_STATUS_PANIC = 8,
} TwinflStatus;

// Result of a single allocation round.
typedef struct TwinflAllocation TwinflAllocation;

// Scenario configuration.
typedef struct TwinflScenario TwinflScenario;

// A running simulation.
typedef struct TwinflSimulation TwinflSimulation;

typedef struct TwinflClientDecision {
  size_t id;
  // Transmit power in W.
  double power;
  // CPU frequency in Hz; infinite for the ideal scheme.
  double frequency;
  // Fraction of local data mapped to the twin.
  double fraction;
  // Share of the server CPU.
  double alpha;
  // Uplink rate in bit/s.
  double rate;
} TwinflClientDecision;

typedef struct TwinflCost {
  // Round latency `T` in s.
  double latency;
  // Round energy `E` in J.
  double energy;
  double total;
  double t_cmp;
  double t_com;
  double t_server;
} TwinflCost;

typedef struct TwinflRoundMetrics {
  size_t round;
  double accuracy;
  struct TwinflCost cost;
  // Updates excluded by screening.
  size_t ni_count;
  size_t selected_count;
  // Clients dropped as infeasible before allocation succeeded.
  size_t dropped_count;
} TwinflRoundMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *twinfl_last_error(void);

// Library version as a static NUL-terminated string.
const char *twinfl_version(void);

// Scenario with every key at its default.
struct TwinflScenario *twinfl_scenario_new(void);

// Parses `key = value` lines on top of the defaults.
//
// # Safety
// `text` must be a NUL-terminated string and `result` a valid pointer.
enum TwinflStatus twinfl_scenario_from_text(const char *text, struct TwinflScenario **result);

// Sets one key. The scenario is left unchanged on error.
//
// # Safety
// `scenario` must come from this library; `key` and `value` must be
// NUL-terminated strings.
enum TwinflStatus twinfl_scenario_set(struct TwinflScenario *scenario,
                                      const char *key,
                                      const char *value);

// Writes the scenario as `key = value` text into `buffer`. `needed`
// receives the required size including the terminating NUL; with a null or
// too small buffer nothing is written and `OutOfRange` is returned.
//
// # Safety
// `buffer` must hold `capacity` bytes or be null; `needed` may be null.
enum TwinflStatus twinfl_scenario_to_text(const struct TwinflScenario *scenario,
                                          char *buffer,
                                          size_t capacity,
                                          size_t *needed);

// # Safety
// `scenario` must come from this library and not be used afterwards.
void twinfl_scenario_free(struct TwinflScenario *scenario);

// Solves one allocation round for the top-`N` clients under the
// scenario's scheme, without reselection.
//
// # Safety
// `scenario` must come from this library and `result` be a valid pointer.
enum TwinflStatus twinfl_solve(const struct TwinflScenario *scenario,
                               size_t round,
                               struct TwinflAllocation **result);

// Number of clients in the allocation, 0 for a null handle.
//
// # Safety
// `allocation` must come from this library or be null.
size_t twinfl_allocation_len(const struct TwinflAllocation *allocation);

// # Safety
// `allocation` must come from this library and `decision` be valid.
enum TwinflStatus twinfl_allocation_client(const struct TwinflAllocation *allocation,
                                           size_t index,
                                           struct TwinflClientDecision *decision);

// # Safety
// `allocation` must come from this library and `cost` be valid.
enum TwinflStatus twinfl_allocation_cost(const struct TwinflAllocation *allocation,
                                         struct TwinflCost *cost);

// # Safety
// `allocation` must come from this library and not be used afterwards.
void twinfl_allocation_free(struct TwinflAllocation *allocation);

// Builds the clients, datasets and initial model for a simulation.
//
// # Safety
// `scenario` must come from this library and `result` be a valid pointer.
enum TwinflStatus twinfl_simulation_new(const struct TwinflScenario *scenario,
                                        struct TwinflSimulation **result);

// Runs one round and reports its metrics.
//
// # Safety
// `simulation` must come from this library and `metrics` be valid.
enum TwinflStatus twinfl_simulation_step(struct TwinflSimulation *simulation,
                                         struct TwinflRoundMetrics *metrics);

// # Safety
// `simulation` must come from this library and not be used afterwards.
void twinfl_simulation_free(struct TwinflSimulation *simulation);

// Runs every round of the scenario and writes the metrics CSV to `path`.
//
// # Safety
// `scenario` must come from this library; `path` must be NUL-terminated.
enum TwinflStatus twinfl_simulate_csv(const struct TwinflScenario *scenario, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TWINFL_H */
