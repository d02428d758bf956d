#ifndef PRUNESIM_H
#define PRUNESIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PsLossModel {
  PS_LOSS_MODEL_PER_PACKET = 0,
  PS_LOSS_MODEL_PER_BYTE = 1,
} PsLossModel;

// Result code of every fallible call.
typedef enum PsStatus {
  PS_STATUS_OK = 0,
  PS_STATUS_NULL_POINTER = 1,
  PS_STATUS_INVALID_ARGUMENT = 2,
  PS_STATUS_IO = 3,
  PS_STATUS_PARSE = 4,
  PS_STATUS_DISCONNECTED = 5,
  PS_STATUS_SIMULATION = 6,
  PS_STATUS_INSUFFICIENT_DATA = 7,
  PS_STATUS_UNDEFINED = 8,
  PS_STATUS_PANIC = 9,
} PsStatus;

typedef enum PsVariant {
  PS_VARIANT_ORIGINAL = 0,
  PS_VARIANT_ENHANCED = 1,
} PsVariant;

// Opaque graph handle.
typedef struct PsGraph PsGraph;

// Opaque run result handle.
typedef struct PsRunMetrics PsRunMetrics;

// Simulation parameters. Zero `window`, `timeout_ticks` and `bandwidth`
// select the defaults; a negative `max_retries` means unbounded.
typedef struct PsSimConfig {
  uint16_t m;
  uint32_t max_iterations;
  double loss_p;
  enum PsLossModel loss_model;
  bool symmetric_loss;
  uint64_t latency_ticks;
  uint16_t window;
  uint64_t timeout_ticks;
  int64_t max_retries;
  uint64_t seed;
  enum PsVariant variant;
  uint64_t payload_bytes;
  uint64_t bandwidth;
} PsSimConfig;

// Aggregate results of one run.
typedef struct PsRunSummary {
  uint64_t node_count;
  uint32_t rounds;
  uint64_t ticks;
  double avg_msgs;
  uint64_t max_msgs;
  uint64_t app_messages_sent;
  uint64_t app_messages_lost;
  double loss_fraction;
  uint64_t mem_proxy;
  uint32_t leader;
  double wall_seconds;
} PsRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer
// stays valid until the next `ps_*` call on the same thread.
const char *ps_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *ps_version(void);

// Loads a graph dump or edge list from `path`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum PsStatus ps_graph_load(const char *path, bool largest_component, struct PsGraph **out);

// Parses a graph dump or edge list held in memory.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum PsStatus ps_graph_parse(const char *text, bool largest_component, struct PsGraph **out);

// Builds a graph on nodes `0..n` from `edge_count` pairs stored flat in
// `edges` (`2 * edge_count` entries).
//
// # Safety
// `edges` must point to `2 * edge_count` readable values.
enum PsStatus ps_graph_from_edges(size_t n,
                                  const uint32_t *edges,
                                  size_t edge_count,
                                  struct PsGraph **out);

// Generates a random geometric graph on a `grid` x `grid` lattice.
//
// # Safety
// `out` must be a valid pointer.
enum PsStatus ps_graph_generate(size_t n,
                                uint32_t grid,
                                double range,
                                uint64_t seed,
                                bool largest_component,
                                struct PsGraph **out);

// Releases a graph. NULL is ignored.
//
// # Safety
// `g` must come from a `ps_graph_*` constructor and not be freed twice.
void ps_graph_free(struct PsGraph *g);

// Node count, or 0 for NULL.
//
// # Safety
// `g` must be NULL or a live graph handle.
size_t ps_graph_node_count(const struct PsGraph *g);

// Edge count, or 0 for NULL.
//
// # Safety
// `g` must be NULL or a live graph handle.
size_t ps_graph_edge_count(const struct PsGraph *g);

// # Safety
// `g` must be a live graph handle and `out` a valid pointer.
enum PsStatus ps_graph_diameter(const struct PsGraph *g, uint32_t *out);

// Exact closeness of `node` as the fraction `numerator / denominator`.
//
// # Safety
// `g` must be a live graph handle; the output pointers must be valid.
enum PsStatus ps_exact_closeness(const struct PsGraph *g,
                                 uint32_t node,
                                 uint64_t *numerator,
                                 uint64_t *denominator);

// # Safety
// `g` must be a live graph handle and `out` a valid pointer.
enum PsStatus ps_hop_distance(const struct PsGraph *g, uint32_t i, uint32_t j, uint32_t *out);

// Defaults: m = 1, D = 12, no loss, latency 1, unbounded retries, original variant.
struct PsSimConfig ps_sim_config_default(void);

// Runs one simulation. `config` may be NULL for the defaults.
//
// # Safety
// `g` must be a live graph handle, `config` NULL or valid, `out` valid.
enum PsStatus ps_simulate(const struct PsGraph *g,
                          const struct PsSimConfig *config,
                          struct PsRunMetrics **out);

// Releases a run result. NULL is ignored.
//
// # Safety
// `m` must come from [`ps_simulate`] and not be freed twice.
void ps_metrics_free(struct PsRunMetrics *m);

// # Safety
// `m` must be a live result handle and `out` a valid pointer.
enum PsStatus ps_metrics_summary(const struct PsRunMetrics *m, struct PsRunSummary *out);

// DATA packets sent by `node`, retransmissions included.
//
// # Safety
// `m` must be a live result handle and `out` a valid pointer.
enum PsStatus ps_metrics_packets_sent(const struct PsRunMetrics *m, uint32_t node, uint64_t *out);

// Final closeness estimate of `node` as a fraction.
//
// # Safety
// `m` must be a live result handle; the output pointers must be valid.
enum PsStatus ps_metrics_estimate(const struct PsRunMetrics *m,
                                  uint32_t node,
                                  uint64_t *numerator,
                                  uint64_t *denominator);

// Two-sided Wilcoxon signed-rank p-value of paired differences.
//
// # Safety
// `diffs` must point to `len` readable values and `out` must be valid.
enum PsStatus ps_wilcoxon(const double *diffs, size_t len, double *out);

// Mean over sample standard deviation of paired differences.
//
// # Safety
// `diffs` must point to `len` readable values and `out` must be valid.
enum PsStatus ps_effect_size(const double *diffs, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PRUNESIM_H */
