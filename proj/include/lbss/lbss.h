/*
 * lbss: steady-state analysis of many-server load balancing with finite
 * buffers. Plain C interface over the C++ core.
 *
 * Conventions: every fallible call returns an lbss_status; on failure
 * lbss_last_error() describes the most recent error on the calling thread.
 * Objects are opaque handles released with the matching *_destroy function
 * (passing NULL is a no-op). Handles are immutable after creation and may be
 * shared between threads.
 */
#ifndef LBSS_LBSS_H
#define LBSS_LBSS_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(LBSS_BUILDING)
#    define LBSS_API __declspec(dllexport)
#  else
#    define LBSS_API __declspec(dllimport)
#  endif
#else
#  define LBSS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lbss_status {
  LBSS_OK = 0,
  LBSS_ERR_INVALID_ARGUMENT = 1,
  LBSS_ERR_INVALID_CONFIG = 2,
  LBSS_ERR_CAP_EXCEEDED = 3,
  LBSS_ERR_INCONSISTENT_LAW = 4,
  LBSS_ERR_REDUCIBLE = 5,
  LBSS_ERR_NOT_CONVERGED = 6,
  LBSS_ERR_DEGENERATE_LOAD = 7,
  LBSS_ERR_INVALID_SPEC = 8,
  LBSS_ERR_TOO_FEW_BATCHES = 9,
  LBSS_ERR_NONPOSITIVE_GAMMA = 10,
  LBSS_ERR_UNSUPPORTED_POLICY = 11,
  LBSS_ERR_SCHEMA_MISMATCH = 12,
  LBSS_ERR_PARSE = 13,
  LBSS_ERR_IO = 14,
  LBSS_ERR_DOMAIN = 15,
  LBSS_ERR_INTERNAL = 99
} lbss_status;

typedef struct lbss_config lbss_config;
typedef struct lbss_policy lbss_policy;
typedef struct lbss_exact lbss_exact;

LBSS_API const char* lbss_version(void);
LBSS_API const char* lbss_status_string(lbss_status status);
/* Message of the last failed call on this thread; "" when none. */
LBSS_API const char* lbss_last_error(void);

/* ---- configuration ---------------------------------------------------- */

/* lambda = 1 - N^(-alpha), alpha in (0, 0.5), b >= 2 */
LBSS_API lbss_status lbss_config_create_alpha(int64_t servers, double alpha, int b, lbss_config** out);
/* lambda in [0, 1), b >= 2 */
LBSS_API lbss_status lbss_config_create_lambda(int64_t servers, double lambda, int b, lbss_config** out);
LBSS_API void lbss_config_destroy(lbss_config* config);

typedef struct lbss_config_info {
  int64_t servers;
  int b;
  double lambda;
  double alpha; /* NaN when lambda was given directly */
  double k;
  double k_tilde;
  double tau;
} lbss_config_info;

LBSS_API lbss_status lbss_config_describe(const lbss_config* config, lbss_config_info* out);

/* ---- policies --------------------------------------------------------- */

/* "jsq" | "i1f" | "jiq" | "pod:<d>" | "pod:auto" | "random" */
LBSS_API lbss_status lbss_policy_parse(const char* text, const lbss_config* config, lbss_policy** out);
LBSS_API void lbss_policy_destroy(lbss_policy* policy);
/* Writes the canonical name (e.g. "pod:872") including the terminator;
 * returns the length needed excluding the terminator. */
LBSS_API size_t lbss_policy_name(const lbss_policy* policy, char* buffer, size_t capacity);

/* A_0..A_b for the occupancy counts n_0..n_b (levels = b + 1 entries). */
LBSS_API lbss_status lbss_routing_law(const lbss_policy* policy, const int32_t* counts, size_t levels,
                                      double* law_out);

typedef struct lbss_condition {
  double threshold;
  double limit;
  double max_a1;
  int satisfied;
  int region_saturated;
  size_t checked_states; /* 0 in formula mode */
} lbss_condition;

/* exhaustive != 0 enumerates the state space; otherwise the closed-form
 * envelope is used. */
LBSS_API lbss_status lbss_condition_report(const lbss_policy* policy, const lbss_config* config, int exhaustive,
                                           lbss_condition* out);

/* ---- exact stationary analysis ---------------------------------------- */

typedef struct lbss_metrics {
  double mean_total;
  double excess;
  double p_wait;
  double p_block;
  double mean_wait;
} lbss_metrics;

/* Builds the generator and solves for the stationary distribution.
 * state_cap = 0 uses the default cap. */
LBSS_API lbss_status lbss_exact_solve(const lbss_config* config, const lbss_policy* policy, size_t state_cap,
                                      lbss_exact** out);
LBSS_API void lbss_exact_destroy(lbss_exact* exact);
LBSS_API size_t lbss_exact_state_count(const lbss_exact* exact);
/* Counts of state `index` into counts_out (b + 1 entries). */
LBSS_API lbss_status lbss_exact_state(const lbss_exact* exact, size_t index, int32_t* counts_out, size_t levels);
LBSS_API lbss_status lbss_exact_probabilities(const lbss_exact* exact, double* out, size_t capacity);
LBSS_API double lbss_exact_residual(const lbss_exact* exact);
LBSS_API lbss_status lbss_exact_metrics(const lbss_exact* exact, lbss_metrics* out);
/* CSV: n0,...,nb,probability */
LBSS_API lbss_status lbss_exact_write_csv(const lbss_exact* exact, const char* path);

typedef struct lbss_stein_check {
  double direct;
  double generator;
  double identity_residual;
  double term_main;
  double term_curvature;
  double term_boundary;
  int inequality_holds;
} lbss_stein_check;

LBSS_API lbss_status lbss_exact_stein_check(const lbss_exact* exact, lbss_stein_check* out);

typedef struct lbss_tail_check {
  int applicable;
  int vacuous;
  double gamma;
  double level;
  double nu_max;
  double q_max;
  size_t rows;
  size_t violations;
} lbss_tail_check;

LBSS_API lbss_status lbss_exact_tail_check(const lbss_exact* exact, lbss_tail_check* out);

/* ---- simulation ------------------------------------------------------- */

typedef struct lbss_sim_spec {
  double horizon;
  double warmup; /* negative: 10% of horizon */
  int batches;
  uint64_t seed;
} lbss_sim_spec;

typedef struct lbss_estimate {
  double mean;
  double half_width;
  int batches_used;
} lbss_estimate;

typedef struct lbss_sim_metrics {
  lbss_estimate mean_total;
  lbss_estimate excess;
  lbss_estimate p_wait;
  lbss_estimate p_block;
  lbss_estimate mean_wait;
  lbss_estimate p_wait_arrival;
  uint64_t events;
  uint64_t arrivals;
} lbss_sim_metrics;

LBSS_API lbss_status lbss_simulate(const lbss_config* config, const lbss_policy* policy, const lbss_sim_spec* spec,
                                   lbss_sim_metrics* out);
LBSS_API lbss_status lbss_batch_means(const double* batches, size_t count, lbss_estimate* out);

/* ---- bound formulas --------------------------------------------------- */

LBSS_API lbss_status lbss_theorem_bound(const lbss_config* config, double* stated, double* proof);
LBSS_API lbss_status lbss_ssc_bound(const lbss_config* config, double* out);
LBSS_API lbss_status lbss_tail_bound(double gamma, double level, double nu_max, double q_max, int j, double* out);

/* ---- experiment orchestration ----------------------------------------- */

typedef struct lbss_run_options {
  int threads;        /* <= 0 means 1 */
  int has_seed;       /* nonzero: override the config seed */
  uint64_t seed;
  const char* out_dir; /* NULL: config value or $LBSS_OUT_DIR */
  int verify;
  int quiet;          /* nonzero: no table on stdout */
} lbss_run_options;

/* Runs the experiment described by a JSON config file. *exit_code receives
 * 0 on success or 2 when verify mode found a hard failure. */
LBSS_API lbss_status lbss_run_experiment(const char* config_path, const lbss_run_options* options, int* exit_code);

/* Scaled trend report over one or more results CSVs; printed to stdout and
 * written to <out_dir>/trend.csv when out_dir is non-NULL. */
LBSS_API lbss_status lbss_compare(const char* const* csv_paths, size_t count, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* LBSS_LBSS_H */
