#include "lbss/lbss.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <new>
#include <string>

#include "lbss/exact.hpp"
#include "lbss/experiment.hpp"
#include "lbss/sim.hpp"
#include "lbss/stein.hpp"

struct lbss_config {
  lbss::SystemConfig value;
};

struct lbss_policy {
  lbss::Policy value;
};

struct lbss_exact {
  lbss::SystemConfig config;
  lbss::Policy policy;
  lbss::GeneratorMatrix gen;
  lbss::StationaryDist dist;
};

namespace {

thread_local std::string last_error;

lbss_status from_code(lbss::ErrorCode code) {
  using lbss::ErrorCode;
  switch (code) {
    case ErrorCode::invalid_config: return LBSS_ERR_INVALID_CONFIG;
    case ErrorCode::cap_exceeded: return LBSS_ERR_CAP_EXCEEDED;
    case ErrorCode::inconsistent_law: return LBSS_ERR_INCONSISTENT_LAW;
    case ErrorCode::reducible: return LBSS_ERR_REDUCIBLE;
    case ErrorCode::not_converged: return LBSS_ERR_NOT_CONVERGED;
    case ErrorCode::degenerate_load: return LBSS_ERR_DEGENERATE_LOAD;
    case ErrorCode::invalid_spec: return LBSS_ERR_INVALID_SPEC;
    case ErrorCode::too_few_batches: return LBSS_ERR_TOO_FEW_BATCHES;
    case ErrorCode::nonpositive_gamma: return LBSS_ERR_NONPOSITIVE_GAMMA;
    case ErrorCode::unsupported_policy: return LBSS_ERR_UNSUPPORTED_POLICY;
    case ErrorCode::schema_mismatch: return LBSS_ERR_SCHEMA_MISMATCH;
    case ErrorCode::parse_error: return LBSS_ERR_PARSE;
    case ErrorCode::io_error: return LBSS_ERR_IO;
    case ErrorCode::domain_error: return LBSS_ERR_DOMAIN;
  }
  return LBSS_ERR_INTERNAL;
}

lbss_status fail(lbss_status status, std::string message) {
  last_error = std::move(message);
  return status;
}

// Runs `body` and converts any exception into a status.
template <class F>
lbss_status guarded(F&& body) {
  try {
    last_error.clear();
    body();
    return LBSS_OK;
  } catch (const lbss::Error& e) {
    return fail(from_code(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(LBSS_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(LBSS_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(LBSS_ERR_INTERNAL, "unknown exception");
  }
}

#define LBSS_REQUIRE(cond)                                                   \
  do {                                                                       \
    if (!(cond)) return fail(LBSS_ERR_INVALID_ARGUMENT, "null or invalid argument: " #cond); \
  } while (0)

lbss_estimate to_c(const lbss::Estimate& e) { return {e.mean, e.half_width, e.batches_used}; }

}  // namespace

extern "C" {

const char* lbss_version(void) { return "1.0.0"; }

const char* lbss_status_string(lbss_status status) {
  switch (status) {
    case LBSS_OK: return "ok";
    case LBSS_ERR_INVALID_ARGUMENT: return "invalid argument";
    case LBSS_ERR_INVALID_CONFIG: return "invalid configuration";
    case LBSS_ERR_CAP_EXCEEDED: return "state space exceeds cap";
    case LBSS_ERR_INCONSISTENT_LAW: return "inconsistent routing law";
    case LBSS_ERR_REDUCIBLE: return "reducible generator";
    case LBSS_ERR_NOT_CONVERGED: return "iterative solve did not converge";
    case LBSS_ERR_DEGENERATE_LOAD: return "degenerate load";
    case LBSS_ERR_INVALID_SPEC: return "invalid simulation spec";
    case LBSS_ERR_TOO_FEW_BATCHES: return "too few batches";
    case LBSS_ERR_NONPOSITIVE_GAMMA: return "nonpositive gamma";
    case LBSS_ERR_UNSUPPORTED_POLICY: return "unsupported policy";
    case LBSS_ERR_SCHEMA_MISMATCH: return "schema mismatch";
    case LBSS_ERR_PARSE: return "parse error";
    case LBSS_ERR_IO: return "i/o error";
    case LBSS_ERR_DOMAIN: return "domain error";
    case LBSS_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* lbss_last_error(void) { return last_error.c_str(); }

lbss_status lbss_config_create_alpha(int64_t servers, double alpha, int b, lbss_config** out) {
  LBSS_REQUIRE(out);
  return guarded([&] { *out = new lbss_config{lbss::SystemConfig::with_alpha(servers, alpha, b)}; });
}

lbss_status lbss_config_create_lambda(int64_t servers, double lambda, int b, lbss_config** out) {
  LBSS_REQUIRE(out);
  return guarded([&] { *out = new lbss_config{lbss::SystemConfig::with_lambda(servers, lambda, b)}; });
}

void lbss_config_destroy(lbss_config* config) { delete config; }

lbss_status lbss_config_describe(const lbss_config* config, lbss_config_info* out) {
  LBSS_REQUIRE(config && out);
  const auto& c = config->value;
  *out = {c.servers(), c.b(), c.lambda(), c.alpha().value_or(std::numeric_limits<double>::quiet_NaN()),
          c.k(), c.k_tilde(), c.tau()};
  return LBSS_OK;
}

lbss_status lbss_policy_parse(const char* text, const lbss_config* config, lbss_policy** out) {
  LBSS_REQUIRE(text && config && out);
  return guarded([&] { *out = new lbss_policy{lbss::Policy::parse(text, config->value)}; });
}

void lbss_policy_destroy(lbss_policy* policy) { delete policy; }

size_t lbss_policy_name(const lbss_policy* policy, char* buffer, size_t capacity) {
  if (!policy) return 0;
  const auto name = policy->value.name();
  if (buffer && capacity > 0) {
    const auto n = std::min(capacity - 1, name.size());
    std::memcpy(buffer, name.data(), n);
    buffer[n] = '\0';
  }
  return name.size();
}

lbss_status lbss_routing_law(const lbss_policy* policy, const int32_t* counts, size_t levels, double* law_out) {
  LBSS_REQUIRE(policy && counts && law_out && levels >= 3);
  return guarded([&] {
    const lbss::Occupancy state(std::vector<std::int32_t>(counts, counts + levels));
    lbss::fill_routing_law(policy->value, state.counts(), std::span<double>(law_out, levels));
  });
}

lbss_status lbss_condition_report(const lbss_policy* policy, const lbss_config* config, int exhaustive,
                                  lbss_condition* out) {
  LBSS_REQUIRE(policy && config && out);
  return guarded([&] {
    const auto r = exhaustive ? lbss::condition_report_exhaustive(policy->value, config->value)
                              : lbss::condition_report_formula(policy->value, config->value);
    *out = {r.threshold, r.limit, r.max_a1, r.satisfied ? 1 : 0, r.region_saturated ? 1 : 0, r.checked_states};
  });
}

lbss_status lbss_exact_solve(const lbss_config* config, const lbss_policy* policy, size_t state_cap,
                             lbss_exact** out) {
  LBSS_REQUIRE(config && policy && out);
  return guarded([&] {
    auto gen = lbss::build_generator(config->value, policy->value, state_cap ? state_cap : lbss::kDefaultStateCap);
    auto dist = lbss::stationary(gen);
    *out = new lbss_exact{config->value, policy->value, std::move(gen), std::move(dist)};
  });
}

void lbss_exact_destroy(lbss_exact* exact) { delete exact; }

size_t lbss_exact_state_count(const lbss_exact* exact) { return exact ? exact->dist.size() : 0; }

lbss_status lbss_exact_state(const lbss_exact* exact, size_t index, int32_t* counts_out, size_t levels) {
  LBSS_REQUIRE(exact && counts_out);
  LBSS_REQUIRE(index < exact->dist.size());
  LBSS_REQUIRE(levels == static_cast<size_t>(exact->config.b()) + 1);
  const auto c = exact->gen.space()[index].counts();
  std::copy(c.begin(), c.end(), counts_out);
  return LBSS_OK;
}

lbss_status lbss_exact_probabilities(const lbss_exact* exact, double* out, size_t capacity) {
  LBSS_REQUIRE(exact && out && capacity >= exact->dist.size());
  std::copy(exact->dist.probs.begin(), exact->dist.probs.end(), out);
  return LBSS_OK;
}

double lbss_exact_residual(const lbss_exact* exact) {
  return exact ? exact->dist.residual : std::numeric_limits<double>::quiet_NaN();
}

lbss_status lbss_exact_metrics(const lbss_exact* exact, lbss_metrics* out) {
  LBSS_REQUIRE(exact && out);
  return guarded([&] {
    const auto m = lbss::exact_metrics(exact->dist, exact->config, exact->policy);
    *out = {m.mean_total, m.excess, m.p_wait, m.p_block, m.mean_wait};
  });
}

lbss_status lbss_exact_write_csv(const lbss_exact* exact, const char* path) {
  LBSS_REQUIRE(exact && path);
  return guarded([&] { lbss::write_distribution_csv(exact->dist, path); });
}

lbss_status lbss_exact_stein_check(const lbss_exact* exact, lbss_stein_check* out) {
  LBSS_REQUIRE(exact && out);
  return guarded([&] {
    const auto r = lbss::stein_decomposition_check(exact->config, exact->policy, exact->gen, exact->dist);
    *out = {r.direct, r.generator, r.identity_residual, r.term_main, r.term_curvature, r.term_boundary,
            r.inequality_holds ? 1 : 0};
  });
}

lbss_status lbss_exact_tail_check(const lbss_exact* exact, lbss_tail_check* out) {
  LBSS_REQUIRE(exact && out);
  return guarded([&] {
    const auto r = lbss::empirical_tail_check(exact->config, exact->policy, exact->gen, exact->dist);
    *out = {r.applicable ? 1 : 0, r.vacuous ? 1 : 0, r.inputs.gamma, r.inputs.level, r.inputs.nu_max,
            r.inputs.q_max, r.rows.size(), r.violations};
  });
}

lbss_status lbss_simulate(const lbss_config* config, const lbss_policy* policy, const lbss_sim_spec* spec,
                          lbss_sim_metrics* out) {
  LBSS_REQUIRE(config && policy && spec && out);
  return guarded([&] {
    auto s = lbss::SimSpec::with_horizon(spec->horizon, spec->seed, spec->batches);
    if (spec->warmup >= 0.0) s.warmup = spec->warmup;
    const auto m = lbss::simulate(config->value, policy->value, s);
    *out = {to_c(m.mean_total), to_c(m.excess),    to_c(m.p_wait),         to_c(m.p_block),
            to_c(m.mean_wait),  to_c(m.p_wait_arrival), m.events, m.arrivals};
  });
}

lbss_status lbss_batch_means(const double* batches, size_t count, lbss_estimate* out) {
  LBSS_REQUIRE(batches && out);
  return guarded([&] { *out = to_c(lbss::batch_means(std::span<const double>(batches, count))); });
}

lbss_status lbss_theorem_bound(const lbss_config* config, double* stated, double* proof) {
  LBSS_REQUIRE(config);
  return guarded([&] {
    const auto t = lbss::theorem_bound(config->value);
    if (stated) *stated = t.stated;
    if (proof) *proof = t.proof;
  });
}

lbss_status lbss_ssc_bound(const lbss_config* config, double* out) {
  LBSS_REQUIRE(config && out);
  return guarded([&] { *out = lbss::ssc_bound(config->value); });
}

lbss_status lbss_tail_bound(double gamma, double level, double nu_max, double q_max, int j, double* out) {
  LBSS_REQUIRE(out);
  return guarded([&] { *out = lbss::tail_bound({gamma, level, nu_max, q_max}, j); });
}

lbss_status lbss_run_experiment(const char* config_path, const lbss_run_options* options, int* exit_code) {
  LBSS_REQUIRE(config_path && exit_code);
  return guarded([&] {
    const auto cfg = lbss::load_experiment_config(config_path);
    lbss::RunOptions opts;
    if (options) {
      opts.threads = options->threads > 0 ? options->threads : 1;
      if (options->has_seed) opts.seed = options->seed;
      if (options->out_dir) opts.out_dir = options->out_dir;
      opts.verify = options->verify != 0;
      opts.print_table = options->quiet == 0;
    }
    const auto outcome = lbss::run_experiment(cfg, opts, std::cout);
    std::cout.flush();
    *exit_code = outcome.exit_code;
  });
}

lbss_status lbss_compare(const char* const* csv_paths, size_t count, const char* out_dir) {
  LBSS_REQUIRE(csv_paths && count > 0);
  return guarded([&] {
    std::vector<std::filesystem::path> paths;
    for (size_t i = 0; i < count; ++i) {
      if (!csv_paths[i]) throw lbss::Error(lbss::ErrorCode::invalid_config, "null csv path");
      paths.emplace_back(csv_paths[i]);
    }
    const auto report = lbss::compare_results(paths);
    lbss::print_trend(report, std::cout);
    std::cout.flush();
    if (out_dir) {
      std::filesystem::create_directories(out_dir);
      const auto path = std::filesystem::path(out_dir) / "trend.csv";
      std::ofstream out(path);
      out << lbss::format_trend_csv(report);
      if (!out) throw lbss::Error(lbss::ErrorCode::io_error, "failed writing " + path.string());
    }
  });
}

}  // extern "C"
