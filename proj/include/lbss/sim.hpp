#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lbss/model.hpp"
#include "lbss/policies.hpp"

namespace lbss {

struct SimSpec {
  double horizon = 0.0;  // model time
  double warmup = 0.0;   // excluded prefix, model time
  int batches = 20;
  std::uint64_t seed = 0;
  std::optional<Occupancy> initial_state;  // empty system when absent
  std::uint64_t max_events = std::uint64_t{1} << 40;
  // Accumulate time spent in every state of the enumerated space (small N).
  bool record_occupancy = false;

  // Warm-up defaults to 10% of the horizon.
  static SimSpec with_horizon(double horizon, std::uint64_t seed, int batches = 20);
};

struct Estimate {
  double mean = 0.0;
  double half_width = 0.0;  // 95% Student-t over batch means
  int batches_used = 0;

  bool covers(double value) const noexcept {
    return value >= mean - half_width && value <= mean + half_width;
  }
};

// Batch-means interval: mean of the batch values, half-width
// t_{0.975, n-1} * stdev / sqrt(n). Needs at least 10 batches.
Estimate batch_means(std::span<const double> batches);

struct SimMetrics {
  Estimate mean_total;
  Estimate excess;
  Estimate p_wait;  // time average of A_1(S)
  Estimate p_block;
  Estimate mean_wait;
  // Fraction of arrivals sent to a busy server (or blocked), counted per event.
  Estimate p_wait_arrival;
  std::uint64_t events = 0;
  std::uint64_t arrivals = 0;
  // Post-warm-up time fraction per state, in StateSpace order, when requested.
  std::vector<double> occupancy;
};

// Event-driven simulation of the occupancy chain. Reproducible bit-for-bit
// from (config, policy, spec).
//
// Random stream (std::mt19937_64 seeded with spec.seed), per event in order:
//   1. holding time  2. arrival-vs-departure and departure level  3. routing
//   of an arrival (drawn only for arrivals).
SimMetrics simulate(const SystemConfig& config, const Policy& policy, const SimSpec& spec);

}  // namespace lbss
