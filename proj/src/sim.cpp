#include "lbss/sim.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>

#include <boost/math/distributions/students_t.hpp>

#include "lbss/exact.hpp"

namespace lbss {

SimSpec SimSpec::with_horizon(double horizon, std::uint64_t seed, int batches) {
  SimSpec spec;
  spec.horizon = horizon;
  spec.warmup = 0.1 * horizon;
  spec.batches = batches;
  spec.seed = seed;
  return spec;
}

Estimate batch_means(std::span<const double> batches) {
  const auto n = batches.size();
  if (n < 10) {
    throw Error(ErrorCode::too_few_batches, "batch means needs at least 10 batches, got " + std::to_string(n));
  }
  const double mean = std::accumulate(batches.begin(), batches.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : batches) ss += (x - mean) * (x - mean);
  const double stdev = std::sqrt(ss / static_cast<double>(n - 1));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  const double t = boost::math::quantile(dist, 0.975);
  return {mean, t * stdev / std::sqrt(static_cast<double>(n)), static_cast<int>(n)};
}

namespace {

void validate(const SystemConfig& config, const SimSpec& spec) {
  if (!std::isfinite(spec.horizon) || !std::isfinite(spec.warmup) || spec.warmup < 0.0 ||
      !(spec.warmup < spec.horizon)) {
    throw Error(ErrorCode::invalid_spec, "need 0 <= warmup < horizon, both finite");
  }
  if (spec.batches < 10) throw Error(ErrorCode::invalid_spec, "need at least 10 batches");
  if (spec.initial_state) {
    const auto& s = *spec.initial_state;
    if (s.b() != config.b() || s.servers() != config.servers()) {
      throw Error(ErrorCode::invalid_spec, "initial state does not match N and b");
    }
  }
}

// Unit-interval uniform from the top 53 bits.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

struct BatchSums {
  double total = 0.0;
  double excess = 0.0;
  double a1 = 0.0;
  double block = 0.0;
  std::uint64_t arrivals = 0;
  std::uint64_t waited = 0;
};

}  // namespace

SimMetrics simulate(const SystemConfig& config, const Policy& policy, const SimSpec& spec) {
  validate(config, spec);

  const auto servers = config.servers();
  const int b = config.b();
  const auto levels = static_cast<std::size_t>(b) + 1;
  const double n_real = static_cast<double>(servers);
  const double lambda = config.lambda();
  const double arrival_rate = lambda * n_real;
  const double tau = config.tau();
  const auto nb = static_cast<std::size_t>(spec.batches);
  const double batch_len = (spec.horizon - spec.warmup) / static_cast<double>(nb);

  std::vector<std::int32_t> counts(levels, 0);
  if (spec.initial_state) {
    std::copy(spec.initial_state->counts().begin(), spec.initial_state->counts().end(), counts.begin());
  } else {
    counts[0] = static_cast<std::int32_t>(servers);
  }
  std::int64_t jobs = 0;
  for (std::size_t i = 1; i < levels; ++i) jobs += static_cast<std::int64_t>(i) * counts[i];

  std::unique_ptr<StateSpace> space;
  std::vector<double> occupancy;
  if (spec.record_occupancy) {
    space = std::make_unique<StateSpace>(servers, b);
    occupancy.assign(space->size(), 0.0);
  }

  std::vector<BatchSums> sums(nb);
  std::vector<double> law(levels);
  std::mt19937_64 rng(spec.seed);
  SimMetrics out;

  auto batch_of = [&](double t) {
    const auto idx = static_cast<std::size_t>((t - spec.warmup) / batch_len);
    return std::min(idx, nb - 1);
  };

  // Adds the time-weighted integrands over [t0, t1) to the batches it spans.
  auto accumulate = [&](double t0, double t1) {
    t0 = std::max(t0, spec.warmup);
    t1 = std::min(t1, spec.horizon);
    if (!(t1 > t0)) return;
    const double total = static_cast<double>(jobs) / n_real;
    const double excess = std::max(total - tau, 0.0);
    const double a1 = law[1];
    const double block = law[static_cast<std::size_t>(b)];
    if (space) occupancy[space->index_of(counts)] += t1 - t0;
    std::size_t idx = batch_of(t0);
    while (t0 < t1) {
      const double end = idx + 1 == nb ? t1 : std::min(t1, spec.warmup + static_cast<double>(idx + 1) * batch_len);
      const double dt = end - t0;
      auto& s = sums[idx];
      s.total += dt * total;
      s.excess += dt * excess;
      s.a1 += dt * a1;
      s.block += dt * block;
      t0 = end;
      ++idx;
    }
  };

  double t = 0.0;
  fill_routing_law(policy, counts, law);
  while (true) {
    const double busy = n_real - static_cast<double>(counts[0]);
    const double rate = arrival_rate + busy;
    if (!(rate > 0.0)) {
      accumulate(t, spec.horizon);
      break;
    }
    const double hold = -std::log1p(-uniform01(rng)) / rate;
    const double next = t + hold;
    if (next >= spec.horizon) {
      accumulate(t, spec.horizon);
      break;
    }
    accumulate(t, next);
    t = next;

    if (++out.events > spec.max_events) {
      throw Error(ErrorCode::invalid_spec, "event count exceeded max_events");
    }
    double pick = uniform01(rng) * rate;
    if (pick < arrival_rate) {
      const double u = uniform01(rng);
      int level = 0;  // level the chosen server moves to; 0 means blocked
      for (int i = 1; i <= b; ++i) {
        if (u >= law[static_cast<std::size_t>(i)]) {
          level = i;
          break;
        }
      }
      const bool in_window = t >= spec.warmup;
      if (in_window) {
        auto& s = sums[batch_of(t)];
        ++s.arrivals;
        if (level != 1) ++s.waited;
        ++out.arrivals;
      }
      if (level == 0) continue;  // blocked: state unchanged
      --counts[static_cast<std::size_t>(level - 1)];
      ++counts[static_cast<std::size_t>(level)];
      ++jobs;
    } else {
      pick -= arrival_rate;
      int level = b;
      for (int i = 1; i <= b; ++i) {
        pick -= counts[static_cast<std::size_t>(i)];
        if (pick < 0.0) {
          level = i;
          break;
        }
      }
      // Rounding can leave `pick` marginally nonnegative; fall back to the
      // highest occupied level.
      while (counts[static_cast<std::size_t>(level)] == 0) --level;
      --counts[static_cast<std::size_t>(level)];
      ++counts[static_cast<std::size_t>(level - 1)];
      --jobs;
    }
    assert(std::accumulate(counts.begin(), counts.end(), std::int64_t{0}) == servers);
    fill_routing_law(policy, counts, law);
  }

  std::vector<double> total(nb), excess(nb), a1(nb), block(nb), wait(nb), waited(nb);
  for (std::size_t i = 0; i < nb; ++i) {
    const auto& s = sums[i];
    total[i] = s.total / batch_len;
    excess[i] = s.excess / batch_len;
    a1[i] = s.a1 / batch_len;
    block[i] = s.block / batch_len;
    wait[i] = littles_law_wait(total[i], block[i], lambda);
    waited[i] = s.arrivals > 0 ? static_cast<double>(s.waited) / static_cast<double>(s.arrivals) : 0.0;
  }
  out.mean_total = batch_means(total);
  out.excess = batch_means(excess);
  out.p_wait = batch_means(a1);
  out.p_block = batch_means(block);
  out.mean_wait = batch_means(wait);
  out.p_wait_arrival = batch_means(waited);
  if (space) {
    const double span = spec.horizon - spec.warmup;
    for (double& x : occupancy) x /= span;
    out.occupancy = std::move(occupancy);
  }
  return out;
}

}  // namespace lbss
