#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lbss/error.hpp"

namespace lbss {

inline constexpr std::size_t kDefaultStateCap = 2'000'000;

// N homogeneous unit-rate servers, Poisson arrivals at rate lambda*N, and room
// for at most b jobs per server (one in service, b-1 waiting).
class SystemConfig {
 public:
  // lambda = 1 - N^(-alpha), alpha in (0, 0.5).
  static SystemConfig with_alpha(std::int64_t servers, double alpha, int b);
  // lambda given directly, in [0, 1).
  static SystemConfig with_lambda(std::int64_t servers, double lambda, int b);

  std::int64_t servers() const noexcept { return servers_; }
  int b() const noexcept { return b_; }
  std::optional<double> alpha() const noexcept { return alpha_; }
  std::optional<double> lambda_override() const noexcept { return lambda_override_; }

  double lambda() const noexcept { return lambda_; }
  // Natural log of N.
  double log_n() const noexcept;
  double sqrt_n() const noexcept;
  // k = 1 + 1/(2(b-1))
  double k() const noexcept;
  // k~ = 1 + 1/(4(b-1))
  double k_tilde() const noexcept;
  // tau = lambda + k log N / sqrt N, the threshold of the excess functional.
  double tau() const noexcept;
  // N^(-alpha) recovered from the load as 1 - lambda; works for both ways of
  // specifying the load.
  double idle_fraction() const noexcept { return 1.0 - lambda_; }

 private:
  SystemConfig(std::int64_t servers, std::optional<double> alpha,
               std::optional<double> lambda_override, int b);

  std::int64_t servers_;
  std::optional<double> alpha_;
  std::optional<double> lambda_override_;
  int b_;
  double lambda_;
};

// Counts (n_0, ..., n_b): n_i servers hold exactly i jobs.
class Occupancy {
 public:
  explicit Occupancy(std::vector<std::int32_t> counts);

  static Occupancy empty(std::int64_t servers, int b);
  static Occupancy full(std::int64_t servers, int b);

  int b() const noexcept { return static_cast<int>(counts_.size()) - 1; }
  std::int64_t servers() const noexcept { return servers_; }
  std::int32_t count(int level) const { return counts_.at(static_cast<std::size_t>(level)); }
  std::span<const std::int32_t> counts() const noexcept { return counts_; }

  // Total number of jobs, sum_i i*n_i.
  std::int64_t jobs() const noexcept;
  // S_i, with S_0 = 1 and S_i = 0 for i > b.
  double tail(int level) const;
  // sum_i S_i = jobs / N.
  double total() const noexcept;

  // Moves one server from level `from` to level `to`.
  Occupancy moved(int from, int to) const;

  friend bool operator==(const Occupancy&, const Occupancy&) = default;

 private:
  std::vector<std::int32_t> counts_;
  std::int64_t servers_ = 0;
};

// (S_1, ..., S_b)
std::vector<double> tail_fractions(const Occupancy& state);

struct Transition {
  Occupancy target;
  double rate;
};

class RoutingLaw;

// Lexicographically descending enumeration of all compositions of N into b+1
// parts, with O(b) ranking.
class StateSpace {
 public:
  StateSpace(std::int64_t servers, int b, std::size_t cap = kDefaultStateCap);

  // C(N+b, b), saturating at SIZE_MAX.
  static std::size_t count(std::int64_t servers, int b);

  std::size_t size() const noexcept { return states_.size(); }
  std::int64_t servers() const noexcept { return servers_; }
  int b() const noexcept { return b_; }
  const Occupancy& operator[](std::size_t i) const { return states_[i]; }
  const std::vector<Occupancy>& states() const noexcept { return states_; }
  auto begin() const noexcept { return states_.begin(); }
  auto end() const noexcept { return states_.end(); }

  std::size_t index_of(std::span<const std::int32_t> counts) const;
  std::size_t index_of(const Occupancy& s) const { return index_of(s.counts()); }

 private:
  std::uint64_t binom(std::int64_t n, int k) const;

  std::int64_t servers_;
  int b_;
  std::vector<Occupancy> states_;
  // binom_[n * (b_+1) + k] = C(n, k) for n <= N + b, k <= b.
  std::vector<std::uint64_t> binom_;
};

std::vector<Occupancy> enumerate_states(const SystemConfig& config,
                                        std::size_t cap = kDefaultStateCap);

// Calls visit(from_level, to_level, rate) for every jump of the generator out
// of `state`. Arrivals that land on level i move a server from i-1 to i at
// rate lambda*N*(A_{i-1} - A_i); departures move a server from i to i-1 at
// rate n_i. Blocked arrivals leave the state unchanged and are not reported.
template <class Visit>
void visit_transitions(std::span<const std::int32_t> counts,
                       std::span<const double> law, double lambda,
                       std::int64_t servers, Visit&& visit) {
  const int b = static_cast<int>(counts.size()) - 1;
  const double arrival_rate = lambda * static_cast<double>(servers);
  for (int i = 1; i <= b; ++i) {
    const double mass = law[static_cast<std::size_t>(i - 1)] - law[static_cast<std::size_t>(i)];
    if (mass < -1e-12) {
      throw Error(ErrorCode::inconsistent_law,
                  "routing law increases at level " + std::to_string(i));
    }
    if (mass > 0.0 && arrival_rate > 0.0) {
      if (counts[static_cast<std::size_t>(i - 1)] == 0) {
        throw Error(ErrorCode::inconsistent_law,
                    "routing law sends jobs to empty level " + std::to_string(i - 1));
      }
      visit(i - 1, i, arrival_rate * mass);
    }
  }
  for (int i = 1; i <= b; ++i) {
    const auto n = counts[static_cast<std::size_t>(i)];
    if (n > 0) visit(i, i - 1, static_cast<double>(n));
  }
}

std::vector<Transition> transitions(const Occupancy& state, const RoutingLaw& law,
                                    const SystemConfig& config);

}  // namespace lbss
