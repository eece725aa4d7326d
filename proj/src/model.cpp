#include "lbss/model.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "lbss/policies.hpp"

namespace lbss {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_config: return "InvalidConfig";
    case ErrorCode::cap_exceeded: return "CapExceeded";
    case ErrorCode::inconsistent_law: return "InconsistentLaw";
    case ErrorCode::reducible: return "Reducible";
    case ErrorCode::not_converged: return "NotConverged";
    case ErrorCode::degenerate_load: return "DegenerateLoad";
    case ErrorCode::invalid_spec: return "InvalidSpec";
    case ErrorCode::too_few_batches: return "TooFewBatches";
    case ErrorCode::nonpositive_gamma: return "NonpositiveGamma";
    case ErrorCode::unsupported_policy: return "UnsupportedPolicy";
    case ErrorCode::schema_mismatch: return "SchemaMismatch";
    case ErrorCode::parse_error: return "ParseError";
    case ErrorCode::io_error: return "IoError";
    case ErrorCode::domain_error: return "DomainError";
  }
  return "Unknown";
}

// ---------------------------------------------------------------------------
// SystemConfig

SystemConfig::SystemConfig(std::int64_t servers, std::optional<double> alpha,
                           std::optional<double> lambda_override, int b)
    : servers_(servers), alpha_(alpha), lambda_override_(lambda_override), b_(b), lambda_(0.0) {
  if (servers_ < 1) {
    throw Error(ErrorCode::invalid_config, "N must be a positive integer");
  }
  if (servers_ > std::numeric_limits<std::int32_t>::max()) {
    throw Error(ErrorCode::invalid_config, "N exceeds the supported range");
  }
  if (b_ < 2) {
    throw Error(ErrorCode::invalid_config, "b must be at least 2 (k is undefined at b = 1)");
  }
  if (alpha_.has_value() == lambda_override_.has_value()) {
    throw Error(ErrorCode::invalid_config, "exactly one of alpha and lambda must be given");
  }
  if (alpha_) {
    if (!(*alpha_ > 0.0 && *alpha_ < 0.5)) {
      throw Error(ErrorCode::invalid_config, "alpha must lie in (0, 0.5)");
    }
    lambda_ = 1.0 - std::pow(static_cast<double>(servers_), -*alpha_);
  } else {
    if (!(*lambda_override_ >= 0.0 && *lambda_override_ < 1.0)) {
      throw Error(ErrorCode::invalid_config, "lambda must lie in [0, 1)");
    }
    lambda_ = *lambda_override_;
  }
}

SystemConfig SystemConfig::with_alpha(std::int64_t servers, double alpha, int b) {
  return SystemConfig(servers, alpha, std::nullopt, b);
}

SystemConfig SystemConfig::with_lambda(std::int64_t servers, double lambda, int b) {
  return SystemConfig(servers, std::nullopt, lambda, b);
}

double SystemConfig::log_n() const noexcept { return std::log(static_cast<double>(servers_)); }
double SystemConfig::sqrt_n() const noexcept { return std::sqrt(static_cast<double>(servers_)); }
double SystemConfig::k() const noexcept { return 1.0 + 1.0 / (2.0 * (b_ - 1)); }
double SystemConfig::k_tilde() const noexcept { return 1.0 + 1.0 / (4.0 * (b_ - 1)); }
double SystemConfig::tau() const noexcept { return lambda_ + k() * log_n() / sqrt_n(); }

// ---------------------------------------------------------------------------
// Occupancy

Occupancy::Occupancy(std::vector<std::int32_t> counts) : counts_(std::move(counts)) {
  if (counts_.size() < 2) {
    throw Error(ErrorCode::invalid_config, "occupancy needs at least levels 0 and 1");
  }
  for (auto n : counts_) {
    if (n < 0) throw Error(ErrorCode::invalid_config, "occupancy counts must be nonnegative");
    servers_ += n;
  }
  if (servers_ == 0) throw Error(ErrorCode::invalid_config, "occupancy has no servers");
}

Occupancy Occupancy::empty(std::int64_t servers, int b) {
  std::vector<std::int32_t> c(static_cast<std::size_t>(b) + 1, 0);
  c.front() = static_cast<std::int32_t>(servers);
  return Occupancy(std::move(c));
}

Occupancy Occupancy::full(std::int64_t servers, int b) {
  std::vector<std::int32_t> c(static_cast<std::size_t>(b) + 1, 0);
  c.back() = static_cast<std::int32_t>(servers);
  return Occupancy(std::move(c));
}

std::int64_t Occupancy::jobs() const noexcept {
  std::int64_t total = 0;
  for (std::size_t i = 1; i < counts_.size(); ++i) total += static_cast<std::int64_t>(i) * counts_[i];
  return total;
}

double Occupancy::tail(int level) const {
  if (level <= 0) return 1.0;
  if (level > b()) return 0.0;
  std::int64_t above = 0;
  for (std::size_t j = static_cast<std::size_t>(level); j < counts_.size(); ++j) above += counts_[j];
  return static_cast<double>(above) / static_cast<double>(servers_);
}

double Occupancy::total() const noexcept {
  return static_cast<double>(jobs()) / static_cast<double>(servers_);
}

Occupancy Occupancy::moved(int from, int to) const {
  auto c = counts_;
  auto& src = c.at(static_cast<std::size_t>(from));
  if (src == 0) throw Error(ErrorCode::inconsistent_law, "no server at level " + std::to_string(from));
  --src;
  ++c.at(static_cast<std::size_t>(to));
  return Occupancy(std::move(c));
}

std::vector<double> tail_fractions(const Occupancy& state) {
  const int b = state.b();
  std::vector<double> s(static_cast<std::size_t>(b));
  std::int64_t above = 0;
  for (int i = b; i >= 1; --i) {
    above += state.count(i);
    s[static_cast<std::size_t>(i - 1)] = static_cast<double>(above) / static_cast<double>(state.servers());
  }
  return s;
}

// ---------------------------------------------------------------------------
// StateSpace

std::size_t StateSpace::count(std::int64_t servers, int b) {
  // C(N+b, b) computed incrementally; each partial product is itself a
  // binomial coefficient so the division is exact.
  constexpr auto kMax = std::numeric_limits<std::size_t>::max();
  std::size_t result = 1;
  for (int i = 1; i <= b; ++i) {
    const auto factor = static_cast<std::size_t>(servers) + static_cast<std::size_t>(i);
    if (result > kMax / factor) return kMax;
    result = result * factor / static_cast<std::size_t>(i);
  }
  return result;
}

StateSpace::StateSpace(std::int64_t servers, int b, std::size_t cap) : servers_(servers), b_(b) {
  if (servers < 1 || b < 1) throw Error(ErrorCode::invalid_config, "state space needs N >= 1, b >= 1");
  const auto total = count(servers, b);
  if (total > cap) {
    throw Error(ErrorCode::cap_exceeded, "state space of " + std::to_string(total) +
                                             " states exceeds cap " + std::to_string(cap));
  }

  const auto rows = static_cast<std::size_t>(servers + b + 1);
  const auto cols = static_cast<std::size_t>(b + 1);
  binom_.assign(rows * cols, 0);
  for (std::size_t n = 0; n < rows; ++n) {
    binom_[n * cols] = 1;
    for (std::size_t k = 1; k < cols && k <= n; ++k) {
      binom_[n * cols + k] = binom_[(n - 1) * cols + k - 1] + (k < n ? binom_[(n - 1) * cols + k] : 0);
    }
  }

  states_.reserve(total);
  std::vector<std::int32_t> c(cols, 0);
  // Depth-first over positions: position p takes values remaining..0.
  auto recurse = [&](auto&& self, std::size_t pos, std::int32_t remaining) -> void {
    if (pos + 1 == cols) {
      c[pos] = remaining;
      states_.emplace_back(c);
      return;
    }
    for (std::int32_t v = remaining; v >= 0; --v) {
      c[pos] = v;
      self(self, pos + 1, remaining - v);
    }
    c[pos] = 0;
  };
  recurse(recurse, 0, static_cast<std::int32_t>(servers));
}

std::uint64_t StateSpace::binom(std::int64_t n, int k) const {
  if (n < 0 || k < 0 || k > n) return 0;
  return binom_[static_cast<std::size_t>(n) * static_cast<std::size_t>(b_ + 1) + static_cast<std::size_t>(k)];
}

std::size_t StateSpace::index_of(std::span<const std::int32_t> counts) const {
  // States whose first differing part is larger come first. With R jobs left
  // for m parts, those with a first part above v number C(R - v - 1 + m - 1, m - 1).
  if (counts.size() != static_cast<std::size_t>(b_) + 1) {
    throw Error(ErrorCode::invalid_config, "occupancy has the wrong number of levels");
  }
  std::int64_t remaining = servers_;
  std::uint64_t rank = 0;
  for (std::size_t pos = 0; pos + 1 < counts.size(); ++pos) {
    const int parts = static_cast<int>(counts.size() - pos);
    const std::int64_t above = remaining - counts[pos];
    if (above < 0) throw Error(ErrorCode::invalid_config, "occupancy does not sum to N");
    if (above > 0) rank += binom(above - 1 + parts - 1, parts - 1);
    remaining = above;
  }
  if (remaining != counts.back()) throw Error(ErrorCode::invalid_config, "occupancy does not sum to N");
  return static_cast<std::size_t>(rank);
}

std::vector<Occupancy> enumerate_states(const SystemConfig& config, std::size_t cap) {
  StateSpace space(config.servers(), config.b(), cap);
  return space.states();
}

std::vector<Transition> transitions(const Occupancy& state, const RoutingLaw& law,
                                    const SystemConfig& config) {
  if (law.b() != state.b() || state.b() != config.b() || state.servers() != config.servers()) {
    throw Error(ErrorCode::invalid_config, "state, law and config disagree on N or b");
  }
  std::vector<Transition> out;
  visit_transitions(state.counts(), law.values(), config.lambda(), config.servers(),
                    [&](int from, int to, double rate) {
                      out.push_back({state.moved(from, to), rate});
                    });
  return out;
}

}  // namespace lbss
