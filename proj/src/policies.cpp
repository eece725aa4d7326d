#include "lbss/policies.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>

namespace lbss {

Policy Policy::pod(int d) {
  if (d < 1) throw Error(ErrorCode::invalid_config, "pod needs d >= 1");
  return {PolicyKind::pod, d};
}

Policy Policy::pod_auto(const SystemConfig& config) {
  const double idle = config.idle_fraction();
  const double raw = std::ceil(config.log_n() / idle);
  const double capped = std::min(raw, 1e9);
  return pod(std::max(1, static_cast<int>(capped)));
}

Policy Policy::parse(std::string_view text, const SystemConfig& config) {
  if (text == "jsq") return jsq();
  if (text == "i1f") return i1f();
  if (text == "jiq") return jiq();
  if (text == "random") return random();
  if (text.starts_with("pod:")) {
    const auto arg = text.substr(4);
    if (arg == "auto") return pod_auto(config);
    int d = 0;
    auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), d);
    if (ec != std::errc{} || ptr != arg.data() + arg.size() || d < 1) {
      throw Error(ErrorCode::parse_error, "bad pod sample count '" + std::string(arg) + "'");
    }
    return pod(d);
  }
  throw Error(ErrorCode::parse_error,
              "unknown policy '" + std::string(text) + "' (expected jsq|i1f|jiq|pod:<d|auto>|random)");
}

std::string_view Policy::kind_name() const noexcept {
  switch (kind) {
    case PolicyKind::jsq: return "jsq";
    case PolicyKind::i1f: return "i1f";
    case PolicyKind::jiq: return "jiq";
    case PolicyKind::pod: return "pod";
    case PolicyKind::random: return "random";
  }
  return "?";
}

std::string Policy::name() const {
  if (kind == PolicyKind::pod) return "pod:" + std::to_string(d);
  return std::string(kind_name());
}

void fill_routing_law(const Policy& policy, std::span<const std::int32_t> counts,
                      std::span<double> out) {
  const auto levels = counts.size();
  const std::size_t b = levels - 1;
  std::int64_t servers = 0;
  for (auto n : counts) servers += n;
  const double inv_n = 1.0 / static_cast<double>(servers);

  // Suffix sums give S_i exactly as (integer count)/N.
  auto uniform = [&](int power) {
    std::int64_t above = 0;
    for (std::size_t i = b; i >= 1; --i) {
      above += counts[i];
      const double s = static_cast<double>(above) * inv_n;
      out[i] = power == 1 ? s : std::pow(s, power);
    }
  };
  auto route_to_level = [&](std::size_t level) {
    // Every arrival lands on a server holding exactly `level` jobs.
    for (std::size_t i = 1; i <= b; ++i) out[i] = i <= level ? 1.0 : 0.0;
  };

  out[0] = 1.0;
  switch (policy.kind) {
    case PolicyKind::jsq: {
      std::size_t least = 0;
      while (least < b && counts[least] == 0) ++least;
      route_to_level(least);
      break;
    }
    case PolicyKind::i1f:
      if (counts[0] > 0) {
        route_to_level(0);
      } else if (counts[1] > 0) {
        route_to_level(1);
      } else {
        uniform(1);
      }
      break;
    case PolicyKind::jiq:
      if (counts[0] > 0) {
        route_to_level(0);
      } else {
        uniform(1);
      }
      break;
    case PolicyKind::pod:
      uniform(policy.d);
      break;
    case PolicyKind::random:
      uniform(1);
      break;
  }
}

RoutingLaw routing_law(const Policy& policy, const Occupancy& state) {
  std::vector<double> a(static_cast<std::size_t>(state.b()) + 1);
  fill_routing_law(policy, state.counts(), a);
  return RoutingLaw(std::move(a));
}

ConditionReport condition_report_exhaustive(const Policy& policy, const SystemConfig& config,
                                            std::size_t cap) {
  StateSpace space(config.servers(), config.b(), cap);
  ConditionReport report;
  report.exhaustive = true;
  report.threshold = config.tau();
  report.limit = 1.0 / config.sqrt_n();
  report.region_saturated = report.threshold >= 1.0;

  std::vector<double> law(static_cast<std::size_t>(config.b()) + 1);
  for (const auto& s : space) {
    if (s.tail(1) > report.threshold) continue;
    ++report.checked_states;
    fill_routing_law(policy, s.counts(), law);
    if (!report.witness || law[1] > report.max_a1) {
      report.max_a1 = law[1];
      report.witness = s;
    }
  }
  report.satisfied = report.max_a1 <= report.limit;
  return report;
}

ConditionReport condition_report_formula(const Policy& policy, const SystemConfig& config) {
  ConditionReport report;
  report.threshold = config.tau();
  report.limit = 1.0 / config.sqrt_n();
  report.region_saturated = report.threshold >= 1.0;
  // Largest attainable S_1 inside the region.
  const double s1 = std::min(1.0, report.threshold);
  switch (policy.kind) {
    case PolicyKind::jsq:
    case PolicyKind::i1f:
    case PolicyKind::jiq:
      // An idle server exists whenever S_1 < 1; only a saturated region
      // admits the all-busy states where these policies send A_1 = 1.
      report.max_a1 = report.region_saturated ? 1.0 : 0.0;
      break;
    case PolicyKind::pod:
      report.max_a1 = std::pow(s1, policy.d);
      break;
    case PolicyKind::random:
      report.max_a1 = s1;
      break;
  }
  report.satisfied = report.max_a1 <= report.limit;
  return report;
}

}  // namespace lbss
