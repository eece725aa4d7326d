#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lbss/model.hpp"

namespace lbss {

enum class PolicyKind { jsq, i1f, jiq, pod, random };

struct Policy {
  PolicyKind kind = PolicyKind::jsq;
  int d = 1;  // samples per arrival, PoD only

  static Policy jsq() { return {PolicyKind::jsq, 1}; }
  static Policy i1f() { return {PolicyKind::i1f, 1}; }
  static Policy jiq() { return {PolicyKind::jiq, 1}; }
  static Policy random() { return {PolicyKind::random, 1}; }
  static Policy pod(int d);
  // d = ceil(N^alpha log N), written as ceil(log N / (1 - lambda)) so it is
  // also defined when the load was given directly.
  static Policy pod_auto(const SystemConfig& config);

  // `jsq | i1f | jiq | pod:<d|auto> | random`
  static Policy parse(std::string_view text, const SystemConfig& config);

  // Canonical name, e.g. "pod:12".
  std::string name() const;
  // "jsq", "pod", ...
  std::string_view kind_name() const noexcept;

  friend bool operator==(const Policy&, const Policy&) = default;
};

// A_i = probability an arrival is sent to a server already holding at least i
// jobs, i = 0..b. A_0 = 1 and A_b is the blocking probability.
class RoutingLaw {
 public:
  explicit RoutingLaw(std::vector<double> a) : a_(std::move(a)) {}

  std::span<const double> values() const noexcept { return a_; }
  double operator[](int i) const { return a_.at(static_cast<std::size_t>(i)); }
  int b() const noexcept { return static_cast<int>(a_.size()) - 1; }
  double block() const noexcept { return a_.back(); }

 private:
  std::vector<double> a_;
};

// Writes A_0..A_b for the given counts into `out` (size b+1). No allocation;
// the simulator calls this once per event.
void fill_routing_law(const Policy& policy, std::span<const std::int32_t> counts,
                      std::span<double> out);

RoutingLaw routing_law(const Policy& policy, const Occupancy& state);

struct ConditionReport {
  double threshold = 0.0;  // tau
  double limit = 0.0;      // 1/sqrt(N)
  double max_a1 = 0.0;
  std::optional<Occupancy> witness;  // exhaustive mode only
  bool satisfied = false;
  bool exhaustive = false;
  // tau >= 1: the region S_1 <= tau contains states with no idle server.
  bool region_saturated = false;
  std::size_t checked_states = 0;
};

// max A_1 over every enumerated state with S_1 <= tau.
ConditionReport condition_report_exhaustive(const Policy& policy, const SystemConfig& config,
                                            std::size_t cap = kDefaultStateCap);
// Closed-form envelope of max A_1 over S_1 <= tau; valid for any N.
ConditionReport condition_report_formula(const Policy& policy, const SystemConfig& config);

}  // namespace lbss
