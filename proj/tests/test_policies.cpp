#include <doctest.h>

#include <cmath>

#include "lbss/policies.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace lbss;

namespace {

Occupancy occ(std::vector<std::int32_t> c) { return Occupancy(std::move(c)); }

const Policy kAll[] = {Policy::jsq(), Policy::i1f(), Policy::jiq(), Policy::pod(1),
                       Policy::pod(2), Policy::pod(5), Policy::random()};

}  // namespace

TEST_CASE("routing law: worked examples") {
  const auto jsq = routing_law(Policy::jsq(), occ({1, 2, 1}));
  CHECK(std::vector<double>(jsq.values().begin(), jsq.values().end()) ==
        std::vector<double>{1, 0, 0});

  // S = (0.5, 0.25) with N = 4: counts (2, 1, 1)
  const auto pod = routing_law(Policy::pod(2), occ({2, 1, 1}));
  CHECK(pod[0] == 1.0);
  CHECK(pod[1] == doctest::Approx(0.25));
  CHECK(pod[2] == doctest::Approx(0.0625));
  CHECK(pod.block() == doctest::Approx(0.0625));

  // S_1 = 1, S_2 = 0.3 with N = 10: counts (0, 7, 3)
  const auto jiq = routing_law(Policy::jiq(), occ({0, 7, 3}));
  CHECK(jiq[1] == 1.0);
  CHECK(jiq[2] == doctest::Approx(0.3));

  const auto i1f = routing_law(Policy::i1f(), occ({0, 2, 3}));
  CHECK(i1f[1] == 1.0);
  CHECK(i1f[2] == 0.0);
  const auto i1f_full = routing_law(Policy::i1f(), occ({0, 0, 4, 1}));
  CHECK(i1f_full[2] == 1.0);
  CHECK(i1f_full[3] == doctest::Approx(0.2));
}

TEST_CASE("routing law matches the independent join distribution (property)") {
  for (int b = 2; b <= 4; ++b)
    for (const auto& s : StateSpace(7, b))
      for (const auto& p : kAll) {
        const auto law = routing_law(p, s);
        std::vector<int> n(s.counts().begin(), s.counts().end());
        const auto join = oracle::join_distribution(p, n);
        double tail = 0;
        for (int i = b; i >= 0; --i) {
          tail += join[i];
          CHECK(law[i] == doctest::Approx(tail).epsilon(1e-12));
        }
      }
}

TEST_CASE("routing law: A_0 = 1, nonincreasing, in [0,1], consistent (property)") {
  for (const auto& s : StateSpace(8, 3))
    for (const auto& p : kAll) {
      const auto law = routing_law(p, s);
      CHECK(law[0] == 1.0);
      for (int i = 1; i <= 3; ++i) {
        CHECK(law[i] <= law[i - 1]);
        CHECK(law[i] >= 0.0);
        // No mass on an empty level
        if (s.count(i - 1) == 0) CHECK(law[i - 1] - law[i] == 0.0);
      }
    }
}

TEST_CASE("JSQ minimizes every A_i; Random upper-bounds JSQ/I1F/JIQ (property)") {
  for (const auto& s : StateSpace(9, 3)) {
    const auto j = routing_law(Policy::jsq(), s);
    const auto r = routing_law(Policy::random(), s);
    for (const auto& p : kAll) {
      const auto l = routing_law(p, s);
      for (int i = 0; i <= 3; ++i) CHECK(j[i] <= l[i] + 1e-15);
    }
    for (const auto& p : {Policy::i1f(), Policy::jiq(), Policy::pod(3)}) {
      const auto l = routing_law(p, s);
      for (int i = 0; i <= 3; ++i) CHECK(l[i] <= r[i] + 1e-15);
    }
    // PoD with one sample is Random
    const auto one = routing_law(Policy::pod(1), s);
    for (int i = 0; i <= 3; ++i) CHECK(one[i] == doctest::Approx(r[i]));
  }
}

TEST_CASE("fill_routing_law agrees with routing_law") {
  std::vector<double> out(4);
  for (const auto& s : StateSpace(6, 3))
    for (const auto& p : kAll) {
      fill_routing_law(p, s.counts(), out);
      const auto law = routing_law(p, s);
      for (int i = 0; i <= 3; ++i) CHECK(out[i] == law[i]);
    }
}

TEST_CASE("policy parsing and names") {
  const auto c = SystemConfig::with_alpha(100, 0.3, 2);
  CHECK(Policy::parse("jsq", c) == Policy::jsq());
  CHECK(Policy::parse("i1f", c) == Policy::i1f());
  CHECK(Policy::parse("jiq", c) == Policy::jiq());
  CHECK(Policy::parse("random", c) == Policy::random());
  CHECK(Policy::parse("pod:2", c) == Policy::pod(2));
  // ceil(100^0.3 ln 100) = ceil(18.33) = 19
  CHECK(Policy::parse("pod:auto", c).d == static_cast<int>(std::ceil(std::pow(100, 0.3) * std::log(100.0))));
  CHECK(Policy::pod(7).name() == "pod:7");
  CHECK(Policy::jsq().name() == "jsq");
  CHECK(Policy::pod(7).kind_name() == "pod");
  CHECK_ERROR_CODE(Policy::parse("pod:0", c), ErrorCode::parse_error);
  CHECK_ERROR_CODE(Policy::parse("pod:x", c), ErrorCode::parse_error);
  CHECK_ERROR_CODE(Policy::parse("lwl", c), ErrorCode::parse_error);
}

TEST_CASE("pod:auto at N = 1e6, alpha = 0.3") {
  const auto c = SystemConfig::with_alpha(1'000'000, 0.3, 2);
  // N^0.3 ln N = 63.0957 * 13.8155 = 871.7
  CHECK(Policy::pod_auto(c).d == 872);
}

TEST_CASE("condition report: exhaustive") {
  // With b = 2, k log N / sqrt N >= 1 for every N <= 20, so tau < 1 needs a
  // deeper buffer (smaller k) and a light explicit load:
  // N = 20, b = 5: tau = 0.1 + 1.125 * 0.6699 = 0.854.
  const auto low = SystemConfig::with_lambda(20, 0.1, 5);
  REQUIRE(low.tau() < 1.0);
  for (const auto& p : {Policy::jsq(), Policy::i1f(), Policy::jiq()}) {
    const auto r = condition_report_exhaustive(p, low);
    CHECK(r.max_a1 == 0.0);
    CHECK(r.satisfied);
    CHECK(r.exhaustive);
    CHECK_FALSE(r.region_saturated);
    CHECK(r.checked_states > 0);
  }
  const auto rnd = condition_report_exhaustive(Policy::random(), low);
  CHECK_FALSE(rnd.satisfied);
  REQUIRE(rnd.witness.has_value());
  CHECK(rnd.max_a1 == doctest::Approx(rnd.witness->tail(1)));
  CHECK(rnd.max_a1 <= low.tau());

  // With the sub-Halfin-Whitt load at N = 10, tau > 1 and the all-busy
  // state lies in the region, where every policy sends jobs to a busy server.
  const auto sat = SystemConfig::with_alpha(10, 0.3, 2);
  REQUIRE(sat.tau() > 1.0);
  const auto r = condition_report_exhaustive(Policy::jsq(), sat);
  CHECK(r.region_saturated);
  CHECK(r.max_a1 == 1.0);
  CHECK_FALSE(r.satisfied);
  CHECK(r.checked_states == StateSpace::count(10, 2));
}

TEST_CASE("condition report: formula agrees with exhaustive where both apply") {
  for (double lambda : {0.05, 0.1, 0.9})
    for (const auto& p : {Policy::jsq(), Policy::i1f(), Policy::jiq(), Policy::random()}) {
      const auto c = SystemConfig::with_lambda(16, lambda, 5);
      const auto e = condition_report_exhaustive(p, c);
      const auto f = condition_report_formula(p, c);
      CAPTURE(lambda);
      CAPTURE(p.name());
      if (p.kind == PolicyKind::random) {
        // The exhaustive max is attained on the 1/N grid; the envelope is tau.
        CHECK(e.max_a1 <= f.max_a1 + 1e-12);
        CHECK(f.max_a1 - e.max_a1 < 1.0 / 16 + 1e-12);
      } else {
        CHECK(e.max_a1 == f.max_a1);
      }
      CHECK(e.satisfied == f.satisfied);
    }
}

TEST_CASE("condition report: PoD formula at N = 1e6") {
  const auto c = SystemConfig::with_alpha(1'000'000, 0.3, 2);
  const auto p = Policy::pod_auto(c);
  const auto r = condition_report_formula(p, c);
  CHECK_FALSE(r.exhaustive);
  CHECK(r.limit == doctest::Approx(1e-3));
  CHECK(r.threshold == doctest::Approx(1.0048743339).epsilon(1e-9));
  // tau > 1: the region includes S_1 = 1, and sampling only busy servers
  // gives A_1 = 1. The envelope min(1, tau)^d is 1.
  CHECK(r.region_saturated);
  CHECK(r.max_a1 == 1.0);
  CHECK_FALSE(r.satisfied);
}
