#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <cmath>
#include <random>
#include <set>

#include "lbss/error.hpp"
#include "lbss/model.hpp"
#include "lbss/policies.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace lbss;

namespace {

Occupancy occ(std::vector<std::int32_t> c) { return Occupancy(std::move(c)); }

}  // namespace

TEST_CASE("config derived constants") {
  const auto c = SystemConfig::with_alpha(10'000, 0.3, 2);
  CHECK(c.lambda() == doctest::Approx(1.0 - std::pow(1e4, -0.3)).epsilon(1e-15));
  CHECK(c.k() == 1.5);
  CHECK(c.k_tilde() == 1.25);
  CHECK(c.tau() == doctest::Approx(c.lambda() + 1.5 * std::log(1e4) / 100.0).epsilon(1e-15));
  CHECK(c.idle_fraction() == doctest::Approx(std::pow(1e4, -0.3)).epsilon(1e-12));

  const auto c3 = SystemConfig::with_lambda(50, 0.9, 3);
  CHECK(c3.k() == 1.25);
  CHECK(c3.k_tilde() == 1.125);
  CHECK_FALSE(c3.alpha().has_value());
  CHECK(c3.lambda() == 0.9);
}

TEST_CASE("config validation") {
  CHECK_ERROR_CODE(SystemConfig::with_alpha(0, 0.3, 2), ErrorCode::invalid_config);
  CHECK_ERROR_CODE(SystemConfig::with_alpha(10, 0.3, 1), ErrorCode::invalid_config);
  CHECK_ERROR_CODE(SystemConfig::with_alpha(10, 0.5, 2), ErrorCode::invalid_config);
  CHECK_ERROR_CODE(SystemConfig::with_alpha(10, 0.0, 2), ErrorCode::invalid_config);
  CHECK_ERROR_CODE(SystemConfig::with_lambda(10, 1.0, 2), ErrorCode::invalid_config);
  CHECK_ERROR_CODE(SystemConfig::with_lambda(10, -0.1, 2), ErrorCode::invalid_config);
  CHECK_NOTHROW(SystemConfig::with_lambda(10, 0.0, 2));
}

TEST_CASE("enumeration: small cases") {
  const auto one = enumerate_states(SystemConfig::with_lambda(1, 0.5, 2));
  REQUIRE(one.size() == 3);
  CHECK(one[0] == occ({1, 0, 0}));
  CHECK(one[1] == occ({0, 1, 0}));
  CHECK(one[2] == occ({0, 0, 1}));
  CHECK(enumerate_states(SystemConfig::with_lambda(2, 0.5, 2)).size() == 6);
  CHECK(enumerate_states(SystemConfig::with_alpha(20, 0.3, 3)).size() == 1771);
}

TEST_CASE("enumeration matches brute-force composition count") {
  for (int n = 1; n <= 20; ++n)
    for (int b = 2; b <= 4; ++b) {
      CAPTURE(n);
      CAPTURE(b);
      const auto expected = oracle::count_compositions(n, b);
      const StateSpace space(n, b);
      CHECK(space.size() == expected);
      CHECK(StateSpace::count(n, b) == expected);
    }
}

TEST_CASE("state space: distinct, conserving, ranked consistently") {
  for (auto [n, b] : {std::pair{7, 2}, {9, 3}, {6, 4}}) {
    const StateSpace space(n, b);
    std::set<std::vector<std::int32_t>> seen;
    for (std::size_t i = 0; i < space.size(); ++i) {
      const auto& s = space[i];
      const auto c = s.counts();
      CHECK(std::accumulate(c.begin(), c.end(), 0) == n);
      CHECK(std::all_of(c.begin(), c.end(), [](auto v) { return v >= 0; }));
      CHECK(seen.insert({c.begin(), c.end()}).second);
      CHECK(space.index_of(s) == i);
    }
    // lex-descending order
    for (std::size_t i = 1; i < space.size(); ++i) {
      const auto a = space[i - 1].counts();
      const auto z = space[i].counts();
      CHECK(std::lexicographical_compare(z.begin(), z.end(), a.begin(), a.end()));
    }
  }
}

TEST_CASE("state cap is enforced before allocation") {
  CHECK(StateSpace::count(1'000'000, 2) > kDefaultStateCap);
  CHECK_ERROR_CODE(StateSpace(1'000'000, 2), ErrorCode::cap_exceeded);
  CHECK_ERROR_CODE(StateSpace(30, 3, 100), ErrorCode::cap_exceeded);
}

TEST_CASE("tail fractions") {
  CHECK(tail_fractions(occ({2, 0, 0})) == std::vector<double>{0.0, 0.0});
  CHECK(tail_fractions(occ({0, 1, 1})) == std::vector<double>{1.0, 0.5});
  CHECK(tail_fractions(occ({1, 1, 0})) == std::vector<double>{0.5, 0.0});

  const auto s = occ({3, 2, 4, 1});
  CHECK(s.tail(0) == 1.0);
  CHECK(s.tail(4) == 0.0);
  CHECK(s.total() == doctest::Approx((2 + 8 + 3) / 10.0));
  CHECK(s.jobs() == 13);
}

TEST_CASE("tail fractions are nonincreasing and bounded (property)") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const int b = 2 + static_cast<int>(rng() % 4);
    std::vector<std::int32_t> c(b + 1);
    for (auto& v : c) v = static_cast<std::int32_t>(rng() % 7);
    if (std::accumulate(c.begin(), c.end(), 0) == 0) c[0] = 1;
    const auto t = tail_fractions(occ(c));
    double prev = 1.0;
    for (double v : t) {
      CHECK(v <= prev);
      CHECK(v >= 0.0);
      prev = v;
    }
    double sum = 0;
    for (double v : t) sum += v;
    CHECK(sum == doctest::Approx(occ(c).total()));
  }
}

TEST_CASE("transitions: worked examples") {
  const auto c = SystemConfig::with_lambda(2, 0.5, 2);
  const auto s = occ({1, 1, 0});
  const auto tr = transitions(s, routing_law(Policy::jsq(), s), c);
  REQUIRE(tr.size() == 2);
  auto find = [&](const Occupancy& t) {
    auto it = std::find_if(tr.begin(), tr.end(), [&](const Transition& x) { return x.target == t; });
    REQUIRE(it != tr.end());
    return it->rate;
  };
  CHECK(find(occ({0, 2, 0})) == doctest::Approx(1.0));
  CHECK(find(occ({2, 0, 0})) == doctest::Approx(1.0));

  for (const auto& p : {Policy::jsq(), Policy::i1f(), Policy::jiq(), Policy::pod(3), Policy::random()}) {
    const auto cfg = SystemConfig::with_lambda(5, 0.7, 2);
    const auto full = Occupancy::full(5, 2);
    const auto out = transitions(full, routing_law(p, full), cfg);
    REQUIRE(out.size() == 1);
    CHECK(out[0].target == occ({0, 1, 4}));
    CHECK(out[0].rate == doctest::Approx(5.0));

    const auto empty = Occupancy::empty(5, 2);
    const auto in = transitions(empty, routing_law(p, empty), cfg);
    REQUIRE(in.size() == 1);
    CHECK(in[0].target == occ({4, 1, 0}));
    CHECK(in[0].rate == doctest::Approx(3.5));
  }
}

TEST_CASE("transitions: rate conservation (property)") {
  // Total arrival rate is lambda N (1 - A_b); total departure rate is the
  // number of busy servers; every jump moves exactly one server by one level.
  const auto cfg = SystemConfig::with_lambda(9, 0.8, 3);
  for (const auto& p : {Policy::jsq(), Policy::i1f(), Policy::jiq(), Policy::pod(2), Policy::random()}) {
    for (const auto& s : StateSpace(9, 3)) {
      const auto law = routing_law(p, s);
      double up = 0, down = 0;
      for (const auto& t : transitions(s, law, cfg)) {
        CHECK(t.rate > 0.0);
        CHECK(std::abs(t.target.jobs() - s.jobs()) == 1);
        (t.target.jobs() > s.jobs() ? up : down) += t.rate;
      }
      CHECK(up == doctest::Approx(0.8 * 9 * (1.0 - law.block())));
      CHECK(down == doctest::Approx(9.0 * s.tail(1)));
    }
  }
}

TEST_CASE("transitions reject an inconsistent law") {
  const auto cfg = SystemConfig::with_lambda(2, 0.5, 2);
  // Mass on level 1 with no server there.
  CHECK_ERROR_CODE(transitions(occ({2, 0, 0}), RoutingLaw({1.0, 1.0, 0.0}), cfg),
                   ErrorCode::inconsistent_law);
  // A must be nonincreasing.
  CHECK_ERROR_CODE(transitions(occ({0, 1, 1}), RoutingLaw({1.0, 0.4, 0.6}), cfg),
                   ErrorCode::inconsistent_law);
  CHECK_NOTHROW(transitions(occ({0, 2, 0}), RoutingLaw({1.0, 1.0, 0.5}), cfg));
}
