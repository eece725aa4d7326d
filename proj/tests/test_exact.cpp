#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lbss/exact.hpp"
#include "lbss/stein.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace lbss;

namespace {

const Policy kPolicies[] = {Policy::jsq(), Policy::i1f(), Policy::jiq(), Policy::pod(2),
                            Policy::random()};

double max_abs_diff(const StationaryDist& d, const oracle::Chain& ref, const Eigen::VectorXd& pi) {
  double worst = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto c = (*d.space)[i].counts();
    const auto it = ref.index.find(std::vector<int>(c.begin(), c.end()));
    // States unreachable from empty carry zero mass in the library's solve.
    const double r = it == ref.index.end() ? 0.0 : pi(it->second);
    worst = std::max(worst, std::abs(d.probs[i] - r));
  }
  return worst;
}

}  // namespace

TEST_CASE("single server: birth-death closed form") {
  const auto c = SystemConfig::with_lambda(1, 0.5, 2);
  for (const auto& p : kPolicies) {
    const auto gen = build_generator(c, p);
    REQUIRE(gen.size() == 3);
    CHECK(gen.rate(0, 1) == 0.5);
    CHECK(gen.rate(1, 2) == 0.5);
    CHECK(gen.rate(1, 0) == 1.0);
    CHECK(gen.rate(2, 1) == 1.0);
    CHECK(gen.rate(0, 2) == 0.0);

    const auto d = stationary(gen);
    CHECK(std::abs(d.probs[0] - 4.0 / 7) < 1e-12);
    CHECK(std::abs(d.probs[1] - 2.0 / 7) < 1e-12);
    CHECK(std::abs(d.probs[2] - 1.0 / 7) < 1e-12);

    const auto m = exact_metrics(d, c, p);
    CHECK(std::abs(m.p_block - 1.0 / 7) < 1e-12);
    CHECK(std::abs(m.mean_total - 4.0 / 7) < 1e-12);
    CHECK(std::abs(m.mean_wait - 1.0 / 3) < 1e-12);
    CHECK(std::abs(m.p_wait - 3.0 / 7) < 1e-12);

    CHECK(expectation(d, [](const Occupancy&) { return 1.0; }) == doctest::Approx(1.0));
    CHECK(expectation(d, [](const Occupancy& s) { return s.count(2) == 1 ? 1.0 : 0.0; }) ==
          doctest::Approx(1.0 / 7));
  }
}

TEST_CASE("symmetric two-state chain") {
  auto space = std::make_shared<const StateSpace>(1, 1);
  const GeneratorMatrix gen(space, {0, 1, 2}, {1, 0}, {1.0, 1.0});
  for (bool iterative : {false, true}) {
    SolveOptions o;
    o.force_iterative = iterative;
    const auto d = stationary(gen, o);
    CHECK(d.method == (iterative ? SolveMethod::power : SolveMethod::gth));
    CHECK(d.probs[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(d.probs[1] == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("reducible chain is rejected") {
  auto space = std::make_shared<const StateSpace>(1, 1);
  const GeneratorMatrix gen(space, {0, 0, 0}, {}, {});
  CHECK_ERROR_CODE(stationary(gen), ErrorCode::reducible);
}

TEST_CASE("generator structure (property)") {
  for (const auto& p : kPolicies) {
    const auto c = SystemConfig::with_lambda(6, 0.8, 3);
    const auto gen = build_generator(c, p);
    for (std::size_t r = 0; r < gen.size(); ++r) {
      double sum = gen.diagonal(r);
      for (double q : gen.row_rates(r)) {
        CHECK(q > 0.0);
        sum += q;
      }
      CHECK(std::abs(sum) < 1e-12);
      CHECK(gen.diagonal(r) >= -gen.max_exit_rate());
    }
    // all-full row: one departure at rate N
    const auto full = gen.space().index_of(Occupancy::full(6, 3));
    REQUIRE(gen.row_columns(full).size() == 1);
    CHECK(gen.row_rates(full)[0] == 6.0);
  }
  const auto two = build_generator(SystemConfig::with_lambda(2, 0.5, 2), Policy::jsq());
  CHECK(two.size() == 6);
}

TEST_CASE("GTH agrees with the dense oracle on small chains") {
  for (int n = 1; n <= 10; ++n)
    for (int b : {2, 3})
      for (const auto& p : kPolicies) {
        if (StateSpace::count(n, b) > 500) continue;
        for (double lambda : {0.5, 0.9}) {
          const auto c = SystemConfig::with_lambda(n, lambda, b);
          const auto d = stationary(build_generator(c, p));
          const auto ref = oracle::build(n, b, lambda, p);
          const auto pi = oracle::solve(ref.q);
          CAPTURE(n);
          CAPTURE(b);
          CAPTURE(p.name());
          CHECK(max_abs_diff(d, ref, pi) < 1e-10);
        }
      }
}

TEST_CASE("power iteration fallback agrees with GTH") {
  const auto c = SystemConfig::with_alpha(10, 0.3, 2);
  for (const auto& p : kPolicies) {
    const auto gen = build_generator(c, p);
    SolveOptions o;
    o.force_iterative = true;
    o.tolerance = 1e-13;
    const auto power = stationary(gen, o);
    const auto gth = stationary(gen);
    CHECK(power.method == SolveMethod::power);
    CHECK(power.sweeps > 0);
    for (std::size_t i = 0; i < gth.size(); ++i) CHECK(std::abs(power.probs[i] - gth.probs[i]) < 1e-9);
  }
}

TEST_CASE("power iteration reports non-convergence") {
  const auto gen = build_generator(SystemConfig::with_alpha(30, 0.3, 2), Policy::random());
  SolveOptions o;
  o.force_iterative = true;
  o.max_sweeps = 3;
  o.tolerance = 1e-15;
  CHECK_ERROR_CODE(stationary(gen, o), ErrorCode::not_converged);
}

TEST_CASE("stationary distribution invariants (property)") {
  for (const auto& p : kPolicies)
    for (int b : {2, 3, 4}) {
      const auto c = SystemConfig::with_alpha(12, 0.3, b);
      const auto gen = build_generator(c, p);
      const auto d = stationary(gen);
      double total = 0;
      for (double v : d.probs) {
        CHECK(v >= 0.0);
        total += v;
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
      CHECK(gen.residual(d.probs) < 1e-10);
      CHECK(d.residual == gen.residual(d.probs));

      // E[Gf] = 0 for any f
      std::vector<double> f(d.size());
      for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::sin(static_cast<double>(i)) + 0.1 * i;
      const auto gf = gen.apply(f);
      double mean = 0;
      for (std::size_t i = 0; i < f.size(); ++i) mean += d.probs[i] * gf[i];
      CHECK(std::abs(mean) < 1e-10 * gen.max_exit_rate() * f.size());

      const auto m = exact_metrics(d, c, p);
      CHECK(m.p_block <= m.p_wait + 1e-15);
      CHECK(m.p_wait <= 1.0);
      CHECK(m.excess >= 0.0);
      CHECK(m.excess <= m.mean_total);
      CHECK(m.mean_total <= b);
      // Throughput balance: lambda (1 - p_block) = E[S_1]
      const double busy = expectation(d, [](const Occupancy& s) { return s.tail(1); });
      CHECK(c.lambda() * (1.0 - m.p_block) == doctest::Approx(busy).epsilon(1e-10));
    }
}

TEST_CASE("JSQ blocks no more than Random") {
  for (int n : {4, 8, 12})
    for (double lambda : {0.5, 0.9}) {
      const auto c = SystemConfig::with_lambda(n, lambda, 2);
      auto metrics = [&](const Policy& p) { return exact_metrics(stationary(build_generator(c, p)), c, p); };
      const auto j = metrics(Policy::jsq());
      const auto r = metrics(Policy::random());
      CHECK(j.p_block <= r.p_block);
      CHECK(j.mean_wait <= r.mean_wait);
      CHECK(j.p_wait <= r.p_wait);
    }
}

TEST_CASE("zero load: all mass on the empty system") {
  const auto c = SystemConfig::with_lambda(5, 0.0, 2);
  const auto d = stationary(build_generator(c, Policy::jsq()));
  CHECK(d.probs[0] == 1.0);
  const auto m = exact_metrics(d, c, Policy::jsq());
  CHECK(m.mean_total == 0.0);
  CHECK(m.excess == 0.0);
  CHECK(m.p_wait == 0.0);
  CHECK(m.p_block == 0.0);
  CHECK(m.mean_wait == 0.0);
}

TEST_CASE("Little's law helper") {
  CHECK(littles_law_wait(4.0 / 7, 1.0 / 7, 0.5) == doctest::Approx(1.0 / 3));
  CHECK(littles_law_wait(0.0, 0.0, 0.0) == 0.0);
}

TEST_CASE("distribution CSV") {
  const auto c = SystemConfig::with_lambda(1, 0.5, 2);
  const auto d = stationary(build_generator(c, Policy::jsq()));
  const auto path = std::filesystem::temp_directory_path() / "lbss_test_dist.csv";
  write_distribution_csv(d, path);
  std::ifstream in(path);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header == "n0,n1,n2,probability");
  CHECK(first.rfind("1,0,0,", 0) == 0);
  CHECK(std::stod(first.substr(6)) == doctest::Approx(4.0 / 7));
  std::filesystem::remove(path);
}
