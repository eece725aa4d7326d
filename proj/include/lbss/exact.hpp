#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include "lbss/model.hpp"
#include "lbss/policies.hpp"

namespace lbss {

// Sparse CTMC generator over an enumerated state space. Off-diagonal rates are
// stored row-wise (CSR); the diagonal is minus the off-diagonal row sum.
class GeneratorMatrix {
 public:
  GeneratorMatrix(std::shared_ptr<const StateSpace> space, std::vector<std::size_t> row_start,
                  std::vector<std::size_t> columns, std::vector<double> rates);

  std::size_t size() const noexcept { return space_->size(); }
  const StateSpace& space() const noexcept { return *space_; }
  std::shared_ptr<const StateSpace> shared_space() const noexcept { return space_; }

  std::span<const std::size_t> row_columns(std::size_t row) const;
  std::span<const double> row_rates(std::size_t row) const;
  double diagonal(std::size_t row) const { return diagonal_[row]; }
  double rate(std::size_t row, std::size_t column) const;

  // max |i - j| over stored entries.
  std::size_t bandwidth() const noexcept { return bandwidth_; }
  // max_i -q_ii
  double max_exit_rate() const noexcept;

  // (Gf)(s) = sum_t q(s, t) (f(t) - f(s)) for every state.
  std::vector<double> apply(std::span<const double> f) const;
  // max_j |(pi Q)_j|
  double residual(std::span<const double> pi) const;

 private:
  std::shared_ptr<const StateSpace> space_;
  std::vector<std::size_t> row_start_;
  std::vector<std::size_t> columns_;
  std::vector<double> rates_;
  std::vector<double> diagonal_;
  std::size_t bandwidth_ = 0;
};

GeneratorMatrix build_generator(const SystemConfig& config, const Policy& policy,
                                std::size_t cap = kDefaultStateCap);

enum class SolveMethod { gth, power };

struct SolveOptions {
  // GTH is used up to this many states, provided the band fits in memory.
  std::size_t direct_limit = 50'000;
  std::size_t max_band_entries = 40'000'000;
  double tolerance = 1e-10;
  std::size_t max_sweeps = 1'000'000;
  bool force_iterative = false;
};

struct StationaryDist {
  std::shared_ptr<const StateSpace> space;
  std::vector<double> probs;
  SolveMethod method = SolveMethod::gth;
  double residual = 0.0;
  std::size_t sweeps = 0;

  std::size_t size() const noexcept { return probs.size(); }
};

StationaryDist stationary(const GeneratorMatrix& gen, const SolveOptions& options = {});

struct ExactMetrics {
  double mean_total = 0.0;  // E[sum_i S_i]
  double excess = 0.0;      // E[max{sum_i S_i - tau, 0}]
  double p_wait = 0.0;      // E[A_1(S)]
  double p_block = 0.0;     // E[A_b(S)]
  double mean_wait = 0.0;   // Little's law
};

double expectation(const StationaryDist& dist, const std::function<double(const Occupancy&)>& f);

ExactMetrics exact_metrics(const StationaryDist& dist, const SystemConfig& config,
                           const Policy& policy);

// E[W] = E[sum S_i] / (lambda (1 - p_block)) - 1. An empty system (zero
// throughput and zero mass) has zero wait.
double littles_law_wait(double mean_total, double p_block, double lambda);

// One row per state: n_0,...,n_b,probability
void write_distribution_csv(const StationaryDist& dist, const std::filesystem::path& path);

}  // namespace lbss
