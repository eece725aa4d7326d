#include "lbss/exact.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace lbss {

GeneratorMatrix::GeneratorMatrix(std::shared_ptr<const StateSpace> space,
                                 std::vector<std::size_t> row_start,
                                 std::vector<std::size_t> columns, std::vector<double> rates)
    : space_(std::move(space)),
      row_start_(std::move(row_start)),
      columns_(std::move(columns)),
      rates_(std::move(rates)) {
  const auto n = space_->size();
  diagonal_.assign(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double out = 0.0;
    for (std::size_t e = row_start_[r]; e < row_start_[r + 1]; ++e) {
      out += rates_[e];
      const auto c = columns_[e];
      bandwidth_ = std::max(bandwidth_, c > r ? c - r : r - c);
    }
    diagonal_[r] = -out;
  }
}

std::span<const std::size_t> GeneratorMatrix::row_columns(std::size_t row) const {
  return std::span<const std::size_t>(columns_).subspan(row_start_[row], row_start_[row + 1] - row_start_[row]);
}

std::span<const double> GeneratorMatrix::row_rates(std::size_t row) const {
  return std::span<const double>(rates_).subspan(row_start_[row], row_start_[row + 1] - row_start_[row]);
}

double GeneratorMatrix::rate(std::size_t row, std::size_t column) const {
  if (row == column) return diagonal_[row];
  for (std::size_t e = row_start_[row]; e < row_start_[row + 1]; ++e) {
    if (columns_[e] == column) return rates_[e];
  }
  return 0.0;
}

double GeneratorMatrix::max_exit_rate() const noexcept {
  double m = 0.0;
  for (double d : diagonal_) m = std::max(m, -d);
  return m;
}

std::vector<double> GeneratorMatrix::apply(std::span<const double> f) const {
  std::vector<double> out(size(), 0.0);
  for (std::size_t r = 0; r < size(); ++r) {
    double acc = 0.0;
    for (std::size_t e = row_start_[r]; e < row_start_[r + 1]; ++e) {
      acc += rates_[e] * (f[columns_[e]] - f[r]);
    }
    out[r] = acc;
  }
  return out;
}

namespace {

std::vector<double> left_multiply(const GeneratorMatrix& gen, std::span<const double> pi) {
  std::vector<double> out(gen.size(), 0.0);
  for (std::size_t r = 0; r < gen.size(); ++r) {
    out[r] += pi[r] * gen.diagonal(r);
    const auto cols = gen.row_columns(r);
    const auto rates = gen.row_rates(r);
    for (std::size_t e = 0; e < cols.size(); ++e) out[cols[e]] += pi[r] * rates[e];
  }
  return out;
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Grassmann-Taksar-Heyman elimination restricted to the band |i - j| <= w.
// Eliminating state k only couples states inside [k - w, k), so fill-in never
// leaves the band.
std::vector<double> solve_gth(const GeneratorMatrix& gen) {
  const std::size_t n = gen.size();
  const std::size_t w = gen.bandwidth();
  const std::size_t stride = 2 * w + 1;
  std::vector<double> band(n * stride, 0.0);
  auto at = [&](std::size_t i, std::size_t j) -> double& { return band[i * stride + (j + w - i)]; };

  for (std::size_t r = 0; r < n; ++r) {
    const auto cols = gen.row_columns(r);
    const auto rates = gen.row_rates(r);
    for (std::size_t e = 0; e < cols.size(); ++e) at(r, cols[e]) = rates[e];
  }

  for (std::size_t k = n; k-- > 1;) {
    const std::size_t lo = k > w ? k - w : 0;
    double s = 0.0;
    for (std::size_t j = lo; j < k; ++j) s += at(k, j);
    if (!(s > 0.0)) {
      throw Error(ErrorCode::reducible,
                  "generator is reducible: state " + std::to_string(k) + " cannot reach lower states");
    }
    for (std::size_t i = lo; i < k; ++i) at(i, k) /= s;
    for (std::size_t i = lo; i < k; ++i) {
      const double a = at(i, k);
      if (a == 0.0) continue;
      for (std::size_t j = lo; j < k; ++j) {
        if (j != i) at(i, j) += a * at(k, j);
      }
    }
  }

  std::vector<double> pi(n, 0.0);
  pi[0] = 1.0;
  for (std::size_t k = 1; k < n; ++k) {
    const std::size_t lo = k > w ? k - w : 0;
    double acc = 0.0;
    for (std::size_t i = lo; i < k; ++i) acc += pi[i] * at(i, k);
    pi[k] = acc;
  }
  const double total = std::accumulate(pi.begin(), pi.end(), 0.0);
  for (double& p : pi) p /= total;
  return pi;
}

}  // namespace

double GeneratorMatrix::residual(std::span<const double> pi) const {
  return max_abs(left_multiply(*this, pi));
}

GeneratorMatrix build_generator(const SystemConfig& config, const Policy& policy, std::size_t cap) {
  auto space = std::make_shared<const StateSpace>(config.servers(), config.b(), cap);
  const auto n = space->size();
  const auto levels = static_cast<std::size_t>(config.b()) + 1;

  std::vector<std::size_t> row_start;
  std::vector<std::size_t> columns;
  std::vector<double> rates;
  row_start.reserve(n + 1);
  columns.reserve(n * 2 * static_cast<std::size_t>(config.b()));
  rates.reserve(columns.capacity());

  std::vector<double> law(levels);
  std::vector<std::int32_t> target(levels);
  row_start.push_back(0);
  for (const auto& s : *space) {
    fill_routing_law(policy, s.counts(), law);
    visit_transitions(s.counts(), law, config.lambda(), config.servers(), [&](int from, int to, double rate) {
      std::copy(s.counts().begin(), s.counts().end(), target.begin());
      --target[static_cast<std::size_t>(from)];
      ++target[static_cast<std::size_t>(to)];
      columns.push_back(space->index_of(target));
      rates.push_back(rate);
    });
    row_start.push_back(columns.size());
  }
  return GeneratorMatrix(std::move(space), std::move(row_start), std::move(columns), std::move(rates));
}

StationaryDist stationary(const GeneratorMatrix& gen, const SolveOptions& options) {
  StationaryDist dist;
  dist.space = gen.shared_space();
  const auto n = gen.size();
  if (n == 1) {
    dist.probs = {1.0};
    return dist;
  }

  const std::size_t band_entries = n * (2 * gen.bandwidth() + 1);
  const bool direct = !options.force_iterative && n <= options.direct_limit &&
                      band_entries <= options.max_band_entries;
  if (direct) {
    dist.method = SolveMethod::gth;
    dist.probs = solve_gth(gen);
    dist.residual = gen.residual(dist.probs);
    return dist;
  }

  // Power iteration on the uniformized kernel P = I + Q / q, q = max exit rate.
  dist.method = SolveMethod::power;
  const double q = gen.max_exit_rate();
  if (!(q > 0.0)) throw Error(ErrorCode::reducible, "generator has no transitions");
  std::vector<double> pi(n, 1.0 / static_cast<double>(n));
  for (std::size_t sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    auto flow = left_multiply(gen, pi);
    dist.residual = max_abs(flow);
    dist.sweeps = sweep;
    if (dist.residual <= options.tolerance) break;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      pi[i] = std::max(0.0, pi[i] + flow[i] / q);
      total += pi[i];
    }
    for (double& p : pi) p /= total;
  }
  if (dist.residual > options.tolerance) {
    throw Error(ErrorCode::not_converged,
                "power iteration stopped at residual " + std::to_string(dist.residual));
  }
  dist.probs = std::move(pi);
  return dist;
}

double expectation(const StationaryDist& dist, const std::function<double(const Occupancy&)>& f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist.probs[i] != 0.0) acc += dist.probs[i] * f((*dist.space)[i]);
  }
  return acc;
}

double littles_law_wait(double mean_total, double p_block, double lambda) {
  const double throughput = lambda * (1.0 - p_block);
  if (!(throughput > 0.0)) {
    if (mean_total == 0.0) return 0.0;
    throw Error(ErrorCode::degenerate_load, "zero throughput with a nonempty system");
  }
  return mean_total / throughput - 1.0;
}

ExactMetrics exact_metrics(const StationaryDist& dist, const SystemConfig& config, const Policy& policy) {
  if (!dist.space || dist.space->servers() != config.servers() || dist.space->b() != config.b()) {
    throw Error(ErrorCode::invalid_config, "distribution does not match the configuration");
  }
  ExactMetrics m;
  const double tau = config.tau();
  std::vector<double> law(static_cast<std::size_t>(config.b()) + 1);
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const double p = dist.probs[i];
    if (p == 0.0) continue;
    const auto& s = (*dist.space)[i];
    const double total = s.total();
    fill_routing_law(policy, s.counts(), law);
    m.mean_total += p * total;
    m.excess += p * std::max(total - tau, 0.0);
    m.p_wait += p * law[1];
    m.p_block += p * law.back();
  }
  m.mean_wait = littles_law_wait(m.mean_total, m.p_block, config.lambda());
  return m;
}

void write_distribution_csv(const StationaryDist& dist, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  const int b = dist.space->b();
  for (int i = 0; i <= b; ++i) out << 'n' << i << ',';
  out << "probability\n";
  out.precision(17);
  for (std::size_t r = 0; r < dist.size(); ++r) {
    for (auto c : (*dist.space)[r].counts()) out << c << ',';
    out << dist.probs[r] << '\n';
  }
  if (!out) throw Error(ErrorCode::io_error, "failed writing " + path.string());
}

}  // namespace lbss
