#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lbss/model.hpp"
#include "lbss/policies.hpp"

namespace lbss {

inline constexpr int kSchemaVersion = 1;

// Column order of the results CSV.
inline constexpr const char* kCsvColumns[] = {
    "schema_version", "N", "alpha", "lambda", "b", "policy", "d", "metric",
    "source", "value", "ci", "satisfied", "margin", "seed", "wall_time_s"};

struct Modes {
  bool exact = false;
  bool simulate = false;
  bool drift = false;
  bool tails = false;
  bool stein = false;
  bool bounds = false;
};

struct SimDefaults {
  double horizon = 1e4;
  std::optional<double> warmup;  // 10% of horizon when absent
  int batches = 20;
  int replications = 1;
};

struct SimOverride {
  std::int64_t servers = 0;
  std::optional<double> horizon;
  std::optional<double> warmup;
};

struct ExperimentConfig {
  std::vector<std::int64_t> servers;
  std::vector<double> alphas;   // exactly one of alphas / lambdas is nonempty
  std::vector<double> lambdas;
  std::vector<int> buffers;
  std::vector<std::string> policies;
  Modes modes;
  SimDefaults sim;
  std::vector<SimOverride> per_n;
  std::uint64_t seed = 1;
  std::string out_dir = "lbss-out";
  std::size_t state_cap = kDefaultStateCap;
  bool exact_required = false;
  std::optional<int> tail_max_j;
};

// Parses the JSON document; errors name the offending field (and line, for
// syntax errors).
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct RunOptions {
  int threads = 1;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  bool verify = false;
  bool print_table = true;
};

struct ResultRow {
  std::int64_t servers = 0;
  std::optional<double> alpha;
  double lambda = 0.0;
  int b = 0;
  std::string policy;
  std::optional<int> d;
  std::string metric;
  std::string source;  // exact | sim | bound
  double value = 0.0;
  std::optional<double> ci;
  std::optional<bool> satisfied;
  std::optional<double> margin;
  std::optional<std::uint64_t> seed;
  double wall_time_s = 0.0;
};

struct RunOutcome {
  int exit_code = 0;
  std::vector<ResultRow> rows;
  std::filesystem::path csv_path;
  std::filesystem::path summary_path;
  std::size_t hard_failures = 0;
  std::vector<std::string> warnings;
};

// Seed of the run at position `run_index` in grid order.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t run_index);

RunOutcome run_experiment(const ExperimentConfig& config, const RunOptions& options, std::ostream& log);

// CSV text with the fixed header; `include_wall_time = false` blanks that
// column so two runs can be compared byte for byte.
std::string format_rows_csv(const std::vector<ResultRow>& rows, bool include_wall_time = true);
std::vector<ResultRow> read_rows_csv(const std::filesystem::path& path);

struct TrendPoint {
  std::int64_t servers = 0;
  std::string source;
  std::optional<double> excess_scaled;  // excess sqrt(N) log N / b
  std::optional<double> excess_ci;
  std::optional<double> p_wait_scaled;  // p_W sqrt(N) / log N
  std::optional<double> p_wait_ci;
  std::optional<double> mean_wait_scaled;  // E[W] sqrt(N) / log N
  std::optional<double> mean_wait_ci;
};

struct TrendGroup {
  std::string policy;
  int b = 0;
  std::string load;  // "alpha=0.3" or "lambda=0.9"
  std::vector<TrendPoint> points;  // ascending N
  std::optional<bool> excess_nonincreasing;
  std::optional<bool> p_wait_nonincreasing;
  std::optional<bool> mean_wait_nonincreasing;
};

struct TrendReport {
  std::vector<TrendGroup> groups;
};

TrendReport compare_results(const std::vector<std::filesystem::path>& csv_paths);
void print_trend(const TrendReport& report, std::ostream& out);
std::string format_trend_csv(const TrendReport& report);

}  // namespace lbss
