#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lbss/exact.hpp"
#include "lbss/model.hpp"
#include "lbss/policies.hpp"

namespace lbss {

// Constants of the Stein/Lyapunov argument for one configuration. Requires
// N >= 2 so that log N > 0.
struct SteinContext {
  double tau = 0.0;        // lambda + k log N / sqrt N
  double scale = 0.0;      // log N / sqrt N, drift of the comparison generator
  double slope = 0.0;      // sqrt N / log N = 1 / scale
  double tilde_tau = 0.0;  // k~ log N / sqrt N, the collapse level
  double step = 0.0;       // 1 / N

  static SteinContext from(const SystemConfig& config);
};

// h(x) = max{x - tau, 0}
double eval_h(double x, const SteinContext& ctx);
// Closed-form solution of g'(x) * (-scale) = h(x), g = 0 below tau.
double eval_g(double x, const SteinContext& ctx);
double eval_g_prime(double x, const SteinContext& ctx);
// Right derivative at tau.
double eval_g_double_prime(double x, const SteinContext& ctx);

struct GradientBoundReport {
  std::size_t points = 0;
  double gprime_limit = 0.0;         // 2 / (sqrt N log N)
  double max_gprime_ratio = 0.0;     // max |g'| / limit on [tau - 2/N, tau + 2/N]
  double gdouble_limit = 0.0;        // sqrt N / log N
  double max_gdouble_ratio = 0.0;    // max |g''| / limit beyond tau
  double stein_residual = 0.0;       // max |g'(x)(-scale) - h(x)| on the grid
  bool satisfied = false;
};

GradientBoundReport gradient_bound_check(const SystemConfig& config, std::size_t points = 10'000);

// V(s) = min{ sum_{i>=2} S_i, tau - S_1 }. Negative when S_1 > tau.
double eval_V(const Occupancy& state, const SteinContext& ctx);

using StateFunction = std::function<double(const Occupancy&)>;

// sum over jumps of rate * (f(target) - f(state))
double drift_of(const StateFunction& f, const Occupancy& state, const Policy& policy,
                const SystemConfig& config);

struct DriftReport {
  std::size_t checked_states = 0;
  double worst_drift = 0.0;  // max drift over the checked states
  double bound = 0.0;        // -log N / (2(b-1) sqrt N) + 1/sqrt N
  std::vector<std::pair<Occupancy, double>> violations;
  bool premise_vacuous = false;  // tau >= 1
  // A_1 <= 1/sqrt N on every checked state with S_1 <= tau.
  bool a1_premise_held = true;
  double level = 0.0;  // log N / sqrt N
};

// Drift of V on every state with V >= log N / sqrt N.
DriftReport drift_condition_report(const SystemConfig& config, const Policy& policy,
                                   std::size_t cap = kDefaultStateCap);

struct TailBoundInputs {
  double gamma = 0.0;
  double level = 0.0;  // B
  double nu_max = 0.0;
  double q_max = 0.0;
};

// (q nu / (q nu + gamma))^(j+1), clamped to [0, 1]; bounds Pr(V > B + 2 nu j).
double tail_bound(const TailBoundInputs& inputs, int j);

struct TailRow {
  int j = 0;
  double level = 0.0;      // B + 2 nu_max j
  double empirical = 0.0;  // Pr_pi(V > level)
  double bound = 0.0;
  double margin = 0.0;     // bound - empirical
};

struct TailCheckReport {
  TailBoundInputs inputs;
  bool applicable = false;  // gamma > 0 on the actual chain
  // No state has V > B, so the drift condition holds vacuously.
  bool vacuous = false;
  double min_V = 0.0;  // V can be negative; tails are taken only at positive levels
  double max_V = 0.0;
  std::vector<TailRow> rows;
  std::size_t violations = 0;
};

// Measures gamma, nu_max and q_max on the chain and compares exact tails of V
// with the geometric bound for j = 0..max_j (default: until the level passes
// max V).
TailCheckReport empirical_tail_check(const SystemConfig& config, const Policy& policy,
                                     const GeneratorMatrix& gen, const StationaryDist& dist,
                                     std::optional<int> max_j = std::nullopt);

// exp(-log^2 N / (32 (b-1)^2) + log N / (16 (b-1)))
double ssc_bound(const SystemConfig& config);

struct TheoremBound {
  double stated = 0.0;  // 29 b / (sqrt N log N)
  double proof = 0.0;   // 29 (b-1) / (sqrt N log N)
};

TheoremBound theorem_bound(const SystemConfig& config);

// (1 - 1/(4(b-1))): contraction of the first expansion term under collapse.
double collapse_factor(const SystemConfig& config);

struct BoundTemplate {
  std::string quantity;  // metric name: excess, p_block, mean_wait, p_wait
  double bound = 0.0;
};

struct BoundReport {
  std::string quantity;
  double empirical = 0.0;
  double bound = 0.0;
  bool satisfied = false;
  double margin = 0.0;  // bound - empirical
};

BoundReport evaluate_bound(const BoundTemplate& t, double empirical);

// Theorem bound on the excess plus the applicable waiting/blocking bounds.
// Random has no claim and is rejected.
std::vector<BoundTemplate> corollary_bounds(const SystemConfig& config, const Policy& policy);

// (1 - N^-alpha)^(N^alpha log N): the PoD blocking term given S_b <= 1 - N^-alpha.
double pod_block_split_term(const SystemConfig& config, const Policy& policy);

struct SteinDecomposition {
  double direct = 0.0;     // E[h(sum S)]
  double generator = 0.0;  // E[Lg - Gg]
  double identity_residual = 0.0;
  double term_main = 0.0;      // first term, region sum S > tau + 1/N
  double term_curvature = 0.0; // (2/N) max |g''|
  double term_boundary = 0.0;  // boundary layer |sum S - tau| <= 1/N
  bool inequality_holds = false;
  double mean_g_drift = 0.0;   // E[G (g o sum S)]
};

SteinDecomposition stein_decomposition_check(const SystemConfig& config, const Policy& policy,
                                             const GeneratorMatrix& gen, const StationaryDist& dist);

}  // namespace lbss
