#include "lbss/stein.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lbss {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// V straight from counts: sum_{i>=2} S_i = jobs/N - S_1.
double v_of_counts(std::span<const std::int32_t> counts, std::int64_t servers, const SteinContext& ctx) {
  std::int64_t jobs = 0;
  for (std::size_t i = 1; i < counts.size(); ++i) jobs += static_cast<std::int64_t>(i) * counts[i];
  const auto n = static_cast<double>(servers);
  const double s1 = static_cast<double>(servers - counts[0]) / n;
  const double upper = static_cast<double>(jobs - (servers - counts[0])) / n;
  return std::min(upper, ctx.tau - s1);
}

}  // namespace

SteinContext SteinContext::from(const SystemConfig& config) {
  if (config.servers() < 2) {
    throw Error(ErrorCode::domain_error, "the Stein constants need N >= 2 (log N > 0)");
  }
  SteinContext ctx;
  ctx.tau = config.tau();
  ctx.scale = config.log_n() / config.sqrt_n();
  ctx.slope = config.sqrt_n() / config.log_n();
  ctx.tilde_tau = config.k_tilde() * ctx.scale;
  ctx.step = 1.0 / static_cast<double>(config.servers());
  return ctx;
}

double eval_h(double x, const SteinContext& ctx) { return std::max(x - ctx.tau, 0.0); }

double eval_g(double x, const SteinContext& ctx) {
  if (x <= ctx.tau) return 0.0;
  const double d = x - ctx.tau;
  return -0.5 * ctx.slope * d * d;
}

double eval_g_prime(double x, const SteinContext& ctx) { return -ctx.slope * eval_h(x, ctx); }

double eval_g_double_prime(double x, const SteinContext& ctx) {
  return x < ctx.tau ? 0.0 : -ctx.slope;
}

GradientBoundReport gradient_bound_check(const SystemConfig& config, std::size_t points) {
  const auto ctx = SteinContext::from(config);
  GradientBoundReport r;
  r.points = std::max<std::size_t>(points, 2);
  r.gprime_limit = 2.0 / (config.sqrt_n() * config.log_n());
  r.gdouble_limit = ctx.slope;

  auto grid = [&](double lo, double hi, std::size_t i) {
    if (i + 1 == r.points) return hi;
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(r.points - 1);
  };
  const double lo = ctx.tau - 2.0 * ctx.step;
  const double hi = ctx.tau + 2.0 * ctx.step;
  for (std::size_t i = 0; i < r.points; ++i) {
    const double x = grid(lo, hi, i);
    r.max_gprime_ratio = std::max(r.max_gprime_ratio, std::abs(eval_g_prime(x, ctx)) / r.gprime_limit);
  }
  for (std::size_t i = 0; i < r.points; ++i) {
    // Strictly beyond tau, out to tau + 1.
    const double x = ctx.tau + static_cast<double>(i + 1) / static_cast<double>(r.points);
    r.max_gdouble_ratio = std::max(r.max_gdouble_ratio, std::abs(eval_g_double_prime(x, ctx)) / r.gdouble_limit);
  }
  for (std::size_t i = 0; i < r.points; ++i) {
    const double x = grid(ctx.tau - 1.0, ctx.tau + 1.0, i);
    const double residual = std::abs(eval_g_prime(x, ctx) * -ctx.scale - eval_h(x, ctx));
    r.stein_residual = std::max(r.stein_residual, residual);
  }
  constexpr double slack = 1e-12;
  r.satisfied = r.max_gprime_ratio <= 1.0 + slack && r.max_gdouble_ratio <= 1.0 + slack;
  return r;
}

double eval_V(const Occupancy& state, const SteinContext& ctx) {
  return v_of_counts(state.counts(), state.servers(), ctx);
}

double drift_of(const StateFunction& f, const Occupancy& state, const Policy& policy,
                const SystemConfig& config) {
  const auto law = routing_law(policy, state);
  const double here = f(state);
  double drift = 0.0;
  visit_transitions(state.counts(), law.values(), config.lambda(), config.servers(),
                    [&](int from, int to, double rate) { drift += rate * (f(state.moved(from, to)) - here); });
  return drift;
}

DriftReport drift_condition_report(const SystemConfig& config, const Policy& policy, std::size_t cap) {
  const auto ctx = SteinContext::from(config);
  StateSpace space(config.servers(), config.b(), cap);
  DriftReport r;
  r.level = ctx.scale;
  r.bound = -ctx.scale / (2.0 * (config.b() - 1)) + 1.0 / config.sqrt_n();
  r.premise_vacuous = ctx.tau >= 1.0;
  r.worst_drift = -kInf;

  const double a1_limit = 1.0 / config.sqrt_n();
  const auto levels = static_cast<std::size_t>(config.b()) + 1;
  std::vector<double> law(levels);
  std::vector<std::int32_t> target(levels);
  for (const auto& s : space) {
    const double v = eval_V(s, ctx);
    if (v < r.level) continue;
    ++r.checked_states;
    fill_routing_law(policy, s.counts(), law);
    if (s.tail(1) <= ctx.tau && law[1] > a1_limit) r.a1_premise_held = false;
    double drift = 0.0;
    visit_transitions(s.counts(), law, config.lambda(), config.servers(), [&](int from, int to, double rate) {
      std::copy(s.counts().begin(), s.counts().end(), target.begin());
      --target[static_cast<std::size_t>(from)];
      ++target[static_cast<std::size_t>(to)];
      drift += rate * (v_of_counts(target, config.servers(), ctx) - v);
    });
    r.worst_drift = std::max(r.worst_drift, drift);
    if (drift > r.bound) r.violations.emplace_back(s, drift);
  }
  return r;
}

double tail_bound(const TailBoundInputs& in, int j) {
  if (!(in.gamma > 0.0)) throw Error(ErrorCode::nonpositive_gamma, "tail bound needs gamma > 0");
  if (j < 0) throw Error(ErrorCode::domain_error, "tail bound index must be nonnegative");
  const double up = in.q_max * in.nu_max;
  if (std::isinf(in.gamma) || up == 0.0) return 0.0;
  const double ratio = up / (up + in.gamma);
  return std::clamp(std::pow(ratio, j + 1), 0.0, 1.0);
}

TailCheckReport empirical_tail_check(const SystemConfig& config, const Policy& /*policy*/,
                                     const GeneratorMatrix& gen, const StationaryDist& dist,
                                     std::optional<int> max_j) {
  const auto ctx = SteinContext::from(config);
  const auto& space = gen.space();
  const auto n = space.size();
  if (dist.size() != n) throw Error(ErrorCode::invalid_config, "distribution and generator disagree");

  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = eval_V(space[i], ctx);

  TailCheckReport r;
  r.inputs.level = ctx.scale;
  r.inputs.gamma = kInf;
  r.min_V = *std::min_element(v.begin(), v.end());
  r.max_V = *std::max_element(v.begin(), v.end());
  bool any_above = false;
  for (std::size_t i = 0; i < n; ++i) {
    const auto cols = gen.row_columns(i);
    const auto rates = gen.row_rates(i);
    double drift = 0.0;
    double up = 0.0;
    for (std::size_t e = 0; e < cols.size(); ++e) {
      const double dv = v[cols[e]] - v[i];
      drift += rates[e] * dv;
      r.inputs.nu_max = std::max(r.inputs.nu_max, std::abs(dv));
      if (dv > 0.0) up += rates[e];
    }
    r.inputs.q_max = std::max(r.inputs.q_max, up);
    if (v[i] > r.inputs.level) {
      any_above = true;
      r.inputs.gamma = std::min(r.inputs.gamma, -drift);
    }
  }
  r.vacuous = !any_above;
  r.applicable = r.inputs.gamma > 0.0;
  if (!r.applicable) return r;

  auto tail_mass = [&](double level) {
    double p = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (v[i] > level) p += dist.probs[i];
    }
    return p;
  };
  const double stride = 2.0 * r.inputs.nu_max;
  int last = 0;
  if (max_j) {
    last = *max_j;
  } else if (stride > 0.0) {
    // First j whose level clears max V; its tail is empty.
    last = static_cast<int>(std::max(0.0, std::floor((r.max_V - r.inputs.level) / stride)) + 1);
  }
  for (int j = 0; j <= last; ++j) {
    TailRow row;
    row.j = j;
    row.level = r.inputs.level + stride * j;
    row.empirical = tail_mass(row.level);
    row.bound = tail_bound(r.inputs, j);
    row.margin = row.bound - row.empirical;
    if (row.empirical > row.bound + 1e-12) ++r.violations;
    r.rows.push_back(row);
  }
  return r;
}

double ssc_bound(const SystemConfig& config) {
  const double l = config.log_n();
  const double m = config.b() - 1;
  return std::exp(-l * l / (32.0 * m * m) + l / (16.0 * m));
}

TheoremBound theorem_bound(const SystemConfig& config) {
  const double denom = config.sqrt_n() * config.log_n();
  return {29.0 * config.b() / denom, 29.0 * (config.b() - 1) / denom};
}

double collapse_factor(const SystemConfig& config) { return 1.0 - 1.0 / (4.0 * (config.b() - 1)); }

BoundReport evaluate_bound(const BoundTemplate& t, double empirical) {
  return {t.quantity, empirical, t.bound, empirical <= t.bound, t.bound - empirical};
}

std::vector<BoundTemplate> corollary_bounds(const SystemConfig& config, const Policy& policy) {
  if (policy.kind == PolicyKind::random) {
    throw Error(ErrorCode::unsupported_policy, "no steady-state bound is claimed for random routing");
  }
  if (config.servers() < 2) throw Error(ErrorCode::domain_error, "bounds need N >= 2");
  const double l = config.log_n();
  const double rn = config.sqrt_n();
  std::vector<BoundTemplate> out;
  out.push_back({"excess", theorem_bound(config).stated});
  switch (policy.kind) {
    case PolicyKind::jsq:
    case PolicyKind::i1f:
    case PolicyKind::pod:
      out.push_back({"p_block", (policy.kind == PolicyKind::pod ? 30.0 : 29.0) / (rn * l)});
      out.push_back({"mean_wait", 3.0 * l / rn});
      out.push_back({"p_wait", 4.0 * l / rn});
      break;
    case PolicyKind::jiq:
      // N^(0.5 - alpha) = sqrt(N) * (1 - lambda)
      out.push_back({"p_wait", 30.0 * config.b() / (rn * config.idle_fraction() * l)});
      break;
    case PolicyKind::random:
      break;
  }
  return out;
}

double pod_block_split_term(const SystemConfig& config, const Policy& policy) {
  if (policy.kind != PolicyKind::pod) throw Error(ErrorCode::unsupported_policy, "split term is PoD only");
  return std::pow(config.lambda(), policy.d);
}

SteinDecomposition stein_decomposition_check(const SystemConfig& config, const Policy& policy,
                                             const GeneratorMatrix& gen, const StationaryDist& dist) {
  const auto ctx = SteinContext::from(config);
  const auto& space = gen.space();
  const auto n = space.size();
  if (dist.size() != n) throw Error(ErrorCode::invalid_config, "distribution and generator disagree");

  std::vector<double> gvals(n);
  for (std::size_t i = 0; i < n; ++i) gvals[i] = eval_g(space[i].total(), ctx);
  const auto gen_g = gen.apply(gvals);

  SteinDecomposition r;
  r.term_curvature = 2.0 * ctx.step * ctx.slope;
  const double lambda = config.lambda();
  std::vector<double> law(static_cast<std::size_t>(config.b()) + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = dist.probs[i];
    const auto& s = space[i];
    const double x = s.total();
    const double gp = eval_g_prime(x, ctx);
    r.direct += p * eval_h(x, ctx);
    r.generator += p * (gp * -ctx.scale - gen_g[i]);
    r.mean_g_drift += p * gen_g[i];

    fill_routing_law(policy, s.counts(), law);
    const double block = law.back();
    const double s1 = s.tail(1);
    if (x > ctx.tau + ctx.step) {
      r.term_main += p * gp * (lambda * block - lambda - ctx.scale + s1);
    } else if (x >= ctx.tau - ctx.step) {
      // Mean-value slopes over [x, x + 1/N] and [x - 1/N, x].
      const double up = std::abs(eval_g(x + ctx.step, ctx) - eval_g(x, ctx)) / ctx.step;
      const double down = std::abs(eval_g(x, ctx) - eval_g(x - ctx.step, ctx)) / ctx.step;
      r.term_boundary += p * (std::abs(gp) * ctx.scale + lambda * (1.0 - block) * up + s1 * down);
    }
  }
  r.identity_residual = std::abs(r.direct - r.generator);
  r.inequality_holds = r.direct <= r.term_main + r.term_curvature + r.term_boundary + 1e-12;
  return r;
}

}  // namespace lbss
