#include "lbss/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "lbss/exact.hpp"
#include "lbss/sim.hpp"
#include "lbss/stein.hpp"

namespace lbss {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Config parsing

namespace {

[[noreturn]] void config_error(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::parse_error, "config field '" + field + "': " + what);
}

template <class T>
std::vector<T> scalar_or_list(const json& doc, const char* field, bool required) {
  std::vector<T> out;
  if (!doc.contains(field)) {
    if (required) config_error(field, "missing");
    return out;
  }
  const auto& v = doc.at(field);
  auto one = [&](const json& x) {
    if constexpr (std::is_integral_v<T>) {
      if (!x.is_number_integer()) config_error(field, "expected an integer, got " + x.dump());
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!x.is_number()) config_error(field, "expected a number, got " + x.dump());
    } else {
      if (!x.is_string()) config_error(field, "expected a string, got " + x.dump());
    }
    out.push_back(x.get<T>());
  };
  if (v.is_array()) {
    if (v.empty()) config_error(field, "list is empty");
    for (const auto& x : v) one(x);
  } else {
    one(v);
  }
  return out;
}

template <class T>
std::optional<T> optional_number(const json& obj, const char* field, const std::string& path) {
  if (!obj.contains(field)) return std::nullopt;
  const auto& v = obj.at(field);
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) config_error(path + field, "expected an integer");
  } else {
    if (!v.is_number()) config_error(path + field, "expected a number");
  }
  return v.get<T>();
}

std::size_t line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse_error,
                "config syntax error at line " + std::to_string(line_of(text, e.byte)) + ": " + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::parse_error, "config must be a JSON object");

  static const char* known[] = {"schema_version", "N", "alpha", "lambda", "b", "policies", "modes",
                                "sim", "seed", "out_dir", "state_cap", "exact_required", "tail_max_j"};
  for (const auto& [key, _] : doc.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      config_error(key, "unknown field");
    }
  }
  if (doc.contains("schema_version")) {
    if (!doc["schema_version"].is_number_integer() || doc["schema_version"].get<int>() != kSchemaVersion) {
      config_error("schema_version", "expected " + std::to_string(kSchemaVersion));
    }
  }

  ExperimentConfig c;
  c.servers = scalar_or_list<std::int64_t>(doc, "N", true);
  c.alphas = scalar_or_list<double>(doc, "alpha", false);
  c.lambdas = scalar_or_list<double>(doc, "lambda", false);
  if (c.alphas.empty() == c.lambdas.empty()) {
    config_error("alpha/lambda", "exactly one of them must be given");
  }
  c.buffers = scalar_or_list<int>(doc, "b", true);
  c.policies = scalar_or_list<std::string>(doc, "policies", true);

  for (const auto& m : scalar_or_list<std::string>(doc, "modes", true)) {
    if (m == "exact") c.modes.exact = true;
    else if (m == "simulate") c.modes.simulate = true;
    else if (m == "drift") c.modes.drift = true;
    else if (m == "tails") c.modes.tails = true;
    else if (m == "stein") c.modes.stein = true;
    else if (m == "bounds") c.modes.bounds = true;
    else config_error("modes", "unknown mode '" + m + "'");
  }

  if (doc.contains("sim")) {
    const auto& s = doc["sim"];
    if (!s.is_object()) config_error("sim", "expected an object");
    for (const auto& [key, _] : s.items()) {
      if (key != "horizon" && key != "warmup" && key != "batches" && key != "replications" && key != "per_N") {
        config_error("sim." + key, "unknown field");
      }
    }
    if (auto h = optional_number<double>(s, "horizon", "sim.")) c.sim.horizon = *h;
    c.sim.warmup = optional_number<double>(s, "warmup", "sim.");
    if (auto b = optional_number<int>(s, "batches", "sim.")) c.sim.batches = *b;
    if (auto r = optional_number<int>(s, "replications", "sim.")) c.sim.replications = *r;
    if (c.sim.replications < 1) config_error("sim.replications", "must be >= 1");
    if (c.sim.batches < 10) config_error("sim.batches", "must be >= 10");
    if (s.contains("per_N")) {
      const auto& p = s["per_N"];
      if (!p.is_object()) config_error("sim.per_N", "expected an object keyed by N");
      for (const auto& [key, val] : p.items()) {
        SimOverride o;
        try {
          std::size_t used = 0;
          o.servers = std::stoll(key, &used);
          if (used != key.size()) throw std::invalid_argument(key);
        } catch (const std::exception&) {
          config_error("sim.per_N." + key, "key must be an integer N");
        }
        if (!val.is_object()) config_error("sim.per_N." + key, "expected an object");
        o.horizon = optional_number<double>(val, "horizon", "sim.per_N." + key + ".");
        o.warmup = optional_number<double>(val, "warmup", "sim.per_N." + key + ".");
        c.per_n.push_back(o);
      }
    }
  }
  if (auto s = optional_number<std::uint64_t>(doc, "seed", "")) c.seed = *s;
  if (doc.contains("out_dir")) {
    if (!doc["out_dir"].is_string()) config_error("out_dir", "expected a string");
    c.out_dir = doc["out_dir"].get<std::string>();
  }
  if (auto cap = optional_number<std::uint64_t>(doc, "state_cap", "")) c.state_cap = static_cast<std::size_t>(*cap);
  if (doc.contains("exact_required")) {
    if (!doc["exact_required"].is_boolean()) config_error("exact_required", "expected a boolean");
    c.exact_required = doc["exact_required"].get<bool>();
  }
  c.tail_max_j = optional_number<int>(doc, "tail_max_j", "");

  // Validate every grid point up front so bad configs fail before any work.
  for (auto n : c.servers) {
    for (std::size_t li = 0; li < std::max(c.alphas.size(), c.lambdas.size()); ++li) {
      for (int b : c.buffers) {
        try {
          const auto sc = c.alphas.empty() ? SystemConfig::with_lambda(n, c.lambdas[li], b)
                                           : SystemConfig::with_alpha(n, c.alphas[li], b);
          for (const auto& p : c.policies) (void)Policy::parse(p, sc);
        } catch (const Error& e) {
          throw Error(ErrorCode::parse_error, std::string("invalid grid point: ") + e.what());
        }
      }
    }
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

// ---------------------------------------------------------------------------
// Running

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t run_index) {
  // splitmix64 finalizer over the pair
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(master) ^ run_index);
}

namespace {

struct GridPoint {
  std::size_t index = 0;
  SystemConfig config;
  Policy policy;
};

struct Check {
  std::string name;
  bool passed = false;
  bool hard = true;
  std::string detail;
};

struct PointResult {
  std::vector<ResultRow> rows;
  json summary;
  std::vector<Check> checks;
  std::vector<std::string> warnings;
  bool operational_error = false;
};

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json counts_json(const Occupancy& s) {
  json a = json::array();
  for (auto c : s.counts()) a.push_back(c);
  return a;
}

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

class PointRunner {
 public:
  PointRunner(const ExperimentConfig& cfg, std::uint64_t master_seed) : cfg_(cfg), master_seed_(master_seed) {}

  PointResult run(const GridPoint& gp) const {
    PointResult out;
    const auto& sc = gp.config;
    const auto& pol = gp.policy;
    out.summary["N"] = sc.servers();
    out.summary["alpha"] = sc.alpha() ? json(*sc.alpha()) : json(nullptr);
    out.summary["lambda"] = sc.lambda();
    out.summary["b"] = sc.b();
    out.summary["policy"] = pol.name();
    out.summary["tau"] = sc.tau();

    auto row = [&](std::string metric, std::string source, double value) {
      ResultRow r;
      r.servers = sc.servers();
      r.alpha = sc.alpha();
      r.lambda = sc.lambda();
      r.b = sc.b();
      r.policy = std::string(pol.kind_name());
      if (pol.kind == PolicyKind::pod) r.d = pol.d;
      r.metric = std::move(metric);
      r.source = std::move(source);
      r.value = value;
      return r;
    };
    auto check = [&](std::string name, bool passed, bool hard, std::string detail = {}) {
      out.checks.push_back({std::move(name), passed, hard, std::move(detail)});
    };

    const bool needs_chain = cfg_.modes.exact || cfg_.modes.tails || cfg_.modes.stein;
    std::optional<GeneratorMatrix> gen;
    std::optional<StationaryDist> dist;
    std::optional<ExactMetrics> exact;

    if (needs_chain) {
      const auto start = std::chrono::steady_clock::now();
      try {
        gen.emplace(build_generator(sc, pol, cfg_.state_cap));
        dist.emplace(stationary(*gen));
        exact = exact_metrics(*dist, sc, pol);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::cap_exceeded || cfg_.exact_required) throw;
        out.warnings.push_back("N=" + std::to_string(sc.servers()) + " " + pol.name() +
                               ": exact modes skipped (" + e.what() + ")");
        gen.reset();
        dist.reset();
      }
      const double wall = seconds_since(start);
      if (exact) {
        double mass = 0.0, min_p = 1.0;
        for (double p : dist->probs) {
          mass += p;
          min_p = std::min(min_p, p);
        }
        out.summary["exact"] = {{"states", dist->size()},
                                {"method", dist->method == SolveMethod::gth ? "gth" : "power"},
                                {"residual", dist->residual},
                                {"mass", mass},
                                {"mean_total", exact->mean_total},
                                {"excess", exact->excess},
                                {"p_wait", exact->p_wait},
                                {"p_block", exact->p_block},
                                {"mean_wait", exact->mean_wait},
                                {"wall_time_s", wall}};
        check("exact.normalized", std::abs(mass - 1.0) <= 1e-12, true, fmt_double(mass));
        check("exact.nonnegative", min_p >= 0.0, true, fmt_double(min_p));
        check("exact.residual", dist->residual <= 1e-10, true, fmt_double(dist->residual));
        check("exact.metric_order",
              exact->p_block >= 0.0 && exact->p_block <= exact->p_wait + 1e-15 && exact->p_wait <= 1.0 + 1e-15 &&
                  exact->excess <= exact->mean_total + 1e-15,
              true);
        if (cfg_.modes.exact) {
          for (auto [name, v] : {std::pair{"mean_total", exact->mean_total}, std::pair{"excess", exact->excess},
                                 std::pair{"p_wait", exact->p_wait}, std::pair{"p_block", exact->p_block},
                                 std::pair{"mean_wait", exact->mean_wait}}) {
            auto r = row(name, "exact", v);
            r.wall_time_s = wall;
            out.rows.push_back(std::move(r));
          }
        }
      }
    }

    std::vector<std::pair<std::uint64_t, SimMetrics>> sims;
    if (cfg_.modes.simulate) {
      const auto spec_base = sim_spec(sc.servers());
      json runs = json::array();
      for (int rep = 0; rep < cfg_.sim.replications; ++rep) {
        const auto run_index = static_cast<std::uint64_t>(gp.index) * static_cast<std::uint64_t>(cfg_.sim.replications) +
                               static_cast<std::uint64_t>(rep);
        auto spec = spec_base;
        spec.seed = derive_seed(master_seed_, run_index);
        const auto start = std::chrono::steady_clock::now();
        auto m = simulate(sc, pol, spec);
        const double wall = seconds_since(start);
        for (auto [name, e] : {std::pair{"mean_total", m.mean_total}, std::pair{"excess", m.excess},
                               std::pair{"p_wait", m.p_wait}, std::pair{"p_block", m.p_block},
                               std::pair{"mean_wait", m.mean_wait}}) {
          auto r = row(name, "sim", e.mean);
          r.ci = e.half_width;
          r.seed = spec.seed;
          r.wall_time_s = wall;
          out.rows.push_back(std::move(r));
        }
        const double joint = m.p_wait.half_width + m.p_wait_arrival.half_width;
        const bool pasta = std::abs(m.p_wait.mean - m.p_wait_arrival.mean) <= joint;
        check("sim.pasta[" + std::to_string(rep) + "]", pasta, false,
              fmt_double(m.p_wait.mean) + " vs " + fmt_double(m.p_wait_arrival.mean));
        json run = {{"seed", spec.seed},
                    {"horizon", spec.horizon},
                    {"warmup", spec.warmup},
                    {"batches", spec.batches},
                    {"events", m.events},
                    {"arrivals", m.arrivals},
                    {"p_wait_arrival", {{"mean", m.p_wait_arrival.mean}, {"ci", m.p_wait_arrival.half_width}}},
                    {"wall_time_s", wall}};
        if (exact) {
          json cover = json::object();
          for (auto [name, e, x] : {std::tuple{"mean_total", m.mean_total, exact->mean_total},
                                    std::tuple{"excess", m.excess, exact->excess},
                                    std::tuple{"p_wait", m.p_wait, exact->p_wait},
                                    std::tuple{"p_block", m.p_block, exact->p_block},
                                    std::tuple{"mean_wait", m.mean_wait, exact->mean_wait}}) {
            cover[name] = e.covers(x);
            check(std::string("sim.covers_exact.") + name + "[" + std::to_string(rep) + "]", e.covers(x), false);
          }
          run["covers_exact"] = cover;
        }
        runs.push_back(run);
        sims.emplace_back(spec.seed, std::move(m));
      }
      out.summary["sim"] = runs;
    }

    if (cfg_.modes.drift && sc.servers() >= 2) {
      try {
        const auto start = std::chrono::steady_clock::now();
        const auto d = drift_condition_report(sc, pol, cfg_.state_cap);
        json viol = json::array();
        for (std::size_t i = 0; i < std::min<std::size_t>(d.violations.size(), 10); ++i) {
          viol.push_back({{"state", counts_json(d.violations[i].first)}, {"drift", d.violations[i].second}});
        }
        out.summary["drift"] = {{"checked_states", d.checked_states},
                                {"worst_drift", finite_or_null(d.worst_drift)},
                                {"bound", d.bound},
                                {"violations", d.violations.size()},
                                {"first_violations", viol},
                                {"premise_vacuous", d.premise_vacuous},
                                {"a1_premise_held", d.a1_premise_held},
                                {"wall_time_s", seconds_since(start)}};
        const auto cond = condition_report_exhaustive(pol, sc, cfg_.state_cap);
        out.summary["condition"] = {{"threshold", cond.threshold},
                                    {"limit", cond.limit},
                                    {"max_a1", cond.max_a1},
                                    {"witness", cond.witness ? counts_json(*cond.witness) : json(nullptr)},
                                    {"region_saturated", cond.region_saturated},
                                    {"satisfied", cond.satisfied}};
      } catch (const Error& e) {
        if (e.code() != ErrorCode::cap_exceeded || cfg_.exact_required) throw;
        out.warnings.push_back("N=" + std::to_string(sc.servers()) + ": drift skipped (" + e.what() + ")");
      }
    }

    if (cfg_.modes.tails && gen && sc.servers() >= 2) {
      const auto t = empirical_tail_check(sc, pol, *gen, *dist, cfg_.tail_max_j);
      json rows = json::array();
      for (const auto& r : t.rows) {
        rows.push_back({{"j", r.j}, {"level", r.level}, {"empirical", r.empirical}, {"bound", r.bound},
                        {"margin", r.margin}});
      }
      out.summary["tails"] = {{"applicable", t.applicable},
                              {"vacuous", t.vacuous},
                              {"gamma", finite_or_null(t.inputs.gamma)},
                              {"level", t.inputs.level},
                              {"nu_max", t.inputs.nu_max},
                              {"q_max", t.inputs.q_max},
                              {"min_V", t.min_V},
                              {"max_V", t.max_V},
                              {"violations", t.violations},
                              {"rows", rows}};
      if (t.applicable) check("tails.sound", t.violations == 0, true, std::to_string(t.violations) + " violations");
    }

    if (cfg_.modes.stein && gen && sc.servers() >= 2) {
      const auto ctx = SteinContext::from(sc);
      const auto& space = gen->space();
      auto mean_drift = [&](auto&& f) {
        std::vector<double> vals(space.size());
        for (std::size_t i = 0; i < space.size(); ++i) vals[i] = f(space[i]);
        const auto gf = gen->apply(vals);
        double acc = 0.0;
        for (std::size_t i = 0; i < space.size(); ++i) acc += dist->probs[i] * gf[i];
        return std::abs(acc);
      };
      const double r_total = mean_drift([](const Occupancy& s) { return s.total(); });
      const double r_v = mean_drift([&](const Occupancy& s) { return eval_V(s, ctx); });
      const double r_g = mean_drift([&](const Occupancy& s) { return eval_g(s.total(), ctx); });
      const auto dec = stein_decomposition_check(sc, pol, *gen, *dist);
      const auto grad = gradient_bound_check(sc);
      const auto cond = condition_report_exhaustive(pol, sc, cfg_.state_cap);
      out.summary["stein"] = {{"stationarity_residual_total", r_total},
                              {"stationarity_residual_V", r_v},
                              {"stationarity_residual_g", r_g},
                              {"direct", dec.direct},
                              {"generator", dec.generator},
                              {"identity_residual", dec.identity_residual},
                              {"term_main", dec.term_main},
                              {"term_curvature", dec.term_curvature},
                              {"term_boundary", dec.term_boundary},
                              {"inequality_holds", dec.inequality_holds},
                              {"condition_satisfied", cond.satisfied},
                              {"gradient_gprime_ratio", grad.max_gprime_ratio},
                              {"gradient_gdouble_ratio", grad.max_gdouble_ratio},
                              {"stein_equation_residual", grad.stein_residual}};
      check("stein.stationarity.total", r_total < 1e-10, true, fmt_double(r_total));
      check("stein.stationarity.V", r_v < 1e-10, true, fmt_double(r_v));
      check("stein.stationarity.g", r_g < 1e-10, true, fmt_double(r_g));
      check("stein.identity", dec.identity_residual < 1e-9, true, fmt_double(dec.identity_residual));
      check("stein.inequality", dec.inequality_holds, cond.satisfied);
      check("stein.gradient_bounds", grad.satisfied, true);
    }

    if (cfg_.modes.bounds && pol.kind != PolicyKind::random && sc.servers() >= 2) {
      const auto templates = corollary_bounds(sc, pol);
      auto emit = [&](auto&& empirical_of, std::optional<std::uint64_t> seed) {
        for (const auto& t : templates) {
          const auto rep = evaluate_bound(t, empirical_of(t.quantity));
          auto r = row(t.quantity, "bound", rep.bound);
          r.satisfied = rep.satisfied;
          r.margin = rep.margin;
          r.seed = seed;
          out.rows.push_back(std::move(r));
        }
      };
      if (exact) {
        emit([&](const std::string& q) { return exact_value(*exact, q); }, std::nullopt);
      } else {
        for (const auto& [seed, m] : sims) {
          emit([&](const std::string& q) { return sim_value(m, q); }, seed);
        }
      }
      json b = {{"theorem_stated", theorem_bound(sc).stated},
                {"theorem_proof", theorem_bound(sc).proof},
                {"ssc", ssc_bound(sc)}};
      if (pol.kind == PolicyKind::pod) b["pod_block_split_term"] = pod_block_split_term(sc, pol);
      out.summary["bounds"] = b;
    }
    return out;
  }

 private:
  static double exact_value(const ExactMetrics& m, const std::string& q) {
    if (q == "excess") return m.excess;
    if (q == "p_block") return m.p_block;
    if (q == "mean_wait") return m.mean_wait;
    if (q == "p_wait") return m.p_wait;
    return m.mean_total;
  }
  static double sim_value(const SimMetrics& m, const std::string& q) {
    if (q == "excess") return m.excess.mean;
    if (q == "p_block") return m.p_block.mean;
    if (q == "mean_wait") return m.mean_wait.mean;
    if (q == "p_wait") return m.p_wait.mean;
    return m.mean_total.mean;
  }

  SimSpec sim_spec(std::int64_t servers) const {
    SimSpec spec;
    spec.horizon = cfg_.sim.horizon;
    double warmup = cfg_.sim.warmup ? *cfg_.sim.warmup : -1.0;
    for (const auto& o : cfg_.per_n) {
      if (o.servers != servers) continue;
      if (o.horizon) {
        spec.horizon = *o.horizon;
        warmup = -1.0;
      }
      if (o.warmup) warmup = *o.warmup;
    }
    // Negative means "not given": 10% of the horizon.
    spec.warmup = warmup >= 0.0 ? warmup : 0.1 * spec.horizon;
    spec.batches = cfg_.sim.batches;
    return spec;
  }

  const ExperimentConfig& cfg_;
  std::uint64_t master_seed_;
};

std::string csv_field(const std::optional<double>& x) { return x ? fmt_double(*x) : std::string(); }

}  // namespace

std::string format_rows_csv(const std::vector<ResultRow>& rows, bool include_wall_time) {
  std::ostringstream out;
  for (std::size_t i = 0; i < std::size(kCsvColumns); ++i) out << (i ? "," : "") << kCsvColumns[i];
  out << '\n';
  for (const auto& r : rows) {
    out << kSchemaVersion << ',' << r.servers << ',' << csv_field(r.alpha) << ',' << fmt_double(r.lambda) << ','
        << r.b << ',' << r.policy << ',' << (r.d ? std::to_string(*r.d) : "") << ',' << r.metric << ','
        << r.source << ',' << fmt_double(r.value) << ',' << csv_field(r.ci) << ','
        << (r.satisfied ? (*r.satisfied ? "true" : "false") : "") << ',' << csv_field(r.margin) << ','
        << (r.seed ? std::to_string(*r.seed) : "") << ','
        << (include_wall_time ? fmt_double(r.wall_time_s) : "") << '\n';
  }
  return out.str();
}

RunOutcome run_experiment(const ExperimentConfig& config, const RunOptions& options, std::ostream& log) {
  const std::uint64_t master = options.seed.value_or(config.seed);
  std::string out_dir = config.out_dir;
  if (const char* env = std::getenv("LBSS_OUT_DIR"); env && *env) out_dir = env;
  if (options.out_dir) out_dir = *options.out_dir;

  std::vector<GridPoint> grid;
  const std::size_t loads = std::max(config.alphas.size(), config.lambdas.size());
  for (auto n : config.servers) {
    for (std::size_t li = 0; li < loads; ++li) {
      for (int b : config.buffers) {
        const auto sc = config.alphas.empty() ? SystemConfig::with_lambda(n, config.lambdas[li], b)
                                              : SystemConfig::with_alpha(n, config.alphas[li], b);
        for (const auto& p : config.policies) grid.push_back({grid.size(), sc, Policy::parse(p, sc)});
      }
    }
  }

  PointRunner runner(config, master);
  std::vector<std::optional<PointResult>> results(grid.size());
  std::vector<std::string> errors(grid.size());
  std::vector<ErrorCode> codes(grid.size(), ErrorCode::invalid_config);
  const auto threads = static_cast<std::size_t>(std::max(1, options.threads));
  std::mutex next_mutex;
  std::size_t next = 0;
  auto worker = [&] {
    while (true) {
      std::size_t i;
      {
        std::lock_guard lock(next_mutex);
        if (next == grid.size()) return;
        i = next++;
      }
      try {
        results[i] = runner.run(grid[i]);
      } catch (const Error& e) {
        errors[i] = e.what();
        codes[i] = e.code();
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(threads, grid.size()); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  RunOutcome outcome;
  json summary;
  summary["schema_version"] = kSchemaVersion;
  summary["seed"] = master;
  summary["verify"] = options.verify;
  json points = json::array();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!errors[i].empty()) {
      throw Error(codes[i], "grid point " + std::to_string(i) + " (N=" +
                                                 std::to_string(grid[i].config.servers()) + ", " +
                                                 grid[i].policy.name() + ") failed: " + errors[i]);
    }
    auto& r = *results[i];
    for (auto& row : r.rows) outcome.rows.push_back(std::move(row));
    json checks = json::array();
    for (const auto& c : r.checks) {
      checks.push_back({{"name", c.name}, {"passed", c.passed}, {"hard", c.hard}, {"detail", c.detail}});
      if (c.hard && !c.passed) ++outcome.hard_failures;
    }
    r.summary["checks"] = checks;
    for (auto& w : r.warnings) outcome.warnings.push_back(std::move(w));
    points.push_back(std::move(r.summary));
  }
  summary["points"] = std::move(points);
  summary["hard_failures"] = outcome.hard_failures;
  summary["warnings"] = outcome.warnings;

  std::filesystem::create_directories(out_dir);
  outcome.csv_path = std::filesystem::path(out_dir) / "results.csv";
  outcome.summary_path = std::filesystem::path(out_dir) / "summary.json";
  {
    std::ofstream csv(outcome.csv_path);
    csv << format_rows_csv(outcome.rows);
    if (!csv) throw Error(ErrorCode::io_error, "failed writing " + outcome.csv_path.string());
  }
  {
    std::ofstream js(outcome.summary_path);
    js << summary.dump(2) << '\n';
    if (!js) throw Error(ErrorCode::io_error, "failed writing " + outcome.summary_path.string());
  }

  for (const auto& w : outcome.warnings) log << "warning: " << w << '\n';
  if (options.print_table) {
    log << std::left << std::setw(8) << "N" << std::setw(8) << "b" << std::setw(10) << "policy" << std::setw(12)
        << "metric" << std::setw(8) << "source" << std::setw(16) << "value" << std::setw(14) << "ci"
        << "ok/margin\n";
    for (const auto& r : outcome.rows) {
      std::ostringstream v, ci, ok;
      v << std::setprecision(8) << r.value;
      if (r.ci) ci << "+-" << std::setprecision(3) << *r.ci;
      if (r.satisfied) ok << (*r.satisfied ? "ok " : "VIOLATED ") << std::setprecision(4) << *r.margin;
      log << std::left << std::setw(8) << r.servers << std::setw(8) << r.b << std::setw(10)
          << (r.d ? r.policy + ":" + std::to_string(*r.d) : r.policy) << std::setw(12) << r.metric << std::setw(8)
          << r.source << std::setw(16) << v.str() << std::setw(14) << ci.str() << ok.str() << '\n';
    }
    if (options.verify) {
      log << (outcome.hard_failures == 0 ? "verify: all hard checks passed\n"
                                         : "verify: " + std::to_string(outcome.hard_failures) +
                                               " hard check(s) FAILED (see summary.json)\n");
    }
  }
  outcome.exit_code = options.verify && outcome.hard_failures > 0 ? 2 : 0;
  return outcome;
}

// ---------------------------------------------------------------------------
// CSV reading and trend comparison

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::optional<double> opt_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

}  // namespace

std::vector<ResultRow> read_rows_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::schema_mismatch, path.string() + ": empty file");
  const auto header = split_csv_line(line);
  if (header.size() != std::size(kCsvColumns) ||
      !std::equal(header.begin(), header.end(), std::begin(kCsvColumns))) {
    throw Error(ErrorCode::schema_mismatch, path.string() + ": header does not match the results schema");
  }
  std::vector<ResultRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    const auto where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != std::size(kCsvColumns)) throw Error(ErrorCode::schema_mismatch, where + ": wrong column count");
    try {
      if (std::stoi(f[0]) != kSchemaVersion) throw Error(ErrorCode::schema_mismatch, where + ": schema_version " + f[0]);
      ResultRow r;
      r.servers = std::stoll(f[1]);
      r.alpha = opt_double(f[2]);
      r.lambda = std::stod(f[3]);
      r.b = std::stoi(f[4]);
      r.policy = f[5];
      if (!f[6].empty()) r.d = std::stoi(f[6]);
      r.metric = f[7];
      r.source = f[8];
      r.value = std::stod(f[9]);
      r.ci = opt_double(f[10]);
      if (!f[11].empty()) r.satisfied = f[11] == "true";
      r.margin = opt_double(f[12]);
      if (!f[13].empty()) r.seed = std::stoull(f[13]);
      r.wall_time_s = f[14].empty() ? 0.0 : std::stod(f[14]);
      rows.push_back(std::move(r));
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      throw Error(ErrorCode::schema_mismatch, where + ": unparseable field");
    }
  }
  return rows;
}

TrendReport compare_results(const std::vector<std::filesystem::path>& csv_paths) {
  if (csv_paths.empty()) throw Error(ErrorCode::invalid_config, "compare needs at least one CSV");
  // Identical rows (ignoring wall time) are counted once.
  std::map<std::string, ResultRow> unique;
  for (const auto& p : csv_paths) {
    for (auto& r : read_rows_csv(p)) {
      auto key = format_rows_csv({r}, false);
      unique.emplace(std::move(key), std::move(r));
    }
  }

  struct Acc {
    double sum = 0.0;
    double ci_sq = 0.0;
    int n = 0;
    bool has_ci = false;
  };
  // group -> N -> source -> metric -> values
  using GroupKey = std::tuple<std::string, int, std::string>;
  std::map<GroupKey, std::map<std::int64_t, std::map<std::string, std::map<std::string, Acc>>>> data;
  for (const auto& [_, r] : unique) {
    if (r.source != "sim" && r.source != "exact") continue;
    const std::string load = r.alpha ? "alpha=" + fmt_double(*r.alpha) : "lambda=" + fmt_double(r.lambda);
    const std::string pol = r.d ? r.policy + ":" + std::to_string(*r.d) : r.policy;
    auto& a = data[{pol, r.b, load}][r.servers][r.source][r.metric];
    a.sum += r.value;
    if (r.ci) {
      a.has_ci = true;
      a.ci_sq += *r.ci * *r.ci;
    }
    ++a.n;
  }

  TrendReport report;
  for (const auto& [key, by_n] : data) {
    if (by_n.size() < 2) continue;
    TrendGroup g;
    g.policy = std::get<0>(key);
    g.b = std::get<1>(key);
    g.load = std::get<2>(key);
    for (const auto& [n, by_source] : by_n) {
      TrendPoint pt;
      pt.servers = n;
      const auto it = by_source.count("sim") ? by_source.find("sim") : by_source.find("exact");
      pt.source = it->first;
      const auto& metrics = it->second;
      const double rn = std::sqrt(static_cast<double>(n));
      const double ln = std::log(static_cast<double>(n));
      auto scaled = [&](const char* name, double factor, std::optional<double>& value, std::optional<double>& ci) {
        const auto m = metrics.find(name);
        if (m == metrics.end()) return;
        value = m->second.sum / m->second.n * factor;
        ci = (m->second.has_ci ? std::sqrt(m->second.ci_sq) / m->second.n : 0.0) * factor;
      };
      scaled("excess", rn * ln / g.b, pt.excess_scaled, pt.excess_ci);
      scaled("p_wait", rn / ln, pt.p_wait_scaled, pt.p_wait_ci);
      scaled("mean_wait", rn / ln, pt.mean_wait_scaled, pt.mean_wait_ci);
      g.points.push_back(pt);
    }
    auto verdict = [&](auto value_of, auto ci_of) -> std::optional<bool> {
      bool ok = true;
      for (std::size_t i = 1; i < g.points.size(); ++i) {
        const auto& a = g.points[i - 1];
        const auto& b = g.points[i];
        if (!(a.*value_of) || !(b.*value_of)) return std::nullopt;
        if (*(b.*value_of) > *(a.*value_of) + *(a.*ci_of) + *(b.*ci_of) + 1e-15) ok = false;
      }
      return ok;
    };
    g.excess_nonincreasing = verdict(&TrendPoint::excess_scaled, &TrendPoint::excess_ci);
    g.p_wait_nonincreasing = verdict(&TrendPoint::p_wait_scaled, &TrendPoint::p_wait_ci);
    g.mean_wait_nonincreasing = verdict(&TrendPoint::mean_wait_scaled, &TrendPoint::mean_wait_ci);
    report.groups.push_back(std::move(g));
  }
  if (report.groups.empty()) {
    throw Error(ErrorCode::invalid_config, "compare needs rows from at least two values of N in some group");
  }
  return report;
}

namespace {
std::string opt_str(const std::optional<double>& x) { return x ? fmt_double(*x) : std::string(); }
std::string verdict_str(const std::optional<bool>& v) { return v ? (*v ? "nonincreasing" : "INCREASING") : "n/a"; }
}  // namespace

std::string format_trend_csv(const TrendReport& report) {
  std::ostringstream out;
  out << "schema_version,policy,b,load,N,source,excess_scaled,excess_ci,p_wait_scaled,p_wait_ci,"
         "mean_wait_scaled,mean_wait_ci\n";
  for (const auto& g : report.groups) {
    for (const auto& p : g.points) {
      out << kSchemaVersion << ',' << g.policy << ',' << g.b << ',' << g.load << ',' << p.servers << ',' << p.source
          << ',' << opt_str(p.excess_scaled) << ',' << opt_str(p.excess_ci) << ',' << opt_str(p.p_wait_scaled) << ','
          << opt_str(p.p_wait_ci) << ',' << opt_str(p.mean_wait_scaled) << ',' << opt_str(p.mean_wait_ci) << '\n';
    }
  }
  return out.str();
}

void print_trend(const TrendReport& report, std::ostream& out) {
  for (const auto& g : report.groups) {
    out << g.policy << " b=" << g.b << " " << g.load << '\n';
    out << "  " << std::left << std::setw(10) << "N" << std::setw(26) << "excess*sqrtN*logN/b" << std::setw(26)
        << "p_W*sqrtN/logN" << "E[W]*sqrtN/logN\n";
    for (const auto& p : g.points) {
      auto cell = [](const std::optional<double>& v, const std::optional<double>& ci) {
        if (!v) return std::string("-");
        std::ostringstream s;
        s << std::setprecision(5) << *v << " +-" << std::setprecision(2) << ci.value_or(0.0);
        return s.str();
      };
      out << "  " << std::setw(10) << p.servers << std::setw(26) << cell(p.excess_scaled, p.excess_ci)
          << std::setw(26) << cell(p.p_wait_scaled, p.p_wait_ci) << cell(p.mean_wait_scaled, p.mean_wait_ci) << '\n';
    }
    out << "  excess: " << verdict_str(g.excess_nonincreasing) << ", p_W: " << verdict_str(g.p_wait_nonincreasing)
        << ", E[W]: " << verdict_str(g.mean_wait_nonincreasing) << '\n';
  }
}

}  // namespace lbss
