// Command-line front end; talks to the library only through the C API.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lbss/lbss.h"

namespace {

int report_failure(lbss_status status) {
  std::fprintf(stderr, "lbss: %s: %s\n", lbss_status_string(status), lbss_last_error());
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Steady-state analysis of many-server load balancing"};
  app.set_version_flag("--version", std::string(lbss_version()));
  app.require_subcommand(1);

  int threads = 1;
  std::string out_dir;
  std::uint64_t seed = 0;

  auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("--threads", threads, "Grid points evaluated concurrently")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "Master seed (overrides the config)");
    cmd->add_option("--out-dir", out_dir, "Output directory (overrides config and $LBSS_OUT_DIR)");
  };

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run an experiment config");
  run->add_option("config", config_path, "Experiment JSON")->required()->check(CLI::ExistingFile);
  add_run_flags(run);

  auto* verify = app.add_subcommand("verify", "Run an experiment and fail (exit 2) on any hard check");
  verify->add_option("config", config_path, "Experiment JSON")->required()->check(CLI::ExistingFile);
  add_run_flags(verify);

  std::vector<std::string> csvs;
  auto* compare = app.add_subcommand("compare", "Scaled trend report over results CSVs");
  compare->add_option("csv", csvs, "results.csv files")->required()->check(CLI::ExistingFile);
  compare->add_option("--out-dir", out_dir, "Write trend.csv here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (*compare) {
    std::vector<const char*> paths;
    for (const auto& c : csvs) paths.push_back(c.c_str());
    const auto status = lbss_compare(paths.data(), paths.size(), out_dir.empty() ? nullptr : out_dir.c_str());
    return status == LBSS_OK ? 0 : report_failure(status);
  }

  const bool verifying = verify->parsed();
  const auto* cmd = verifying ? verify : run;
  lbss_run_options opts{};
  opts.threads = threads;
  opts.has_seed = cmd->count("--seed") > 0 ? 1 : 0;
  opts.seed = seed;
  opts.out_dir = out_dir.empty() ? nullptr : out_dir.c_str();
  opts.verify = verifying ? 1 : 0;
  int exit_code = 0;
  const auto status = lbss_run_experiment(config_path.c_str(), &opts, &exit_code);
  if (status != LBSS_OK) return report_failure(status);
  return exit_code;
}
