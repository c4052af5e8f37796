// Command-line driver: run / compare-data / validate.
//
// Exit codes: 0 success, 1 usage, 2 configuration, 3 solver, 4 failed checks.

#include <omp.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "tfde/experiment.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kSolver = 3, kChecks = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  int threads = 0;
  bool verbose = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("config", c.config, "INI configuration file")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "override the base noise seed");
  sub->add_option("--out", c.out, "override the output directory");
  sub->add_option("--threads", c.threads, "worker threads (0: OpenMP default)")->check(CLI::NonNegativeNumber);
  sub->add_flag("-v,--verbose", c.verbose, "print one line per finished job");
}

tfde::RunOptions options_from(const Common& c, tfde::ExperimentConfig& cfg) {
  std::ifstream in(c.config);
  std::stringstream text;
  text << in.rdbuf();
  cfg = tfde::parse_config(text.str(), c.config);
  tfde::RunOptions o;
  o.seed = c.seed;
  o.output_dir = c.out;
  o.threads = c.threads > 0 ? c.threads : omp_get_max_threads();
  o.verbose = c.verbose;
  o.config_text = text.str();
  return o;
}

int cmd_run(const Common& c) {
  tfde::ExperimentConfig cfg;
  const tfde::RunOptions o = options_from(c, cfg);
  const tfde::ExperimentReport report = tfde::run_experiment(cfg, o);
  std::printf("%-6s %-10s %-4s %-10s %-12s %-12s %s\n", "alpha", "epsilon", "N", "mu_rule", "mean r_e", "sd", "runs");
  for (const auto& r : report.table) {
    std::printf("%-6g %-10g %-4d %-10s %-12.5g %-12.5g %d\n", r.alpha, r.epsilon, r.basis_count,
                tfde::to_string(r.rule).c_str(), r.mean, r.sd, r.count);
  }
  bool ok = true;
  for (const auto& t : report.trends) {
    std::printf("trend %-28s %s  %s\n", t.name.c_str(), t.passed ? "ok  " : "FAIL", t.detail.c_str());
    ok = ok && t.passed;
  }
  for (const auto& j : report.jobs) {
    if (!j.failure.empty()) std::fprintf(stderr, "job %s failed: %s\n", j.directory.c_str(), j.failure.c_str());
  }
  if (report.any_failure()) return kSolver;
  return ok ? kOk : kChecks;
}

int cmd_compare(const Common& c) {
  tfde::ExperimentConfig cfg;
  const tfde::RunOptions o = options_from(c, cfg);
  const auto rows = tfde::compare_data_types(cfg, o);
  std::printf("%-10s %-14s %-14s\n", "epsilon", "r_e average", "r_e direct");
  bool ok = true;
  for (const auto& r : rows) {
    std::printf("%-10g %-14.5g %-14.5g\n", r.epsilon, r.average, r.direct);
    if (r.epsilon >= 1e-2) ok = ok && r.average < r.direct;
  }
  return ok ? kOk : kChecks;
}

int cmd_validate(const std::string& report_path) {
  const auto checks = tfde::validate_suite();
  const std::string report = tfde::validation_report(checks);
  std::cout << report;
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    out << report;
  }
  for (const auto& c : checks) {
    if (!c.passed) return kChecks;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coefficient identification for time-fractional diffusion from averaged boundary flux"};
  app.set_version_flag("--version", tfde::version_string());
  app.require_subcommand(1);

  Common run_opts, compare_opts;
  auto* run = app.add_subcommand("run", "run a parameter sweep from a configuration file");
  add_common(run, run_opts);
  auto* compare = app.add_subcommand("compare-data", "compare averaged and direct flux data over noise levels");
  add_common(compare, compare_opts);
  std::string report_path;
  auto* validate = app.add_subcommand("validate", "run the built-in numerical checks");
  validate->add_option("--report", report_path, "also write the JSON-lines report to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*run) return cmd_run(run_opts);
    if (*compare) return cmd_compare(compare_opts);
    if (*validate) return cmd_validate(report_path);
  } catch (const tfde::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kConfig;
  } catch (const tfde::SolverError& e) {
    std::fprintf(stderr, "solver error: %s\n", e.what());
    return kSolver;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kSolver;
  }
  return kUsage;
}
