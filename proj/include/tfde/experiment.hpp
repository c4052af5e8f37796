#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfde/inversion.hpp"
#include "tfde/uq.hpp"

namespace tfde {

/// Invalid configuration; the message carries the file line when known.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Closed-form coefficient of one of the reference examples (1..7).
/// Examples 1-5 are one-dimensional, 6-7 two-dimensional.
struct ExampleCase {
  int id = 1;
  int dimension = 1;
  SegmentSet default_segments;
  std::function<double(const Point&)> q;
};

/// Throws ConfigError for an unknown id.
ExampleCase example_case(int id);

struct ExperimentConfig {
  std::string name = "experiment";
  int dimension = 1;
  int elements = 300;
  int steps = 100;
  double horizon = 1.0;
  std::vector<double> alphas{0.3};

  BasisKind basis = BasisKind::kTrigonometric;
  std::vector<int> basis_counts{5};

  int example = 1;
  SegmentSet segments;  // empty: the example's default
  std::string weight = "1-t";
  DataKind data = DataKind::kAverageFlux;

  std::vector<double> epsilons{1e-4};
  int repeats = 1;
  std::uint64_t seed = 1;

  std::vector<MuRule> mu_rules{MuRule::kDelta32};
  double mu_explicit = 0.0;
  double eps = 1e-6;
  int max_iter = 200;
  double q_min = 0.0;
  std::optional<double> q_max;  // default 2 max q_exact

  int ensemble = 10000;
  double confidence = 0.95;
  bool dump_samples = false;
  std::vector<Point> probes;

  std::vector<double> compare_epsilons{1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2};

  std::string output_dir = "out";
};

/// Parses an INI file. Throws ConfigError with a "file:line: key: message"
/// diagnostic on malformed input, unknown keys or invalid values.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");

/// FNV-1a hash of the configuration text, hex encoded.
std::string config_hash(const std::string& text);
/// Version string baked in at build time.
std::string version_string();

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  int threads = 0;            // 0: OpenMP default
  bool write_artifacts = true;
  bool verbose = false;
  std::string config_text;    // hashed into every artifact
};

/// One inversion: a point of the sweep and one noise realization.
struct JobResult {
  double alpha = 0.0;
  double epsilon = 0.0;
  int basis_count = 0;
  MuRule rule = MuRule::kDelta32;
  int repeat = 0;
  std::uint64_t seed = 0;
  double delta = 0.0;
  double mu = 0.0;
  int iterations = 0;
  bool converged = false;
  double re_map = 0.0;
  double re_mean = 0.0;  // posterior mean (equals re_map when no ensemble is drawn)
  std::vector<double> skewness;  // one per axis, of the posterior mean
  std::vector<std::array<double, 3>> probe_intervals;  // (x, lo, hi) per probe, in probe order
  std::string directory;
  std::string failure;  // empty on success
};

struct TableRow {
  double alpha = 0.0;
  double epsilon = 0.0;
  int basis_count = 0;
  MuRule rule = MuRule::kDelta32;
  double mean = 0.0;
  double sd = 0.0;
  int count = 0;
};

struct TrendCheck {
  std::string name;
  bool passed = true;
  std::string detail;
};

struct ExperimentReport {
  std::vector<JobResult> jobs;
  std::vector<TableRow> table;
  std::vector<TrendCheck> trends;
  bool any_failure() const;
};

/// Everything needed to run one inversion, exposed so that tests and the
/// acceptance suite can drive single points without the sweep machinery.
struct JobSpec {
  double alpha = 0.3;
  double epsilon = 1e-4;
  int basis_count = 5;
  MuRule rule = MuRule::kDelta32;
  int repeat = 0;
  std::uint64_t seed = 1;
  bool draw_ensemble = true;
  std::string directory;  // empty: no artifacts
};

JobResult run_job(const ExperimentConfig& cfg, const JobSpec& job, const RunOptions& options);

/// Runs the whole sweep (alphas x epsilons x basis counts x mu rules x repeats),
/// writes the artifacts and the summary tables, and evaluates the trend checks.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunOptions& options);

/// Mean and sample standard deviation of r_e over repeats for each sweep point.
std::vector<TableRow> summarize(const std::vector<JobResult>& jobs);

/// r_e decreasing in N, increasing in epsilon, and (for epsilon >= 5e-4)
/// nondecreasing in alpha, each tolerating one inversion.
std::vector<TrendCheck> trend_checks(const std::vector<TableRow>& table);

struct ComparisonRow {
  double epsilon = 0.0;
  double average = 0.0;
  double average_sd = 0.0;
  double direct = 0.0;
  double direct_sd = 0.0;
  int count = 0;
};

/// MAP reconstruction error from averaged and from direct flux data at every
/// epsilon in compare_epsilons (first alpha, first N, first mu rule).
std::vector<ComparisonRow> compare_data_types(const ExperimentConfig& cfg, const RunOptions& options);

struct ValidationCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Replaceable pieces for mutation testing of the validation suite.
struct ValidationHooks {
  std::function<CaputoWeights(const TemporalGrid&)> weights;
  InverseProblem::AdjointDataHook adjoint_data;
};

std::vector<ValidationCheck> validate_suite(const ValidationHooks& hooks = {});
/// One JSON object per line.
std::string validation_report(const std::vector<ValidationCheck>& checks);

}  // namespace tfde
