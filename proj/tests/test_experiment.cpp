#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "tfde/experiment.hpp"

using namespace tfde;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "cfg.ini");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

const char* kSmall =
    "[experiment]\nexample = 1\nrepeats = 2\n"
    "[problem]\nelements = 40\nsteps = 20\nalpha = 0.3\n"
    "[sources]\ncount = 1, 2\n"
    "[noise]\nepsilon = 1e-3\n"
    "[uq]\nensemble = 200\nprobes = 0.5\n";

}  // namespace

TEST_CASE("example coefficients") {
  CHECK(example_case(1).q({0.5, 0.0}) == doctest::Approx(0.1875));
  CHECK(example_case(4).q({2.0 / 3.0, 0.0}) == doctest::Approx(2.0 / 3.0));
  CHECK(example_case(4).q({0.9, 0.0}) == doctest::Approx(0.2));
  CHECK(example_case(5).q({0.5, 0.0}) == 0.0);
  CHECK(example_case(5).q({0.6, 0.0}) == 0.4);
  CHECK(example_case(7).q({0.5, 0.5}) == doctest::Approx(0.0625));
  CHECK(example_case(6).dimension == 2);
  CHECK(example_case(3).default_segments == SegmentSet::all(1));
  CHECK_THROWS_AS(example_case(8), ConfigError);
}

TEST_CASE("configuration parsing") {
  const ExperimentConfig c = parse_config(kSmall);
  CHECK(c.dimension == 1);
  CHECK(c.elements == 40);
  CHECK(c.basis_counts == std::vector<int>{1, 2});
  CHECK(c.repeats == 2);
  CHECK(c.mu_rules == std::vector<MuRule>{MuRule::kDelta32});
  CHECK(c.segments == SegmentSet(SegmentSet::kLambda1));
  REQUIRE(c.probes.size() == 1);
  CHECK(c.probes[0][0] == 0.5);

  const ExperimentConfig c7 = parse_config("[experiment]\nexample = 7\n");
  CHECK(c7.dimension == 2);
  CHECK(c7.elements == 50);
  CHECK(c7.mu_rules == std::vector<MuRule>{MuRule::kSqrtDelta});
  CHECK(c7.segments == SegmentSet::all(2));
}

TEST_CASE("configuration diagnostics carry file and line") {
  CHECK(error_of("[experiment]\nexample = 1\nexampel = 2\n").find("cfg.ini:3: experiment.exampel: unknown key") !=
        std::string::npos);
  CHECK(error_of("[problem]\nalpha = 0.3, 1.2\n").find("cfg.ini:2: problem.alpha") != std::string::npos);
  CHECK(error_of("[experiment]\nexample = 9\n").find("cfg.ini:2") != std::string::npos);
  CHECK(error_of("[bogus]\nx = 1\n").find("unknown section") != std::string::npos);
  CHECK(error_of("[sources]\ncount = five\n").find("cannot parse") != std::string::npos);
  CHECK(error_of("[experiment]\nexample = 1\nexample = 2\n").find("cfg.ini:3") != std::string::npos);
  CHECK(error_of("[problem]\ndimension = 2\n").find("1-dimensional") != std::string::npos);
  CHECK(error_of("[inversion]\nmu_rule = explicit\n").find("inversion.mu") != std::string::npos);
  CHECK(error_of("[measurement]\nsegments = L4\n").find("measurement.segments") != std::string::npos);
  CHECK_THROWS_AS(load_config("/nonexistent/file.ini"), ConfigError);
}

TEST_CASE("config hash") {
  CHECK(config_hash("") == "cbf29ce484222325");
  CHECK(config_hash("a") == "af63dc4c8601ec8c");
  CHECK(config_hash(kSmall) != config_hash(std::string(kSmall) + " "));
  CHECK_FALSE(version_string().empty());
}

TEST_CASE("noiseless inversion of Example 1") {
  ExperimentConfig c;
  JobSpec s;
  s.epsilon = 0.0;
  s.draw_ensemble = false;
  const JobResult r = run_job(c, s, {});
  REQUIRE(r.failure.empty());
  CHECK(r.mu == 0.0);
  CHECK(r.re_map < 0.005);
}

TEST_CASE("sweep artifacts are deterministic") {
  const fs::path root = fs::temp_directory_path() / "tfde_test_sweep";
  fs::remove_all(root);
  const ExperimentConfig c = parse_config(kSmall);
  RunOptions o;
  o.config_text = kSmall;
  o.threads = 1;
  o.output_dir = (root / "a").string();
  const ExperimentReport a = run_experiment(c, o);
  o.output_dir = (root / "b").string();
  o.threads = 2;
  run_experiment(c, o);
  CHECK(a.jobs.size() == 4);
  CHECK_FALSE(a.any_failure());
  REQUIRE(a.table.size() == 2);
  CHECK(a.table[0].count == 2);
  for (const char* f : {"re_summary.csv", "re_table.csv", "trends.json"}) {
    CHECK(slurp(root / "a" / f) == slurp(root / "b" / f));
  }
  const fs::path job = a.jobs[0].directory;
  for (const char* f : {"measurements_clean.csv", "measurements_noisy.csv", "cgm_log.csv", "field.csv",
                        "ensemble.csv", "skewness.json"}) {
    CHECK(fs::exists(job / f));
    const std::string other = (root / "b" / job.filename() / f).string();
    CHECK(slurp(job / f) == slurp(other));
  }
  const std::string csv = slurp(job / "field.csv");
  CHECK(csv.find("# config_hash=" + config_hash(kSmall)) != std::string::npos);
  CHECK(csv.find("# seed=1") != std::string::npos);
  CHECK(csv.find("# version=") != std::string::npos);
  CHECK(a.jobs[2].seed == 1);  // repeats reuse seeds across N
  REQUIRE(a.jobs[0].probe_intervals.size() == 1);
  CHECK(a.jobs[0].probe_intervals[0][1] <= a.jobs[0].probe_intervals[0][2]);
  fs::remove_all(root);
}

TEST_CASE("a failing job leaves a marker") {
  const fs::path dir = fs::temp_directory_path() / "tfde_test_fail";
  fs::remove_all(dir);
  ExperimentConfig c;
  JobSpec s;
  s.alpha = 1.5;
  s.directory = dir.string();
  const JobResult r = run_job(c, s, {});
  CHECK_FALSE(r.failure.empty());
  CHECK(fs::exists(dir / "FAILED"));
  fs::remove_all(dir);
}

TEST_CASE("summary and trend checks") {
  std::vector<JobResult> jobs(4);
  for (int i = 0; i < 4; ++i) {
    jobs[i].basis_count = 1;
    jobs[i].re_mean = 0.1 * (i + 1);
  }
  jobs[3].failure = "boom";
  const auto table = summarize(jobs);
  REQUIRE(table.size() == 1);
  CHECK(table[0].count == 3);
  CHECK(table[0].mean == doctest::Approx(0.2));
  CHECK(table[0].sd == doctest::Approx(0.1));

  auto row = [](int n, double eps, double mean) {
    TableRow r;
    r.alpha = 0.3;
    r.basis_count = n;
    r.epsilon = eps;
    r.mean = mean;
    return r;
  };
  const auto one = trend_checks({row(1, 1e-4, 0.5), row(2, 1e-4, 0.6), row(3, 1e-4, 0.3), row(4, 1e-4, 0.2)});
  REQUIRE(one.size() == 1);
  CHECK(one[0].passed);
  const auto two = trend_checks({row(1, 1e-4, 0.5), row(2, 1e-4, 0.6), row(3, 1e-4, 0.3), row(4, 1e-4, 0.4)});
  CHECK_FALSE(two[0].passed);
}

TEST_CASE("validation suite and its mutation tests") {
  for (const auto& c : validate_suite()) CHECK_MESSAGE(c.passed, c.name << ": " << c.detail);

  ValidationHooks reversed;
  reversed.weights = [](const TemporalGrid& g) {
    CaputoWeights w = caputo_weights(g);
    std::vector<double> b(w.b().begin(), w.b().end());
    std::reverse(b.begin(), b.end());
    return CaputoWeights(b, w.lead());
  };
  ValidationHooks flipped;
  flipped.adjoint_data = [](int, BoundaryHistory& g) { g = -g; };

  auto status = [](const std::vector<ValidationCheck>& checks, const std::string& name) {
    for (const auto& c : checks) {
      if (c.name == name) return c.passed;
    }
    FAIL("missing check " << name);
    return true;
  };
  const auto a = validate_suite(reversed);
  CHECK_FALSE(status(a, "caputo_weights"));
  CHECK(status(a, "adjoint_gradient_average"));
  const auto b = validate_suite(flipped);
  CHECK_FALSE(status(b, "adjoint_gradient_average"));
  CHECK_FALSE(status(b, "adjoint_gradient_direct"));
  CHECK(status(b, "caputo_weights"));
  const std::string report = validation_report(a);
  CHECK(std::count(report.begin(), report.end(), '\n') == static_cast<long>(a.size()));
  CHECK(report.find("\"passed\":false") != std::string::npos);
}
