#include "tfde/experiment.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

#ifndef TFDE_VERSION
#define TFDE_VERSION "0.1.0"
#endif

namespace tfde {

namespace fs = std::filesystem;

ExampleCase example_case(int id) {
  using S = SegmentSet;
  ExampleCase ex;
  ex.id = id;
  switch (id) {
    case 1:
      ex.default_segments = S(S::kLambda1);
      ex.q = [](const Point& p) { const double x = p[0]; return x * x * (1.0 - x * x); };
      break;
    case 2:
      ex.default_segments = S(S::kLambda0);
      ex.q = [](const Point& p) { const double x = p[0]; return x * (1.0 - x) * (1.0 - x); };
      break;
    case 3:
      ex.default_segments = S(S::kLambda0 | S::kLambda1);
      ex.q = [](const Point& p) { const double x = p[0]; return x * (1.0 - x); };
      break;
    case 4:
      ex.default_segments = S(S::kLambda1);
      ex.q = [](const Point& p) { const double x = p[0]; return x <= 2.0 / 3.0 ? x : 2.0 - 2.0 * x; };
      break;
    case 5:
      ex.default_segments = S(S::kLambda1);
      ex.q = [](const Point& p) { const double x = p[0]; return (x > 0.5 && x <= 0.8) ? 0.4 : 0.0; };
      break;
    case 6:
      ex.dimension = 2;
      ex.default_segments = S(S::kLambda1 | S::kLambda2);
      ex.q = [](const Point& p) {
        const double x = p[0], y = p[1];
        return x * (x - x * x) * y * (1.0 - y) * (1.0 - y);
      };
      break;
    case 7:
      ex.dimension = 2;
      ex.default_segments = SegmentSet::all(2);
      ex.q = [](const Point& p) { return p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1]); };
      break;
    default:
      throw ConfigError("unknown example " + std::to_string(id) + " (expected 1..7)");
  }
  return ex;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"experiment", {"name", "example", "output_dir", "seed", "repeats"}},
      {"problem", {"dimension", "elements", "steps", "horizon", "alpha"}},
      {"sources", {"basis", "count"}},
      {"measurement", {"segments", "weight", "data"}},
      {"noise", {"epsilon", "compare_epsilon"}},
      {"inversion", {"mu_rule", "mu", "eps", "max_iter", "q_min", "q_max"}},
      {"uq", {"ensemble", "confidence", "dump_samples", "probes"}},
  };
  return keys;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class ConfigReader {
 public:
  ConfigReader(const std::string& text, std::string source) : source_(std::move(source)) {
    std::istringstream in(text);
    try {
      pt::ini_parser::read_ini(in, tree_);
    } catch (const pt::ini_parser_error& e) {
      throw ConfigError(source_ + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    // Key -> line, for diagnostics.
    std::istringstream lines(text);
    std::string line, section;
    int no = 0;
    while (std::getline(lines, line)) {
      ++no;
      line = trim(line);
      if (line.empty() || line[0] == ';' || line[0] == '#') continue;
      if (line.front() == '[' && line.back() == ']') {
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq != std::string::npos) lines_[section + "." + trim(line.substr(0, eq))] = no;
    }
    for (const auto& [section, child] : tree_) {
      const auto it = known_keys().find(section);
      if (child.empty() || it == known_keys().end()) {
        fail(section, child.empty() ? "key outside of any section" : "unknown section");
      }
      for (const auto& [key, value] : child) {
        if (!it->second.count(key)) fail(section + "." + key, "unknown key");
      }
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    const auto it = lines_.find(key);
    const std::string where = it == lines_.end() ? source_ : source_ + ":" + std::to_string(it->second);
    throw ConfigError(where + ": " + key + ": " + msg);
  }

  std::optional<std::string> raw(const std::string& key) const {
    const auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    if (!v) return std::nullopt;
    return trim(*v);
  }

  template <class T>
  std::optional<T> get(const std::string& key) const {
    const auto text = raw(key);
    if (!text) return std::nullopt;
    return convert<T>(key, *text);
  }

  template <class T>
  std::optional<std::vector<T>> list(const std::string& key) const {
    const auto text = raw(key);
    if (!text) return std::nullopt;
    std::vector<T> out;
    for (const auto& item : split(*text, ',')) out.push_back(convert<T>(key, item));
    if (out.empty()) fail(key, "empty list");
    return out;
  }

  template <class T>
  T convert(const std::string& key, const std::string& text) const {
    std::istringstream ss(text);
    T value{};
    ss >> value;
    if (ss.fail() || !(ss >> std::ws).eof()) fail(key, "cannot parse '" + text + "'");
    return value;
  }

 private:
  std::string source_;
  pt::ptree tree_;
  std::map<std::string, int> lines_;
};

template <>
std::string ConfigReader::convert<std::string>(const std::string&, const std::string& text) const {
  return text;
}

template <>
bool ConfigReader::convert<bool>(const std::string& key, const std::string& text) const {
  if (text == "true" || text == "yes" || text == "1") return true;
  if (text == "false" || text == "no" || text == "0") return false;
  fail(key, "expected true or false, got '" + text + "'");
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  const ConfigReader r(text, source);
  ExperimentConfig c;
  if (auto v = r.get<std::string>("experiment.name")) c.name = *v;
  if (auto v = r.get<int>("experiment.example")) c.example = *v;
  ExampleCase ex;
  try {
    ex = example_case(c.example);
  } catch (const ConfigError& e) {
    r.fail("experiment.example", e.what());
  }
  c.dimension = r.get<int>("problem.dimension").value_or(ex.dimension);
  if (c.dimension != ex.dimension) {
    r.fail("problem.dimension", "example " + std::to_string(c.example) + " is " +
                                    std::to_string(ex.dimension) + "-dimensional");
  }
  c.elements = r.get<int>("problem.elements").value_or(c.dimension == 1 ? 300 : 50);
  if (c.elements < 2) r.fail("problem.elements", "need at least 2 elements per side");
  if (auto v = r.get<int>("problem.steps")) c.steps = *v;
  if (c.steps < 1) r.fail("problem.steps", "need at least one time step");
  if (auto v = r.get<double>("problem.horizon")) c.horizon = *v;
  if (!(c.horizon > 0.0)) r.fail("problem.horizon", "must be positive");
  if (auto v = r.list<double>("problem.alpha")) c.alphas = *v;
  for (double a : c.alphas) {
    if (!(a > 0.0 && a < 1.0)) r.fail("problem.alpha", "fractional order must lie in (0,1)");
  }

  if (auto v = r.get<std::string>("sources.basis")) {
    if (*v == "trigonometric" || *v == "trig") {
      c.basis = BasisKind::kTrigonometric;
    } else if (*v == "polynomial" || *v == "poly") {
      c.basis = BasisKind::kPolynomial;
    } else {
      r.fail("sources.basis", "expected trigonometric or polynomial");
    }
  }
  if (auto v = r.list<int>("sources.count")) c.basis_counts = *v;
  for (int n : c.basis_counts) {
    if (n < 1) r.fail("sources.count", "basis size must be at least 1");
  }

  c.segments = ex.default_segments;
  if (auto v = r.get<std::string>("measurement.segments")) {
    try {
      c.segments = SegmentSet::parse(*v, c.dimension);
    } catch (const std::exception& e) {
      r.fail("measurement.segments", e.what());
    }
  }
  if (auto v = r.get<std::string>("measurement.weight")) {
    if (*v != "1-t" && *v != "1") r.fail("measurement.weight", "expected '1-t' or '1'");
    c.weight = *v;
  }
  if (auto v = r.get<std::string>("measurement.data")) {
    if (*v == "average") {
      c.data = DataKind::kAverageFlux;
    } else if (*v == "direct") {
      c.data = DataKind::kDirectFlux;
    } else {
      r.fail("measurement.data", "expected average or direct");
    }
  }

  if (auto v = r.list<double>("noise.epsilon")) c.epsilons = *v;
  for (double e : c.epsilons) {
    if (!(e >= 0.0)) r.fail("noise.epsilon", "noise level must be nonnegative");
  }
  if (auto v = r.list<double>("noise.compare_epsilon")) c.compare_epsilons = *v;
  if (auto v = r.get<int>("experiment.repeats")) c.repeats = *v;
  if (c.repeats < 1) r.fail("experiment.repeats", "must be at least 1");
  if (auto v = r.get<std::uint64_t>("experiment.seed")) c.seed = *v;

  c.mu_rules = {c.dimension == 1 ? MuRule::kDelta32 : MuRule::kSqrtDelta};
  if (auto v = r.list<std::string>("inversion.mu_rule")) {
    c.mu_rules.clear();
    for (const auto& s : *v) {
      try {
        c.mu_rules.push_back(parse_mu_rule(s));
      } catch (const std::exception& e) {
        r.fail("inversion.mu_rule", e.what());
      }
    }
  }
  if (auto v = r.get<double>("inversion.mu")) c.mu_explicit = *v;
  const bool needs_mu = std::find(c.mu_rules.begin(), c.mu_rules.end(), MuRule::kExplicit) != c.mu_rules.end();
  if (needs_mu && !(c.mu_explicit > 0.0)) r.fail("inversion.mu", "explicit rule needs mu > 0");
  if (auto v = r.get<double>("inversion.eps")) c.eps = *v;
  if (!(c.eps > 0.0)) r.fail("inversion.eps", "must be positive");
  if (auto v = r.get<int>("inversion.max_iter")) c.max_iter = *v;
  if (c.max_iter < 1) r.fail("inversion.max_iter", "must be at least 1");
  if (auto v = r.get<double>("inversion.q_min")) c.q_min = *v;
  if (c.q_min < 0.0) r.fail("inversion.q_min", "must be nonnegative");
  if (auto v = r.raw("inversion.q_max"); v && *v != "auto") c.q_max = r.get<double>("inversion.q_max");
  if (c.q_max && *c.q_max < c.q_min) r.fail("inversion.q_max", "must not be below q_min");

  if (auto v = r.get<int>("uq.ensemble")) c.ensemble = *v;
  if (c.ensemble < 0 || c.ensemble == 1) r.fail("uq.ensemble", "ensemble size must be 0 or at least 2");
  if (auto v = r.get<double>("uq.confidence")) c.confidence = *v;
  if (!(c.confidence > 0.0 && c.confidence < 1.0)) r.fail("uq.confidence", "must lie in (0,1)");
  if (auto v = r.get<bool>("uq.dump_samples")) c.dump_samples = *v;
  if (auto v = r.raw("uq.probes")) {
    for (const auto& item : split(*v, ';')) {
      std::istringstream ss(item);
      Point p{0.0, 0.0};
      ss >> p[0];
      if (c.dimension == 2) ss >> p[1];
      if (ss.fail() || !(ss >> std::ws).eof()) r.fail("uq.probes", "cannot parse probe '" + item + "'");
      c.probes.push_back(p);
    }
  }
  if (auto v = r.get<std::string>("experiment.output_dir")) c.output_dir = *v;
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string config_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string version_string() { return TFDE_VERSION; }

bool ExperimentReport::any_failure() const {
  return std::any_of(jobs.begin(), jobs.end(), [](const JobResult& j) { return !j.failure.empty(); });
}

// ---------------------------------------------------------------------------
// Single inversion

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string rule_tag(MuRule rule) {
  switch (rule) {
    case MuRule::kSqrtDelta: return "sqrtdelta";
    case MuRule::kDelta: return "delta";
    case MuRule::kDelta32: return "delta32";
    case MuRule::kDeltaSquared: return "delta2";
    case MuRule::kExplicit: return "explicit";
  }
  return "rule";
}

WeightFunction make_weight(const std::string& name) {
  if (name == "1") return [](const Point&, double) { return 1.0; };
  return default_weight();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

void write_traces_csv(std::ostream& os, const FluxTraces& t, const std::vector<std::string>& comments) {
  for (const auto& line : comments) os << "# " << line << '\n';
  os << "k,level,node,value\n";
  for (std::size_t k = 0; k < t.traces.size(); ++k) {
    for (Eigen::Index n = 0; n < t.traces[k].rows(); ++n) {
      for (Eigen::Index c = 0; c < t.traces[k].cols(); ++c) {
        os << k << ',' << n << ',' << t.nodes[static_cast<std::size_t>(c)] << ',' << g17(t.traces[k](n, c)) << '\n';
      }
    }
  }
}

std::size_t nearest_node(const SpatialMesh& mesh, const Point& p) {
  std::size_t best = 0;
  double dist = 1e300;
  for (std::size_t i = 0; i < mesh.num_nodes(); ++i) {
    const Point& x = mesh.node(i);
    const double d = (x[0] - p[0]) * (x[0] - p[0]) + (mesh.dimension() == 2 ? (x[1] - p[1]) * (x[1] - p[1]) : 0.0);
    if (d < dist) {
      dist = d;
      best = i;
    }
  }
  return best;
}

}  // namespace

JobResult run_job(const ExperimentConfig& cfg, const JobSpec& job, const RunOptions& options) {
  JobResult res;
  res.alpha = job.alpha;
  res.epsilon = job.epsilon;
  res.basis_count = job.basis_count;
  res.rule = job.rule;
  res.repeat = job.repeat;
  res.seed = job.seed;
  res.directory = job.directory;

  const fs::path dir = job.directory;
  const bool artifacts = options.write_artifacts && !job.directory.empty();
  std::vector<std::string> comments = {
      "config_hash=" + config_hash(options.config_text), "seed=" + std::to_string(job.seed),
      "version=" + version_string(), "alpha=" + short_num(job.alpha),
      "epsilon=" + short_num(job.epsilon), "N=" + std::to_string(job.basis_count),
      "mu_rule=" + to_string(job.rule)};

  try {
    if (artifacts) fs::create_directories(dir);
    const ExampleCase ex = example_case(cfg.example);
    const SpatialMesh mesh = build_mesh(cfg.dimension, cfg.elements);
    const TemporalGrid grid(cfg.horizon, cfg.steps, job.alpha);
    const SegmentSet segments = cfg.segments.empty() ? ex.default_segments : cfg.segments;
    ForwardOperator op(mesh, grid, DiffusionTensor::identity(),
                       make_sources(mesh, grid, cfg.basis, job.basis_count), make_weight(cfg.weight),
                       segments);

    const Vector truth = interpolate(mesh, ex.q);
    double q_max = cfg.q_max.value_or(2.0 * truth.maxCoeff());
    if (!(q_max > cfg.q_min)) q_max = cfg.q_min + 1.0;
    const CoefficientField exact(truth, 0.0, std::max(q_max, truth.maxCoeff()));

    Observations obs;
    if (cfg.data == DataKind::kAverageFlux) {
      const MeasurementMatrix clean = op.forward_map(exact);
      const MeasurementMatrix noisy = add_noise(clean, job.epsilon, job.seed);
      res.delta = noisy.delta;
      obs = op.observations(noisy);
      if (artifacts) {
        std::ofstream c(dir / "measurements_clean.csv");
        write_measurements_csv(c, clean, comments);
        std::ofstream n(dir / "measurements_noisy.csv");
        write_measurements_csv(n, noisy, comments);
      }
    } else {
      const FluxTraces clean = op.direct_flux_data(exact);
      const FluxTraces noisy = add_noise(clean, job.epsilon, job.seed);
      obs = op.observations(noisy);
      // Noise measured in the norm of the misfit.
      const Vector e = noisy.stacked() - clean.stacked();
      res.delta = std::sqrt(obs.weights.dot(e.cwiseAbs2()));
      if (artifacts) {
        std::ofstream c(dir / "traces_clean.csv");
        write_traces_csv(c, clean, comments);
        std::ofstream n(dir / "traces_noisy.csv");
        write_traces_csv(n, noisy, comments);
      }
    }

    if (job.epsilon > 0.0) {
      res.mu = regularization_parameter(job.rule, res.delta, cfg.mu_explicit);
    } else {
      res.mu = job.rule == MuRule::kExplicit ? cfg.mu_explicit : 0.0;
    }
    comments.push_back("delta=" + g17(res.delta));
    comments.push_back("mu=" + g17(res.mu));

    const InverseProblem problem(op, obs, {res.mu});
    CgmOptions cgm;
    cgm.eps = cfg.eps;
    cgm.max_iter = cfg.max_iter;
    const CoefficientField q0(Vector::Constant(truth.size(), cfg.q_min), cfg.q_min, q_max);
    const CgmResult map = problem.run_cgm(q0, cgm);
    res.iterations = map.iterations;
    res.converged = map.converged;
    res.re_map = relative_error(mesh, map.q.values(), truth);
    if (artifacts) {
      std::ofstream log(dir / "cgm_log.csv");
      write_cgm_log_csv(log, map.log, comments);
      std::ofstream field(dir / "field.csv");
      write_field_csv(field, mesh, map.q.values(), comments);
    }

    Vector mean = map.q.values();
    Vector half_width = Vector::Zero(mean.size());
    const bool ensemble = job.draw_ensemble && cfg.data == DataKind::kAverageFlux && job.epsilon > 0.0 &&
                          res.mu > 0.0 && cfg.ensemble >= 2;
    if (ensemble) {
      const PosteriorModel model(map.q.values(), assemble_jacobian(op, map.q), res.mu, res.delta);
      const PosteriorEnsemble ens =
          sample_posterior(model, cfg.ensemble, job.seed ^ 0x5bd1e995ULL, cfg.dump_samples, false);
      const ConfidenceReport ci = confidence_interval(model, cfg.confidence, cfg.ensemble);
      mean = ens.mean;
      half_width = ci.half_width;
      if (artifacts) {
        std::ofstream out(dir / "ensemble.csv");
        write_ensemble_csv(out, mesh, ens, ci, comments);
        if (cfg.dump_samples) {
          std::ofstream bin(dir / "samples.bin", std::ios::binary);
          write_samples_binary(bin, ens);
        }
      }
    }
    res.re_mean = relative_error(mesh, mean, truth);

    std::vector<SkewnessReport> skew;
    for (int axis = 0; axis < cfg.dimension; ++axis) {
      try {
        skew.push_back(skewness(mesh, mean, axis));
      } catch (const std::invalid_argument&) {
        skew.push_back({0.0, 0.0, 0.0, std::nan("")});
      }
      res.skewness.push_back(skew.back().beta);
    }
    for (const Point& p : cfg.probes) {
      const auto node = static_cast<Eigen::Index>(nearest_node(mesh, p));
      res.probe_intervals.push_back({static_cast<double>(node), mean[node] - half_width[node],
                                     mean[node] + half_width[node]});
    }
    if (artifacts) {
      std::vector<std::pair<std::string, std::string>> meta = {
          {"config_hash", config_hash(options.config_text)}, {"seed", std::to_string(job.seed)},
          {"version", version_string()}, {"segments", segments.to_string()}};
      write_file(dir / "skewness.json", skewness_json(skew, meta));
    }
  } catch (const std::exception& e) {
    res.failure = e.what();
    if (artifacts) {
      std::error_code ec;
      fs::create_directories(dir, ec);
      std::ofstream marker(dir / "FAILED");
      marker << e.what() << '\n';
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Sweeps

std::vector<TableRow> summarize(const std::vector<JobResult>& jobs) {
  std::vector<TableRow> rows;
  std::map<std::tuple<double, double, int, int>, std::vector<double>> groups;
  std::vector<std::tuple<double, double, int, int>> order;
  for (const auto& j : jobs) {
    if (!j.failure.empty()) continue;
    const auto key = std::make_tuple(j.alpha, j.epsilon, j.basis_count, static_cast<int>(j.rule));
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(j.re_mean);
  }
  for (const auto& key : order) {
    const auto& v = groups[key];
    TableRow row;
    row.alpha = std::get<0>(key);
    row.epsilon = std::get<1>(key);
    row.basis_count = std::get<2>(key);
    row.rule = static_cast<MuRule>(std::get<3>(key));
    row.count = static_cast<int>(v.size());
    row.mean = std::accumulate(v.begin(), v.end(), 0.0) / row.count;
    double ss = 0.0;
    for (double x : v) ss += (x - row.mean) * (x - row.mean);
    row.sd = row.count > 1 ? std::sqrt(ss / (row.count - 1)) : 0.0;
    rows.push_back(row);
  }
  return rows;
}

namespace {

// Number of adjacent pairs violating the requested order.
int inversions(const std::vector<double>& v, bool increasing, bool strict) {
  int bad = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    const double d = increasing ? v[i] - v[i - 1] : v[i - 1] - v[i];
    if (strict ? !(d > 0.0) : (d < 0.0)) ++bad;
  }
  return bad;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + short_num(x);
  return s;
}

}  // namespace

std::vector<TrendCheck> trend_checks(const std::vector<TableRow>& table) {
  std::vector<TrendCheck> checks;
  struct Axis {
    const char* name;
    std::function<double(const TableRow&)> value;
    std::function<std::tuple<double, double, int, int>(const TableRow&)> rest;
    bool increasing;
    bool strict;
    std::function<bool(const TableRow&)> applies;
  };
  const std::vector<Axis> axes = {
      {"r_e decreasing in N", [](const TableRow& r) { return r.basis_count; },
       [](const TableRow& r) { return std::make_tuple(r.alpha, r.epsilon, 0, static_cast<int>(r.rule)); }, false, true,
       [](const TableRow&) { return true; }},
      {"r_e increasing in epsilon", [](const TableRow& r) { return r.epsilon; },
       [](const TableRow& r) { return std::make_tuple(r.alpha, 0.0, r.basis_count, static_cast<int>(r.rule)); }, true,
       true, [](const TableRow&) { return true; }},
      {"r_e nondecreasing in alpha", [](const TableRow& r) { return r.alpha; },
       [](const TableRow& r) { return std::make_tuple(0.0, r.epsilon, r.basis_count, static_cast<int>(r.rule)); },
       true, false, [](const TableRow& r) { return r.epsilon >= 5e-4; }},
  };
  for (const auto& axis : axes) {
    std::map<std::tuple<double, double, int, int>, std::vector<std::pair<double, double>>> groups;
    for (const auto& r : table) {
      if (axis.applies(r)) groups[axis.rest(r)].push_back({axis.value(r), r.mean});
    }
    for (auto& [key, pts] : groups) {
      if (pts.size() < 3) continue;
      std::sort(pts.begin(), pts.end());
      std::vector<double> xs, ys;
      for (const auto& [x, y] : pts) {
        xs.push_back(x);
        ys.push_back(y);
      }
      TrendCheck c;
      c.name = axis.name;
      const int bad = inversions(ys, axis.increasing, axis.strict);
      c.passed = bad <= 1;
      c.detail = "at (" + join(xs) + "): " + join(ys) + "; inversions " + std::to_string(bad);
      checks.push_back(c);
    }
  }
  return checks;
}

namespace {

void write_summary(const fs::path& dir, const ExperimentReport& report, const ExperimentConfig& cfg,
                   const RunOptions& options, std::uint64_t seed) {
  std::ostringstream head;
  head << "# config_hash=" << config_hash(options.config_text) << "\n# seed=" << seed
       << "\n# version=" << version_string() << '\n';

  std::ostringstream jobs;
  jobs << head.str() << "alpha,epsilon,N,mu_rule,repeat,seed,delta,mu,iterations,converged,r_e_map,r_e_mean";
  for (int a = 0; a < cfg.dimension; ++a) jobs << (a == 0 ? ",skew_x" : ",skew_y");
  jobs << ",status\n";
  for (const auto& j : report.jobs) {
    jobs << short_num(j.alpha) << ',' << short_num(j.epsilon) << ',' << j.basis_count << ',' << to_string(j.rule)
         << ',' << j.repeat << ',' << j.seed << ',' << g17(j.delta) << ',' << g17(j.mu) << ',' << j.iterations
         << ',' << (j.converged ? 1 : 0) << ',' << g17(j.re_map) << ',' << g17(j.re_mean);
    for (int a = 0; a < cfg.dimension; ++a) {
      jobs << ',' << (a < static_cast<int>(j.skewness.size()) ? g17(j.skewness[a]) : "nan");
    }
    jobs << ',' << (j.failure.empty() ? "ok" : "failed") << '\n';
  }
  write_file(dir / "re_summary.csv", jobs.str());

  std::ostringstream table;
  table << head.str() << "alpha,epsilon,N,mu_rule,mean_r_e,sd_r_e,count\n";
  for (const auto& r : report.table) {
    table << short_num(r.alpha) << ',' << short_num(r.epsilon) << ',' << r.basis_count << ',' << to_string(r.rule)
          << ',' << g17(r.mean) << ',' << g17(r.sd) << ',' << r.count << '\n';
  }
  write_file(dir / "re_table.csv", table.str());

  nlohmann::json t = nlohmann::json::array();
  for (const auto& c : report.trends) t.push_back({{"check", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  write_file(dir / "trends.json", t.dump(2) + "\n");
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
  const std::uint64_t seed = options.seed.value_or(cfg.seed);
  const fs::path out = options.output_dir.value_or(cfg.output_dir);
  std::vector<JobSpec> specs;
  for (double alpha : cfg.alphas) {
    for (double eps : cfg.epsilons) {
      for (int n : cfg.basis_counts) {
        for (MuRule rule : cfg.mu_rules) {
          for (int rep = 0; rep < cfg.repeats; ++rep) {
            JobSpec s;
            s.alpha = alpha;
            s.epsilon = eps;
            s.basis_count = n;
            s.rule = rule;
            s.repeat = rep;
            s.seed = seed + static_cast<std::uint64_t>(rep);
            char name[160];
            std::snprintf(name, sizeof(name), "job%03zu_a%g_e%g_N%d_%s_r%d", specs.size(), alpha, eps, n,
                          rule_tag(rule).c_str(), rep);
            s.directory = (out / name).string();
            specs.push_back(s);
          }
        }
      }
    }
  }

  ExperimentReport report;
  report.jobs.resize(specs.size());
  const int threads = options.threads > 0 ? options.threads : 1;
  const auto count = static_cast<long>(specs.size());
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (long i = 0; i < count; ++i) {
    report.jobs[i] = run_job(cfg, specs[i], options);
    if (options.verbose) {
#pragma omp critical
      std::fprintf(stderr, "%s r_e=%.4g%s\n", specs[i].directory.c_str(), report.jobs[i].re_mean,
                   report.jobs[i].failure.empty() ? "" : (" FAILED: " + report.jobs[i].failure).c_str());
    }
  }
  report.table = summarize(report.jobs);
  report.trends = trend_checks(report.table);
  if (options.write_artifacts) {
    fs::create_directories(out);
    write_summary(out, report, cfg, options, seed);
  }
  return report;
}

std::vector<ComparisonRow> compare_data_types(const ExperimentConfig& cfg, const RunOptions& options) {
  const std::uint64_t seed = options.seed.value_or(cfg.seed);
  std::vector<ComparisonRow> rows;
  RunOptions quiet = options;
  quiet.write_artifacts = false;
  for (double eps : cfg.compare_epsilons) {
    std::vector<double> avg, direct;
    for (int rep = 0; rep < cfg.repeats; ++rep) {
      JobSpec s;
      s.alpha = cfg.alphas.front();
      s.epsilon = eps;
      s.basis_count = cfg.basis_counts.front();
      s.rule = cfg.mu_rules.front();
      s.repeat = rep;
      s.seed = seed + static_cast<std::uint64_t>(rep);
      s.draw_ensemble = false;
      for (DataKind kind : {DataKind::kAverageFlux, DataKind::kDirectFlux}) {
        ExperimentConfig c = cfg;
        c.data = kind;
        const JobResult r = run_job(c, s, quiet);
        if (!r.failure.empty()) throw SolverError("eps=" + short_num(eps) + ": " + r.failure);
        (kind == DataKind::kAverageFlux ? avg : direct).push_back(r.re_map);
      }
    }
    auto stats = [](const std::vector<double>& v) {
      const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
      double ss = 0.0;
      for (double x : v) ss += (x - m) * (x - m);
      return std::make_pair(m, v.size() > 1 ? std::sqrt(ss / (v.size() - 1)) : 0.0);
    };
    ComparisonRow row;
    row.epsilon = eps;
    std::tie(row.average, row.average_sd) = stats(avg);
    std::tie(row.direct, row.direct_sd) = stats(direct);
    row.count = cfg.repeats;
    rows.push_back(row);
  }
  if (options.write_artifacts) {
    const fs::path out = options.output_dir.value_or(cfg.output_dir);
    fs::create_directories(out);
    std::ostringstream os;
    os << "# config_hash=" << config_hash(options.config_text) << "\n# seed=" << seed
       << "\n# version=" << version_string() << "\nepsilon,r_e_average,sd_average,r_e_direct,sd_direct,count\n";
    for (const auto& r : rows) {
      os << short_num(r.epsilon) << ',' << g17(r.average) << ',' << g17(r.average_sd) << ',' << g17(r.direct)
         << ',' << g17(r.direct_sd) << ',' << r.count << '\n';
    }
    write_file(out / "compare_data.csv", os.str());
  }
  return rows;
}

}  // namespace tfde
