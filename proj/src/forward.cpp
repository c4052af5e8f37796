#include "tfde/forward.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <istream>
#include <mutex>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace tfde {

double basis_function(BasisKind kind, int index, double x) {
  if (kind == BasisKind::kPolynomial) return std::pow(x, index);
  if (index == 0) return 1.0;
  const int freq = (index + 1) / 2;
  const double arg = 2.0 * std::numbers::pi * freq * x;
  return (index % 2 == 1) ? std::cos(arg) : std::sin(arg);
}

namespace {

int frequency(BasisKind kind, int index) {
  return kind == BasisKind::kPolynomial ? index : (index + 1) / 2;
}

}  // namespace

std::vector<std::array<int, 2>> tensor_basis_order(BasisKind kind, int count) {
  std::vector<std::array<int, 2>> pairs;
  const int side = 2 * count + 1;
  for (int b = 0; b < side; ++b) {
    for (int a = 0; a < side; ++a) pairs.push_back({a, b});
  }
  std::stable_sort(pairs.begin(), pairs.end(), [&](const auto& l, const auto& r) {
    const int fl = frequency(kind, l[0]) + frequency(kind, l[1]);
    const int fr = frequency(kind, r[0]) + frequency(kind, r[1]);
    if (fl != fr) return fl < fr;
    if (l[1] != r[1]) return l[1] < r[1];
    return l[0] < r[0];
  });
  pairs.resize(static_cast<std::size_t>(count));
  return pairs;
}

namespace {

std::vector<Vector> spatial_profiles(const SpatialMesh& mesh, BasisKind kind, int count) {
  if (count < 1) throw std::invalid_argument("basis size must be at least 1");
  std::vector<Vector> out;
  if (mesh.dimension() == 1) {
    for (int j = 0; j < count; ++j) {
      out.push_back(interpolate(mesh, [&](const Point& p) { return basis_function(kind, j, p[0]); }));
    }
  } else {
    for (const auto& [a, b] : tensor_basis_order(kind, count)) {
      out.push_back(interpolate(mesh, [&](const Point& p) {
        return basis_function(kind, a, p[0]) * basis_function(kind, b, p[1]);
      }));
    }
  }
  return out;
}

}  // namespace

SourceSystem make_sources(const SpatialMesh& mesh, const TemporalGrid& grid, BasisKind kind,
                          int count) {
  SourceSystem s;
  s.kind = kind;
  s.spatial = spatial_profiles(mesh, kind, count);
  for (int n = 0; n < grid.levels(); ++n) {
    const double t = grid.time(n);
    s.temporal[0].push_back(t);
    s.temporal[1].push_back(caputo_of_power(1.0, grid.alpha(), t));
  }
  return s;
}

SourceSystem make_sources(const SpatialMesh& mesh, const TemporalGrid& grid, BasisKind kind,
                          int count, std::vector<double> v_samples) {
  SourceSystem s;
  s.kind = kind;
  s.spatial = spatial_profiles(mesh, kind, count);
  s.temporal[1] = caputo_apply(v_samples, grid);
  s.temporal[0] = std::move(v_samples);
  return s;
}

WeightFunction default_weight() {
  return [](const Point&, double t) { return 1.0 - t; };
}

Vector MeasurementMatrix::stretched() const {
  Vector v(values.size());
  const auto n = values.cols();
  for (Eigen::Index i = 0; i < 2; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) v[i * n + j] = values(i, j);
  }
  return v;
}

MeasurementMatrix MeasurementMatrix::from_stretched(const Vector& v, int n) {
  if (v.size() != 2 * n) throw std::invalid_argument("stretched vector must have 2N entries");
  MeasurementMatrix m;
  m.values.resize(2, n);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < n; ++j) m.values(i, j) = v[i * n + j];
  }
  return m;
}

Vector FluxTraces::stacked() const {
  Eigen::Index total = 0;
  for (const auto& t : traces) total += t.size();
  Vector v(total);
  Eigen::Index pos = 0;
  for (const auto& t : traces) {
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) v[pos++] = t(r, c);
    }
  }
  return v;
}

FluxTraces FluxTraces::from_stacked(const Vector& v, std::vector<int> nodes, int count, int levels) {
  const auto width = static_cast<Eigen::Index>(nodes.size());
  if (v.size() != count * levels * width) throw std::invalid_argument("stacked trace size mismatch");
  FluxTraces out;
  out.nodes = std::move(nodes);
  Eigen::Index pos = 0;
  for (int k = 0; k < count; ++k) {
    Eigen::MatrixXd t(levels, width);
    for (Eigen::Index r = 0; r < levels; ++r) {
      for (Eigen::Index c = 0; c < width; ++c) t(r, c) = v[pos++];
    }
    out.traces.push_back(std::move(t));
  }
  return out;
}

ForwardOperator::ForwardOperator(const SpatialMesh& mesh, TemporalGrid grid, DiffusionTensor tensor,
                                 SourceSystem sources, WeightFunction weight, SegmentSet segments,
                                 Execution execution)
    : mesh_(&mesh), grid_(grid), tensor_(std::move(tensor)), sources_(std::move(sources)),
      segments_(segments), execution_(execution) {
  measured_nodes_ = mesh.segment_nodes(segments);
  if (segments.empty() || measured_nodes_.empty()) {
    throw std::invalid_argument("measured boundary part is empty");
  }
  if (sources_.size() < 1) throw std::invalid_argument("source system is empty");
  for (const auto& phi : sources_.spatial) {
    if (phi.size() != static_cast<Eigen::Index>(mesh.num_nodes())) {
      throw std::invalid_argument("source profile does not match the mesh");
    }
  }
  for (const auto& v : sources_.temporal) {
    if (v.size() != static_cast<std::size_t>(grid_.levels())) {
      throw std::invalid_argument("temporal profile does not match the time grid");
    }
  }
  const auto m = static_cast<Eigen::Index>(measured_nodes_.size());
  h_.resize(grid_.levels(), m);
  share_.resize(m);
  length_.resize(m);
  full_length_.resize(m);
  const SegmentSet all = SegmentSet::all(mesh.dimension());
  for (Eigen::Index c = 0; c < m; ++c) {
    const int node = measured_nodes_[static_cast<std::size_t>(c)];
    slots_.push_back(mesh.boundary_slot(node));
    length_[c] = mesh.boundary_weight(node, segments);
    full_length_[c] = mesh.boundary_weight(node, all);
    share_[c] = length_[c] / full_length_[c];
    for (int n = 0; n < grid_.levels(); ++n) h_(n, c) = weight(mesh.node(node), grid_.time(n));
  }
}

void ForwardOperator::for_each_measurement(int count, const std::function<void(int)>& f) const {
  std::exception_ptr error;
  std::mutex guard;
  const bool parallel = execution_ == Execution::kParallel;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int k = 0; k < count; ++k) {
    try {
      f(k);
    } catch (...) {
      std::lock_guard<std::mutex> lock(guard);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

Evaluation ForwardOperator::evaluate(const CoefficientField& q) const {
  Evaluation eval;
  eval.solver = std::make_shared<const TfdeSolver>(*mesh_, grid_, tensor_, q);
  const int count = measurement_count();
  const int n = sources_.size();
  eval.states.resize(static_cast<std::size_t>(count));
  eval.flux.resize(static_cast<std::size_t>(count));
  for_each_measurement(count, [&](int k) {
    const int i = k / n;
    const int j = k % n;
    eval.states[k] = eval.solver->solve_direct(sources_.spatial[j], sources_.temporal[i], &eval.flux[k]);
  });
  return eval;
}

int ForwardOperator::observation_size(DataKind kind) const {
  if (kind == DataKind::kAverageFlux) return measurement_count();
  return measurement_count() * grid_.levels() * static_cast<int>(measured_nodes_.size());
}

Vector ForwardOperator::observe(const std::vector<BoundaryHistory>& flux, DataKind kind) const {
  const int count = measurement_count();
  Vector out(observation_size(kind));
  const auto width = static_cast<Eigen::Index>(measured_nodes_.size());
  for (int k = 0; k < count; ++k) {
    const BoundaryHistory& rho = flux[static_cast<std::size_t>(k)];
    if (kind == DataKind::kAverageFlux) {
      double acc = 0.0;
      for (int n = 0; n < grid_.levels(); ++n) {
        double level_sum = 0.0;
        for (Eigen::Index c = 0; c < width; ++c) level_sum += h_(n, c) * share_[c] * rho(n, slots_[c]);
        acc += grid_.trapezoid_weight(n) * level_sum;
      }
      out[k] = acc;
    } else {
      Eigen::Index pos = static_cast<Eigen::Index>(k) * grid_.levels() * width;
      for (int n = 0; n < grid_.levels(); ++n) {
        for (Eigen::Index c = 0; c < width; ++c) out[pos++] = rho(n, slots_[c]) / full_length_[c];
      }
    }
  }
  return out;
}

Vector ForwardOperator::observation_weights(DataKind kind) const {
  if (kind == DataKind::kAverageFlux) return Vector::Ones(measurement_count());
  Vector w(observation_size(kind));
  const auto width = static_cast<Eigen::Index>(measured_nodes_.size());
  Eigen::Index pos = 0;
  for (int k = 0; k < measurement_count(); ++k) {
    for (int n = 0; n < grid_.levels(); ++n) {
      for (Eigen::Index c = 0; c < width; ++c) w[pos++] = grid_.trapezoid_weight(n) * length_[c];
    }
  }
  return w;
}

Observations ForwardOperator::observations(const MeasurementMatrix& data) const {
  if (data.size() != sources_.size()) throw std::invalid_argument("data do not match the source count");
  return {DataKind::kAverageFlux, data.stretched(), observation_weights(DataKind::kAverageFlux)};
}

Observations ForwardOperator::observations(const FluxTraces& data) const {
  Vector v = data.stacked();
  if (v.size() != observation_size(DataKind::kDirectFlux)) {
    throw std::invalid_argument("flux traces do not match this operator");
  }
  return {DataKind::kDirectFlux, std::move(v), observation_weights(DataKind::kDirectFlux)};
}

MeasurementMatrix ForwardOperator::forward_map(const CoefficientField& q) const {
  const Evaluation eval = evaluate(q);
  return MeasurementMatrix::from_stretched(observe(eval.flux, DataKind::kAverageFlux), sources_.size());
}

FluxTraces ForwardOperator::direct_flux_data(const CoefficientField& q) const {
  const Evaluation eval = evaluate(q);
  return FluxTraces::from_stacked(observe(eval.flux, DataKind::kDirectFlux), measured_nodes_,
                                  measurement_count(), grid_.levels());
}

BoundaryHistory ForwardOperator::adjoint_dirichlet(DataKind kind, int k, const Vector& residual) const {
  const auto width = static_cast<Eigen::Index>(measured_nodes_.size());
  BoundaryHistory g = BoundaryHistory::Zero(grid_.levels(),
                                            static_cast<Eigen::Index>(mesh_->boundary_nodes().size()));
  const double dt = grid_.dt();
  if (kind == DataKind::kAverageFlux) {
    const double r = residual[k];
    for (int n = 0; n < grid_.levels(); ++n) {
      const double scale = grid_.trapezoid_weight(n) / dt * r;
      for (Eigen::Index c = 0; c < width; ++c) g(n, slots_[c]) = scale * h_(n, c) * share_[c];
    }
  } else {
    Eigen::Index pos = static_cast<Eigen::Index>(k) * grid_.levels() * width;
    for (int n = 0; n < grid_.levels(); ++n) {
      const double scale = grid_.trapezoid_weight(n) / dt;
      for (Eigen::Index c = 0; c < width; ++c) {
        // d/d rho of 1/2 tau l (rho/L - d)^2 = tau (l/L) e
        g(n, slots_[c]) = scale * share_[c] * residual[pos++];
      }
    }
  }
  return g;
}

Vector ForwardOperator::sensitivity(const Evaluation& eval, const Vector& dq, DataKind kind) const {
  const int count = measurement_count();
  std::vector<BoundaryHistory> flux(static_cast<std::size_t>(count));
  for_each_measurement(count, [&](int k) {
    eval.solver->solve_sensitivity(eval.states[k], dq, &flux[k]);
  });
  return observe(flux, kind);
}

Vector ForwardOperator::adjoint_contraction(const SpaceTimeField& adjoint,
                                            const SpaceTimeField& state) const {
  Vector acc = Vector::Zero(static_cast<Eigen::Index>(mesh_->num_nodes()));
  for (int n = 1; n <= grid_.steps(); ++n) acc += adjoint.at_physical(n).cwiseProduct(state.at_physical(n));
  return grid_.dt() * acc;
}

namespace {

Vector perturb(const Vector& clean, double epsilon, std::uint64_t seed) {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("noise level must be nonnegative");
  const double scale = clean.cwiseAbs().maxCoeff() * epsilon;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> zeta(0.0, 1.0);
  Vector noisy = clean;
  for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy[i] += scale * zeta(rng);
  return noisy;
}

}  // namespace

MeasurementMatrix add_noise(const MeasurementMatrix& clean, double epsilon, std::uint64_t seed) {
  const Vector base = clean.stretched();
  const Vector noisy = perturb(base, epsilon, seed);
  MeasurementMatrix out = MeasurementMatrix::from_stretched(noisy, clean.size());
  out.epsilon = epsilon;
  out.delta = (noisy - base).norm();
  out.seed = seed;
  return out;
}

FluxTraces add_noise(const FluxTraces& clean, double epsilon, std::uint64_t seed) {
  const Vector base = clean.stacked();
  const Vector noisy = perturb(base, epsilon, seed);
  const int levels = clean.traces.empty() ? 0 : static_cast<int>(clean.traces.front().rows());
  FluxTraces out = FluxTraces::from_stacked(noisy, clean.nodes, static_cast<int>(clean.traces.size()), levels);
  out.epsilon = epsilon;
  out.delta = (noisy - base).norm();
  out.seed = seed;
  return out;
}

double estimate_delta(const Vector& noisy, double epsilon) {
  return noisy.cwiseAbs().maxCoeff() * epsilon * std::sqrt(static_cast<double>(noisy.size()));
}

void write_measurements_csv(std::ostream& os, const MeasurementMatrix& m,
                            const std::vector<std::string>& comment_lines) {
  for (const auto& line : comment_lines) os << "# " << line << '\n';
  os << "i,j,value\n";
  char buf[64];
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m.values(i, j));
      os << (i + 1) << ',' << (j + 1) << ',' << buf << '\n';
    }
  }
}

MeasurementMatrix read_measurements_csv(std::istream& is) {
  std::string line;
  bool header = false;
  std::vector<std::array<double, 3>> rows;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "i,j,value") throw std::runtime_error("expected header 'i,j,value'");
      header = true;
      continue;
    }
    std::istringstream ss(line);
    std::array<double, 3> r{};
    char comma1 = 0, comma2 = 0;
    if (!(ss >> r[0] >> comma1 >> r[1] >> comma2 >> r[2]) || comma1 != ',' || comma2 != ',') {
      throw std::runtime_error("malformed measurement row at line " + std::to_string(line_no));
    }
    rows.push_back(r);
  }
  int n = 0;
  for (const auto& r : rows) n = std::max(n, static_cast<int>(r[1]));
  if (rows.size() != static_cast<std::size_t>(2 * n)) {
    throw std::runtime_error("measurement file must contain 2N rows");
  }
  MeasurementMatrix m;
  m.values = Eigen::MatrixXd::Zero(2, n);
  for (const auto& r : rows) {
    const int i = static_cast<int>(r[0]);
    const int j = static_cast<int>(r[1]);
    if (i < 1 || i > 2 || j < 1) throw std::runtime_error("measurement index out of range");
    m.values(i - 1, j - 1) = r[2];
  }
  return m;
}

std::string measurements_to_json(const MeasurementMatrix& m) {
  nlohmann::json j;
  j["rows"] = m.values.rows();
  j["cols"] = m.values.cols();
  std::vector<double> flat;
  const Vector s = m.stretched();
  flat.assign(s.data(), s.data() + s.size());
  j["stretched"] = flat;
  j["epsilon"] = m.epsilon;
  j["delta"] = m.delta;
  j["seed"] = m.seed;
  return j.dump(2);
}

MeasurementMatrix measurements_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  const int n = j.at("cols").get<int>();
  const auto flat = j.at("stretched").get<std::vector<double>>();
  MeasurementMatrix m =
      MeasurementMatrix::from_stretched(Eigen::Map<const Vector>(flat.data(), static_cast<Eigen::Index>(flat.size())), n);
  m.epsilon = j.value("epsilon", 0.0);
  m.delta = j.value("delta", 0.0);
  m.seed = j.value("seed", std::uint64_t{0});
  return m;
}

}  // namespace tfde
