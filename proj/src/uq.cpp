#include "tfde/uq.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <bit>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace tfde {

Eigen::MatrixXd assemble_jacobian(const ForwardOperator& op, const CoefficientField& q) {
  const Evaluation eval = op.evaluate(q);
  const int count = op.measurement_count();
  const auto m = static_cast<Eigen::Index>(op.mesh().num_nodes());
  const Vector mass = eval.solver->operators().mass;
  Eigen::MatrixXd p(count, m);
  op.for_each_measurement(count, [&](int k) {
    Vector unit = Vector::Zero(count);
    unit[k] = 1.0;
    const BoundaryHistory g = op.adjoint_dirichlet(DataKind::kAverageFlux, k, unit);
    const SpaceTimeField w = eval.solver->solve_adjoint(g);
    p.row(k) = mass.cwiseProduct(op.adjoint_contraction(w, eval.states[k])).transpose();
  });
  return p;
}

Eigen::MatrixXd assemble_jacobian_by_columns(const ForwardOperator& op, const CoefficientField& q) {
  const Evaluation eval = op.evaluate(q);
  const auto m = static_cast<Eigen::Index>(op.mesh().num_nodes());
  Eigen::MatrixXd p(op.measurement_count(), m);
  for (Eigen::Index col = 0; col < m; ++col) {
    Vector dq = Vector::Zero(m);
    dq[col] = 1.0;
    p.col(col) = op.sensitivity(eval, dq, DataKind::kAverageFlux);
  }
  return p;
}

PosteriorModel::PosteriorModel(Vector q_map, Eigen::MatrixXd jacobian, double mu, double delta)
    : q_map_(std::move(q_map)), p_(std::move(jacobian)), mu_(mu), delta_(delta) {
  if (!(mu > 0.0) || !(delta > 0.0)) throw std::invalid_argument("need mu > 0 and delta > 0");
  if (p_.cols() != q_map_.size()) throw std::invalid_argument("Jacobian does not match q_MAP");
  const Eigen::Index m = q_map_.size();

  Eigen::MatrixXd small = p_ * p_.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(small, Eigen::EigenvaluesOnly);
  ptp_eigs_ = Vector::Zero(m);
  const Vector ev = eig.eigenvalues().reverse().cwiseMax(0.0);
  ptp_eigs_.head(std::min(m, ev.size())) = ev.head(std::min(m, ev.size()));

  // The precision matrix is formed explicitly: the Woodbury form loses the
  // small covariance eigenvalues to cancellation when lambda(P^T P) >> mu.
  Eigen::MatrixXd precision = p_.transpose() * p_;
  precision.diagonal().array() += mu;
  Eigen::LLT<Eigen::MatrixXd> prec_llt(precision);
  if (prec_llt.info() != Eigen::Success) throw SolverError("cannot factor mu I + P^T P");
  cov_ = prec_llt.solve(Eigen::MatrixXd::Identity(m, m));
  cov_ *= delta * delta;
  cov_ = 0.5 * (cov_ + cov_.transpose()).eval();

  Eigen::LLT<Eigen::MatrixXd> llt(cov_);
  if (llt.info() != Eigen::Success) throw SolverError("posterior covariance is not positive definite");
  chol_ = llt.matrixL();
}

Vector PosteriorModel::covariance_eigenvalues() const {
  Vector out(ptp_eigs_.size());
  for (Eigen::Index j = 0; j < out.size(); ++j) out[j] = delta_ * delta_ / (mu_ + ptp_eigs_[j]);
  std::sort(out.begin(), out.end());
  return out;
}

PosteriorEnsemble sample_posterior(const PosteriorModel& model, int ne, std::uint64_t seed,
                                   bool keep_samples, bool track_covariance) {
  if (ne < 2) throw std::invalid_argument("ensemble size must be at least 2");
  const Eigen::Index m = model.dimension();
  const Eigen::MatrixXd& factor = model.cholesky_lower();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Deviations from q_MAP are accumulated, which keeps the sums well scaled.
  Vector sum = Vector::Zero(m);
  Vector sum_sq = Vector::Zero(m);
  Eigen::MatrixXd outer;
  if (track_covariance) outer = Eigen::MatrixXd::Zero(m, m);

  PosteriorEnsemble ens;
  ens.seed = seed;
  constexpr int kBatch = 256;
  Eigen::MatrixXd z(m, kBatch);
  for (int start = 0; start < ne; start += kBatch) {
    const int b = std::min(kBatch, ne - start);
    for (int c = 0; c < b; ++c) {
      for (Eigen::Index r = 0; r < m; ++r) z(r, c) = normal(rng);
    }
    const Eigen::MatrixXd dev = factor.triangularView<Eigen::Lower>() * z.leftCols(b);
    sum += dev.rowwise().sum();
    sum_sq += dev.cwiseAbs2().rowwise().sum();
    if (track_covariance) outer.selfadjointView<Eigen::Lower>().rankUpdate(dev);
    if (keep_samples) {
      for (int c = 0; c < b; ++c) ens.samples.push_back(model.q_map() + dev.col(c));
    }
  }
  const double n = ne;
  ens.count = ne;
  ens.mean = model.q_map() + sum / n;
  ens.variance = (sum_sq - sum.cwiseAbs2() / n) / (n - 1.0);
  if (track_covariance) {
    Eigen::MatrixXd full = outer.selfadjointView<Eigen::Lower>();
    ens.covariance = (full - sum * sum.transpose() / n) / (n - 1.0);
  }
  return ens;
}

double chi_square_quantile(double upper_tail, double df) {
  if (!(upper_tail > 0.0 && upper_tail < 1.0)) throw std::invalid_argument("tail must be in (0,1)");
  if (!(df > 0.0)) throw std::invalid_argument("degrees of freedom must be positive");
  const double target = 1.0 - upper_tail;
  auto cdf = [&](double x) { return boost::math::gamma_p(0.5 * df, 0.5 * x); };
  double lo = 0.0;
  double hi = std::max(1.0, df);
  while (cdf(hi) < target) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-13 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Vector confidence_axes(const Vector& ptp_eigenvalues, double mu, double delta, double confidence,
                       int n, double df) {
  if (!(confidence > 0.0 && confidence < 1.0)) throw std::invalid_argument("confidence must be in (0,1)");
  if (n < 1) throw std::invalid_argument("sample count must be positive");
  const double chi2 = chi_square_quantile(1.0 - confidence, df);
  Vector axes(ptp_eigenvalues.size());
  for (Eigen::Index j = 0; j < axes.size(); ++j) {
    axes[j] = delta * std::sqrt(chi2 / (n * (mu + ptp_eigenvalues[j])));
  }
  std::sort(axes.begin(), axes.end(), std::greater<>());
  return axes;
}

ConfidenceReport confidence_interval(const PosteriorModel& model, double confidence, int n) {
  ConfidenceReport r;
  const double df = static_cast<double>(model.dimension());
  r.axes = confidence_axes(model.data_eigenvalues(), model.mu(), model.delta(), confidence, n, df);
  r.confidence = confidence;
  r.n = n;
  r.chi2 = chi_square_quantile(1.0 - confidence, df);
  r.half_width = (r.chi2 / n * model.covariance().diagonal().array()).sqrt().matrix();
  return r;
}

SkewnessReport skewness(const SpatialMesh& mesh, const Vector& field, int axis) {
  if (field.size() != static_cast<Eigen::Index>(mesh.num_nodes())) {
    throw std::invalid_argument("field does not match the mesh");
  }
  if (axis < 0 || axis >= mesh.dimension()) throw std::invalid_argument("axis out of range");
  // Lumped weights are tensor-product trapezoid weights, so weighting each node
  // by them and using its coordinate along `axis` integrates the marginal.
  double mass = 0.0, first = 0.0;
  for (std::size_t i = 0; i < mesh.num_nodes(); ++i) {
    const double p = mesh.nodal_weight(i) * std::max(0.0, field[static_cast<Eigen::Index>(i)]);
    mass += p;
    first += p * mesh.node(i)[axis];
  }
  if (!(mass > 0.0)) throw std::invalid_argument("field has no positive mass");
  SkewnessReport r;
  r.mean = first / mass;
  double m2 = 0.0, m3 = 0.0;
  for (std::size_t i = 0; i < mesh.num_nodes(); ++i) {
    const double p = mesh.nodal_weight(i) * std::max(0.0, field[static_cast<Eigen::Index>(i)]) / mass;
    const double d = mesh.node(i)[axis] - r.mean;
    m2 += p * d * d;
    m3 += p * d * d * d;
  }
  r.sd = std::sqrt(m2);
  r.third_moment = m3;
  r.beta = r.sd > 0.0 ? m3 / (r.sd * r.sd * r.sd) : 0.0;
  return r;
}

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_ensemble_csv(std::ostream& os, const SpatialMesh& mesh, const PosteriorEnsemble& ens,
                        const ConfidenceReport& ci, const std::vector<std::string>& comment_lines) {
  for (const auto& line : comment_lines) os << "# " << line << '\n';
  os << (mesh.dimension() == 1 ? "node,x,mean,sd,ci_lo,ci_hi\n" : "node,x,y,mean,sd,ci_lo,ci_hi\n");
  for (std::size_t i = 0; i < mesh.num_nodes(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const Point& p = mesh.node(i);
    os << i << ',' << g17(p[0]);
    if (mesh.dimension() == 2) os << ',' << g17(p[1]);
    os << ',' << g17(ens.mean[k]) << ',' << g17(std::sqrt(ens.variance[k])) << ','
       << g17(ens.mean[k] - ci.half_width[k]) << ',' << g17(ens.mean[k] + ci.half_width[k]) << '\n';
  }
}

std::string skewness_json(const std::vector<SkewnessReport>& per_axis,
                          const std::vector<std::pair<std::string, std::string>>& meta) {
  nlohmann::json j;
  for (const auto& [k, v] : meta) j[k] = v;
  static const char* names[] = {"x", "y"};
  for (std::size_t a = 0; a < per_axis.size() && a < 2; ++a) {
    const auto& r = per_axis[a];
    j["axes"][names[a]] = {{"beta", r.beta}, {"mean", r.mean}, {"sd", r.sd}, {"third_moment", r.third_moment}};
  }
  return j.dump(2) + "\n";
}

namespace {

void put_u64(std::ostream& os, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) os.put(static_cast<char>((v >> (8 * b)) & 0xff));
}

}  // namespace

void write_samples_binary(std::ostream& os, const PosteriorEnsemble& ens) {
  os.write("TFDESMP1", 8);
  const std::uint64_t m = ens.samples.empty() ? 0 : static_cast<std::uint64_t>(ens.samples.front().size());
  put_u64(os, m);
  put_u64(os, ens.samples.size());
  for (const auto& s : ens.samples) {
    for (Eigen::Index i = 0; i < s.size(); ++i) put_u64(os, std::bit_cast<std::uint64_t>(s[i]));
  }
}

}  // namespace tfde
