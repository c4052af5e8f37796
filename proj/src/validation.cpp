#include <cmath>
#include <random>
#include <sstream>

#include <boost/math/special_functions/gamma.hpp>

#include "json.hpp"
#include "tfde/experiment.hpp"

namespace tfde {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

ValidationCheck check_caputo(const ValidationHooks& hooks) {
  ValidationCheck c{"caputo_weights", true, ""};
  const TemporalGrid grid(1.0, 100, 0.3);
  const CaputoWeights w = hooks.weights ? hooks.weights(grid) : caputo_weights(grid);
  double sum = 0.0;
  for (int k = 0; k < grid.steps(); ++k) {
    if (!(w.b(k) > 0.0) || (k > 0 && !(w.b(k) < w.b(k - 1)))) c.passed = false;
    sum += w.b(k);
  }
  const double telescope = std::abs(sum - std::pow(100.0, 0.7)) / std::pow(100.0, 0.7);
  // The L1 scheme is exact on linear functions: D^a t = t^{1-a} / Gamma(2-a).
  double linear = 0.0;
  for (int n = 1; n <= grid.steps(); ++n) {
    double acc = 0.0;
    for (int k = 0; k < n; ++k) acc += w.b(k) * grid.dt();
    const double exact = caputo_of_power(1.0, 0.3, grid.time(n));
    linear = std::max(linear, std::abs(w.lead() * acc - exact) / exact);
  }
  c.passed = c.passed && std::abs(w.b(0) - 1.0) < 1e-14 && telescope < 1e-12 && linear < 1e-12;
  c.detail = "b0=" + fmt(w.b(0)) + " telescoping err " + fmt(telescope) + ", linear exactness err " + fmt(linear);
  return c;
}

// u = t^2 x(1-x) with q = 1 at alpha = 0.5; error at T in the max norm.
ValidationCheck check_temporal_order() {
  ValidationCheck c{"temporal_order", false, ""};
  const double alpha = 0.5;
  const SpatialMesh mesh = build_mesh(1, 200);
  const Vector bubble = interpolate(mesh, [](const Point& p) { return p[0] * (1.0 - p[0]); });
  std::vector<double> errors;
  for (int steps : {10, 20, 40}) {
    const TemporalGrid grid(1.0, steps, alpha);
    const TfdeSolver solver(mesh, grid, DiffusionTensor::identity(),
                            CoefficientField(Vector::Ones(bubble.size()), 0.0, 2.0));
    const Vector& mass = solver.operators().mass;
    const auto load = [&](int level, Vector& out) {
      const double t = grid.time(level);
      const double dt_part = caputo_of_power(2.0, alpha, t);
      for (Eigen::Index i = 0; i < out.size(); ++i) {
        out[i] = mass[i] * (dt_part * bubble[i] + t * t * (2.0 + bubble[i]));
      }
    };
    const SpaceTimeField u = solver.solve(load, {}, FieldKind::kDirect);
    errors.push_back((u.at_physical(steps) - bubble).cwiseAbs().maxCoeff());
  }
  const double order = std::log2(errors[1] / errors[2]);
  c.passed = std::abs(order - (2.0 - alpha)) < 0.2;
  c.detail = "errors " + fmt(errors[0]) + " " + fmt(errors[1]) + " " + fmt(errors[2]) + ", observed order " +
             fmt(order) + " (expected 1.5)";
  return c;
}

struct SmallProblem {
  SpatialMesh mesh = build_mesh(1, 40);
  TemporalGrid grid{1.0, 20, 0.3};
  ForwardOperator op;
  Vector truth;

  explicit SmallProblem(SegmentSet segments = SegmentSet(SegmentSet::kLambda1))
      : op(mesh, grid, DiffusionTensor::identity(), make_sources(mesh, grid, BasisKind::kTrigonometric, 2),
           default_weight(), segments) {
    truth = interpolate(mesh, [](const Point& p) { return 0.5 + 0.3 * std::sin(3.0 * p[0]); });
  }
};

ValidationCheck check_gradient(const ValidationHooks& hooks, DataKind kind) {
  ValidationCheck c{kind == DataKind::kAverageFlux ? "adjoint_gradient_average" : "adjoint_gradient_direct",
                    false, ""};
  SmallProblem sp;
  const CoefficientField exact(sp.truth, 0.0, 10.0);
  const Observations obs = kind == DataKind::kAverageFlux ? sp.op.observations(sp.op.forward_map(exact))
                                                          : sp.op.observations(sp.op.direct_flux_data(exact));
  InverseProblem problem(sp.op, obs, {0.0});
  if (hooks.adjoint_data) problem.set_adjoint_hook(hooks.adjoint_data);
  const CoefficientField q(interpolate(sp.mesh, [](const Point& p) { return 0.2 + p[0] * p[0]; }), 0.0, 10.0);
  const Vector dq = interpolate(sp.mesh, [](const Point& p) { return std::cos(2.0 * p[0]) + 0.5 * p[0]; });
  const Vector g = problem.gradient(q);
  const double adjoint = l2_inner(sp.mesh, g, dq);
  const double h = 1e-4;
  CoefficientField plus = q, minus = q;
  plus.values() += h * dq;
  minus.values() -= h * dq;
  const double fd = (problem.objective(plus) - problem.objective(minus)) / (2.0 * h);
  const double rel = std::abs(adjoint - fd) / std::abs(fd);
  c.passed = rel < 1e-5;
  c.detail = "adjoint " + fmt(adjoint) + " vs central difference " + fmt(fd) + ", rel err " + fmt(rel);
  return c;
}

ValidationCheck check_jacobian() {
  ValidationCheck c{"jacobian_columns", false, ""};
  const SpatialMesh mesh = build_mesh(1, 12);
  const TemporalGrid grid(1.0, 10, 0.4);
  const ForwardOperator op(mesh, grid, DiffusionTensor::identity(),
                           make_sources(mesh, grid, BasisKind::kTrigonometric, 2), default_weight(),
                           SegmentSet(SegmentSet::kLambda1));
  const CoefficientField q(interpolate(mesh, [](const Point& p) { return 1.0 + p[0]; }), 0.0, 10.0);
  const Eigen::MatrixXd a = assemble_jacobian(op, q);
  const Eigen::MatrixXd b = assemble_jacobian_by_columns(op, q);
  const double rel = (a - b).norm() / b.norm();
  c.passed = rel < 1e-9;
  c.detail = "adjoint rows vs sensitivity columns, rel err " + fmt(rel);
  return c;
}

ValidationCheck check_symmetry() {
  ValidationCheck c{"mirror_symmetry", false, ""};
  const SpatialMesh mesh = build_mesh(1, 40);
  const TemporalGrid grid(1.0, 20, 0.3);
  const auto sources = make_sources(mesh, grid, BasisKind::kTrigonometric, 1);
  const CoefficientField q(interpolate(mesh, [](const Point& p) { return p[0] * (1.0 - p[0]); }), 0.0, 1.0);
  const ForwardOperator left(mesh, grid, DiffusionTensor::identity(), sources, default_weight(),
                             SegmentSet(SegmentSet::kLambda0));
  const ForwardOperator right(mesh, grid, DiffusionTensor::identity(), sources, default_weight(),
                              SegmentSet(SegmentSet::kLambda1));
  const Eigen::MatrixXd a = left.forward_map(q).values;
  const Eigen::MatrixXd b = right.forward_map(q).values;
  const double rel = (a - b).norm() / b.norm();
  c.passed = rel < 1e-10;
  c.detail = "symmetric q and sources: data on x=0 vs x=1 differ by " + fmt(rel);
  return c;
}

ValidationCheck check_sampler() {
  ValidationCheck c{"posterior_sampler", false, ""};
  const int m = 6;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd p(2, m);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = normal(rng);
  const PosteriorModel model(Vector::LinSpaced(m, 0.0, 1.0), p, 0.3, 0.2);
  const int ne = 20000;
  const PosteriorEnsemble ens = sample_posterior(model, ne, 11);
  const Eigen::MatrixXd& cov = model.covariance();
  const double rel = (ens.covariance - cov).norm() / cov.norm();
  // Expected Frobenius error of a Gaussian sample covariance.
  const double tr = cov.trace();
  const double expected = std::sqrt((cov.squaredNorm() + tr * tr) / ne) / cov.norm();
  double mean_z = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    mean_z = std::max(mean_z, std::abs(ens.mean[i] - model.q_map()[i]) / std::sqrt(cov(i, i) / ne));
  }
  c.passed = rel < 3.0 * expected && mean_z < 4.5;
  c.detail = "covariance rel err " + fmt(rel) + " (expected " + fmt(expected) + "), max mean z-score " + fmt(mean_z);
  return c;
}

ValidationCheck check_chi_square() {
  ValidationCheck c{"chi_square_quantile", false, ""};
  const double x = chi_square_quantile(0.05, 1.0);
  // One degree of freedom: P(X > x) = erfc(sqrt(x / 2)).
  const double tail = std::erfc(std::sqrt(0.5 * x));
  c.passed = std::abs(tail - 0.05) < 1e-10;
  c.detail = "chi2_0.05(1) = " + fmt(x) + ", tail " + fmt(tail);
  return c;
}

ValidationCheck check_maximum_principle() {
  ValidationCheck c{"maximum_principle", false, ""};
  const SpatialMesh mesh = build_mesh(2, 12);
  const TemporalGrid grid(1.0, 15, 0.6);
  const TfdeSolver solver(mesh, grid, DiffusionTensor::identity(),
                          CoefficientField(Vector::Constant(static_cast<Eigen::Index>(mesh.num_nodes()), 0.5), 0.0, 1.0));
  const Vector phi = interpolate(mesh, [](const Point& p) { return 1.0 + std::cos(3.0 * p[0]) * p[1]; });
  std::vector<double> v(static_cast<std::size_t>(grid.levels()));
  for (int n = 0; n < grid.levels(); ++n) v[static_cast<std::size_t>(n)] = grid.time(n);
  const SpaceTimeField u = solver.solve_direct(phi.cwiseMax(0.0), v);
  double lowest = 0.0;
  for (const auto& level : u.levels) lowest = std::min(lowest, level.minCoeff());
  c.passed = lowest >= -1e-14;
  c.detail = "min u over all levels " + fmt(lowest);
  return c;
}

}  // namespace

std::vector<ValidationCheck> validate_suite(const ValidationHooks& hooks) {
  using Fn = std::function<ValidationCheck()>;
  const std::vector<Fn> checks = {
      [&] { return check_caputo(hooks); },
      [] { return check_temporal_order(); },
      [&] { return check_gradient(hooks, DataKind::kAverageFlux); },
      [&] { return check_gradient(hooks, DataKind::kDirectFlux); },
      [] { return check_jacobian(); },
      [] { return check_symmetry(); },
      [] { return check_maximum_principle(); },
      [] { return check_sampler(); },
      [] { return check_chi_square(); },
  };
  std::vector<ValidationCheck> out;
  for (const auto& run : checks) {
    try {
      out.push_back(run());
    } catch (const std::exception& e) {
      out.push_back({"exception", false, e.what()});
    }
  }
  return out;
}

std::string validation_report(const std::vector<ValidationCheck>& checks) {
  std::ostringstream os;
  for (const auto& c : checks) {
    os << nlohmann::json{{"check", c.name}, {"passed", c.passed}, {"detail", c.detail}}.dump() << '\n';
  }
  return os.str();
}

}  // namespace tfde
