#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "tfde/inversion.hpp"

using namespace tfde;

namespace {

struct Fixture {
  SpatialMesh mesh = build_mesh(1, 60);
  TemporalGrid grid{1.0, 25, 0.3};
  ForwardOperator op{mesh, grid, DiffusionTensor::identity(), make_sources(mesh, grid, BasisKind::kTrigonometric, 3),
                     default_weight(), SegmentSet(SegmentSet::kLambda1)};
  Vector truth = interpolate(mesh, [](const Point& p) { return p[0] * p[0] * (1.0 - p[0] * p[0]); });

  Observations data(DataKind kind, double eps = 0.0) const {
    const CoefficientField q(truth, 0.0, 1.0);
    if (kind == DataKind::kAverageFlux) return op.observations(add_noise(op.forward_map(q), eps, 5));
    return op.observations(add_noise(op.direct_flux_data(q), eps, 5));
  }

  Vector random_direction(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    const double a = n(rng), b = n(rng), c = n(rng);
    return interpolate(mesh, [&](const Point& p) { return a + b * std::cos(3.0 * p[0]) + c * p[0] * p[0]; });
  }
};

}  // namespace

TEST_CASE("adjoint gradient matches central differences") {
  Fixture f;
  for (DataKind kind : {DataKind::kAverageFlux, DataKind::kDirectFlux}) {
    const InverseProblem problem(f.op, f.data(kind, 1e-3), {1e-6});
    const CoefficientField q(Vector::Constant(f.truth.size(), 0.1), 0.0, 1.0);
    const Vector g = problem.gradient(q);
    for (std::uint64_t seed : {1, 2, 3}) {
      const Vector dq = f.random_direction(seed);
      const double h = 1e-4;
      CoefficientField plus = q, minus = q;
      plus.values() += h * dq;
      minus.values() -= h * dq;
      const double fd = (problem.objective(plus) - problem.objective(minus)) / (2.0 * h);
      CHECK(l2_inner(f.mesh, g, dq) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("duality between sensitivity and adjoint") {
  Fixture f;
  for (DataKind kind : {DataKind::kAverageFlux, DataKind::kDirectFlux}) {
    const double mu = 1e-4;
    const Observations obs = f.data(kind, 1e-2);
    const InverseProblem problem(f.op, obs, {mu});
    const CoefficientField q(f.truth * 0.5, 0.0, 1.0);
    const ObjectiveState st = problem.state(q);
    const Vector g = problem.gradient(st, q);
    const Vector dq = f.random_direction(7);
    const Vector s = problem.sensitivity_directional(st, dq);
    const double lhs = obs.weights.dot(st.residual.cwiseProduct(s));
    const double rhs = l2_inner(f.mesh, g - mu * q.values(), dq);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("sensitivity is linear in the direction") {
  Fixture f;
  const InverseProblem problem(f.op, f.data(DataKind::kAverageFlux), {0.0});
  const ObjectiveState st = problem.state(CoefficientField(f.truth, 0.0, 1.0));
  const Vector a = f.random_direction(1), b = f.random_direction(2);
  const Vector sa = problem.sensitivity_directional(st, a);
  const Vector sb = problem.sensitivity_directional(st, b);
  const Vector sab = problem.sensitivity_directional(st, 2.0 * a - b);
  CHECK((sab - (2.0 * sa - sb)).norm() <= 1e-12 * sab.norm());
}

TEST_CASE("CGM started at the truth with exact data stays there") {
  Fixture f;
  const InverseProblem problem(f.op, f.data(DataKind::kAverageFlux), {0.0});
  const CgmResult r = problem.run_cgm(CoefficientField(f.truth, 0.0, 2.0), {});
  CHECK(r.converged);
  CHECK(relative_error(f.mesh, r.q.values(), f.truth) < 1e-10);
}

TEST_CASE("CGM decreases the objective and respects the box") {
  Fixture f;
  const InverseProblem problem(f.op, f.data(DataKind::kAverageFlux, 1e-4), {1e-9});
  CgmOptions opt;
  opt.max_iter = 30;
  int calls = 0;
  opt.on_iteration = [&](const CgmLogEntry&) { ++calls; };
  const CoefficientField q0(Vector::Zero(f.truth.size()), 0.0, 0.5);
  const double j0 = problem.objective(q0);
  const CgmResult r = problem.run_cgm(q0, opt);
  REQUIRE_FALSE(r.log.empty());
  CHECK(calls == static_cast<int>(r.log.size()));
  CHECK(r.log.front().J <= j0);
  for (std::size_t i = 1; i < r.log.size(); ++i) CHECK(r.log[i].J <= r.log[i - 1].J);
  CHECK(r.q.admissible());
  CHECK(relative_error(f.mesh, r.q.values(), f.truth) < 0.5);
}

TEST_CASE("relative error") {
  const SpatialMesh m = build_mesh(1, 300);
  const Vector truth = interpolate(m, [](const Point& p) { return p[0] * (1.0 - p[0]); });
  const Vector shifted = truth.array() + 0.01;
  // ||x(1-x)||_2 = sqrt(1/30)
  CHECK(relative_error(m, shifted, truth) == doctest::Approx(0.01 / std::sqrt(1.0 / 30.0)).epsilon(1e-4));
  CHECK(relative_error(m, truth, truth) == 0.0);
  CHECK_THROWS_AS(relative_error(m, truth, Vector::Zero(truth.size())), std::invalid_argument);
}

TEST_CASE("regularization rules") {
  CHECK(regularization_parameter(MuRule::kSqrtDelta, 1e-4, 0.0) == doctest::Approx(1e-2));
  CHECK(regularization_parameter(MuRule::kDelta, 1e-4, 0.0) == doctest::Approx(1e-4));
  CHECK(regularization_parameter(MuRule::kDelta32, 1e-4, 0.0) == doctest::Approx(1e-6));
  CHECK(regularization_parameter(MuRule::kDeltaSquared, 1e-4, 0.0) == doctest::Approx(1e-8));
  CHECK(regularization_parameter(MuRule::kExplicit, 1e-4, 3e-3) == 3e-3);
  CHECK_THROWS(regularization_parameter(MuRule::kDelta, 0.0, 0.0));
  CHECK(parse_mu_rule("delta^3/2") == MuRule::kDelta32);
  CHECK(parse_mu_rule(to_string(MuRule::kDeltaSquared)) == MuRule::kDeltaSquared);
  CHECK_THROWS(parse_mu_rule("delta^3"));
}

TEST_CASE("objective validation and log output") {
  Fixture f;
  Observations obs = f.data(DataKind::kAverageFlux);
  obs.values.conservativeResize(3);
  CHECK_THROWS_AS(InverseProblem(f.op, obs, {0.0}), std::invalid_argument);
  CHECK_THROWS_AS(InverseProblem(f.op, f.data(DataKind::kAverageFlux), {-1.0}), std::invalid_argument);
  std::ostringstream os;
  write_cgm_log_csv(os, {{1, 2.0, 3.0, 4.0, 5.0, 0.0}}, {"seed=1"});
  CHECK(os.str() == "# seed=1\niter,J,grad_norm,E_k,beta,gamma\n1,2,3,4,5,0\n");
}
