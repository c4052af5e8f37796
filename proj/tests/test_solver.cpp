#include <cmath>

#include "doctest.h"
#include "tfde/solver.hpp"

using namespace tfde;

namespace {

// u = t^2 x(1-x), q = 1.
double manufactured_error(double alpha, int steps, int elements, BoundaryHistory* flux = nullptr) {
  const SpatialMesh mesh = build_mesh(1, elements);
  const TemporalGrid grid(1.0, steps, alpha);
  const Vector bubble = interpolate(mesh, [](const Point& p) { return p[0] * (1.0 - p[0]); });
  const TfdeSolver solver(mesh, grid, DiffusionTensor::identity(),
                          CoefficientField(Vector::Ones(bubble.size()), 0.0, 2.0));
  const Vector& mass = solver.operators().mass;
  const LoadFunction load = [&](int level, Vector& out) {
    const double t = grid.time(level);
    out = mass.cwiseProduct(caputo_of_power(2.0, alpha, t) * bubble +
                            t * t * (Vector::Constant(bubble.size(), 2.0) + bubble));
  };
  const SpaceTimeField u = solver.solve(load, {}, FieldKind::kDirect, flux);
  return (u.at_physical(steps) - bubble).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("manufactured solution converges at order 2 - alpha") {
  for (double alpha : {0.3, 0.7}) {
    const double e1 = manufactured_error(alpha, 20, 200);
    const double e2 = manufactured_error(alpha, 40, 200);
    CHECK(std::log2(e1 / e2) == doctest::Approx(2.0 - alpha).epsilon(0.15));
  }
}

TEST_CASE("variational flux matches the conormal derivative") {
  BoundaryHistory flux;
  manufactured_error(0.5, 40, 200, &flux);
  // Outward flux of t^2 x(1-x) is -t^2 at both ends.
  CHECK(flux.row(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(flux(40, 0) == doctest::Approx(-1.0).epsilon(1e-2));
  CHECK(flux(40, 1) == doctest::Approx(-1.0).epsilon(1e-2));
}

TEST_CASE("finite-difference flux of linear fields") {
  const SpatialMesh m1 = build_mesh(1, 10);
  const SpatialMesh m2 = build_mesh(2, 8);
  for (const SpatialMesh* m : {&m1, &m2}) {
    SpaceTimeField f;
    f.levels.push_back(Vector::Zero(static_cast<Eigen::Index>(m->num_nodes())));
    f.levels.push_back(interpolate(*m, [](const Point& p) { return p[0]; }));
    const SegmentSet right = m->dimension() == 1 ? SegmentSet(SegmentSet::kLambda1) : SegmentSet(SegmentSet::kLambda2);
    const SegmentSet left = m->dimension() == 1 ? SegmentSet(SegmentSet::kLambda0) : SegmentSet(SegmentSet::kLambda4);
    const Eigen::MatrixXd fr = boundary_flux(f, *m, DiffusionTensor::identity(), right);
    const Eigen::MatrixXd fl = boundary_flux(f, *m, DiffusionTensor::identity(), left);
    CHECK((fr.row(1).array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK((fl.row(1).array() + 1.0).abs().maxCoeff() < 1e-12);
  }
  SpaceTimeField adj;
  adj.kind = FieldKind::kAdjoint;
  adj.levels.assign(2, Vector::Zero(11));
  CHECK_THROWS_AS(boundary_flux(adj, m1, DiffusionTensor::identity(), SegmentSet(SegmentSet::kLambda1)),
                  std::invalid_argument);
}

TEST_CASE("nonnegative sources give nonnegative states") {
  const SpatialMesh mesh = build_mesh(2, 10);
  const TemporalGrid grid(1.0, 12, 0.4);
  const auto nn = static_cast<Eigen::Index>(mesh.num_nodes());
  const TfdeSolver solver(mesh, grid, DiffusionTensor::identity(), CoefficientField(Vector::Constant(nn, 0.3), 0.0, 1.0));
  const Vector phi = interpolate(mesh, [](const Point& p) { return p[0] * p[1] + 0.1; });
  std::vector<double> v(13);
  for (int n = 0; n <= 12; ++n) v[n] = grid.time(n);
  const SpaceTimeField u = solver.solve_direct(phi, v);
  for (const auto& level : u.levels) CHECK(level.minCoeff() >= 0.0);
  CHECK(u.levels.back().maxCoeff() > 0.0);
}

TEST_CASE("adjoint storage order") {
  const SpatialMesh mesh = build_mesh(1, 16);
  const TemporalGrid grid(1.0, 8, 0.3);
  const TfdeSolver solver(mesh, grid, DiffusionTensor::identity(), CoefficientField(Vector::Ones(17), 0.0, 2.0));
  BoundaryHistory g = BoundaryHistory::Zero(grid.levels(), 2);
  for (int n = 0; n < grid.levels(); ++n) g(n, 1) = 1.0 - grid.time(n);
  const SpaceTimeField rev = solver.solve_adjoint_reversed(g);
  const SpaceTimeField fwd = solver.solve_adjoint(g);
  CHECK(rev.reversed);
  CHECK_FALSE(fwd.reversed);
  for (int n = 0; n < grid.levels(); ++n) {
    CHECK((rev.at_physical(n) - fwd.at_physical(n)).norm() == 0.0);
  }
  // Zero terminal state.
  CHECK(fwd.at_physical(grid.steps()).cwiseAbs().maxCoeff() == 0.0);
  const SpaceTimeField twice = reverse_time(reverse_time(fwd));
  CHECK((twice.levels.front() - fwd.levels.front()).norm() == 0.0);
}

TEST_CASE("mismatched coefficient is rejected") {
  const SpatialMesh mesh = build_mesh(1, 8);
  CHECK_THROWS_AS(TfdeSolver(mesh, TemporalGrid(1.0, 4, 0.5), DiffusionTensor::identity(),
                             CoefficientField(Vector::Ones(5), 0.0, 2.0)),
                  std::invalid_argument);
}
