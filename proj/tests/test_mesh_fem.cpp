#include <cmath>

#include "doctest.h"
#include "tfde/fem.hpp"

using namespace tfde;

TEST_CASE("1D mesh") {
  const SpatialMesh m = build_mesh(1, 300);
  CHECK(m.num_nodes() == 301);
  CHECK(m.num_elements() == 300);
  REQUIRE(m.boundary_nodes().size() == 2);
  CHECK(m.labels(0) == SegmentSet(SegmentSet::kLambda0));
  CHECK(m.labels(300) == SegmentSet(SegmentSet::kLambda1));
  double sum = 0.0;
  for (double w : m.nodal_weights()) sum += w;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(m.boundary_weight(300, SegmentSet(SegmentSet::kLambda1)) == 1.0);
  CHECK(m.boundary_weight(0, SegmentSet(SegmentSet::kLambda1)) == 0.0);
}

TEST_CASE("2D mesh") {
  const SpatialMesh m = build_mesh(2, 50);
  CHECK(m.num_nodes() == 2601);
  CHECK(m.num_elements() == 2500);
  CHECK(m.boundary_nodes().size() == 200);
  CHECK(m.interior_nodes().size() == 2401);
  const SegmentSet bottom(SegmentSet::kLambda1), right(SegmentSet::kLambda2);
  CHECK(m.labels(m.grid_index(50, 0)) == (bottom | right));
  CHECK(m.segment_nodes(bottom).size() == 51);
  double len = 0.0;
  for (int n : m.segment_nodes(bottom)) len += m.boundary_weight(n, bottom);
  CHECK(len == doctest::Approx(1.0).epsilon(1e-14));
  double all = 0.0;
  for (int n : m.boundary_nodes()) all += m.boundary_weight(n, SegmentSet::all(2));
  CHECK(all == doctest::Approx(4.0).epsilon(1e-14));
  CHECK_THROWS_AS(build_mesh(3, 10), std::invalid_argument);
  CHECK_THROWS_AS(build_mesh(1, 1), std::invalid_argument);
}

TEST_CASE("segment selectors") {
  CHECK(SegmentSet::parse("L1+L2", 2) == SegmentSet(SegmentSet::kLambda1 | SegmentSet::kLambda2));
  CHECK(SegmentSet::parse("all", 1) == SegmentSet::all(1));
  CHECK(SegmentSet::parse("l0,L1", 1) == SegmentSet::all(1));
  CHECK_THROWS(SegmentSet::parse("L3", 1));
  CHECK_THROWS(SegmentSet::parse("bogus", 2));
  CHECK(SegmentSet::parse(SegmentSet::all(2).to_string(), 2) == SegmentSet::all(2));
}

TEST_CASE("FEM operators") {
  for (int dim : {1, 2}) {
    const SpatialMesh m = build_mesh(dim, dim == 1 ? 40 : 12);
    const auto nn = static_cast<Eigen::Index>(m.num_nodes());
    const FemOperators ops = assemble_fem(m, DiffusionTensor::identity(), CoefficientField(Vector::Ones(nn), 0.0, 2.0));
    CHECK(ops.mass.sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK((ops.reaction - ops.mass).cwiseAbs().maxCoeff() == 0.0);
    const Vector rows = ops.stiffness * Vector::Ones(nn);
    CHECK(rows.cwiseAbs().maxCoeff() < 1e-12);
    const SparseMatrix k = ops.stiffness;
    CHECK(SparseMatrix(k - SparseMatrix(k.transpose())).norm() < 1e-12);
    // Energy of u = x: integral of |grad u|^2 = 1.
    const Vector x = interpolate(m, [](const Point& p) { return p[0]; });
    CHECK(x.dot(k * x) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("norms and coefficient fields") {
  const SpatialMesh m = build_mesh(1, 10);
  const Vector two = Vector::Constant(11, 2.0);
  CHECK(lr_norm_pow(m, two, 2.0) == doctest::Approx(4.0));
  CHECK(l2_norm(m, two) == doctest::Approx(2.0));
  CHECK(l2_inner(m, two, Vector::Ones(11)) == doctest::Approx(2.0));
  CHECK_THROWS_AS(CoefficientField(two, 1.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(CoefficientField(two, -1.0, 0.5), std::invalid_argument);
  CoefficientField q(Vector::LinSpaced(11, -1.0, 3.0), 0.0, 2.0);
  CHECK_FALSE(q.admissible());
  q.project();
  CHECK(q.admissible());
  CHECK(q[0] == 0.0);
  CHECK(q[10] == 2.0);
}

TEST_CASE("diffusion tensor ellipticity") {
  const SpatialMesh m = build_mesh(2, 4);
  CHECK(DiffusionTensor::identity().check_at(m.nodes(), 2));
  const DiffusionTensor bad([](const Point&) { return Eigen::Matrix2d::Identity() * 0.1; }, 0.5);
  CHECK_FALSE(bad.check_at(m.nodes(), 2));
  CHECK_THROWS_AS(DiffusionTensor([](const Point&) { return Eigen::Matrix2d::Identity(); }, 0.0),
                  std::invalid_argument);
}
