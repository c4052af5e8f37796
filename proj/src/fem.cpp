#include "tfde/fem.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace tfde {

DiffusionTensor::DiffusionTensor(Function a, double lambda0) : a_(std::move(a)), lambda0_(lambda0) {
  if (!(lambda0 > 0.0)) throw std::invalid_argument("ellipticity constant must be positive");
}

DiffusionTensor DiffusionTensor::identity() {
  return DiffusionTensor([](const Point&) { return Eigen::Matrix2d::Identity().eval(); }, 1.0);
}

bool DiffusionTensor::check_at(std::span<const Point> points, int dimension) const {
  for (const Point& p : points) {
    const Eigen::Matrix2d a = a_(p);
    if (dimension == 1) {
      if (a(0, 0) < lambda0_) return false;
      continue;
    }
    if (std::abs(a(0, 1) - a(1, 0)) > 1e-14 * (1.0 + a.norm())) return false;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(a, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < lambda0_) return false;
  }
  return true;
}

CoefficientField::CoefficientField(Vector values, double q_min, double q_max)
    : values_(std::move(values)), q_min_(q_min), q_max_(q_max) {
  if (q_min < 0.0) throw std::invalid_argument("q_min must be nonnegative");
  if (q_min > q_max) throw std::invalid_argument("q_min must not exceed q_max");
}

bool CoefficientField::admissible(double slack) const {
  for (Eigen::Index i = 0; i < values_.size(); ++i) {
    if (!(values_[i] >= q_min_ - slack && values_[i] <= q_max_ + slack)) return false;
  }
  return true;
}

void CoefficientField::project() { values_ = values_.cwiseMax(q_min_).cwiseMin(q_max_); }

Vector interpolate(const SpatialMesh& mesh, const std::function<double(const Point&)>& f) {
  Vector out(static_cast<Eigen::Index>(mesh.num_nodes()));
  for (std::size_t i = 0; i < mesh.num_nodes(); ++i) out[static_cast<Eigen::Index>(i)] = f(mesh.node(i));
  return out;
}

SparseMatrix FemOperators::mass_matrix() const {
  SparseMatrix m(mass.size(), mass.size());
  m.setIdentity();
  m = m * mass.asDiagonal();
  return m;
}

SparseMatrix FemOperators::reaction_matrix() const {
  SparseMatrix m(reaction.size(), reaction.size());
  m.setIdentity();
  m = m * reaction.asDiagonal();
  return m;
}

SparseMatrix assemble_stiffness(const SpatialMesh& mesh, const DiffusionTensor& tensor) {
  const auto n = static_cast<Eigen::Index>(mesh.num_nodes());
  const double h = mesh.spacing();
  const double g = 0.5 / std::sqrt(3.0);  // Gauss offset from the element midpoint, in units of h
  std::vector<Eigen::Triplet<double>> triplets;

  if (mesh.dimension() == 1) {
    triplets.reserve(mesh.num_elements() * 4);
    for (const auto& el : mesh.elements()) {
      const double x0 = mesh.node(el[0])[0];
      double a = 0.0;
      for (double s : {0.5 - g, 0.5 + g}) a += 0.5 * tensor({x0 + s * h, 0.0})(0, 0);
      const double k = a / h;
      triplets.emplace_back(el[0], el[0], k);
      triplets.emplace_back(el[1], el[1], k);
      triplets.emplace_back(el[0], el[1], -k);
      triplets.emplace_back(el[1], el[0], -k);
    }
  } else {
    triplets.reserve(mesh.num_elements() * 16);
    // Reference square [0,1]^2, corners (0,0),(1,0),(1,1),(0,1).
    static constexpr double cx[4] = {0.0, 1.0, 1.0, 0.0};
    static constexpr double cy[4] = {0.0, 0.0, 1.0, 1.0};
    for (const auto& el : mesh.elements()) {
      const Point& o = mesh.node(el[0]);
      Eigen::Matrix4d local = Eigen::Matrix4d::Zero();
      for (double sx : {0.5 - g, 0.5 + g}) {
        for (double sy : {0.5 - g, 0.5 + g}) {
          const Eigen::Matrix2d a = tensor({o[0] + sx * h, o[1] + sy * h});
          Eigen::Matrix<double, 2, 4> grad;
          for (int c = 0; c < 4; ++c) {
            const double fx = cx[c] > 0.5 ? sx : 1.0 - sx;
            const double fy = cy[c] > 0.5 ? sy : 1.0 - sy;
            const double dx = cx[c] > 0.5 ? 1.0 : -1.0;
            const double dy = cy[c] > 0.5 ? 1.0 : -1.0;
            grad(0, c) = dx * fy / h;
            grad(1, c) = fx * dy / h;
          }
          local += 0.25 * h * h * grad.transpose() * a * grad;
        }
      }
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) triplets.emplace_back(el[r], el[c], local(r, c));
      }
    }
  }
  SparseMatrix k(n, n);
  k.setFromTriplets(triplets.begin(), triplets.end());
  return k;
}

FemOperators assemble_fem(const SpatialMesh& mesh, const DiffusionTensor& tensor,
                          const CoefficientField& q) {
  if (q.size() != static_cast<Eigen::Index>(mesh.num_nodes())) {
    throw std::invalid_argument("coefficient field does not match the mesh");
  }
  FemOperators ops;
  ops.mass = Eigen::Map<const Vector>(mesh.nodal_weights().data(),
                                      static_cast<Eigen::Index>(mesh.num_nodes()));
  ops.stiffness = assemble_stiffness(mesh, tensor);
  ops.reaction = ops.mass.cwiseProduct(q.values());
  return ops;
}

double lr_norm_pow(const SpatialMesh& mesh, const Vector& f, double r) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    acc += mesh.nodal_weight(static_cast<std::size_t>(i)) * std::pow(std::abs(f[i]), r);
  }
  return acc;
}

double l2_inner(const SpatialMesh& mesh, const Vector& f, const Vector& g) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    acc += mesh.nodal_weight(static_cast<std::size_t>(i)) * f[i] * g[i];
  }
  return acc;
}

double l2_norm(const SpatialMesh& mesh, const Vector& f) { return std::sqrt(l2_inner(mesh, f, f)); }

}  // namespace tfde
