#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <functional>

#include "tfde/mesh.hpp"

namespace tfde {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Symmetric diffusion coefficient A(x) with ellipticity constant lambda0.
/// In 1D only entry (0,0) is used.
class DiffusionTensor {
 public:
  using Function = std::function<Eigen::Matrix2d(const Point&)>;

  /// Throws std::invalid_argument if lambda0 <= 0.
  DiffusionTensor(Function a, double lambda0);

  static DiffusionTensor identity();

  Eigen::Matrix2d operator()(const Point& x) const { return a_(x); }
  double ellipticity() const { return lambda0_; }

  /// True when A(x) is symmetric and xi^T A xi >= lambda0 |xi|^2 at every
  /// given point (checked through the smallest eigenvalue).
  bool check_at(std::span<const Point> points, int dimension) const;

 private:
  Function a_;
  double lambda0_;
};

/// Nodal values of the degradation coefficient with admissible box [q_min, q_max].
class CoefficientField {
 public:
  CoefficientField() = default;
  /// Throws std::invalid_argument if q_min < 0 or q_min > q_max.
  CoefficientField(Vector values, double q_min, double q_max);

  const Vector& values() const { return values_; }
  Vector& values() { return values_; }
  double operator[](Eigen::Index i) const { return values_[i]; }
  Eigen::Index size() const { return values_.size(); }
  double q_min() const { return q_min_; }
  double q_max() const { return q_max_; }

  bool admissible(double slack = 0.0) const;
  /// Clips every value into [q_min, q_max].
  void project();

 private:
  Vector values_;
  double q_min_ = 0.0;
  double q_max_ = 0.0;
};

/// Interpolates a function at the mesh nodes.
Vector interpolate(const SpatialMesh& mesh, const std::function<double(const Point&)>& f);

/// FEM operators for  D^a u - div(A grad u) + q u.
/// Mass and reaction use nodal quadrature (lumping), so both are diagonal and
/// the reaction matrix with q = 1 equals the mass matrix.
struct FemOperators {
  Vector mass;            // diagonal of M
  SparseMatrix stiffness;  // K, tensor part
  Vector reaction;        // diagonal of R(q) = diag(mass .* q)

  SparseMatrix mass_matrix() const;
  SparseMatrix reaction_matrix() const;
};

/// Throws std::invalid_argument if q.size() != mesh.num_nodes().
FemOperators assemble_fem(const SpatialMesh& mesh, const DiffusionTensor& tensor,
                          const CoefficientField& q);

/// Stiffness matrix alone (2x2 Gauss quadrature per quadrilateral, 2-point
/// Gauss per segment).
SparseMatrix assemble_stiffness(const SpatialMesh& mesh, const DiffusionTensor& tensor);

/// Discrete L^r norm to the power r, sum_m w_m |f_m|^r, with nodal weights.
double lr_norm_pow(const SpatialMesh& mesh, const Vector& f, double r);
/// Discrete L^2 inner product with nodal weights.
double l2_inner(const SpatialMesh& mesh, const Vector& f, const Vector& g);
double l2_norm(const SpatialMesh& mesh, const Vector& f);

}  // namespace tfde
