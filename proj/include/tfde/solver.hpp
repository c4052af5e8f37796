#pragma once

#include <Eigen/SparseCholesky>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "tfde/caputo.hpp"
#include "tfde/fem.hpp"
#include "tfde/mesh.hpp"

namespace tfde {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FieldKind { kDirect, kSensitivity, kSecondOrderSensitivity, kAdjoint };

/// Nodal solution u^0..u^{steps} on the mesh.
///
/// When `reversed` is set, stored index k holds physical level steps - k
/// (time T - t_k); this is how the adjoint problem is marched.
struct SpaceTimeField {
  FieldKind kind = FieldKind::kDirect;
  bool reversed = false;
  std::vector<Vector> levels;

  int steps() const { return static_cast<int>(levels.size()) - 1; }
  /// Value at a physical time level regardless of storage order.
  const Vector& at_physical(int level) const {
    return reversed ? levels[levels.size() - 1 - static_cast<std::size_t>(level)]
                    : levels[static_cast<std::size_t>(level)];
  }
};

/// Returns the same field with the storage order flipped.
SpaceTimeField reverse_time(const SpaceTimeField& field);

/// Boundary values per time level: row = level, column = slot in
/// SpatialMesh::boundary_nodes().
using BoundaryHistory = Eigen::MatrixXd;

/// Writes the FEM load vector (already multiplied by the mass matrix) of a
/// time level into `out`, which arrives zero-filled.
using LoadFunction = std::function<void(int level, Vector& out)>;

/// Implicit L1 time stepping for
///   D^a u - div(A grad u) + q u = f,  u = g on the boundary, u(0) = 0.
///
/// Each level solves (lead*M + K + R) u^n = M f^n + lead*M*history + lift,
/// with the interior block factored once at construction. Immutable after
/// construction and safe for concurrent const use.
class TfdeSolver {
 public:
  /// Throws std::invalid_argument on a dimension mismatch and SolverError if
  /// the interior system cannot be factored.
  TfdeSolver(const SpatialMesh& mesh, const TemporalGrid& grid, const DiffusionTensor& tensor,
             const CoefficientField& q);

  const SpatialMesh& mesh() const { return *mesh_; }
  const TemporalGrid& grid() const { return grid_; }
  const CaputoWeights& weights() const { return weights_; }
  const FemOperators& operators() const { return ops_; }
  const CoefficientField& coefficient() const { return q_; }

  /// Marches levels 1..steps forward. `dirichlet` is either empty
  /// (homogeneous) or levels x boundary-node values. If `flux` is non-null it
  /// receives the variational boundary flux (see boundary_residual).
  SpaceTimeField solve(const LoadFunction& load, const BoundaryHistory& dirichlet, FieldKind kind,
                       BoundaryHistory* flux = nullptr) const;

  /// Source phi(x) v(t) with v sampled at every level.
  SpaceTimeField solve_direct(const Vector& phi, std::span<const double> v,
                              BoundaryHistory* flux = nullptr) const;

  /// Linearized state for a coefficient perturbation dq: source -dq * u.
  SpaceTimeField solve_sensitivity(const SpaceTimeField& state, const Vector& dq,
                                   BoundaryHistory* flux = nullptr) const;

  /// Second-order state: source -dq2 * sens1 - dq1 * sens2, where sens1 and
  /// sens2 are the sensitivities in directions dq1 and dq2.
  SpaceTimeField solve_second_order(const SpaceTimeField& sens1, const Vector& dq1,
                                    const SpaceTimeField& sens2, const Vector& dq2,
                                    BoundaryHistory* flux = nullptr) const;

  /// Adjoint problem with zero source, zero terminal state and Dirichlet data
  /// given in physical time (levels x boundary nodes). The time-reversed
  /// problem is marched forward with the same L1 scheme; the result is
  /// returned in reversed storage order (see SpaceTimeField::reversed).
  SpaceTimeField solve_adjoint_reversed(const BoundaryHistory& dirichlet) const;

  /// solve_adjoint_reversed followed by reverse_time.
  SpaceTimeField solve_adjoint(const BoundaryHistory& dirichlet) const;

  /// Variational boundary flux of a forward-stored field: the residual of the
  /// discrete equation on boundary rows,
  ///   rho^n = lead*M(u^n - history) + K u^n + R u^n - load^n,
  /// which equals the outward conormal flux integrated against the nodal hat
  /// function (point flux in 1D). Row 0 is zero.
  BoundaryHistory boundary_residual(const SpaceTimeField& field, const LoadFunction& load) const;

 private:
  // Steps s = 1..steps from a zero state. Dirichlet row for step s is s, or
  // grid.steps() + 1 - s when `reverse_data` is set.
  std::vector<Vector> march(int steps, const LoadFunction& load, const BoundaryHistory& dirichlet,
                            bool reverse_data, BoundaryHistory* flux) const;

  const SpatialMesh* mesh_;
  TemporalGrid grid_;
  CaputoWeights weights_;
  FemOperators ops_;
  CoefficientField q_;
  Vector diag_;                   // lead*M + R on every node
  SparseMatrix full_;             // lead*M + K + R
  SparseMatrix interior_block_;   // rows/cols interior
  SparseMatrix coupling_block_;   // rows interior, cols boundary
  std::vector<int> interior_index_;  // node -> interior slot or -1
  std::shared_ptr<Eigen::SimplicialLLT<SparseMatrix>> factor_;
};

/// One-sided second-order finite-difference conormal flux (outward) at the
/// nodes of `segments` for every level. Columns follow
/// mesh.segment_nodes(segments). Throws std::invalid_argument if the
/// segment set is empty or the field is an adjoint field.
Eigen::MatrixXd boundary_flux(const SpaceTimeField& field, const SpatialMesh& mesh,
                              const DiffusionTensor& tensor, SegmentSet segments);

}  // namespace tfde
