#include "tfde/solver.hpp"

#include <cmath>
#include <string>

namespace tfde {

SpaceTimeField reverse_time(const SpaceTimeField& field) {
  SpaceTimeField out;
  out.kind = field.kind;
  out.reversed = !field.reversed;
  out.levels.assign(field.levels.rbegin(), field.levels.rend());
  return out;
}

TfdeSolver::TfdeSolver(const SpatialMesh& mesh, const TemporalGrid& grid,
                       const DiffusionTensor& tensor, const CoefficientField& q)
    : mesh_(&mesh), grid_(grid), weights_(caputo_weights(grid)), ops_(assemble_fem(mesh, tensor, q)),
      q_(q) {
  const auto n = static_cast<Eigen::Index>(mesh.num_nodes());
  diag_ = weights_.lead() * ops_.mass + ops_.reaction;
  full_ = ops_.stiffness;
  for (Eigen::Index i = 0; i < n; ++i) full_.coeffRef(i, i) += diag_[i];
  full_.makeCompressed();

  interior_index_.assign(mesh.num_nodes(), -1);
  const auto interior = mesh.interior_nodes();
  for (std::size_t k = 0; k < interior.size(); ++k) interior_index_[interior[k]] = static_cast<int>(k);

  std::vector<Eigen::Triplet<double>> ii, ib;
  for (Eigen::Index col = 0; col < full_.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(full_, col); it; ++it) {
      const int r = interior_index_[it.row()];
      if (r < 0) continue;
      const int c = interior_index_[it.col()];
      if (c >= 0) {
        ii.emplace_back(r, c, it.value());
      } else {
        ib.emplace_back(r, mesh.boundary_slot(it.col()), it.value());
      }
    }
  }
  const auto ni = static_cast<Eigen::Index>(interior.size());
  const auto nb = static_cast<Eigen::Index>(mesh.boundary_nodes().size());
  interior_block_.resize(ni, ni);
  interior_block_.setFromTriplets(ii.begin(), ii.end());
  coupling_block_.resize(ni, nb);
  coupling_block_.setFromTriplets(ib.begin(), ib.end());

  factor_ = std::make_shared<Eigen::SimplicialLLT<SparseMatrix>>(interior_block_);
  if (factor_->info() != Eigen::Success) {
    throw SolverError("interior system matrix is not positive definite");
  }
}

std::vector<Vector> TfdeSolver::march(int steps, const LoadFunction& load,
                                      const BoundaryHistory& dirichlet, bool reverse_data,
                                      BoundaryHistory* flux) const {
  const SpatialMesh& mesh = *mesh_;
  const auto n = static_cast<Eigen::Index>(mesh.num_nodes());
  const auto interior = mesh.interior_nodes();
  const auto boundary = mesh.boundary_nodes();
  const auto ni = static_cast<Eigen::Index>(interior.size());
  const auto nb = static_cast<Eigen::Index>(boundary.size());
  const bool lifted = dirichlet.size() != 0;
  if (lifted && (dirichlet.rows() != grid_.levels() || dirichlet.cols() != nb)) {
    throw std::invalid_argument("Dirichlet data must be levels x boundary nodes");
  }
  if (flux != nullptr) flux->setZero(steps + 1, nb);

  std::vector<Vector> x(static_cast<std::size_t>(steps) + 1, Vector::Zero(n));
  Vector load_vec(n), history(n), rhs(ni), boundary_values(nb);
  const double lead = weights_.lead();

  for (int s = 1; s <= steps; ++s) {
    load_vec.setZero();
    if (load) load(s, load_vec);

    history.setZero();
    for (int k = 1; k < s; ++k) history.noalias() += weights_.history(k) * x[s - k];

    boundary_values.setZero();
    if (lifted) {
      const int row = reverse_data ? grid_.steps() + 1 - s : s;
      if (row >= 0 && row < dirichlet.rows()) boundary_values = dirichlet.row(row).transpose();
    }

    for (Eigen::Index k = 0; k < ni; ++k) {
      const int node = interior[k];
      rhs[k] = load_vec[node] + lead * ops_.mass[node] * history[node];
    }
    if (lifted) rhs.noalias() -= coupling_block_ * boundary_values;

    const Vector sol = factor_->solve(rhs);
    if (!sol.allFinite()) {
      throw SolverError("non-finite solution at time step " + std::to_string(s));
    }
    Vector& xs = x[s];
    for (Eigen::Index k = 0; k < ni; ++k) xs[interior[k]] = sol[k];
    for (Eigen::Index k = 0; k < nb; ++k) xs[boundary[k]] = boundary_values[k];

    if (flux != nullptr) {
      for (Eigen::Index k = 0; k < nb; ++k) {
        const int node = boundary[k];
        double row = full_.col(node).dot(xs);  // full_ is symmetric
        row -= lead * ops_.mass[node] * history[node] + load_vec[node];
        (*flux)(s, k) = row;
      }
    }
  }
  return x;
}

SpaceTimeField TfdeSolver::solve(const LoadFunction& load, const BoundaryHistory& dirichlet,
                                 FieldKind kind, BoundaryHistory* flux) const {
  SpaceTimeField out;
  out.kind = kind;
  out.levels = march(grid_.steps(), load, dirichlet, false, flux);
  return out;
}

SpaceTimeField TfdeSolver::solve_direct(const Vector& phi, std::span<const double> v,
                                        BoundaryHistory* flux) const {
  if (phi.size() != static_cast<Eigen::Index>(mesh_->num_nodes())) {
    throw std::invalid_argument("source profile does not match the mesh");
  }
  if (v.size() != static_cast<std::size_t>(grid_.levels())) {
    throw std::invalid_argument("temporal profile must be sampled at every level");
  }
  const Vector weighted = ops_.mass.cwiseProduct(phi);
  return solve([&](int level, Vector& out) { out = weighted * v[level]; }, BoundaryHistory(),
               FieldKind::kDirect, flux);
}

SpaceTimeField TfdeSolver::solve_sensitivity(const SpaceTimeField& state, const Vector& dq,
                                             BoundaryHistory* flux) const {
  const Vector weighted = -ops_.mass.cwiseProduct(dq);
  return solve([&](int level, Vector& out) { out = weighted.cwiseProduct(state.at_physical(level)); },
               BoundaryHistory(), FieldKind::kSensitivity, flux);
}

SpaceTimeField TfdeSolver::solve_second_order(const SpaceTimeField& sens1, const Vector& dq1,
                                              const SpaceTimeField& sens2, const Vector& dq2,
                                              BoundaryHistory* flux) const {
  const Vector w1 = -ops_.mass.cwiseProduct(dq1);
  const Vector w2 = -ops_.mass.cwiseProduct(dq2);
  return solve(
      [&](int level, Vector& out) {
        out = w2.cwiseProduct(sens1.at_physical(level)) + w1.cwiseProduct(sens2.at_physical(level));
      },
      BoundaryHistory(), FieldKind::kSecondOrderSensitivity, flux);
}

SpaceTimeField TfdeSolver::solve_adjoint_reversed(const BoundaryHistory& dirichlet) const {
  // Reversed step s corresponds to physical level steps + 1 - s. Step 1 sees
  // the implicit zero state beyond T; the stored field drops that state.
  std::vector<Vector> x = march(grid_.steps() + 1, LoadFunction(), dirichlet, true, nullptr);
  SpaceTimeField out;
  out.kind = FieldKind::kAdjoint;
  out.reversed = true;
  out.levels.assign(std::make_move_iterator(x.begin() + 1), std::make_move_iterator(x.end()));
  return out;
}

SpaceTimeField TfdeSolver::solve_adjoint(const BoundaryHistory& dirichlet) const {
  return reverse_time(solve_adjoint_reversed(dirichlet));
}

BoundaryHistory TfdeSolver::boundary_residual(const SpaceTimeField& field,
                                              const LoadFunction& load) const {
  const auto boundary = mesh_->boundary_nodes();
  const auto n = static_cast<Eigen::Index>(mesh_->num_nodes());
  const int steps = field.steps();
  BoundaryHistory rho = BoundaryHistory::Zero(steps + 1, static_cast<Eigen::Index>(boundary.size()));
  Vector load_vec(n), history(n);
  for (int s = 1; s <= steps; ++s) {
    load_vec.setZero();
    if (load) load(s, load_vec);
    history.setZero();
    for (int k = 1; k < s; ++k) history.noalias() += weights_.history(k) * field.at_physical(s - k);
    const Vector& xs = field.at_physical(s);
    for (std::size_t k = 0; k < boundary.size(); ++k) {
      const int node = boundary[k];
      rho(s, static_cast<Eigen::Index>(k)) = full_.col(node).dot(xs) -
                                             weights_.lead() * ops_.mass[node] * history[node] -
                                             load_vec[node];
    }
  }
  return rho;
}

namespace {

// Second-order derivative of nodal data along one grid axis at position i of
// a line with n+1 points (central inside, one-sided at the ends).
double axis_derivative(const std::function<double(int)>& value, int i, int n, double h) {
  if (i == 0) return (-3.0 * value(0) + 4.0 * value(1) - value(2)) / (2.0 * h);
  if (i == n) return (3.0 * value(n) - 4.0 * value(n - 1) + value(n - 2)) / (2.0 * h);
  return (value(i + 1) - value(i - 1)) / (2.0 * h);
}

}  // namespace

Eigen::MatrixXd boundary_flux(const SpaceTimeField& field, const SpatialMesh& mesh,
                              const DiffusionTensor& tensor, SegmentSet segments) {
  if (segments.empty()) throw std::invalid_argument("empty boundary segment");
  if (field.kind == FieldKind::kAdjoint) {
    throw std::invalid_argument("boundary flux is defined for direct and sensitivity fields");
  }
  const std::vector<int> nodes = mesh.segment_nodes(segments);
  if (nodes.empty()) throw std::invalid_argument("segment is not on the boundary of this mesh");
  const int n = mesh.elements_per_side();
  const double h = mesh.spacing();
  const int levels = static_cast<int>(field.levels.size());
  Eigen::MatrixXd out(levels, static_cast<Eigen::Index>(nodes.size()));

  for (std::size_t c = 0; c < nodes.size(); ++c) {
    const int node = nodes[c];
    const Point& p = mesh.node(node);
    const Eigen::Matrix2d a = tensor(p);
    // Outward normals of the labelled pieces through this node.
    std::vector<Eigen::Vector2d> normals;
    const std::uint8_t bits = mesh.labels(node).bits() & segments.bits();
    if (mesh.dimension() == 1) {
      normals.emplace_back((bits & SegmentSet::kLambda0) ? -1.0 : 1.0, 0.0);
    } else {
      if (bits & SegmentSet::kLambda1) normals.emplace_back(0.0, -1.0);
      if (bits & SegmentSet::kLambda2) normals.emplace_back(1.0, 0.0);
      if (bits & SegmentSet::kLambda3) normals.emplace_back(0.0, 1.0);
      if (bits & SegmentSet::kLambda4) normals.emplace_back(-1.0, 0.0);
    }
    const int ix = mesh.dimension() == 1 ? node : node % (n + 1);
    const int iy = mesh.dimension() == 1 ? 0 : node / (n + 1);
    for (int lvl = 0; lvl < levels; ++lvl) {
      const Vector& u = field.levels[static_cast<std::size_t>(lvl)];
      Eigen::Vector2d grad = Eigen::Vector2d::Zero();
      grad[0] = axis_derivative([&](int i) { return u[mesh.grid_index(i, iy)]; }, ix, n, h);
      if (mesh.dimension() == 2) {
        grad[1] = axis_derivative([&](int j) { return u[mesh.grid_index(ix, j)]; }, iy, n, h);
      }
      const Eigen::Vector2d conormal_vec = a * grad;
      double acc = 0.0;
      for (const auto& nu : normals) acc += conormal_vec.dot(nu);
      out(lvl, static_cast<Eigen::Index>(c)) = acc / static_cast<double>(normals.size());
    }
  }
  return out;
}

}  // namespace tfde
