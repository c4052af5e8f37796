#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "tfde/solver.hpp"

namespace tfde {

enum class BasisKind { kTrigonometric, kPolynomial };

/// Serial runs every per-measurement solve in order; Parallel distributes
/// them over OpenMP threads. Both produce identical results.
enum class Execution { kSerial, kParallel };

/// Spatial source profiles phi_j and temporal profiles v_1 = v, v_2 = D^a v.
struct SourceSystem {
  BasisKind kind = BasisKind::kTrigonometric;
  std::vector<Vector> spatial;                  // phi_j at the nodes
  std::array<std::vector<double>, 2> temporal;  // v_1, v_2 at every level

  int size() const { return static_cast<int>(spatial.size()); }  // N
  int measurement_count() const { return 2 * size(); }           // 2N
};

/// 1D basis function number `index` (0-based):
/// trigonometric 1, cos 2pi x, sin 2pi x, cos 4pi x, sin 4pi x, ...;
/// polynomial 1, x, x^2, ...
double basis_function(BasisKind kind, int index, double x);

/// 2D tensor-product ordering by total frequency (degree for polynomials),
/// ties broken by the y index then the x index. Returns (x index, y index).
std::vector<std::array<int, 2>> tensor_basis_order(BasisKind kind, int count);

/// Sources with v(t) = t, so v_2 = t^{1-a} / Gamma(2-a) exactly.
/// Throws std::invalid_argument if count < 1.
SourceSystem make_sources(const SpatialMesh& mesh, const TemporalGrid& grid, BasisKind kind,
                          int count);

/// Sources with a sampled v (v[0] must be 0); v_2 is the discrete L1
/// derivative of the samples.
SourceSystem make_sources(const SpatialMesh& mesh, const TemporalGrid& grid, BasisKind kind,
                          int count, std::vector<double> v_samples);

/// Weight h(x, t) of the averaged flux functional.
using WeightFunction = std::function<double(const Point&, double)>;

/// h(x, t) = 1 - t.
WeightFunction default_weight();

/// 2 x N matrix of averaged fluxes with noise bookkeeping.
///
/// The stretched vector is (phi_11..phi_1N, phi_21..phi_2N); measurement
/// index k = (i-1) N + (j-1).
struct MeasurementMatrix {
  Eigen::MatrixXd values;  // 2 x N
  double epsilon = 0.0;    // relative noise level used to create it
  double delta = 0.0;      // ||noisy - clean||_2 when known
  std::uint64_t seed = 0;

  Vector stretched() const;
  static MeasurementMatrix from_stretched(const Vector& v, int n);
  int size() const { return static_cast<int>(values.cols()); }
};

/// Pointwise conormal flux traces on the measured nodes for every
/// measurement: traces[k] is levels x nodes.
struct FluxTraces {
  std::vector<int> nodes;
  std::vector<Eigen::MatrixXd> traces;
  double epsilon = 0.0;
  double delta = 0.0;
  std::uint64_t seed = 0;

  Vector stacked() const;
  static FluxTraces from_stacked(const Vector& v, std::vector<int> nodes, int count, int levels);
};

enum class DataKind { kAverageFlux, kDirectFlux };

/// Data in stacked form plus the inner-product weights of the misfit.
struct Observations {
  DataKind kind = DataKind::kAverageFlux;
  Vector values;
  Vector weights;
};

/// Direct solves for every source pair at one coefficient.
struct Evaluation {
  std::shared_ptr<const TfdeSolver> solver;
  std::vector<SpaceTimeField> states;   // u_j^i, measurement order
  std::vector<BoundaryHistory> flux;    // variational flux per state
};

/// The measurement map q -> data for a fixed mesh, grid, tensor, sources,
/// weight and measured boundary part.
///
/// Averaged data: phi_k = sum_n tau_n sum_{c in Lambda} h(x_c, t_n) kappa_c rho_c^n
/// with trapezoid weights tau_n, the variational flux rho and kappa_c the share
/// of the node's boundary measure lying on Lambda (1 except at corners
/// bordering an unmeasured edge).
class ForwardOperator {
 public:
  /// Throws std::invalid_argument if `segments` selects no boundary node.
  ForwardOperator(const SpatialMesh& mesh, TemporalGrid grid, DiffusionTensor tensor,
                  SourceSystem sources, WeightFunction weight, SegmentSet segments,
                  Execution execution = Execution::kParallel);

  const SpatialMesh& mesh() const { return *mesh_; }
  const TemporalGrid& grid() const { return grid_; }
  const DiffusionTensor& tensor() const { return tensor_; }
  const SourceSystem& sources() const { return sources_; }
  SegmentSet segments() const { return segments_; }
  Execution execution() const { return execution_; }
  void set_execution(Execution e) { execution_ = e; }
  std::span<const int> measured_nodes() const { return measured_nodes_; }
  int measurement_count() const { return sources_.measurement_count(); }

  /// 2N direct solves.
  Evaluation evaluate(const CoefficientField& q) const;

  MeasurementMatrix forward_map(const CoefficientField& q) const;
  FluxTraces direct_flux_data(const CoefficientField& q) const;

  /// Predicted data of an evaluation in stacked form.
  Vector observe(const std::vector<BoundaryHistory>& flux, DataKind kind) const;
  /// Misfit weights: ones for averaged data, tau_n * boundary measure for traces.
  Vector observation_weights(DataKind kind) const;
  Observations observations(const MeasurementMatrix& data) const;
  Observations observations(const FluxTraces& data) const;
  int observation_size(DataKind kind) const;

  /// Dirichlet data (levels x boundary nodes) of the adjoint problem whose
  /// solution w satisfies, for any sensitivity with load -M dq u,
  ///   sum_p dJ/dpred_p * dpred_p = dt * sum_n sum_m w_m^n M_mm dq_m u_m^n,
  /// where dJ/dpred = weights .* residual restricted to measurement k.
  BoundaryHistory adjoint_dirichlet(DataKind kind, int k, const Vector& residual) const;

  /// Derivative of every prediction along dq (2N sensitivity solves).
  Vector sensitivity(const Evaluation& eval, const Vector& dq, DataKind kind) const;

  /// Per-node products dt * sum_n w^n u^n for each adjoint/state pair.
  Vector adjoint_contraction(const SpaceTimeField& adjoint, const SpaceTimeField& state) const;

  /// Runs f(k) for k in [0, count) honouring the execution policy; the first
  /// exception thrown by any job is rethrown.
  void for_each_measurement(int count, const std::function<void(int)>& f) const;

 private:
  const SpatialMesh* mesh_;
  TemporalGrid grid_;
  DiffusionTensor tensor_;
  SourceSystem sources_;
  SegmentSet segments_;
  Execution execution_;
  std::vector<int> measured_nodes_;
  Eigen::MatrixXd h_;            // levels x measured nodes: h(x_c, t_n)
  std::vector<int> slots_;       // boundary slot of each measured node
  Vector share_;                 // kappa_c
  Vector length_;                // boundary measure of each measured node on Lambda
  Vector full_length_;           // total boundary measure of each measured node
};

/// phi^delta = phi + max|phi| * epsilon * zeta, zeta i.i.d. standard normal
/// drawn in stretched order from a seeded mt19937_64. Records delta.
MeasurementMatrix add_noise(const MeasurementMatrix& clean, double epsilon, std::uint64_t seed);
FluxTraces add_noise(const FluxTraces& clean, double epsilon, std::uint64_t seed);

/// delta used by the regularization rules: ||noisy - clean||_2 when the clean
/// data are known, else max|noisy| * epsilon * sqrt(count).
double estimate_delta(const Vector& noisy, double epsilon);

/// CSV with header `i,j,value` (1-based indices, row-major).
void write_measurements_csv(std::ostream& os, const MeasurementMatrix& m,
                            const std::vector<std::string>& comment_lines = {});
MeasurementMatrix read_measurements_csv(std::istream& is);
std::string measurements_to_json(const MeasurementMatrix& m);
MeasurementMatrix measurements_from_json(const std::string& text);

}  // namespace tfde
