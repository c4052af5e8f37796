#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "tfde/forward.hpp"

namespace tfde {

enum class MuRule { kSqrtDelta, kDelta, kDelta32, kDeltaSquared, kExplicit };

MuRule parse_mu_rule(const std::string& text);
std::string to_string(MuRule rule);

/// mu from the noise level: delta^{1/2}, delta, delta^{3/2}, delta^2, or the
/// explicit value. Throws std::invalid_argument unless the result is positive.
double regularization_parameter(MuRule rule, double delta, double explicit_mu = 0.0);

/// J(q) = (1/s) sum_p w_p |pred_p - data_p|^s + (mu/r) ||q||_{L^r}^r.
/// Gradients and the CGM require s = r = 2.
struct ObjectiveConfig {
  double mu = 0.0;
  double s = 2.0;
  double r = 2.0;
};

/// Everything computed at one coefficient.
struct ObjectiveState {
  Evaluation eval;
  Vector predicted;
  Vector residual;  // predicted - data
  double misfit = 0.0;
  double penalty = 0.0;
  double value = 0.0;
};

struct CgmLogEntry {
  int iter = 0;
  double J = 0.0;
  double grad_norm = 0.0;
  double E_k = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
};

struct CgmOptions {
  double eps = 1e-6;
  int max_iter = 200;
  /// Halve a step that raises J (up to this many times), then fall back to
  /// steepest descent once before declaring stagnation. 0 disables it.
  int max_step_halvings = 30;
  std::function<void(const CgmLogEntry&)> on_iteration;
};

struct CgmResult {
  CoefficientField q;
  std::vector<CgmLogEntry> log;
  bool converged = false;
  int iterations = 0;
  std::string stop_reason;
};

/// Regularized output least squares for a fixed forward operator and data set.
class InverseProblem {
 public:
  /// Hook applied to the adjoint Dirichlet data of every measurement before
  /// the adjoint solve; identity by default. Used by mutation tests.
  using AdjointDataHook = std::function<void(int k, BoundaryHistory& data)>;

  /// Throws std::invalid_argument if the data size does not match the
  /// operator or mu < 0.
  InverseProblem(const ForwardOperator& op, Observations data, ObjectiveConfig cfg);

  const ForwardOperator& op() const { return *op_; }
  const Observations& data() const { return data_; }
  const ObjectiveConfig& config() const { return cfg_; }
  void set_adjoint_hook(AdjointDataHook hook) { hook_ = std::move(hook); }

  ObjectiveState state(const CoefficientField& q) const;
  double objective(const CoefficientField& q) const { return state(q).value; }

  /// L^2 representer of J'(q): sum_k dt sum_n w_k^n u_k^n + mu q at every node,
  /// so that J'(q)[dq] = (g, dq)_{L^2} with nodal quadrature.
  Vector gradient(const CoefficientField& q) const;
  Vector gradient(const ObjectiveState& st, const CoefficientField& q) const;

  /// Derivatives of every prediction along dq (2N sensitivity solves).
  Vector sensitivity_directional(const CoefficientField& q, const Vector& dq) const;
  Vector sensitivity_directional(const ObjectiveState& st, const Vector& dq) const;

  /// Algorithm: Fletcher-Reeves conjugate gradients with a Gauss-Newton step
  /// length and projection onto [q_min, q_max] of q0.
  CgmResult run_cgm(const CoefficientField& q0, const CgmOptions& options = {}) const;

 private:
  const ForwardOperator* op_;
  Observations data_;
  ObjectiveConfig cfg_;
  AdjointDataHook hook_;
};

/// ||estimate - truth||_{L^2} / ||truth||_{L^2}; throws std::invalid_argument
/// when the truth has zero norm or the sizes differ.
double relative_error(const SpatialMesh& mesh, const Vector& estimate, const Vector& truth);

void write_cgm_log_csv(std::ostream& os, const std::vector<CgmLogEntry>& log,
                       const std::vector<std::string>& comment_lines = {});
/// `node_index,x,q` in 1D, `node_index,x,y,q` in 2D.
void write_field_csv(std::ostream& os, const SpatialMesh& mesh, const Vector& q,
                     const std::vector<std::string>& comment_lines = {});

}  // namespace tfde
