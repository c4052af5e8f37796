#include "tfde/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace tfde {

MuRule parse_mu_rule(const std::string& text) {
  if (text == "delta^1/2" || text == "sqrt_delta" || text == "delta^0.5") return MuRule::kSqrtDelta;
  if (text == "delta" || text == "delta^1") return MuRule::kDelta;
  if (text == "delta^3/2" || text == "delta^1.5") return MuRule::kDelta32;
  if (text == "delta^2") return MuRule::kDeltaSquared;
  if (text == "explicit") return MuRule::kExplicit;
  throw std::invalid_argument("unknown mu rule '" + text + "'");
}

std::string to_string(MuRule rule) {
  switch (rule) {
    case MuRule::kSqrtDelta: return "delta^1/2";
    case MuRule::kDelta: return "delta";
    case MuRule::kDelta32: return "delta^3/2";
    case MuRule::kDeltaSquared: return "delta^2";
    case MuRule::kExplicit: return "explicit";
  }
  return "?";
}

double regularization_parameter(MuRule rule, double delta, double explicit_mu) {
  double mu = 0.0;
  switch (rule) {
    case MuRule::kSqrtDelta: mu = std::sqrt(delta); break;
    case MuRule::kDelta: mu = delta; break;
    case MuRule::kDelta32: mu = delta * std::sqrt(delta); break;
    case MuRule::kDeltaSquared: mu = delta * delta; break;
    case MuRule::kExplicit: mu = explicit_mu; break;
  }
  if (!(mu > 0.0) || !std::isfinite(mu)) {
    throw std::invalid_argument("regularization parameter must be positive (delta = " +
                                std::to_string(delta) + ")");
  }
  return mu;
}

InverseProblem::InverseProblem(const ForwardOperator& op, Observations data, ObjectiveConfig cfg)
    : op_(&op), data_(std::move(data)), cfg_(cfg) {
  if (data_.values.size() != op.observation_size(data_.kind) ||
      data_.weights.size() != data_.values.size()) {
    throw std::invalid_argument("observations do not match the forward operator");
  }
  if (!(cfg_.mu >= 0.0)) throw std::invalid_argument("mu must be nonnegative");
  if (!(cfg_.s >= 1.0) || !(cfg_.r > 1.0)) throw std::invalid_argument("need s >= 1 and r > 1");
}

ObjectiveState InverseProblem::state(const CoefficientField& q) const {
  ObjectiveState st;
  st.eval = op_->evaluate(q);
  st.predicted = op_->observe(st.eval.flux, data_.kind);
  st.residual = st.predicted - data_.values;
  const Vector& w = data_.weights;
  if (cfg_.s == 2.0) {
    st.misfit = 0.5 * w.dot(st.residual.cwiseAbs2());
  } else {
    st.misfit = w.dot(st.residual.cwiseAbs().array().pow(cfg_.s).matrix()) / cfg_.s;
  }
  st.penalty = cfg_.mu / cfg_.r * lr_norm_pow(op_->mesh(), q.values(), cfg_.r);
  st.value = st.misfit + st.penalty;
  return st;
}

Vector InverseProblem::gradient(const CoefficientField& q) const { return gradient(state(q), q); }

Vector InverseProblem::gradient(const ObjectiveState& st, const CoefficientField& q) const {
  if (cfg_.s != 2.0 || cfg_.r != 2.0) throw std::invalid_argument("gradient requires s = r = 2");
  const int count = op_->measurement_count();
  std::vector<Vector> parts(static_cast<std::size_t>(count));
  op_->for_each_measurement(count, [&](int k) {
    BoundaryHistory g = op_->adjoint_dirichlet(data_.kind, k, st.residual);
    if (hook_) hook_(k, g);
    const SpaceTimeField w = st.eval.solver->solve_adjoint(g);
    parts[k] = op_->adjoint_contraction(w, st.eval.states[k]);
  });
  Vector grad = cfg_.mu * q.values();
  for (const auto& p : parts) grad += p;
  return grad;
}

Vector InverseProblem::sensitivity_directional(const CoefficientField& q, const Vector& dq) const {
  return sensitivity_directional(state(q), dq);
}

Vector InverseProblem::sensitivity_directional(const ObjectiveState& st, const Vector& dq) const {
  return op_->sensitivity(st.eval, dq, data_.kind);
}

namespace {

struct Step {
  double beta = 0.0;
  bool degenerate = false;
};

Step gauss_newton_step(const Vector& w, const Vector& residual, const Vector& sens, double mu,
                       double qd, double dd) {
  const double num = w.dot(residual.cwiseProduct(sens)) + mu * qd;
  const double den = w.dot(sens.cwiseAbs2()) + mu * dd;
  if (!(den > 0.0)) return {0.0, true};
  return {-num / den, false};
}

}  // namespace

CgmResult InverseProblem::run_cgm(const CoefficientField& q0, const CgmOptions& options) const {
  const SpatialMesh& mesh = op_->mesh();
  CgmResult result;
  CoefficientField q = q0;
  q.project();
  ObjectiveState st = state(q);
  Vector g = gradient(st, q);
  double g2 = l2_inner(mesh, g, g);
  double prev_g2 = 0.0;
  Vector d = -g;

  for (int k = 0; k < options.max_iter; ++k) {
    double gamma = 0.0;
    if (k > 0) {
      gamma = g2 / prev_g2;
      if (!std::isfinite(gamma) || gamma > 100.0) gamma = 0.0;  // |g| grew tenfold
      d = -g + gamma * d;
      if (l2_inner(mesh, g, d) >= 0.0) {
        gamma = 0.0;
        d = -g;
      }
    }

    CoefficientField trial = q;
    ObjectiveState trial_state;
    bool accepted = false;
    double beta = 0.0;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      if (attempt == 1) {
        if (gamma == 0.0) break;  // already steepest descent
        gamma = 0.0;
        d = -g;
      }
      const Vector sens = sensitivity_directional(st, d);
      const Step step = gauss_newton_step(data_.weights, st.residual, sens, cfg_.mu,
                                          l2_inner(mesh, q.values(), d), l2_inner(mesh, d, d));
      if (step.degenerate) {
        beta = 0.0;
        trial = q;
        trial_state = st;
        accepted = true;
        break;
      }
      if (!std::isfinite(step.beta)) {
        throw SolverError("non-finite step length at iteration " + std::to_string(k));
      }
      beta = step.beta;
      for (int halving = 0; halving <= options.max_step_halvings; ++halving) {
        trial = q;
        trial.values() += beta * d;
        trial.project();
        trial_state = state(trial);
        if (trial_state.value <= st.value || options.max_step_halvings == 0) {
          accepted = true;
          break;
        }
        beta *= 0.5;
      }
    }

    CgmLogEntry entry;
    entry.iter = k + 1;
    entry.beta = beta;
    entry.gamma = gamma;
    if (!accepted) {
      entry.J = st.value;
      entry.grad_norm = std::sqrt(g2);
      result.log.push_back(entry);
      if (options.on_iteration) options.on_iteration(entry);
      result.iterations = k + 1;
      result.stop_reason = "stagnation: no step decreases J";
      break;
    }

    const double e_k = (trial.values() - q.values()).cwiseAbs().maxCoeff();
    q = std::move(trial);
    st = std::move(trial_state);
    prev_g2 = g2;
    g = gradient(st, q);
    g2 = l2_inner(mesh, g, g);

    entry.J = st.value;
    entry.grad_norm = std::sqrt(g2);
    entry.E_k = e_k;
    result.log.push_back(entry);
    if (options.on_iteration) options.on_iteration(entry);
    result.iterations = k + 1;
    if (e_k <= options.eps) {
      result.converged = true;
      result.stop_reason = "E_k <= eps";
      break;
    }
  }
  if (result.stop_reason.empty()) result.stop_reason = "max_iter reached";
  result.q = std::move(q);
  return result;
}

double relative_error(const SpatialMesh& mesh, const Vector& estimate, const Vector& truth) {
  if (estimate.size() != truth.size()) throw std::invalid_argument("fields differ in size");
  const double norm = l2_norm(mesh, truth);
  if (!(norm > 0.0)) throw std::invalid_argument("reference field has zero norm");
  return l2_norm(mesh, estimate - truth) / norm;
}

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_cgm_log_csv(std::ostream& os, const std::vector<CgmLogEntry>& log,
                       const std::vector<std::string>& comment_lines) {
  for (const auto& line : comment_lines) os << "# " << line << '\n';
  os << "iter,J,grad_norm,E_k,beta,gamma\n";
  for (const auto& e : log) {
    os << e.iter << ',' << g17(e.J) << ',' << g17(e.grad_norm) << ',' << g17(e.E_k) << ','
       << g17(e.beta) << ',' << g17(e.gamma) << '\n';
  }
}

void write_field_csv(std::ostream& os, const SpatialMesh& mesh, const Vector& q,
                     const std::vector<std::string>& comment_lines) {
  for (const auto& line : comment_lines) os << "# " << line << '\n';
  os << (mesh.dimension() == 1 ? "node_index,x,q\n" : "node_index,x,y,q\n");
  for (std::size_t i = 0; i < mesh.num_nodes(); ++i) {
    const Point& p = mesh.node(i);
    os << i << ',' << g17(p[0]);
    if (mesh.dimension() == 2) os << ',' << g17(p[1]);
    os << ',' << g17(q[static_cast<Eigen::Index>(i)]) << '\n';
  }
}

}  // namespace tfde
