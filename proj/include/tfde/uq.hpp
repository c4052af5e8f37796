#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tfde/forward.hpp"

namespace tfde {

/// Jacobian of the averaged measurements, P_km = d phi_k / d q_m (2N x M,
/// Euclidean in the nodal values), from one adjoint solve per measurement
/// with unit residual data.
Eigen::MatrixXd assemble_jacobian(const ForwardOperator& op, const CoefficientField& q);

/// Same matrix column by column from M sensitivity solves per measurement.
/// Only meant for cross-checking on coarse meshes.
Eigen::MatrixXd assemble_jacobian_by_columns(const ForwardOperator& op, const CoefficientField& q);

/// Laplace approximation N(q_MAP, C_MAP) with C_MAP = delta^2 (mu I + P^T P)^{-1}.
class PosteriorModel {
 public:
  /// Throws std::invalid_argument unless mu > 0, delta > 0 and the sizes agree;
  /// SolverError if the covariance cannot be factored.
  PosteriorModel(Vector q_map, Eigen::MatrixXd jacobian, double mu, double delta);

  const Vector& q_map() const { return q_map_; }
  const Eigen::MatrixXd& jacobian() const { return p_; }
  double mu() const { return mu_; }
  double delta() const { return delta_; }
  Eigen::Index dimension() const { return q_map_.size(); }

  const Eigen::MatrixXd& covariance() const { return cov_; }
  /// Lower factor with covariance = L L^T.
  const Eigen::MatrixXd& cholesky_lower() const { return chol_; }

  /// Eigenvalues of P^T P in decreasing order (M values; at most 2N nonzero),
  /// obtained from the small matrix P P^T.
  const Vector& data_eigenvalues() const { return ptp_eigs_; }
  /// Eigenvalues of C_MAP, delta^2 / (mu + lambda_j(P^T P)), increasing.
  Vector covariance_eigenvalues() const;

 private:
  Vector q_map_;
  Eigen::MatrixXd p_;
  double mu_;
  double delta_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd chol_;
  Vector ptp_eigs_;
};

/// Draws q = q_MAP + F z with z standard normal and F the factor whose
/// outer product F F^T is the covariance (cholesky_lower()). Mean, variance and
/// optionally the full covariance are accumulated batch by batch; samples are
/// stored only when `keep_samples` is set.
struct PosteriorEnsemble {
  std::uint64_t seed = 0;
  int count = 0;
  Vector mean;
  Vector variance;             // unbiased, per node
  Eigen::MatrixXd covariance;  // unbiased; empty unless tracked
  std::vector<Vector> samples;
};

/// Throws std::invalid_argument if ne < 2.
PosteriorEnsemble sample_posterior(const PosteriorModel& model, int ne, std::uint64_t seed,
                                   bool keep_samples = false, bool track_covariance = true);

/// Upper quantile chi^2_a(df): P(X > x) = a, by bisection on the regularized
/// lower incomplete gamma function.
double chi_square_quantile(double upper_tail, double df);

struct ConfidenceReport {
  double confidence = 0.95;
  int n = 1;
  double chi2 = 0.0;
  Vector axes;        // ellipsoid semi-axes, one per covariance eigenvalue (decreasing)
  Vector half_width;  // per node, projection of the ellipsoid on each coordinate
};

/// Confidence region { n (qbar - q_MAP)^T C^{-1} (qbar - q_MAP) <= chi^2(M) }:
/// semi-axes sqrt(lambda_j(C) chi^2 / n) = delta sqrt(chi^2 / (n (mu + lambda_j(P^T P))))
/// and per-node half-widths sqrt(chi^2 C_mm / n).
/// Throws std::invalid_argument unless 0 < confidence < 1 and n >= 1.
ConfidenceReport confidence_interval(const PosteriorModel& model, double confidence, int n);

/// Axis lengths alone from eigenvalues of P^T P; cheap enough for parameter sweeps.
Vector confidence_axes(const Vector& ptp_eigenvalues, double mu, double delta, double confidence,
                       int n, double df);

struct SkewnessReport {
  double mean = 0.0;
  double sd = 0.0;
  double third_moment = 0.0;
  double beta = 0.0;
};

/// Skewness of the field normalized into a density over the domain. Negative
/// nodal values are clipped to zero first. In 2D `axis` selects the marginal
/// (0 = x, 1 = y), obtained with trapezoid weights along the other axis.
/// Throws std::invalid_argument if the clipped field has no mass.
SkewnessReport skewness(const SpatialMesh& mesh, const Vector& field, int axis = 0);

/// `node,x,mean,sd,ci_lo,ci_hi` (1D) or `node,x,y,mean,sd,ci_lo,ci_hi` (2D).
void write_ensemble_csv(std::ostream& os, const SpatialMesh& mesh, const PosteriorEnsemble& ens,
                        const ConfidenceReport& ci, const std::vector<std::string>& comment_lines = {});
std::string skewness_json(const std::vector<SkewnessReport>& per_axis,
                          const std::vector<std::pair<std::string, std::string>>& meta = {});
/// Raw samples: "TFDESMP1", uint64 M, uint64 Ne, then Ne*M little-endian float64, row-major.
void write_samples_binary(std::ostream& os, const PosteriorEnsemble& ens);

}  // namespace tfde
