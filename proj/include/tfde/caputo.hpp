#pragma once

#include <span>
#include <vector>

namespace tfde {

/// Uniform grid t_n = n * dt, n = 0..steps, on [0, horizon], with the
/// fractional order of the time derivative.
class TemporalGrid {
 public:
  /// Throws std::invalid_argument unless horizon > 0, steps >= 1 and 0 < alpha < 1.
  TemporalGrid(double horizon, int steps, double alpha);

  double horizon() const { return horizon_; }
  int steps() const { return steps_; }
  int levels() const { return steps_ + 1; }
  double dt() const { return dt_; }
  double alpha() const { return alpha_; }
  double time(int level) const { return level == steps_ ? horizon_ : level * dt_; }

  /// Composite trapezoid weight of a level.
  double trapezoid_weight(int level) const {
    return (level == 0 || level == steps_) ? 0.5 * dt_ : dt_;
  }

 private:
  double horizon_;
  int steps_;
  double dt_;
  double alpha_;
};

/// L1 discretization of the Caputo derivative on a uniform grid:
///   D^a u(t_n) ~ lead * sum_{k=0}^{n-1} b_k (u^{n-k} - u^{n-k-1}),
/// with b_k = (k+1)^{1-a} - k^{1-a} and lead = dt^{-a} / Gamma(2-a).
class CaputoWeights {
 public:
  CaputoWeights() = default;
  CaputoWeights(std::vector<double> b, double lead) : b_(std::move(b)), lead_(lead) {}

  std::span<const double> b() const { return b_; }
  double b(int k) const { return b_[k]; }
  double lead() const { return lead_; }
  std::size_t size() const { return b_.size(); }

  /// Coefficient of u^{n-k} (k >= 1) moved to the right-hand side:
  /// b_{k-1} - b_k, which is positive.
  double history(int k) const { return b_[k - 1] - b_[k]; }

 private:
  std::vector<double> b_;
  double lead_ = 0.0;
};

/// b_k for k = 0..steps-1 (steps + 1 entries are stored so history(steps) is
/// defined).
CaputoWeights caputo_weights(const TemporalGrid& grid);

/// Applies the discrete L1 operator to a sampled series with samples[0] == 0.
/// Returns a series of the same length; entry 0 is 0.
/// Throws std::invalid_argument on a length mismatch or samples[0] != 0.
std::vector<double> caputo_apply(std::span<const double> samples, const TemporalGrid& grid);

/// Exact Caputo derivative of t^p: Gamma(p+1) / Gamma(p+1-a) * t^{p-a}.
double caputo_of_power(double p, double alpha, double t);

}  // namespace tfde
