#include "tfde/caputo.hpp"

#include <cmath>
#include <stdexcept>

namespace tfde {

TemporalGrid::TemporalGrid(double horizon, int steps, double alpha)
    : horizon_(horizon), steps_(steps), dt_(0.0), alpha_(alpha) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw std::invalid_argument("time horizon must be positive");
  }
  if (steps < 1) throw std::invalid_argument("time step count must be at least 1");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("fractional order must lie in (0, 1)");
  }
  dt_ = horizon / steps;
}

CaputoWeights caputo_weights(const TemporalGrid& grid) {
  const double e = 1.0 - grid.alpha();
  std::vector<double> b(static_cast<std::size_t>(grid.steps()) + 1);
  double prev = 0.0;  // k^{1-a} at k = 0
  for (std::size_t k = 0; k < b.size(); ++k) {
    const double next = std::pow(static_cast<double>(k + 1), e);
    b[k] = next - prev;
    prev = next;
  }
  const double lead = std::pow(grid.dt(), -grid.alpha()) / std::tgamma(2.0 - grid.alpha());
  return CaputoWeights(std::move(b), lead);
}

std::vector<double> caputo_apply(std::span<const double> samples, const TemporalGrid& grid) {
  if (samples.size() != static_cast<std::size_t>(grid.levels())) {
    throw std::invalid_argument("series length must equal the number of time levels");
  }
  if (samples[0] != 0.0) {
    throw std::invalid_argument("series must vanish at t = 0");
  }
  const CaputoWeights w = caputo_weights(grid);
  std::vector<double> out(samples.size(), 0.0);
  for (std::size_t n = 1; n < samples.size(); ++n) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      acc += w.b(static_cast<int>(k)) * (samples[n - k] - samples[n - k - 1]);
    }
    out[n] = w.lead() * acc;
  }
  return out;
}

double caputo_of_power(double p, double alpha, double t) {
  if (t <= 0.0) return 0.0;
  return std::tgamma(p + 1.0) / std::tgamma(p + 1.0 - alpha) * std::pow(t, p - alpha);
}

}  // namespace tfde
