#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "tfde/caputo.hpp"

using namespace tfde;

TEST_CASE("L1 weights at alpha = 0.5") {
  const CaputoWeights w = caputo_weights(TemporalGrid(1.0, 10, 0.5));
  CHECK(w.b(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(w.b(1) == doctest::Approx(std::sqrt(2.0) - 1.0).epsilon(1e-14));
  CHECK(w.lead() == doctest::Approx(std::pow(0.1, -0.5) / std::tgamma(1.5)).epsilon(1e-14));
}

TEST_CASE("weights are positive, decreasing and telescope") {
  const TemporalGrid grid(1.0, 100, 0.3);
  const CaputoWeights w = caputo_weights(grid);
  double sum = 0.0;
  for (int k = 0; k < grid.steps(); ++k) {
    CHECK(w.b(k) > 0.0);
    if (k > 0) {
      CHECK(w.b(k) < w.b(k - 1));
      CHECK(w.history(k) > 0.0);
    }
    sum += w.b(k);
  }
  CHECK(sum == doctest::Approx(std::pow(100.0, 0.7)).epsilon(1e-13));
}

TEST_CASE("exact Caputo derivative of powers") {
  // Gamma(1.7) = 0.908638732853290, Gamma(2.5) = 1.329340388179137
  CHECK(caputo_of_power(1.0, 0.3, 1.0) == doctest::Approx(1.0 / 0.908638732853290).epsilon(1e-13));
  CHECK(caputo_of_power(2.0, 0.5, 1.0) == doctest::Approx(2.0 / 1.329340388179137).epsilon(1e-13));
  CHECK(caputo_of_power(2.0, 0.5, 0.0) == 0.0);
}

TEST_CASE("discrete operator is exact on t and converges on t^2") {
  for (double alpha : {0.3, 0.7}) {
    const TemporalGrid grid(1.0, 50, alpha);
    std::vector<double> lin(51);
    for (int n = 0; n <= 50; ++n) lin[n] = grid.time(n);
    const auto d = caputo_apply(lin, grid);
    CHECK(d[0] == 0.0);
    for (int n = 1; n <= 50; ++n) {
      CHECK(d[n] == doctest::Approx(caputo_of_power(1.0, alpha, grid.time(n))).epsilon(1e-12));
    }
  }
  std::vector<double> err;
  for (int steps : {20, 40, 80}) {
    const TemporalGrid grid(1.0, steps, 0.5);
    std::vector<double> sq(steps + 1);
    for (int n = 0; n <= steps; ++n) sq[n] = grid.time(n) * grid.time(n);
    err.push_back(std::abs(caputo_apply(sq, grid).back() - caputo_of_power(2.0, 0.5, 1.0)));
  }
  const double order = std::log2(err[1] / err[2]);
  CHECK(order == doctest::Approx(1.5).epsilon(0.1));
}

TEST_CASE("invalid grids and samples are rejected") {
  CHECK_THROWS_AS(TemporalGrid(1.0, 10, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(TemporalGrid(1.0, 0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(TemporalGrid(0.0, 10, 0.5), std::invalid_argument);
  const TemporalGrid grid(1.0, 4, 0.5);
  CHECK_THROWS_AS(caputo_apply(std::vector<double>{1, 2, 3, 4, 5}, grid), std::invalid_argument);
  CHECK_THROWS_AS(caputo_apply(std::vector<double>{0, 1}, grid), std::invalid_argument);
}
