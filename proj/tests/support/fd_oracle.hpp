#pragma once

// Test-only oracles: central finite differences and relative-error comparison.
// Independent of the tape; they only call a scalar function of a flat vector.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>

namespace dawn::testing {

inline double central_difference(const std::function<double()>& f, double& coordinate, double h = 1e-5) {
  const double saved = coordinate;
  coordinate = saved + h;
  const double up = f();
  coordinate = saved - h;
  const double down = f();
  coordinate = saved;
  return (up - down) / (2.0 * h);
}

/// True when analytic and numeric agree within rel_tol, or are both within abs_floor.
inline bool gradients_agree(double analytic, double numeric, double rel_tol = 1e-4, double abs_floor = 1e-7) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= abs_floor) return true;
  return diff / std::max(std::abs(analytic), std::abs(numeric)) <= rel_tol;
}

}  // namespace dawn::testing
