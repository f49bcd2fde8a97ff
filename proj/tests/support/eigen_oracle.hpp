#pragma once

// Closed-form eigen-decomposition of a symmetric 3x3 matrix (trigonometric method).

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace dawn::testing {

struct Eigen3Oracle {
  double largest = 0.0;
  Eigen::Vector3d direction;  // unit eigenvector for `largest`
};

inline Eigen3Oracle symmetric3_oracle(const Eigen::Matrix3d& a) {
  const double q = a.trace() / 3.0;
  const double p1 = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
  const double p2 = (a(0, 0) - q) * (a(0, 0) - q) + (a(1, 1) - q) * (a(1, 1) - q) +
                    (a(2, 2) - q) * (a(2, 2) - q) + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  const Eigen::Matrix3d b = (a - q * Eigen::Matrix3d::Identity()) / p;
  const double r = std::clamp(b.determinant() / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  Eigen3Oracle out;
  out.largest = q + 2.0 * p * std::cos(phi);

  // Null vector of (A - lambda I): the longest cross product of two of its rows.
  const Eigen::Matrix3d m = a - out.largest * Eigen::Matrix3d::Identity();
  Eigen::Vector3d best = Eigen::Vector3d::Zero();
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d c = m.row(i).transpose().cross(m.row((i + 1) % 3).transpose());
    if (c.norm() > best.norm()) best = c;
  }
  out.direction = best.normalized();
  Eigen::Index arg = 0;
  out.direction.cwiseAbs().maxCoeff(&arg);
  if (out.direction(arg) < 0.0) out.direction = -out.direction;
  return out;
}

}  // namespace dawn::testing
