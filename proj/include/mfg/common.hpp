#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace mfg {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

enum class Domain { euclidean, torus };

// Reduce a coordinate to the fundamental domain [0, L).
inline double wrap_point(double a, double L) {
  double r = std::fmod(a, L);
  if (r < 0) r += L;
  if (r >= L) r -= L;  // guard against fmod rounding to L
  return r;
}

// Signed representative of a - b on the circle, in (-L/2, L/2].
inline double wrap_diff(double a, double L) {
  double r = std::fmod(a, L);
  if (r > L / 2) r -= L;
  if (r <= -L / 2) r += L;
  return r;
}

inline void wrap_in_place(MatrixXd& pts, double L) {
  for (Eigen::Index j = 0; j < pts.cols(); ++j)
    for (Eigen::Index i = 0; i < pts.rows(); ++i) pts(i, j) = wrap_point(pts(i, j), L);
}

}  // namespace mfg
