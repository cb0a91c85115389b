#pragma once

// Ground truth for ballistic curves: brute-force eigenvalue flows of matrix
// lines A + t alpha, and closed forms for the smallest examples.

#include "orbitflow/core.hpp"

#include <span>
#include <utility>

namespace orbitflow {

/// Row k holds the non-increasing eigenvalues of A + times[k] * alpha, each
/// from a full eigensolve.
template <class Scalar>
RealMatrix eigenflow(const Matrix<Scalar>& A, const Matrix<Scalar>& alpha, const MatrixModel& model,
                     std::span<const double> times) {
  require_hermitian(A, "eigenflow.A");
  require_hermitian(alpha, "eigenflow.alpha");
  if (A.rows() != model.n || alpha.rows() != model.n) {
    throw InputError("eigenflow: dimension does not match model");
  }
  if constexpr (is_complex_v<Scalar>) {
    if (model.kind == ModelKind::real_symmetric &&
        std::max(A.imag().cwiseAbs().maxCoeff(), alpha.imag().cwiseAbs().maxCoeff()) >
            kHermitianValidation) {
      throw InputError("eigenflow: complex entries in a real symmetric model");
    }
  }
  RealMatrix rows(Eigen::Index(times.size()), model.n);
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!std::isfinite(times[k])) throw InputError("eigenflow: non-finite time");
    const Matrix<Scalar> m = A + times[k] * alpha;
    rows.row(Eigen::Index(k)) = sorted_spectrum<Scalar>(0.5 * (m + m.adjoint())).transpose();
  }
  return rows;
}

/// Eigenvalues of [[a1, 0], [0, a2]] + t [[v1, v3], [v3, v2]], larger first.
inline std::pair<double, double> closed_form_2x2(double a1, double a2, double v1, double v2,
                                                 double v3, double t) {
  const double mean = a1 + a2 + t * (v1 + v2);
  const double split = a1 - a2 + t * (v1 - v2);
  const double root = std::sqrt(split * split + 4.0 * t * t * v3 * v3);
  return {0.5 * (mean + root), 0.5 * (mean - root)};
}

/// Orbit-space curve of the line x + t v under rotations of the plane.
inline double circle_orbit_curve(const Eigen::Vector2d& x, const Eigen::Vector2d& v, double t) {
  return std::hypot(x[0] + t * v[0], x[1] + t * v[1]);
}

}  // namespace orbitflow
