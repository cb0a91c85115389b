#pragma once

// Seeded random initial data.

#include "orbitflow/reduction.hpp"

#include <random>

namespace orbitflow {

/// Non-increasing spectrum of length n with consecutive gaps >= min_gap.
template <class Rng>
Vector random_spectrum(int n, Rng& rng, double min_gap = 0.2) {
  std::uniform_real_distribution<double> extra(0.0, 1.0);
  Vector a(n);
  double x = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
  for (int i = n - 1; i >= 0; --i) {
    a[i] = x;
    x += min_gap + extra(rng);
  }
  return a;
}

/// A = g diag(spectrum) g^-1 with minimum gap min_gap, alpha Hermitian with
/// unit Frobenius norm.
template <class Scalar, class Rng>
CotangentPoint<Scalar> random_regular_pair(int n, Rng& rng, double min_gap = 0.2) {
  const Matrix<Scalar> g = random_group_element<Scalar>(n, rng);
  const Vector a = random_spectrum(n, rng, min_gap);
  Matrix<Scalar> A = g * a.cast<Scalar>().asDiagonal() * g.adjoint();
  A = (0.5 * (A + A.adjoint())).eval();
  Matrix<Scalar> alpha = random_hermitian<Scalar>(n, rng);
  alpha /= alpha.norm();
  return {A, alpha};
}

}  // namespace orbitflow
