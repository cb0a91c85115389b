#pragma once

// Spin Calogero-Moser vector field on reduced states.
//
//   da/dt = p
//   dp_i/dt = 2 sum_{j} |Y_ij|^2 / (a_i - a_j)^3
//   dY/dt = [Z, Y],  Z_ij = Y_ij / (a_i - a_j)^2
//
// Pairs marked in the frozen mask (degenerate at t = 0) are excluded from
// the force sums and from Z. The sign of dY/dt follows from differentiating
// U(t)^* [A, alpha] U(t) in the moving eigenframe, where U' = U Omega and
// Omega_ij = -Z_ij; it agrees with the eigenvalue flow of A + t alpha.

#include "orbitflow/core.hpp"
#include "orbitflow/reduction.hpp"

#include <array>
#include <utility>

namespace orbitflow {

using PairMask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Time derivative of a reduced state (also used as a tangent perturbation).
template <class Scalar>
struct ReducedDerivative {
  Vector da;
  Vector dp;
  Matrix<Scalar> dY;

  static ReducedDerivative zero(int n) {
    return {Vector::Zero(n), Vector::Zero(n), Matrix<Scalar>::Zero(n, n)};
  }
};

/// +1 is the physical convention dY/dt = [Z, Y]. -1 exists only as a
/// negative control for oracle comparisons.
enum class SpinSign { standard = 1, flipped = -1 };

inline constexpr std::string_view kSignConvention =
    "dY/dt = [Z, Y], Z_ij = Y_ij/(a_i-a_j)^2 (equivalently -[Y, Z])";

namespace detail {

inline bool excluded(const PairMask& frozen, Eigen::Index i, Eigen::Index j) {
  return frozen.size() != 0 && frozen(i, j);
}

}  // namespace detail

/// Z_ij = Y_ij / (a_i - a_j)^2 on interacting pairs, 0 elsewhere.
template <class Scalar>
Matrix<Scalar> spin_z(const ReducedState<Scalar>& s, const PairMask& frozen) {
  const int n = s.dim();
  Matrix<Scalar> z = Matrix<Scalar>::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j || detail::excluded(frozen, i, j) || s.Y(i, j) == Scalar(0)) continue;
      const double d = s.a[i] - s.a[j];
      z(i, j) = s.Y(i, j) / (d * d);
    }
  }
  return z;
}

/// Reduced field with an explicit frozen-pair mask.
template <class Scalar>
ReducedDerivative<Scalar> vector_field(const ReducedState<Scalar>& s, const PairMask& frozen,
                                       SpinSign sign = SpinSign::standard) {
  const int n = s.dim();
  ReducedDerivative<Scalar> out;
  out.da = s.p;
  out.dp = Vector::Zero(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j || detail::excluded(frozen, i, j) || s.Y(i, j) == Scalar(0)) continue;
      const double d = s.a[i] - s.a[j];
      out.dp[i] += 2.0 * abs2(s.Y(i, j)) / (d * d * d);
    }
  }
  const Matrix<Scalar> z = spin_z(s, frozen);
  out.dY = z * s.Y - s.Y * z;
  if (sign == SpinSign::flipped) out.dY = -out.dY;
  return out;
}

/// Reduced field with degenerate pairs (|a_i - a_j| <= tol) excluded.
template <class Scalar>
ReducedDerivative<Scalar> vector_field(const ReducedState<Scalar>& s,
                                       double tol = kDefaultDegeneracyTol) {
  return vector_field(s, degenerate_pairs(s.a, tol));
}

/// Directional derivative of the vector field at s along ds.
template <class Scalar>
ReducedDerivative<Scalar> vector_field_tangent(const ReducedState<Scalar>& s,
                                               const ReducedDerivative<Scalar>& ds,
                                               const PairMask& frozen,
                                               SpinSign sign = SpinSign::standard) {
  const int n = s.dim();
  ReducedDerivative<Scalar> out;
  out.da = ds.dp;
  out.dp = Vector::Zero(n);
  Matrix<Scalar> z = Matrix<Scalar>::Zero(n, n);
  Matrix<Scalar> dz = Matrix<Scalar>::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j || detail::excluded(frozen, i, j)) continue;
      const Scalar y = s.Y(i, j);
      const Scalar dy = ds.dY(i, j);
      if (y == Scalar(0) && dy == Scalar(0)) continue;
      const double d = s.a[i] - s.a[j];
      const double dd = ds.da[i] - ds.da[j];
      const double d2 = d * d;
      const double d3 = d2 * d;
      // d/de |Y|^2 = 2 Re(conj(Y) dY)
      const double dmod = 2.0 * real_part(conj(y) * dy);
      out.dp[i] += 2.0 * (dmod / d3 - 3.0 * abs2(y) * dd / (d3 * d));
      z(i, j) = y / d2;
      dz(i, j) = dy / d2 - 2.0 * y * dd / d3;
    }
  }
  out.dY = dz * s.Y + z * ds.dY - ds.dY * z - s.Y * dz;
  if (sign == SpinSign::flipped) out.dY = -out.dY;
  return out;
}

/// h = 1/2 sum p_i^2 + 1/2 sum_{interacting i != j} |Y_ij|^2 / (a_i - a_j)^2.
template <class Scalar>
double hamiltonian_reduced(const ReducedState<Scalar>& s, const PairMask& frozen) {
  const int n = s.dim();
  double h = 0.5 * s.p.squaredNorm();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j || detail::excluded(frozen, i, j) || s.Y(i, j) == Scalar(0)) continue;
      const double d = s.a[i] - s.a[j];
      h += 0.5 * abs2(s.Y(i, j)) / (d * d);
    }
  }
  return h;
}

template <class Scalar>
double hamiltonian_reduced(const ReducedState<Scalar>& s, double tol = kDefaultDegeneracyTol) {
  return hamiltonian_reduced(s, degenerate_pairs(s.a, tol));
}

/// Tr((Y Y^*)^k) for k = 1..kmax; invariant under the isospectral spin flow.
template <class Scalar>
Vector casimirs(const Matrix<Scalar>& Y, int kmax) {
  if (kmax < 1) throw InputError("casimirs: kmax must be >= 1");
  const Matrix<Scalar> m = Y * Y.adjoint();
  Matrix<Scalar> power = m;
  Vector out(kmax);
  for (int k = 0; k < kmax; ++k) {
    out[k] = real_part(Scalar(power.trace()));
    if (k + 1 < kmax) power = (power * m).eval();
  }
  return out;
}

/// Classical Calogero-Moser field for rank-one momentum with coupling c.
/// Coordinates sharing a degenerate block exert no force on each other.
inline std::pair<Vector, Vector> classical_cm_field(const Vector& a, const Vector& p, double c,
                                                    double tol = kDefaultDegeneracyTol) {
  if (a.size() != p.size()) throw InputError("classical_cm_field: dimension mismatch");
  for (Eigen::Index i = 1; i < a.size(); ++i) {
    if (a[i] > a[i - 1]) throw InputError("classical_cm_field: a must be sorted");
  }
  const auto n = a.size();
  Vector dp = Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = a[i] - a[j];
      if (i == j || std::abs(d) <= tol) continue;
      dp[i] += 2.0 * c * c / (d * d * d);
    }
  }
  return {p, dp};
}

/// Rank-one momentum state: Y_ij = -c i (Hermitian) off the diagonal.
inline HermitianState rank_one_state(const Vector& a, const Vector& p, double c) {
  const auto n = a.size();
  HermitianState s{a, p, ComplexMatrix::Constant(n, n, Complex(0.0, -c))};
  s.Y.diagonal().setZero();
  return s;
}

/// Momentum-reversed state (a, -p, -Y); flowing it forward retraces s.
template <class Scalar>
ReducedState<Scalar> reverse_momentum(ReducedState<Scalar> s) {
  s.p = -s.p;
  s.Y = -s.Y;
  return s;
}

}  // namespace orbitflow
