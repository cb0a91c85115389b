#pragma once

// Shared vocabulary: matrix models, error types, and small linear-algebra
// helpers used throughout orbitflow.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace orbitflow {

using Complex = std::complex<double>;
using Vector = Eigen::VectorXd;
template <class Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using RealMatrix = Matrix<double>;
using ComplexMatrix = Matrix<Complex>;

/// Bad arguments: malformed matrices, dimension mismatches, unsorted
/// chamber coordinates.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A structural invariant of a reduced state is violated.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class ModelKind { hermitian, real_symmetric };

/// G = SU(n) acting on H(n), or G = SO(n) acting on S(n), by conjugation.
struct MatrixModel {
  ModelKind kind = ModelKind::real_symmetric;
  int n = 1;

  MatrixModel() = default;
  MatrixModel(ModelKind k, int dim) : kind(k), n(dim) {
    if (dim < 1) throw InputError("MatrixModel: n must be >= 1");
  }
  static MatrixModel hermitian(int dim) { return {ModelKind::hermitian, dim}; }
  static MatrixModel symmetric(int dim) { return {ModelKind::real_symmetric, dim}; }
};

inline std::string_view to_string(ModelKind k) {
  return k == ModelKind::hermitian ? "hermitian" : "symmetric";
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "hermitian") return ModelKind::hermitian;
  if (s == "symmetric" || s == "real_symmetric") return ModelKind::real_symmetric;
  throw InputError("unknown matrix model '" + std::string(s) + "'");
}

template <class Scalar>
inline constexpr bool is_complex_v = !std::is_same_v<Scalar, double>;

/// Model kind implied by the scalar type of a state.
template <class Scalar>
constexpr ModelKind kind_of() {
  return is_complex_v<Scalar> ? ModelKind::hermitian : ModelKind::real_symmetric;
}

inline double abs2(double x) { return x * x; }
inline double abs2(const Complex& z) { return std::norm(z); }
inline double real_part(double x) { return x; }
inline double real_part(const Complex& z) { return z.real(); }
inline double imag_part(double) { return 0.0; }
inline double imag_part(const Complex& z) { return z.imag(); }

template <class Scalar>
Scalar conj(const Scalar& x) {
  if constexpr (is_complex_v<Scalar>) {
    return std::conj(x);
  } else {
    return x;
  }
}

/// Max entry of |M - M*| relative to max(1, |M|).
template <class Derived>
double hermitian_defect(const Eigen::MatrixBase<Derived>& m) {
  if (m.rows() != m.cols()) return std::numeric_limits<double>::infinity();
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.adjoint()).cwiseAbs().maxCoeff() / scale;
}

/// Symmetry defect above which a matrix is rejected as input.
inline constexpr double kHermitianValidation = 1e-10;

template <class Derived>
void require_hermitian(const Eigen::MatrixBase<Derived>& m, std::string_view what) {
  if (m.rows() != m.cols()) {
    throw InputError(std::string(what) + ": matrix is not square");
  }
  if (hermitian_defect(m) > kHermitianValidation) {
    throw InputError(std::string(what) + ": matrix is not Hermitian/symmetric");
  }
}

template <class Scalar>
Matrix<Scalar> commutator(const Matrix<Scalar>& x, const Matrix<Scalar>& y) {
  return x * y - y * x;
}

/// Haar-distributed unitary (complex) or orthogonal (real) matrix via QR of
/// a Gaussian matrix with the R-diagonal phases divided out.
template <class Scalar, class Rng>
Matrix<Scalar> random_group_element(int n, Rng& rng) {
  std::normal_distribution<double> gauss;
  Matrix<Scalar> g(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if constexpr (is_complex_v<Scalar>) {
        g(i, j) = Scalar(gauss(rng), gauss(rng));
      } else {
        g(i, j) = gauss(rng);
      }
    }
  }
  Eigen::HouseholderQR<Matrix<Scalar>> qr(g);
  Matrix<Scalar> q = qr.householderQ();
  const Matrix<Scalar> r = qr.matrixQR();
  for (int j = 0; j < n; ++j) {
    const Scalar d = r(j, j);
    const double mag = std::abs(d);
    if (mag > 0) q.col(j) *= d / mag;
  }
  return q;
}

/// Random Hermitian/symmetric matrix with Gaussian entries.
template <class Scalar, class Rng>
Matrix<Scalar> random_hermitian(int n, Rng& rng) {
  std::normal_distribution<double> gauss;
  Matrix<Scalar> m(n, n);
  for (int i = 0; i < n; ++i) {
    m(i, i) = gauss(rng);
    for (int j = i + 1; j < n; ++j) {
      if constexpr (is_complex_v<Scalar>) {
        m(i, j) = Scalar(gauss(rng), gauss(rng)) / std::sqrt(2.0);
      } else {
        m(i, j) = gauss(rng) / std::sqrt(2.0);
      }
      m(j, i) = conj(m(i, j));
    }
  }
  return m;
}

/// Sorted eigenvalues (non-increasing) of a Hermitian matrix.
template <class Scalar>
Vector sorted_spectrum(const Matrix<Scalar>& m) {
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw InputError("eigensolver failed to converge");
  return es.eigenvalues().reverse();
}

}  // namespace orbitflow
