#pragma once

// Cotangent-lift data of the matrix models: the momentum map J(A, alpha) =
// [A, alpha], and passage between ambient pairs (A, alpha) and reduced
// states (a, p, Y) in which A is diagonal sorted and Y = [A, alpha] is the
// spin matrix with its residual torus gauge fixed.

#include "orbitflow/core.hpp"
#include "orbitflow/orbit_metric.hpp"

#include <numeric>
#include <sstream>
#include <utility>

namespace orbitflow {

/// A point (A, alpha) of T*V, V = H(n) or S(n), with <alpha, A> = Tr(A alpha).
template <class Scalar>
struct CotangentPoint {
  Matrix<Scalar> A;
  Matrix<Scalar> alpha;

  int dim() const { return int(A.rows()); }

  void validate() const {
    require_hermitian(A, "CotangentPoint.A");
    require_hermitian(alpha, "CotangentPoint.alpha");
    if (A.rows() != alpha.rows()) throw InputError("CotangentPoint: dimension mismatch");
  }
};

/// Reduced phase-space point: chamber position a, diagonal momenta p, and
/// spin matrix Y (skew-Hermitian / skew-symmetric, zero diagonal, zero on
/// degenerate pairs a_i = a_j).
template <class Scalar>
struct ReducedState {
  Vector a;
  Vector p;
  Matrix<Scalar> Y;

  int dim() const { return int(a.size()); }
};

using HermitianState = ReducedState<Complex>;
using SymmetricState = ReducedState<double>;

/// Pairs (i, j), i != j, with |a_i - a_j| <= tol.
inline Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> degenerate_pairs(const Vector& a,
                                                                             double tol) {
  const auto n = a.size();
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      mask(i, j) = i != j && std::abs(a[i] - a[j]) <= tol;
    }
  }
  return mask;
}

/// Structural checks of a reduced state. Throws InvariantError.
template <class Scalar>
void validate_state(const ReducedState<Scalar>& s, double tol = kDefaultDegeneracyTol,
                    bool require_sorted = true) {
  const auto n = s.a.size();
  if (n == 0 || s.p.size() != n || s.Y.rows() != n || s.Y.cols() != n) {
    throw InvariantError("ReducedState: inconsistent dimensions");
  }
  if (require_sorted) {
    for (Eigen::Index i = 1; i < n; ++i) {
      if (s.a[i] > s.a[i - 1]) throw InvariantError("ReducedState: a is not sorted");
    }
  }
  const double scale = std::max(1.0, s.Y.cwiseAbs().maxCoeff());
  const double eps = 1e-10 * scale;
  const auto degenerate = degenerate_pairs(s.a, tol);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(s.Y(i, i)) > eps) throw InvariantError("SpinMatrix: nonzero diagonal");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (std::abs(s.Y(i, j) + conj(s.Y(j, i))) > eps) {
        throw InvariantError("SpinMatrix: not skew-adjoint");
      }
      if (degenerate(i, j) && std::abs(s.Y(i, j)) > eps) {
        throw InvariantError("SpinMatrix: nonzero entry on a degenerate pair");
      }
    }
  }
}

/// J(A, alpha) = [A, alpha]; constant along the line (A + t alpha, alpha).
template <class Scalar>
Matrix<Scalar> momentum_map(const CotangentPoint<Scalar>& x) {
  return commutator<Scalar>(x.A, x.alpha);
}

/// h(A, alpha) = 1/2 Tr(alpha^2), the Hamiltonian of straight lines.
template <class Scalar>
double hamiltonian_ambient(const CotangentPoint<Scalar>& x) {
  return 0.5 * real_part(Scalar((x.alpha * x.alpha).trace()));
}

/// Group element g with g A g^-1 diagonal sorted, plus what the normalization
/// left unfixed.
template <class Scalar>
struct GaugeFrame {
  Matrix<Scalar> g;
  /// Index classes that were phase-normalized together. Relative phases
  /// (signs, in the real model) between different classes remain free.
  std::vector<std::vector<int>> residual;

  std::string describe_residual() const {
    std::ostringstream os;
    if (residual.size() <= 1) {
      os << "none";
      return os.str();
    }
    os << residual.size() - 1 << " free relative " << (is_complex_v<Scalar> ? "phase" : "sign")
       << (residual.size() > 2 ? "s" : "") << " between classes";
    for (const auto& cls : residual) {
      os << " {";
      for (std::size_t k = 0; k < cls.size(); ++k) os << (k ? "," : "") << cls[k] + 1;
      os << "}";
    }
    return os.str();
  }
};

/// Relative threshold below which spin entries are treated as zero when
/// fixing the torus gauge.
inline constexpr double kGaugeThreshold = 1e-9;

namespace detail {

struct DisjointSets {
  std::vector<int> parent;
  explicit DisjointSets(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
};

/// Fixes the residual torus gauge of Y in place: scanning (i, j), i > j,
/// lexicographically, the first entry linking two unlinked index classes is
/// rotated onto the positive imaginary axis (Hermitian) or made positive
/// (real). The same diagonal phase matrix d is applied to `others` as
/// d M d^* and written to `d`.
template <class Scalar>
void torus_gauge(Matrix<Scalar>& Y, std::vector<Matrix<Scalar>*> others,
                 std::vector<std::vector<int>>& classes,
                 Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& d) {
  const int n = int(Y.rows());
  DisjointSets sets(n);
  std::vector<std::vector<int>> members(n);
  for (int i = 0; i < n; ++i) members[i] = {i};
  d = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Ones(n);
  const double threshold = kGaugeThreshold * std::max(1.0, Y.cwiseAbs().maxCoeff());

  auto rotate = [&](const std::vector<int>& cls, Scalar phase) {
    for (Matrix<Scalar>* m : others) {
      for (int k : cls) {
        m->row(k) *= phase;
        m->col(k) *= conj(phase);
      }
    }
    for (int k : cls) {
      Y.row(k) *= phase;
      Y.col(k) *= conj(phase);
      d[k] *= phase;
    }
  };

  for (int i = 1; i < n; ++i) {
    for (int j = 0; j < i; ++j) {
      if (std::abs(Y(i, j)) <= threshold) continue;
      const int ri = sets.find(i);
      const int rj = sets.find(j);
      if (ri == rj) continue;
      const Scalar y = Y(i, j);
      Scalar phase;
      if constexpr (is_complex_v<Scalar>) {
        // e^{i theta} y = i |y|
        phase = Complex(0.0, 1.0) * std::abs(y) / y;
      } else {
        phase = y > 0 ? 1.0 : -1.0;
      }
      rotate(members[ri], phase);
      members[rj].insert(members[rj].end(), members[ri].begin(), members[ri].end());
      members[ri].clear();
      sets.parent[ri] = rj;
    }
  }
  classes.clear();
  for (int r = 0; r < n; ++r) {
    if (sets.find(r) == r) {
      auto cls = members[r];
      std::sort(cls.begin(), cls.end());
      classes.push_back(std::move(cls));
    }
  }
  std::sort(classes.begin(), classes.end());
}

/// Eigenvectors sorted by non-increasing eigenvalue, each column scaled so
/// that its largest-magnitude component is positive real.
template <class Scalar>
std::pair<Vector, Matrix<Scalar>> sorted_eigensystem(const Matrix<Scalar>& m) {
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(m);
  if (es.info() != Eigen::Success) throw InputError("eigensolver failed to converge");
  const auto n = m.rows();
  Vector values = es.eigenvalues().reverse();
  Matrix<Scalar> vectors = es.eigenvectors().rowwise().reverse();
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::Index k = 0;
    vectors.col(j).cwiseAbs().maxCoeff(&k);
    const Scalar c = vectors(k, j);
    vectors.col(j) *= std::abs(c) / c;
  }
  return {std::move(values), std::move(vectors)};
}

}  // namespace detail

/// Applies the torus gauge convention to an already diagonal reduced state.
template <class Scalar>
ReducedState<Scalar> normalize_gauge(ReducedState<Scalar> s,
                                     std::vector<std::vector<int>>* classes = nullptr) {
  std::vector<std::vector<int>> cls;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> d;
  detail::torus_gauge<Scalar>(s.Y, {}, cls, d);
  if (classes) *classes = std::move(cls);
  return s;
}

/// Reduces (A, alpha) to chamber coordinates. Degenerate eigenvalue blocks
/// (consecutive gaps <= tol) are set exactly equal, alpha is diagonalized
/// inside each block with non-increasing diagonal, and the torus gauge is
/// fixed on Y.
template <class Scalar>
std::pair<ReducedState<Scalar>, GaugeFrame<Scalar>> reduce(const CotangentPoint<Scalar>& x,
                                                           double tol = kDefaultDegeneracyTol) {
  x.validate();
  const int n = x.dim();
  auto [values, U] = detail::sorted_eigensystem<Scalar>(x.A);

  const Partition blocks = multiplicity_partition({values.data(), std::size_t(n)}, tol);
  Matrix<Scalar> alpha = U.adjoint() * x.alpha * U;
  int start = 0;
  for (int size : blocks) {
    if (size > 1) {
      const double mean = values.segment(start, size).mean();
      values.segment(start, size).setConstant(mean);
      const Matrix<Scalar> sub = alpha.block(start, start, size, size);
      const Matrix<Scalar> sub_h = 0.5 * (sub + sub.adjoint());
      auto [sub_values, W] = detail::sorted_eigensystem<Scalar>(sub_h);
      U.middleCols(start, size) = (U.middleCols(start, size) * W).eval();
    }
    start += size;
  }
  if (blocks.size() < std::size_t(n)) alpha = U.adjoint() * x.alpha * U;

  Matrix<Scalar> Y(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) Y(i, j) = (values[i] - values[j]) * alpha(i, j);
  }
  // Y_ij = alpha_ij (a_i - a_j) is exactly zero on the diagonal and inside
  // degenerate blocks; clear the in-block alpha noise as well.
  start = 0;
  for (int size : blocks) {
    for (int i = start; i < start + size; ++i) {
      for (int j = start; j < start + size; ++j) {
        if (i != j) alpha(i, j) = Scalar(0);
      }
    }
    start += size;
  }

  GaugeFrame<Scalar> frame;
  Matrix<Scalar> g = U.adjoint();
  // Rotating rows of g by d gives g' = d g, so g' A g'^* = d D d^* = D.
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> d;
  detail::torus_gauge<Scalar>(Y, {&alpha}, frame.residual, d);
  frame.g = d.asDiagonal() * g;

  ReducedState<Scalar> s;
  s.a = std::move(values);
  s.p = alpha.diagonal().real();
  s.Y = std::move(Y);
  return {std::move(s), std::move(frame)};
}

/// Ambient representative: A = diag(a), alpha_ii = p_i, and
/// alpha_ij = Y_ij / (a_i - a_j) off degenerate pairs.
template <class Scalar>
CotangentPoint<Scalar> reconstruct(const ReducedState<Scalar>& s,
                                   double tol = kDefaultDegeneracyTol) {
  validate_state(s, tol);
  const int n = s.dim();
  CotangentPoint<Scalar> x;
  x.A = Matrix<Scalar>::Zero(n, n);
  x.alpha = Matrix<Scalar>::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    x.A(i, i) = s.a[i];
    x.alpha(i, i) = s.p[i];
    for (int j = 0; j < n; ++j) {
      const double gap = s.a[i] - s.a[j];
      if (i != j && std::abs(gap) > tol) x.alpha(i, j) = s.Y(i, j) / gap;
    }
  }
  return x;
}

}  // namespace orbitflow
