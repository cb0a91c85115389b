#pragma once

// The orbit space V/G of a matrix model as a metric space. Orbits are
// represented by their chamber point (sorted spectrum); the quotient
// distance is the Euclidean distance between chamber points.

#include "orbitflow/core.hpp"

#include <numbers>
#include <numeric>
#include <span>

namespace orbitflow {

inline constexpr double kDefaultDegeneracyTol = 1e-8;

/// Eigenvalue multiplicity pattern, e.g. {2, 1} for (5, 5, 1).
using Partition = std::vector<int>;

/// Group sizes of the maximal runs of `values` whose consecutive gaps are
/// at most `tol`. `values` must already be sorted.
inline Partition multiplicity_partition(std::span<const double> values, double tol) {
  Partition out;
  if (values.empty()) return out;
  int run = 1;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i - 1] - values[i] <= tol) {
      ++run;
    } else {
      out.push_back(run);
      run = 1;
    }
  }
  out.push_back(run);
  return out;
}

/// True if every block of `fine` lies inside a block of `coarse`
/// (equivalently the block boundaries of `coarse` are boundaries of `fine`).
inline bool refines(const Partition& fine, const Partition& coarse) {
  auto boundaries = [](const Partition& p) {
    std::vector<int> b;
    int acc = 0;
    for (int s : p) b.push_back(acc += s);
    return b;
  };
  const auto bf = boundaries(fine);
  const auto bc = boundaries(coarse);
  if (bf.empty() || bc.empty() || bf.back() != bc.back()) return false;
  return std::includes(bf.begin(), bf.end(), bc.begin(), bc.end());
}

/// A point of the closed Weyl chamber a_1 >= ... >= a_n.
class ChamberPoint {
 public:
  explicit ChamberPoint(Vector values, double tol = kDefaultDegeneracyTol)
      : values_(std::move(values)), tol_(tol) {
    if (values_.size() == 0) throw InputError("ChamberPoint: empty");
    if (!(tol_ >= 0)) throw InputError("ChamberPoint: tolerance must be >= 0");
    for (Eigen::Index i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i])) throw InputError("ChamberPoint: non-finite value");
      if (i > 0 && values_[i] > values_[i - 1]) {
        throw InputError("ChamberPoint: values must be non-increasing");
      }
    }
    partition_ = multiplicity_partition({values_.data(), std::size_t(values_.size())}, tol_);
  }

  ChamberPoint(std::initializer_list<double> values, double tol = kDefaultDegeneracyTol)
      : ChamberPoint(Vector::Map(values.begin(), Eigen::Index(values.size())), tol) {}

  const Vector& values() const { return values_; }
  int dim() const { return int(values_.size()); }
  double tolerance() const { return tol_; }
  const Partition& partition() const { return partition_; }
  bool regular() const { return Eigen::Index(partition_.size()) == values_.size(); }

 private:
  Vector values_;
  double tol_;
  Partition partition_;
};

/// Chamber representative of the orbit through A.
template <class Scalar>
ChamberPoint chamber_map(const Matrix<Scalar>& a, const MatrixModel& model,
                         double tol = kDefaultDegeneracyTol) {
  if (model.kind == ModelKind::real_symmetric && is_complex_v<Scalar>) {
    if (a.imag().cwiseAbs().maxCoeff() > kHermitianValidation) {
      throw InputError("chamber_map: complex entries in a real symmetric model");
    }
  }
  if (a.rows() != model.n) throw InputError("chamber_map: dimension does not match model");
  require_hermitian(a, "chamber_map");
  return ChamberPoint(sorted_spectrum<Scalar>(a), tol);
}

inline void require_same_dim(const ChamberPoint& p, const ChamberPoint& q) {
  if (p.dim() != q.dim()) throw InputError("chamber points of different dimension");
}

/// Quotient distance d(pi(A), pi(B)).
inline double distance(const ChamberPoint& p, const ChamberPoint& q) {
  require_same_dim(p, q);
  return (p.values() - q.values()).norm();
}

/// The unique minimal geodesic segment between two orbits: affine in chamber
/// coordinates.
class MinimalSegment {
 public:
  MinimalSegment(ChamberPoint start, ChamberPoint end)
      : start_(std::move(start)), end_(std::move(end)) {
    require_same_dim(start_, end_);
    length_ = distance(start_, end_);
  }

  const ChamberPoint& start() const { return start_; }
  const ChamberPoint& end() const { return end_; }
  double length() const { return length_; }

  /// Point at parameter t in [0, 1]. Convex combinations of sorted vectors
  /// are sorted, so this never leaves the chamber.
  ChamberPoint at(double t) const {
    Vector v = (1.0 - t) * start_.values() + t * end_.values();
    // Rounding can break ties by one ulp in the wrong direction.
    for (Eigen::Index i = 1; i < v.size(); ++i) v[i] = std::min(v[i], v[i - 1]);
    return ChamberPoint(std::move(v), start_.tolerance());
  }

 private:
  ChamberPoint start_;
  ChamberPoint end_;
  double length_ = 0;
};

inline MinimalSegment minimal_segment(const ChamberPoint& p, const ChamberPoint& q) {
  return MinimalSegment(p, q);
}

/// Isotropy type of the orbit: its multiplicity partition. The principal
/// stratum is the all-ones partition.
inline Partition strata_type(const ChamberPoint& p) { return p.partition(); }

/// Interior isotropy is contained in the endpoint isotropy: every sampled
/// interior partition refines both endpoint partitions.
inline bool segment_stratum_check(const MinimalSegment& s, int samples) {
  if (samples < 1) throw InputError("segment_stratum_check: samples must be >= 1");
  const Partition& ps = s.start().partition();
  const Partition& pe = s.end().partition();
  for (int k = 1; k <= samples; ++k) {
    const ChamberPoint x = s.at(double(k) / double(samples + 1));
    if (!refines(x.partition(), ps) || !refines(x.partition(), pe)) return false;
  }
  return true;
}

namespace detail {

inline double euclidean_angle(const Vector& u, const Vector& v) {
  const double c = u.dot(v) / (u.norm() * v.norm());
  return std::acos(std::clamp(c, -1.0, 1.0));
}

/// Calls f(perm) for every permutation preserving the given blocks.
template <class F>
void for_each_block_permutation(const Partition& blocks, F&& f) {
  const int n = std::accumulate(blocks.begin(), blocks.end(), 0);
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> starts;
  int acc = 0;
  for (int b : blocks) {
    starts.push_back(acc);
    acc += b;
  }
  // Odometer over the blocks; each block cycles through its permutations.
  while (true) {
    f(std::as_const(perm));
    std::size_t k = 0;
    for (; k < blocks.size(); ++k) {
      auto first = perm.begin() + starts[k];
      if (std::next_permutation(first, first + blocks[k])) break;
    }
    if (k == blocks.size()) return;
  }
}

}  // namespace detail

/// Angle between two minimal geodesic rays leaving p with chamber-coordinate
/// directions u, v: the minimum over the Weyl stabilizer of p.
inline double segment_angle(const ChamberPoint& p, const Vector& u, const Vector& v,
                            const MatrixModel& model) {
  if (model.n != p.dim() || u.size() != p.dim() || v.size() != p.dim()) {
    throw InputError("segment_angle: dimension mismatch");
  }
  if (u.norm() == 0 || v.norm() == 0) throw InputError("segment_angle: zero direction");
  double best = std::numbers::pi;
  Vector w(v.size());
  detail::for_each_block_permutation(p.partition(), [&](const std::vector<int>& perm) {
    for (Eigen::Index i = 0; i < v.size(); ++i) w[i] = v[perm[i]];
    best = std::min(best, detail::euclidean_angle(u, w));
  });
  return best;
}

}  // namespace orbitflow
