#pragma once

// Polar representations through their restricted root data.
//
// The Lie algebra l = g + V is described by an orthonormal basis
//   h^k (Cartan part of g commuting with the section), s^k (section basis),
//   E_r^i in g and B_r^i in V for each positive restricted root r,
// with structure constants given as a sparse bracket table. For A in the
// section, [A, E_r^i] = r(A) B_r^i and [A, B_r^i] = r(A) E_r^i.

#include "orbitflow/core.hpp"
#include "orbitflow/dynamics.hpp"
#include "orbitflow/integrate.hpp"
#include "orbitflow/reduction.hpp"

#include <map>
#include <optional>
#include <string>

namespace orbitflow {

enum class BasisPart { h, s, E, B };

struct BasisLabel {
  BasisPart part = BasisPart::s;
  int root = -1;  // positive-root index for E/B, -1 otherwise
  int index = 0;  // 0-based within the part (or within the root space)
  friend bool operator==(const BasisLabel&, const BasisLabel&) = default;
};

struct RestrictedRoot {
  Vector coeffs;  // in the orthonormal section basis
  int multiplicity = 1;
};

class RestrictedRootSystem {
 public:
  using Expansion = std::vector<std::pair<int, double>>;

  RestrictedRootSystem(int section_dim, int h_dim, std::vector<RestrictedRoot> roots)
      : section_dim_(section_dim), h_dim_(h_dim), roots_(std::move(roots)) {
    if (section_dim_ < 1 || h_dim_ < 0) throw InputError("root system: bad dimensions");
    int offset = h_dim_ + section_dim_;
    for (const auto& r : roots_) {
      if (r.coeffs.size() != section_dim_) throw InputError("root system: root has wrong length");
      if (r.multiplicity < 1) throw InputError("root system: multiplicity must be >= 1");
      if (r.coeffs.norm() == 0) throw InputError("root system: zero root");
      e_offset_.push_back(offset);
      offset += r.multiplicity;
      b_offset_.push_back(offset);
      offset += r.multiplicity;
    }
    dim_ = offset;
    table_.assign(std::size_t(dim_) * std::size_t(dim_), {});
  }

  int section_dim() const { return section_dim_; }
  int h_dim() const { return h_dim_; }
  int root_count() const { return int(roots_.size()); }
  const std::vector<RestrictedRoot>& roots() const { return roots_; }
  const RestrictedRoot& root(int r) const { return roots_.at(std::size_t(r)); }
  /// Dimension of l.
  int dim() const { return dim_; }

  int index_of(const BasisLabel& l) const {
    switch (l.part) {
      case BasisPart::h:
        check(l.index >= 0 && l.index < h_dim_);
        return l.index;
      case BasisPart::s:
        check(l.index >= 0 && l.index < section_dim_);
        return h_dim_ + l.index;
      case BasisPart::E:
        check(l.root >= 0 && l.root < root_count() && l.index >= 0 &&
              l.index < roots_[std::size_t(l.root)].multiplicity);
        return e_offset_[std::size_t(l.root)] + l.index;
      case BasisPart::B:
        check(l.root >= 0 && l.root < root_count() && l.index >= 0 &&
              l.index < roots_[std::size_t(l.root)].multiplicity);
        return b_offset_[std::size_t(l.root)] + l.index;
    }
    return -1;
  }

  BasisLabel label_of(int idx) const {
    check(idx >= 0 && idx < dim_);
    if (idx < h_dim_) return {BasisPart::h, -1, idx};
    if (idx < h_dim_ + section_dim_) return {BasisPart::s, -1, idx - h_dim_};
    for (int r = 0; r < root_count(); ++r) {
      const int k = roots_[std::size_t(r)].multiplicity;
      if (idx < e_offset_[std::size_t(r)] + k) return {BasisPart::E, r, idx - e_offset_[std::size_t(r)]};
      if (idx < b_offset_[std::size_t(r)] + k) return {BasisPart::B, r, idx - b_offset_[std::size_t(r)]};
    }
    return {};
  }

  int e_index(int r, int i) const { return e_offset_[std::size_t(r)] + i; }
  int b_index(int r, int i) const { return b_offset_[std::size_t(r)] + i; }

  /// Sets the expansion of [x, y]. Entries are stored as given: the table is
  /// not antisymmetrized, so inconsistent data stays detectable.
  void set_bracket(int x, int y, Expansion terms) {
    check(x >= 0 && x < dim_ && y >= 0 && y < dim_);
    for (const auto& [z, v] : terms) check(z >= 0 && z < dim_ && std::isfinite(v));
    table_[std::size_t(x) * std::size_t(dim_) + std::size_t(y)] = std::move(terms);
  }
  void add_bracket_term(int x, int y, int z, double value) {
    check(x >= 0 && x < dim_ && y >= 0 && y < dim_ && z >= 0 && z < dim_);
    table_[std::size_t(x) * std::size_t(dim_) + std::size_t(y)].emplace_back(z, value);
  }
  const Expansion& bracket_terms(int x, int y) const {
    return table_[std::size_t(x) * std::size_t(dim_) + std::size_t(y)];
  }

  /// [x, y] for coordinate vectors of l.
  Vector bracket(const Vector& x, const Vector& y) const {
    Vector out = Vector::Zero(dim_);
    for (int a = 0; a < dim_; ++a) {
      if (x[a] == 0) continue;
      for (int b = 0; b < dim_; ++b) {
        if (y[b] == 0) continue;
        const double w = x[a] * y[b];
        for (const auto& [c, v] : bracket_terms(a, b)) out[c] += w * v;
      }
    }
    return out;
  }

  double root_value(int r, const Vector& section_point) const {
    return roots_[std::size_t(r)].coeffs.dot(section_point);
  }

  /// Closed chamber: r(x) >= -tol for every positive root.
  bool in_chamber(const Vector& x, double tol = 1e-12) const {
    for (int r = 0; r < root_count(); ++r) {
      if (root_value(r, x) < -tol * std::max(1.0, x.norm() * roots_[std::size_t(r)].coeffs.norm()))
        return false;
    }
    return true;
  }

  /// Orthogonal reflection in the wall r = 0.
  Vector reflect(int r, const Vector& v) const {
    const Vector& c = roots_[std::size_t(r)].coeffs;
    return v - (2.0 * c.dot(v) / c.squaredNorm()) * c;
  }

 private:
  static void check(bool ok) {
    if (!ok) throw InputError("root system: basis index out of range");
  }

  int section_dim_;
  int h_dim_;
  std::vector<RestrictedRoot> roots_;
  std::vector<int> e_offset_;
  std::vector<int> b_offset_;
  int dim_ = 0;
  std::vector<Expansion> table_;
};

/// Positive root index of e_i - e_j (i < j) in the builtin A_{n-1} data.
inline int a_type_root_index(int n, int i, int j) {
  // Roots are enumerated (0,1), (0,2), ..., (0,n-1), (1,2), ...
  return i * n - i * (i + 1) / 2 + (j - i - 1);
}

/// Matrix realization of the builtin basis: gl(n, C) = u(n) + H(n) for the
/// Hermitian model, gl(n, R) = so(n) + S(n) for the symmetric model.
inline std::vector<ComplexMatrix> builtin_basis_matrices(const MatrixModel& model) {
  const int n = model.n;
  const bool herm = model.kind == ModelKind::hermitian;
  const double r2 = 1.0 / std::sqrt(2.0);
  const Complex I(0.0, 1.0);
  auto unit = [n](int i, int j) {
    ComplexMatrix m = ComplexMatrix::Zero(n, n);
    m(i, j) = 1.0;
    return m;
  };
  std::vector<ComplexMatrix> basis;
  if (herm) {
    for (int k = 0; k < n; ++k) basis.push_back(I * unit(k, k));
  }
  for (int k = 0; k < n; ++k) basis.push_back(unit(k, k));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      basis.push_back(r2 * (unit(i, j) - unit(j, i)));
      if (herm) basis.push_back(r2 * I * (unit(i, j) + unit(j, i)));
      basis.push_back(r2 * (unit(i, j) + unit(j, i)));
      if (herm) basis.push_back(r2 * I * (unit(i, j) - unit(j, i)));
    }
  }
  return basis;
}

/// Type A_{n-1} restricted root data for the matrix models, with brackets
/// from explicit matrix commutators projected on the orthonormal basis
/// (<X, Y> = Re Tr(X Y^*)).
inline RestrictedRootSystem builtin_root_system(const MatrixModel& model) {
  const int n = model.n;
  const int k = model.kind == ModelKind::hermitian ? 2 : 1;
  std::vector<RestrictedRoot> roots;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      Vector c = Vector::Zero(n);
      c[i] = 1;
      c[j] = -1;
      roots.push_back({c, k});
    }
  }
  RestrictedRootSystem rs(n, k == 2 ? n : 0, std::move(roots));
  const auto basis = builtin_basis_matrices(model);
  const int d = rs.dim();
  for (int x = 0; x < d; ++x) {
    for (int y = 0; y < d; ++y) {
      const ComplexMatrix c = basis[std::size_t(x)] * basis[std::size_t(y)] -
                              basis[std::size_t(y)] * basis[std::size_t(x)];
      if (c.cwiseAbs().maxCoeff() == 0) continue;
      RestrictedRootSystem::Expansion terms;
      for (int z = 0; z < d; ++z) {
        const double v = (c.array() * basis[std::size_t(z)].conjugate().array()).sum().real();
        if (std::abs(v) > 1e-15) terms.emplace_back(z, v);
      }
      rs.set_bracket(x, y, std::move(terms));
    }
  }
  return rs;
}

struct RootSystemReport {
  double relation_defect = 0;     // [A, E] - r(A) B and [A, B] - r(A) E
  double antisymmetry_defect = 0; // [x, y] + [y, x]
  double jacobi_defect = 0;       // on sampled basis triples
  double tolerance = 1e-10;
  bool passed() const {
    return relation_defect < tolerance && antisymmetry_defect < tolerance &&
           jacobi_defect < tolerance;
  }
};

/// Checks the defining relations on `samples` random section points, plus
/// antisymmetry on all basis pairs and the Jacobi identity on sampled basis
/// triples. Failures are reported, not thrown.
inline RootSystemReport verify_root_system(const RestrictedRootSystem& rs, int samples,
                                           unsigned seed = 1) {
  if (samples < 1) throw InputError("verify_root_system: samples must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_int_distribution<int> pick(0, rs.dim() - 1);
  RootSystemReport report;
  const int d = rs.dim();
  auto unit = [d](int i) {
    Vector v = Vector::Zero(d);
    v[i] = 1;
    return v;
  };
  for (int s = 0; s < samples; ++s) {
    Vector section(rs.section_dim());
    for (auto& c : section) c = gauss(rng);
    Vector a = Vector::Zero(d);
    for (int k = 0; k < rs.section_dim(); ++k) a[rs.index_of({BasisPart::s, -1, k})] = section[k];
    for (int r = 0; r < rs.root_count(); ++r) {
      const double lam = rs.root_value(r, section);
      for (int i = 0; i < rs.root(r).multiplicity; ++i) {
        const int e = rs.e_index(r, i);
        const int b = rs.b_index(r, i);
        const Vector ae = rs.bracket(a, unit(e)) - lam * unit(b);
        const Vector ab = rs.bracket(a, unit(b)) - lam * unit(e);
        const double scale = std::max(1.0, std::abs(lam));
        report.relation_defect =
            std::max(report.relation_defect, std::max(ae.cwiseAbs().maxCoeff(),
                                                      ab.cwiseAbs().maxCoeff()) / scale);
      }
    }
    for (int t = 0; t < 8; ++t) {
      const Vector x = unit(pick(rng));
      const Vector y = unit(pick(rng));
      const Vector z = unit(pick(rng));
      const Vector jac = rs.bracket(x, rs.bracket(y, z)) + rs.bracket(y, rs.bracket(z, x)) +
                         rs.bracket(z, rs.bracket(x, y));
      report.jacobi_defect = std::max(report.jacobi_defect, jac.cwiseAbs().maxCoeff());
    }
  }
  for (int x = 0; x < d; ++x) {
    for (int y = 0; y < d; ++y) {
      const Vector sum = rs.bracket(unit(x), unit(y)) + rs.bracket(unit(y), unit(x));
      report.antisymmetry_defect = std::max(report.antisymmetry_defect, sum.cwiseAbs().maxCoeff());
    }
  }
  return report;
}

/// Reduced coordinates at a point of the chamber: section position A0,
/// section momentum p0, and the spin components Y_r = (Y_r^i) per root.
struct PolarReducedState {
  Vector A0;
  Vector p0;
  std::vector<Vector> Yroots;
};

struct PolarDerivative {
  Vector dA0;
  Vector dp0;
  std::vector<Vector> dY;
};

inline void validate_polar_state(const PolarReducedState& s, const RestrictedRootSystem& rs,
                                 double tol = kDefaultDegeneracyTol) {
  if (s.A0.size() != rs.section_dim() || s.p0.size() != rs.section_dim() ||
      int(s.Yroots.size()) != rs.root_count()) {
    throw InvariantError("PolarReducedState: inconsistent dimensions");
  }
  for (int r = 0; r < rs.root_count(); ++r) {
    if (s.Yroots[std::size_t(r)].size() != rs.root(r).multiplicity) {
      throw InvariantError("PolarReducedState: spin component has wrong multiplicity");
    }
    const double lam = rs.root_value(r, s.A0);
    if (lam < -tol) throw InvariantError("PolarReducedState: A0 outside the chamber");
    if (std::abs(lam) <= tol && s.Yroots[std::size_t(r)].norm() > 1e-10) {
      throw InvariantError("PolarReducedState: nonzero spin on a vanishing root");
    }
  }
}

/// Roots with r(A0) within tol of zero; excluded from forces and from Z.
inline std::vector<bool> vanishing_roots(const PolarReducedState& s,
                                         const RestrictedRootSystem& rs,
                                         double tol = kDefaultDegeneracyTol) {
  std::vector<bool> out(std::size_t(rs.root_count()));
  for (int r = 0; r < rs.root_count(); ++r) out[std::size_t(r)] = std::abs(rs.root_value(r, s.A0)) <= tol;
  return out;
}

namespace detail {

inline Vector spin_in_algebra(const std::vector<Vector>& per_root, const RestrictedRootSystem& rs,
                              const std::vector<double>& weights = {}) {
  Vector y = Vector::Zero(rs.dim());
  for (int r = 0; r < rs.root_count(); ++r) {
    const double w = weights.empty() ? 1.0 : weights[std::size_t(r)];
    for (int i = 0; i < rs.root(r).multiplicity; ++i) {
      y[rs.e_index(r, i)] = w * per_root[std::size_t(r)][i];
    }
  }
  return y;
}

}  // namespace detail

/// The reduced ballistic equations on a section:
///   <A'', .> = sum_r |Y_r|^2 / r(A)^3 r,   Y' = -[Y, Z],   Z = sum_r Y_r / r(A)^2,
/// with r over positive roots and excluded (vanishing) roots dropped.
inline PolarDerivative polar_vector_field(const PolarReducedState& s,
                                          const RestrictedRootSystem& rs,
                                          const std::vector<bool>& excluded = {},
                                          SpinSign sign = SpinSign::standard) {
  PolarDerivative out;
  out.dA0 = s.p0;
  out.dp0 = Vector::Zero(rs.section_dim());
  std::vector<double> zweight(std::size_t(rs.root_count()), 0.0);
  for (int r = 0; r < rs.root_count(); ++r) {
    if (!excluded.empty() && excluded[std::size_t(r)]) continue;
    const double norm2 = s.Yroots[std::size_t(r)].squaredNorm();
    if (norm2 == 0) continue;
    const double lam = rs.root_value(r, s.A0);
    out.dp0 += (norm2 / (lam * lam * lam)) * rs.root(r).coeffs;
    zweight[std::size_t(r)] = 1.0 / (lam * lam);
  }
  const Vector y = detail::spin_in_algebra(s.Yroots, rs);
  const Vector z = detail::spin_in_algebra(s.Yroots, rs, zweight);
  const Vector dy = -double(int(sign)) * rs.bracket(y, z);
  out.dY.resize(std::size_t(rs.root_count()));
  for (int r = 0; r < rs.root_count(); ++r) {
    Vector comp(rs.root(r).multiplicity);
    for (int i = 0; i < rs.root(r).multiplicity; ++i) comp[i] = dy[rs.e_index(r, i)];
    out.dY[std::size_t(r)] = std::move(comp);
  }
  return out;
}

/// 1/2 |p0|^2 + 1/2 sum_r |Y_r|^2 / r(A0)^2.
inline double polar_hamiltonian(const PolarReducedState& s, const RestrictedRootSystem& rs,
                                const std::vector<bool>& excluded = {}) {
  double h = 0.5 * s.p0.squaredNorm();
  for (int r = 0; r < rs.root_count(); ++r) {
    if (!excluded.empty() && excluded[std::size_t(r)]) continue;
    const double norm2 = s.Yroots[std::size_t(r)].squaredNorm();
    if (norm2 == 0) continue;
    const double lam = rs.root_value(r, s.A0);
    h += 0.5 * norm2 / (lam * lam);
  }
  return h;
}

/// Tr(ad_Y^{2k}) on l, k = 1..kmax: Ad-invariant, hence constant along the
/// spin flow.
inline Vector polar_casimirs(const std::vector<Vector>& Yroots, const RestrictedRootSystem& rs,
                             int kmax) {
  if (kmax < 1) throw InputError("polar_casimirs: kmax must be >= 1");
  const Vector y = detail::spin_in_algebra(Yroots, rs);
  const int d = rs.dim();
  RealMatrix ad(d, d);
  for (int b = 0; b < d; ++b) {
    Vector e = Vector::Zero(d);
    e[b] = 1;
    ad.col(b) = rs.bracket(y, e);
  }
  const RealMatrix ad2 = ad * ad;
  RealMatrix power = ad2;
  Vector out(kmax);
  for (int k = 0; k < kmax; ++k) {
    out[k] = power.trace();
    if (k + 1 < kmax) power = (power * ad2).eval();
  }
  return out;
}

/// Dictionary between matrix-model reduced states and A_{n-1} polar states:
/// Y_r = sqrt(2) (Re Y_ij, Im Y_ij) for r = e_i - e_j, i < j.
template <class Scalar>
PolarReducedState to_polar_state(const ReducedState<Scalar>& s) {
  const int n = s.dim();
  PolarReducedState out{s.a, s.p, {}};
  const double r2 = std::sqrt(2.0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      Vector c(is_complex_v<Scalar> ? 2 : 1);
      c[0] = r2 * real_part(s.Y(i, j));
      if constexpr (is_complex_v<Scalar>) c[1] = r2 * imag_part(s.Y(i, j));
      out.Yroots.push_back(std::move(c));
    }
  }
  return out;
}

template <class Scalar>
ReducedState<Scalar> from_polar_state(const PolarReducedState& s) {
  const int n = int(s.A0.size());
  ReducedState<Scalar> out{s.A0, s.p0, Matrix<Scalar>::Zero(n, n)};
  const double r2 = std::sqrt(2.0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const Vector& c = s.Yroots[std::size_t(a_type_root_index(n, i, j))];
      Scalar y;
      if constexpr (is_complex_v<Scalar>) {
        y = Scalar(c[0], c[1]) / r2;
      } else {
        y = c[0] / r2;
      }
      out.Y(i, j) = y;
      out.Y(j, i) = -conj(y);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Geodesic billiards in the Weyl chamber.

struct BilliardEvent {
  double time = 0;
  std::vector<int> walls;  // roots reflected in, in application order
  Vector position;
  Vector v_in;
  Vector v_out;
  bool corner() const { return walls.size() > 1; }
};

struct BilliardPath {
  std::vector<double> vertex_times;
  std::vector<Vector> vertices;
  std::vector<Vector> velocities;  // velocity leaving each vertex
  std::vector<BilliardEvent> events;

  Vector position(double t) const {
    std::size_t k = 0;
    while (k + 1 < vertex_times.size() && vertex_times[k + 1] <= t) ++k;
    return vertices[k] + (t - vertex_times[k]) * velocities[k];
  }
};

/// Straight line x0 + t v reflected at the chamber walls. Wall hits are
/// solved exactly (paths are affine between events); simultaneous hits are
/// resolved by reflecting in each violated wall until v points back into
/// the closed chamber.
inline BilliardPath billiard_geodesic(const RestrictedRootSystem& rs, const Vector& x0,
                                      const Vector& v0, double t_end) {
  if (x0.size() != rs.section_dim() || v0.size() != rs.section_dim()) {
    throw InputError("billiard_geodesic: dimension mismatch");
  }
  if (v0.norm() == 0) throw InputError("billiard_geodesic: zero initial direction");
  if (!(t_end >= 0)) throw InputError("billiard_geodesic: t_end must be >= 0");
  if (!rs.in_chamber(x0, 1e-12)) throw InputError("billiard_geodesic: x0 outside the chamber");

  const double speed = v0.norm();
  auto on_wall = [&](int r, const Vector& x) {
    const double scale = std::max(1.0, x.norm()) * rs.root(r).coeffs.norm();
    return std::abs(rs.root_value(r, x)) <= 1e-12 * scale;
  };
  auto leaving = [&](int r, const Vector& v) {
    return rs.root_value(r, v) < -1e-14 * speed * rs.root(r).coeffs.norm();
  };

  BilliardPath path;
  double t = 0;
  Vector x = x0;
  Vector v = v0;

  auto reflect_here = [&](double time) {
    BilliardEvent ev{time, {}, x, v, v};
    for (int guard = 0; guard < 10000; ++guard) {
      int hit = -1;
      for (int r = 0; r < rs.root_count(); ++r) {
        if (on_wall(r, x) && leaving(r, v)) {
          hit = r;
          break;
        }
      }
      if (hit < 0) break;
      v = rs.reflect(hit, v);
      ev.walls.push_back(hit);
    }
    if (!ev.walls.empty()) {
      ev.v_out = v;
      path.events.push_back(std::move(ev));
    }
  };

  reflect_here(0.0);
  path.vertex_times.push_back(0.0);
  path.vertices.push_back(x);
  path.velocities.push_back(v);

  while (true) {
    double tau = std::numeric_limits<double>::infinity();
    for (int r = 0; r < rs.root_count(); ++r) {
      const double rv = rs.root_value(r, v);
      if (!leaving(r, v) || on_wall(r, x)) continue;
      tau = std::min(tau, std::max(0.0, -rs.root_value(r, x) / rv));
    }
    if (t + tau >= t_end) {
      x += (t_end - t) * v;
      path.vertex_times.push_back(t_end);
      path.vertices.push_back(x);
      path.velocities.push_back(v);
      return path;
    }
    t += tau;
    x += tau * v;
    // Land exactly on the walls reached at this time.
    for (int r = 0; r < rs.root_count(); ++r) {
      const double lam = rs.root_value(r, x);
      const double scale = std::max(1.0, x.norm()) * rs.root(r).coeffs.norm();
      if (std::abs(lam) <= 1e-10 * scale && leaving(r, v)) {
        const Vector& c = rs.root(r).coeffs;
        x -= (lam / c.squaredNorm()) * c;
      }
    }
    reflect_here(t);
    path.vertex_times.push_back(t);
    path.vertices.push_back(x);
    path.velocities.push_back(v);
  }
}

// ---------------------------------------------------------------------------
// Integration of the polar reduced equations.

struct PolarTrajectory {
  std::vector<double> times;
  std::vector<PolarReducedState> states;
  std::vector<double> energy;
  std::vector<std::array<double, 3>> casimir;
  std::vector<double> min_root_value;  // min over interacting roots of r(A0)
  std::vector<TrajectoryEvent> events;  // i = root index
  std::vector<bool> excluded;
  double max_frozen_defect = 0;
  long steps_accepted = 0;
};

namespace detail {

inline Eigen::Index polar_packed_size(const RestrictedRootSystem& rs) {
  Eigen::Index m = 2 * rs.section_dim();
  for (const auto& r : rs.roots()) m += r.multiplicity;
  return m;
}

inline Vector pack_polar(const Vector& a, const Vector& p, const std::vector<Vector>& y) {
  Eigen::Index m = a.size() + p.size();
  for (const auto& c : y) m += c.size();
  Vector out(m);
  out << a, p, Vector::Zero(m - a.size() - p.size());
  Eigen::Index off = a.size() + p.size();
  for (const auto& c : y) {
    out.segment(off, c.size()) = c;
    off += c.size();
  }
  return out;
}

inline PolarReducedState unpack_polar(const Vector& v, const RestrictedRootSystem& rs) {
  const int d = rs.section_dim();
  PolarReducedState s{v.head(d), v.segment(d, d), {}};
  Eigen::Index off = 2 * d;
  for (const auto& r : rs.roots()) {
    s.Yroots.push_back(v.segment(off, r.multiplicity));
    off += r.multiplicity;
  }
  return s;
}

}  // namespace detail

/// Integrates the polar reduced equations. Roots vanishing at t = 0 are
/// excluded for the whole run and their spin components monitored. The
/// section coordinates are not folded back into the chamber: a sign change
/// of a non-interacting root is reported as a reflection event.
inline PolarTrajectory polar_integrate(const PolarReducedState& s0, const RestrictedRootSystem& rs,
                                       double t_end, const IntegrateOptions& opts = {}) {
  if (!(t_end > 0)) throw InputError("polar_integrate: t_end must be > 0");
  validate_polar_state(s0, rs, opts.degeneracy_tol);
  PolarTrajectory traj;
  traj.excluded = vanishing_roots(s0, rs, opts.degeneracy_tol);
  PolarReducedState start = s0;
  for (int r = 0; r < rs.root_count(); ++r) {
    if (traj.excluded[std::size_t(r)]) start.Yroots[std::size_t(r)].setZero();
  }
  const Vector y0 = detail::pack_polar(start.A0, start.p0, start.Yroots);

  auto rhs = [&](double, const Vector& y) {
    const auto s = detail::unpack_polar(y, rs);
    const auto f = polar_vector_field(s, rs, traj.excluded, opts.sign);
    return detail::pack_polar(f.dA0, f.dp0, f.dY);
  };
  auto min_root = [&](const PolarReducedState& s) {
    double g = std::numeric_limits<double>::infinity();
    int arg = -1;
    for (int r = 0; r < rs.root_count(); ++r) {
      if (traj.excluded[std::size_t(r)] || s.Yroots[std::size_t(r)].squaredNorm() == 0) continue;
      const double lam = rs.root_value(r, s.A0);
      if (lam < g) {
        g = lam;
        arg = r;
      }
    }
    return std::make_pair(g, arg);
  };
  auto record = [&](double t, const Vector& y) {
    auto s = detail::unpack_polar(y, rs);
    traj.times.push_back(t);
    traj.energy.push_back(polar_hamiltonian(s, rs, traj.excluded));
    const Vector c = polar_casimirs(s.Yroots, rs, 3);
    traj.casimir.push_back({c[0], c[1], c[2]});
    traj.min_root_value.push_back(min_root(s).first);
    traj.states.push_back(std::move(s));
  };

  const auto grid = detail::sample_grid<double>(t_end, opts);
  std::size_t next = 0;
  while (next < grid.size() && grid[next] <= 0.0) {
    record(0.0, y0);
    ++next;
  }
  double last_floor_event = -1;
  auto admit = [&](double t, const Vector& y) {
    const auto [g, arg] = min_root(detail::unpack_polar(y, rs));
    if (g >= opts.gap_floor) return true;
    if (t != last_floor_event) {
      traj.events.push_back({t, EventKind::gap_floor, arg, -1});
      last_floor_event = t;
    }
    return false;
  };
  bool frozen_flagged = false;
  auto on_step = [&](double t0, const Vector& ya, const Vector& fa, double t1, const Vector& yb,
                     const Vector& fb) {
    const auto sa = detail::unpack_polar(ya, rs);
    const auto sb = detail::unpack_polar(yb, rs);
    double defect = 0;
    for (int r = 0; r < rs.root_count(); ++r) {
      if (traj.excluded[std::size_t(r)]) {
        defect = std::max(defect, sb.Yroots[std::size_t(r)].norm());
        continue;
      }
      const double d0 = rs.root_value(r, sa.A0);
      const double d1 = rs.root_value(r, sb.A0);
      if ((d0 > 0 && d1 < 0) || (d0 < 0 && d1 > 0)) {
        traj.events.push_back({t0 + (t1 - t0) * d0 / (d0 - d1), EventKind::reflection, r, -1});
      }
    }
    traj.max_frozen_defect = std::max(traj.max_frozen_defect, defect);
    if (defect > opts.frozen_monitor && !frozen_flagged) {
      traj.events.push_back({t1, EventKind::frozen_violation, -1, -1});
      frozen_flagged = true;
    }
    while (next < grid.size() && grid[next] <= t1) {
      const double ts = grid[next];
      record(ts, ts == t1 ? yb : hermite(t0, ya, fa, t1, yb, fb, ts));
      ++next;
    }
  };
  OdeOptions ode;
  ode.rtol = opts.rtol;
  ode.atol = opts.atol;
  ode.h_max = opts.h_max;
  try {
    traj.steps_accepted = DormandPrince(ode).solve(rhs, 0.0, y0, t_end, admit, on_step, grid).accepted;
  } catch (const StepUnderflow& e) {
    throw std::runtime_error(std::string("polar_integrate: ") + e.what());
  }
  return traj;
}

}  // namespace orbitflow
