#pragma once

// Ballistic curves as trajectories of the reduced field.
//
// Integration runs in labelled coordinates: coordinate i keeps its identity
// through the whole run. Reported states are permuted into chamber order, so
// a crossing of two non-interacting coordinates (Y_ij = 0) shows up as a
// reflection in the wall a_i = a_j, which is how geodesics (Y = 0) bounce.

#include "orbitflow/dynamics.hpp"
#include "orbitflow/ode.hpp"

#include <numeric>
#include <optional>
#include <string>

namespace orbitflow {

enum class EventKind {
  reflection,        // two non-interacting coordinates crossed (Weyl reflection)
  gap_floor,         // interacting gap fell below gap_floor, step rejected
  frozen_violation,  // spin entry on a frozen pair exceeded the monitor bound
};

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::reflection: return "reflection";
    case EventKind::gap_floor: return "gap_floor";
    case EventKind::frozen_violation: return "frozen_violation";
  }
  return "?";
}

struct TrajectoryEvent {
  double time = 0;
  EventKind kind = EventKind::reflection;
  int i = -1;  // labels of the pair involved (0-based, labelled coordinates)
  int j = -1;
};

struct IntegrateOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  /// Uniform samples over [0, t_end], endpoints included. Ignored when
  /// sample_times is non-empty.
  int samples = 200;
  std::vector<double> sample_times;
  /// Also report the state at every accepted step.
  bool include_steps = false;
  double gap_floor = 1e-7;
  double degeneracy_tol = kDefaultDegeneracyTol;
  /// Bound on |Y_ij| for pairs frozen at t = 0.
  double frozen_monitor = 1e-10;
  SpinSign sign = SpinSign::standard;
  double h_max = std::numeric_limits<double>::infinity();
};

struct TrajectoryMetadata {
  std::string sign_convention{kSignConvention};
  double rtol = 0;
  double atol = 0;
  double gap_floor = 0;
  bool sign_flipped = false;
};

/// Time-sampled reduced states with invariant diagnostics.
template <class Scalar>
struct Trajectory {
  std::vector<double> times;
  std::vector<ReducedState<Scalar>> states;  // chamber order
  std::vector<double> energy;
  std::vector<std::array<double, 3>> casimir;  // Tr((YY*)^k), k = 1..3
  std::vector<double> min_gap;
  std::vector<TrajectoryEvent> events;
  std::vector<double> step_times;
  PairMask frozen;  // labelled pairs frozen at t = 0
  double max_frozen_defect = 0;
  long steps_accepted = 0;
  long steps_rejected = 0;
  TrajectoryMetadata metadata;

  std::size_t size() const { return times.size(); }
  bool has_event(EventKind k) const {
    return std::any_of(events.begin(), events.end(), [k](const auto& e) { return e.kind == k; });
  }
  double max_energy_drift() const {
    double worst = 0;
    for (double e : energy) {
      worst = std::max(worst, std::abs(e - energy.front()) / std::max(1.0, std::abs(energy.front())));
    }
    return worst;
  }
  double max_casimir_drift() const {
    double worst = 0;
    for (const auto& c : casimir) {
      for (int k = 0; k < 3; ++k) {
        const double ref = casimir.front()[k];
        worst = std::max(worst, std::abs(c[k] - ref) / std::max(1.0, std::abs(ref)));
      }
    }
    return worst;
  }
};

/// Perturbation trajectory of the variational flow, in the same chamber
/// order as the accompanying states.
template <class Scalar>
struct VariationalTrajectory {
  Trajectory<Scalar> base;
  std::vector<ReducedDerivative<Scalar>> perturbations;
};

template <class Scalar>
class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, Trajectory<Scalar> partial_)
      : std::runtime_error(what), partial(std::move(partial_)) {}
  Trajectory<Scalar> partial;
};

namespace detail {

template <class Scalar>
constexpr int spin_blocks() {
  return is_complex_v<Scalar> ? 2 : 1;
}

template <class Scalar>
Eigen::Index packed_size(int n) {
  return 2 * n + spin_blocks<Scalar>() * n * n;
}

template <class Scalar>
void pack(const Vector& a, const Vector& p, const Matrix<Scalar>& Y, Eigen::Ref<Vector> out) {
  const int n = int(a.size());
  out.head(n) = a;
  out.segment(n, n) = p;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      out[2 * n + i * n + j] = real_part(Y(i, j));
      if constexpr (is_complex_v<Scalar>) out[2 * n + n * n + i * n + j] = imag_part(Y(i, j));
    }
  }
}

template <class Scalar>
void unpack(const Eigen::Ref<const Vector>& in, int n, Vector& a, Vector& p, Matrix<Scalar>& Y) {
  a = in.head(n);
  p = in.segment(n, n);
  Y.resize(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if constexpr (is_complex_v<Scalar>) {
        Y(i, j) = Scalar(in[2 * n + i * n + j], in[2 * n + n * n + i * n + j]);
      } else {
        Y(i, j) = in[2 * n + i * n + j];
      }
    }
  }
}

template <class Scalar>
ReducedState<Scalar> unpack_state(const Eigen::Ref<const Vector>& in, int n) {
  ReducedState<Scalar> s;
  unpack<Scalar>(in, n, s.a, s.p, s.Y);
  return s;
}

/// Stable ordering of labels by non-increasing a.
inline std::vector<int> chamber_order(const Vector& a) {
  std::vector<int> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](int x, int y) { return a[x] > a[y]; });
  return perm;
}

template <class Scalar>
Matrix<Scalar> permute(const Matrix<Scalar>& m, const std::vector<int>& perm) {
  const int n = int(perm.size());
  Matrix<Scalar> out(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) out(i, j) = m(perm[i], perm[j]);
  }
  return out;
}

inline Vector permute(const Vector& v, const std::vector<int>& perm) {
  Vector out(v.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out[Eigen::Index(i)] = v[perm[i]];
  return out;
}

inline double min_gap(const Vector& a) {
  double g = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    for (Eigen::Index j = i + 1; j < a.size(); ++j) g = std::min(g, std::abs(a[i] - a[j]));
  }
  return g;
}

template <class Scalar>
std::vector<double> sample_grid(double t_end, const IntegrateOptions& opts) {
  std::vector<double> times = opts.sample_times;
  if (times.empty()) {
    const int m = std::max(opts.samples, 2);
    for (int k = 0; k < m; ++k) times.push_back(t_end * double(k) / double(m - 1));
    times.back() = t_end;
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  for (double t : times) {
    if (t < 0 || t > t_end) throw InputError("sample time outside [0, t_end]");
  }
  return times;
}

/// Shared driver for integrate() and variational_flow(). When `ds0` is set,
/// the tangent perturbation is carried along as a second packed block.
template <class Scalar>
VariationalTrajectory<Scalar> run(const ReducedState<Scalar>& s0,
                                  const ReducedDerivative<Scalar>* ds0, double t_end,
                                  const IntegrateOptions& opts) {
  if (!(t_end > 0)) throw InputError("integrate: t_end must be > 0");
  if (!(opts.rtol > 0) || !(opts.atol > 0)) throw InputError("integrate: tolerances must be > 0");
  validate_state(s0, opts.degeneracy_tol);
  const int n = s0.dim();
  const Eigen::Index m = packed_size<Scalar>(n);
  const bool tangent = ds0 != nullptr;

  VariationalTrajectory<Scalar> out;
  Trajectory<Scalar>& traj = out.base;
  traj.metadata.rtol = opts.rtol;
  traj.metadata.atol = opts.atol;
  traj.metadata.gap_floor = opts.gap_floor;
  traj.metadata.sign_flipped = opts.sign == SpinSign::flipped;
  traj.frozen = degenerate_pairs(s0.a, opts.degeneracy_tol);
  const PairMask& frozen = traj.frozen;

  // Frozen entries start as exact zeros.
  ReducedState<Scalar> start = s0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (frozen(i, j)) start.Y(i, j) = Scalar(0);
    }
  }

  Vector y0(tangent ? 2 * m : m);
  pack<Scalar>(start.a, start.p, start.Y, y0.head(m));
  if (tangent) pack<Scalar>(ds0->da, ds0->dp, ds0->dY, y0.tail(m));

  auto rhs = [&](double, const Vector& y) {
    Vector dy(y.size());
    const auto s = unpack_state<Scalar>(y.head(m), n);
    const auto f = vector_field(s, frozen, opts.sign);
    pack<Scalar>(f.da, f.dp, f.dY, dy.head(m));
    if (tangent) {
      ReducedDerivative<Scalar> ds;
      unpack<Scalar>(y.tail(m), n, ds.da, ds.dp, ds.dY);
      const auto df = vector_field_tangent(s, ds, frozen, opts.sign);
      pack<Scalar>(df.da, df.dp, df.dY, dy.tail(m));
    }
    return dy;
  };

  // Pairs that carry a force: not frozen and Y_ij != 0.
  auto interacting_gap = [&](const Vector& y) {
    double g = std::numeric_limits<double>::infinity();
    int gi = -1, gj = -1;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (frozen(i, j)) continue;
        const double re = y[2 * n + i * n + j];
        const double im = is_complex_v<Scalar> ? y[2 * n + n * n + i * n + j] : 0.0;
        if (re == 0 && im == 0) continue;
        const double gap = std::abs(y[i] - y[j]);
        if (gap < g) {
          g = gap;
          gi = i;
          gj = j;
        }
      }
    }
    return std::make_tuple(g, gi, gj);
  };

  auto record = [&](double t, const Vector& y) {
    auto s = unpack_state<Scalar>(y.head(m), n);
    const double energy = hamiltonian_reduced(s, frozen);
    const auto order = chamber_order(s.a);
    ReducedState<Scalar> sorted{permute(s.a, order), permute(s.p, order), permute(s.Y, order)};
    const Vector c = casimirs(sorted.Y, 3);
    traj.times.push_back(t);
    traj.energy.push_back(energy);
    traj.casimir.push_back({c[0], c[1], c[2]});
    traj.min_gap.push_back(min_gap(sorted.a));
    traj.states.push_back(std::move(sorted));
    if (tangent) {
      ReducedDerivative<Scalar> ds;
      unpack<Scalar>(y.tail(m), n, ds.da, ds.dp, ds.dY);
      out.perturbations.push_back(
          {permute(ds.da, order), permute(ds.dp, order), permute(ds.dY, order)});
    }
  };

  const std::vector<double> grid = sample_grid<Scalar>(t_end, opts);
  std::size_t next = 0;
  while (next < grid.size() && grid[next] <= 0.0) {
    record(0.0, y0);
    ++next;
  }
  if (traj.times.empty() && opts.include_steps) record(0.0, y0);

  bool frozen_flagged = false;
  double last_floor_event = -1;
  auto admit = [&](double t, const Vector& y) {
    const auto [g, gi, gj] = interacting_gap(y);
    if (g >= opts.gap_floor) return true;
    if (t != last_floor_event) {
      traj.events.push_back({t, EventKind::gap_floor, gi, gj});
      last_floor_event = t;
    }
    return false;
  };

  auto on_step = [&](double t0, const Vector& ya, const Vector& fa, double t1, const Vector& yb,
                     const Vector& fb) {
    traj.step_times.push_back(t1);
    // Wall crossings of non-interacting pairs.
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const double d0 = ya[i] - ya[j];
        const double d1 = yb[i] - yb[j];
        if ((d0 > 0 && d1 < 0) || (d0 < 0 && d1 > 0)) {
          const double tc = t0 + (t1 - t0) * d0 / (d0 - d1);
          traj.events.push_back({tc, EventKind::reflection, i, j});
        }
      }
    }
    double defect = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (!frozen(i, j)) continue;
        const double re = yb[2 * n + i * n + j];
        const double im = is_complex_v<Scalar> ? yb[2 * n + n * n + i * n + j] : 0.0;
        defect = std::max(defect, std::hypot(re, im));
      }
    }
    traj.max_frozen_defect = std::max(traj.max_frozen_defect, defect);
    if (defect > opts.frozen_monitor && !frozen_flagged) {
      traj.events.push_back({t1, EventKind::frozen_violation, -1, -1});
      frozen_flagged = true;
    }
    while (next < grid.size() && grid[next] <= t1) {
      const double ts = grid[next];
      if (ts == t1) {
        record(ts, yb);
      } else {
        record(ts, hermite(t0, ya, fa, t1, yb, fb, ts));
      }
      ++next;
    }
    if (opts.include_steps && (traj.times.empty() || traj.times.back() < t1)) record(t1, yb);
  };

  OdeOptions ode;
  ode.rtol = opts.rtol;
  ode.atol = opts.atol;
  ode.h_max = opts.h_max;
  try {
    const auto stats = DormandPrince(ode).solve(rhs, 0.0, y0, t_end, admit, on_step, grid);
    traj.steps_accepted = stats.accepted;
    traj.steps_rejected = stats.rejected;
  } catch (const StepUnderflow& e) {
    throw IntegrationError<Scalar>(e.what(), std::move(traj));
  }
  return out;
}

}  // namespace detail

/// Integrates the reduced field from s0 over [0, t_end].
template <class Scalar>
Trajectory<Scalar> integrate(const ReducedState<Scalar>& s0, double t_end,
                             const IntegrateOptions& opts = {}) {
  return detail::run<Scalar>(s0, nullptr, t_end, opts).base;
}

/// Integrates the state together with its linearized perturbation; at time
/// t the perturbation approximates d/de of the trajectory of s0 + e ds0.
template <class Scalar>
VariationalTrajectory<Scalar> variational_flow(const ReducedState<Scalar>& s0,
                                               const ReducedDerivative<Scalar>& ds0,
                                               double t_end, const IntegrateOptions& opts = {}) {
  if (ds0.da.size() != s0.dim() || ds0.dp.size() != s0.dim() || ds0.dY.rows() != s0.dim()) {
    throw InputError("variational_flow: perturbation has wrong dimension");
  }
  return detail::run<Scalar>(s0, &ds0, t_end, opts);
}

}  // namespace orbitflow
