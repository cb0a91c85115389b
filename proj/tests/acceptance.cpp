// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "orbitflow/orbitflow.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

using namespace orbitflow;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

Vector sorted_desc(Vector v) {
  std::sort(v.begin(), v.end(), std::greater<>());
  return v;
}

// Tolerances pinned by the acceptance criteria.
constexpr double kOracleTol = 1e-6;
constexpr double kClosedFormOracleTol = 1e-12;
constexpr double kClosedFormDynamicsTol = 1e-8;
constexpr double kFieldTol = 1e-12;
constexpr double kDriftTol = 1e-8;
constexpr double kFrozenTol = 1e-10;
constexpr double kLowerRunTol = 1e-6;
constexpr double kPolarTol = 1e-12;
constexpr double kRootDefectTol = 1e-10;
constexpr double kBilliardTol = 1e-12;
constexpr double kVariationalEps = 1e-6;

// Tighter settings where the reference is exact to rounding.
IntegrateOptions tight(int samples = 200) {
  IntegrateOptions o;
  o.rtol = 1e-12;
  o.atol = 1e-14;
  o.samples = samples;
  return o;
}

// ---------------------------------------------------------------------------
// 1 and 4 share the same trajectories.

struct OracleStats {
  int cases = 0;
  double worst_dev = 0;
  double worst_energy = 0;
  double worst_casimir = 0;
  bool any_error = false;
};

template <class S>
void oracle_case(int n, std::mt19937_64& rng, OracleStats& st) {
  const auto x = random_regular_pair<S>(n, rng);
  const MatrixModel model{kind_of<S>(), n};
  IntegrateOptions opts;  // library defaults, as shipped
  opts.include_steps = true;  // 200 uniform samples plus every accepted step
  try {
    const auto tr = integrate(reduce(x).first, 1.0, opts);
    const RealMatrix rows = eigenflow<S>(x.A, x.alpha, model, tr.times);
    for (std::size_t k = 0; k < tr.size(); ++k) {
      st.worst_dev = std::max(
          st.worst_dev, (tr.states[k].a - rows.row(Eigen::Index(k)).transpose()).cwiseAbs().maxCoeff());
    }
    st.worst_energy = std::max(st.worst_energy, tr.max_energy_drift());
    st.worst_casimir = std::max(st.worst_casimir, tr.max_casimir_drift());
  } catch (const std::exception&) {
    st.any_error = true;
  }
  ++st.cases;
}

OracleStats run_oracle_set() {
  OracleStats st;
  std::mt19937_64 rng(20240501);
  for (int k = 0; k < 50; ++k) {
    const int n = 2 + k % 5;
    oracle_case<Complex>(n, rng, st);
    oracle_case<double>(n, rng, st);
  }
  return st;
}

Outcome criterion1(const OracleStats& st) {
  return {!st.any_error && st.worst_dev < kOracleTol,
          std::to_string(st.cases) + " pairs (50 Hermitian, 50 symmetric, n=2..6), max |a(t) - eig(A+t alpha)| = " +
              sci(st.worst_dev) + " < " + sci(kOracleTol)};
}

Outcome criterion4(const OracleStats& st) {
  return {!st.any_error && st.worst_energy < kDriftTol && st.worst_casimir < kDriftTol,
          "max relative energy drift " + sci(st.worst_energy) + ", Casimir drift " +
              sci(st.worst_casimir) + " < " + sci(kDriftTol)};
}

// ---------------------------------------------------------------------------

Outcome criterion2() {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  double worst_oracle = 0, worst_dyn = 0;
  bool error = false;
  std::vector<double> ts;
  for (int k = 0; k <= 20; ++k) ts.push_back(0.05 * k);
  for (int trial = 0; trial < 100; ++trial) {
    const double a1 = g(rng), a2 = g(rng), v1 = g(rng), v2 = g(rng), v3 = g(rng);
    RealMatrix A(2, 2), V(2, 2);
    A << a1, 0, 0, a2;
    V << v1, v3, v3, v2;
    const RealMatrix rows = eigenflow<double>(A, V, MatrixModel::symmetric(2), ts);
    auto opts = tight();
    opts.sample_times = ts;
    try {
      const auto tr = integrate(reduce(CotangentPoint<double>{A, V}).first, 1.0, opts);
      for (std::size_t k = 0; k < ts.size(); ++k) {
        const auto [l1, l2] = closed_form_2x2(a1, a2, v1, v2, v3, ts[k]);
        const Eigen::Vector2d cf(l1, l2);
        worst_oracle = std::max(worst_oracle, (rows.row(Eigen::Index(k)).transpose() - cf).cwiseAbs().maxCoeff());
        worst_dyn = std::max(worst_dyn, (tr.states[k].a - cf).cwiseAbs().maxCoeff());
      }
    } catch (const std::exception&) {
      error = true;
    }
  }
  return {!error && worst_oracle < kClosedFormOracleTol && worst_dyn < kClosedFormDynamicsTol,
          "100 cases: closed form vs eigenflow " + sci(worst_oracle) + " < " + sci(kClosedFormOracleTol) +
              ", vs integrated n=2 " + sci(worst_dyn) + " < " + sci(kClosedFormDynamicsTol)};
}

Outcome criterion3() {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  double worst_field = 0;
  int floor_events = 0, runs = 0;
  bool error = false;
  for (int n = 2; n <= 5; ++n) {
    for (int trial = 0; trial < 10; ++trial) {
      const Vector a = random_spectrum(n, rng);
      Vector p(n);
      for (auto& v : p) v = g(rng);
      const double c = g(rng);
      const auto s = rank_one_state(a, p, c);
      const auto f = vector_field(s);
      const auto [da, dp] = classical_cm_field(a, p, c);
      worst_field = std::max({worst_field, (f.dp - dp).cwiseAbs().maxCoeff(), (f.da - da).cwiseAbs().maxCoeff()});
      try {
        const auto tr = integrate(s, 2.0, tight());
        ++runs;
        if (tr.has_event(EventKind::gap_floor)) ++floor_events;
      } catch (const std::exception&) {
        error = true;
      }
    }
  }
  return {!error && worst_field < kFieldTol && floor_events == 0,
          "40 rank-one states n=2..5: field difference " + sci(worst_field) + " < " + sci(kFieldTol) + ", " +
              std::to_string(floor_events) + " gap-floor events in " + std::to_string(runs) + " runs"};
}

template <class S>
void degenerate_case(int n, std::mt19937_64& rng, double& frozen, double& rest, std::string& error) {
  // A has a_1 = a_2 and alpha is block diagonal in the eigenbasis, so the
  // reduced spin has zero rows and columns 1, 2. Built directly in the
  // eigenbasis: a random conjugation would leave ~1e-16 couplings between
  // the block and the rest, which then genuinely interact when they meet.
  std::normal_distribution<double> g;
  const Vector low_a = random_spectrum(n - 2, rng);
  const double top = low_a[0] + 0.2 + std::abs(g(rng));
  Vector a(n);
  a << top, top, low_a;
  Matrix<S> alpha = Matrix<S>::Zero(n, n);
  alpha.topLeftCorner(2, 2) = random_hermitian<S>(2, rng);
  Matrix<S> low_alpha = random_hermitian<S>(n - 2, rng);
  low_alpha /= low_alpha.norm();
  alpha.bottomRightCorner(n - 2, n - 2) = low_alpha;
  const CotangentPoint<S> x{Matrix<S>(a.cast<S>().asDiagonal()), alpha};
  const CotangentPoint<S> xl{Matrix<S>(low_a.cast<S>().asDiagonal()), low_alpha};
  const auto opts = tight(101);
  try {
    const auto s0 = reduce(x).first;
    const auto tr = integrate(s0, 1.0, opts);
    const auto lo = integrate(reduce(xl).first, 1.0, opts);
    frozen = std::max(frozen, tr.max_frozen_defect);
    for (std::size_t k = 0; k < tr.size(); ++k) {
      const double t = tr.times[k];
      // Block coordinates on free lines, the rest on the lower-dimensional run.
      Vector expected(n);
      expected << s0.a[0] + t * s0.p[0], s0.a[1] + t * s0.p[1], lo.states[k].a;
      rest = std::max(rest, (tr.states[k].a - sorted_desc(expected)).cwiseAbs().maxCoeff());
    }
  } catch (const std::exception& e) {
    if (error.empty()) error = "n=" + std::to_string(n) + ": " + e.what();
  }
}

Outcome criterion5() {
  std::mt19937_64 rng(5);
  double frozen = 0, rest = 0;
  std::string error;
  for (int n = 3; n <= 6; ++n) {
    for (int trial = 0; trial < 3; ++trial) {
      degenerate_case<Complex>(n, rng, frozen, rest, error);
      degenerate_case<double>(n, rng, frozen, rest, error);
    }
  }
  return {error.empty() && frozen < kFrozenTol && rest < kLowerRunTol,
          (error.empty() ? "" : "error " + error + "; ") + "24 cases a_1 = a_2, n=3..6: frozen |Y| max " + sci(frozen) + " < " + sci(kFrozenTol) +
              ", sorted(block lines + lower run) vs a(t) " + sci(rest) + " < " + sci(kLowerRunTol)};
}

Outcome criterion6() {
  std::mt19937_64 rng(6);
  double worst = 0, defect = 0;
  for (int n = 2; n <= 4; ++n) {
    for (const auto model : {MatrixModel::hermitian(n), MatrixModel::symmetric(n)}) {
      const auto rs = builtin_root_system(model);
      const auto rep = verify_root_system(rs, 100, 6);
      defect = std::max({defect, rep.relation_defect, rep.antisymmetry_defect, rep.jacobi_defect});
      for (int k = 0; k < 100; ++k) {
        auto compare = [&](const auto& s) {
          const auto f = vector_field(s);
          const auto pf = polar_vector_field(to_polar_state(s), rs);
          using S = typename std::decay_t<decltype(s.Y)>::Scalar;
          const auto q = to_polar_state(ReducedState<S>{f.da, f.dp, f.dY});
          worst = std::max({worst, (pf.dA0 - q.A0).cwiseAbs().maxCoeff(), (pf.dp0 - q.p0).cwiseAbs().maxCoeff()});
          for (std::size_t r = 0; r < q.Yroots.size(); ++r) {
            worst = std::max(worst, (pf.dY[r] - q.Yroots[r]).cwiseAbs().maxCoeff());
          }
        };
        if (model.kind == ModelKind::hermitian) {
          compare(reduce(random_regular_pair<Complex>(n, rng)).first);
        } else {
          compare(reduce(random_regular_pair<double>(n, rng)).first);
        }
      }
    }
  }
  return {worst < kPolarTol && defect < kRootDefectTol,
          "600 states on A_{n-1} data n=2..4: field difference " + sci(worst) + " < " + sci(kPolarTol) +
              ", root-data defect " + sci(defect) + " < " + sci(kRootDefectTol)};
}

Outcome criterion7() {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> dim(2, 5);
  double worst_path = 0, worst_angle = 0;
  int events = 0, corners = 0;
  auto wall_angle = [](const Vector& v, const Vector& c) {
    return std::asin(std::clamp(std::abs(v.dot(c)) / (v.norm() * c.norm()), 0.0, 1.0));
  };
  auto check = [&](const RestrictedRootSystem& rs, const Vector& x, const Vector& v, double t_end) {
    const auto path = billiard_geodesic(rs, x, v, t_end);
    for (const auto& ev : path.events) {
      ++events;
      if (ev.corner()) ++corners;
      Vector w = ev.v_in;
      for (int r : ev.walls) {
        const Vector& c = rs.root(r).coeffs;
        const Vector u = rs.reflect(r, w);
        worst_angle = std::max(worst_angle, std::abs(wall_angle(w, c) - wall_angle(u, c)));
        w = u;
      }
      worst_angle = std::max(worst_angle, (w - ev.v_out).cwiseAbs().maxCoeff());
    }
    std::vector<double> ts;
    for (int k = 0; k <= 10; ++k) ts.push_back(t_end * k / 10.0);
    const int n = int(x.size());
    const RealMatrix rows = eigenflow<double>(x.asDiagonal(), v.asDiagonal(), MatrixModel::symmetric(n), ts);
    for (std::size_t k = 0; k < ts.size(); ++k) {
      worst_path = std::max(worst_path, (path.position(ts[k]) - rows.row(Eigen::Index(k)).transpose()).cwiseAbs().maxCoeff());
    }
  };
  for (int k = 0; k < 1000; ++k) {
    const int n = dim(rng);
    const auto rs = builtin_root_system(MatrixModel::symmetric(n));
    const Vector x = random_spectrum(n, rng);
    Vector v(n);
    for (auto& c : v) c = g(rng);
    check(rs, x, v, 5.0);
  }
  // Corner-aimed rays: all coordinates meet at t = 1.
  for (int n = 3; n <= 5; ++n) {
    const auto rs = builtin_root_system(MatrixModel::symmetric(n));
    Vector x(n), v(n);
    for (int i = 0; i < n; ++i) {
      x[i] = double(n - 1 - i);
      v[i] = -x[i];
    }
    check(rs, x, v, 3.0);
  }
  return {worst_path < kBilliardTol && worst_angle < kBilliardTol && corners > 0,
          "1000 random rays + corner rays (" + std::to_string(events) + " events, " + std::to_string(corners) +
              " corners): path vs eigenflow " + sci(worst_path) + ", angle defect " + sci(worst_angle) + " < " +
              sci(kBilliardTol)};
}

Outcome criterion8() {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> dim(2, 6);
  std::normal_distribution<double> g;
  bool sym_ok = true, tri_ok = true;
  for (int k = 0; k < 1000; ++k) {
    const int n = dim(rng);
    auto pt = [&] {
      Vector v(n);
      for (auto& c : v) c = g(rng);
      return ChamberPoint(sorted_desc(v));
    };
    const auto p = pt(), q = pt(), r = pt();
    if (distance(p, q) != distance(q, p)) sym_ok = false;
    if (distance(p, r) > distance(p, q) + distance(q, r) + 1e-12) tri_ok = false;
  }
  // Quotient distance is a lower bound over sampled group elements.
  bool bound_ok = true;
  double slack = std::numeric_limits<double>::infinity();
  for (int pair = 0; pair < 4; ++pair) {
    const int n = 3;
    auto run = [&](auto tag) {
      using S = decltype(tag);
      const MatrixModel m{kind_of<S>(), n};
      const Matrix<S> A = random_hermitian<S>(n, rng), B = random_hermitian<S>(n, rng);
      const double d = distance(chamber_map<S>(A, m), chamber_map<S>(B, m));
      for (int k = 0; k < 10000; ++k) {
        const Matrix<S> h = random_group_element<S>(n, rng);
        const double v = (A - h * B * h.adjoint()).norm();
        if (d > v + 1e-12) bound_ok = false;
        slack = std::min(slack, v - d);
      }
    };
    run(Complex{});
    run(double{});
  }
  // Multiplicity refinement on segments with frequent ties.
  bool refine_ok = true;
  std::uniform_int_distribution<int> level(0, 3);
  for (int k = 0; k < 1000; ++k) {
    const int n = dim(rng);
    auto pt = [&] {
      Vector v(n);
      for (auto& c : v) c = double(level(rng));
      return ChamberPoint(sorted_desc(v));
    };
    if (!segment_stratum_check(minimal_segment(pt(), pt()), 20)) refine_ok = false;
  }
  return {sym_ok && tri_ok && bound_ok && refine_ok,
          std::string("symmetry ") + (sym_ok ? "ok" : "FAIL") + ", triangle " + (tri_ok ? "ok" : "FAIL") +
              " on 1000 triples; distance <= |A - gBg^-1| over 8 pairs x 1e4 g " + (bound_ok ? "ok" : "FAIL") +
              " (min slack " + sci(slack) + "); multiplicity refinement on 1000 segments " +
              (refine_ok ? "ok" : "FAIL")};
}

Outcome criterion9() {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  const double eps = kVariationalEps;
  auto opts = tight(21);
  opts.rtol = 1e-13;
  opts.atol = 1e-15;
  double worst = 0;
  bool error = false;
  for (int trial = 0; trial < 20; ++trial) {
    const auto s0 = reduce(random_regular_pair<Complex>(3, rng)).first;
    auto ds = ReducedDerivative<Complex>::zero(3);
    for (int i = 0; i < 3; ++i) {
      ds.da[i] = g(rng);
      ds.dp[i] = g(rng);
    }
    ComplexMatrix w = random_hermitian<Complex>(3, rng);
    ds.dY = Complex(0, 1) * w;
    ds.dY.diagonal().setZero();
    ds.da /= ds.da.norm() * 10;  // keep s0 + eps ds in the same chamber
    try {
      const auto vt = variational_flow(s0, ds, 1.0, opts);
      const HermitianState sp{s0.a + eps * ds.da, s0.p + eps * ds.dp, s0.Y + eps * ds.dY};
      const HermitianState sm{s0.a - eps * ds.da, s0.p - eps * ds.dp, s0.Y - eps * ds.dY};
      const auto tp = integrate(sp, 1.0, opts);
      const auto tm = integrate(sm, 1.0, opts);
      for (std::size_t k = 0; k < vt.base.size(); ++k) {
        const Vector fd_a = (tp.states[k].a - tm.states[k].a) / (2 * eps);
        const Vector fd_p = (tp.states[k].p - tm.states[k].p) / (2 * eps);
        worst = std::max({worst, (fd_a - vt.perturbations[k].da).cwiseAbs().maxCoeff(),
                          (fd_p - vt.perturbations[k].dp).cwiseAbs().maxCoeff()});
      }
    } catch (const std::exception&) {
      error = true;
    }
  }
  // Free case: da(t) = da0 + t dp0.
  HermitianState free{Eigen::Vector3d(2, 1, 0), Eigen::Vector3d(0.3, -0.1, 0.2), ComplexMatrix::Zero(3, 3)};
  auto dfree = ReducedDerivative<Complex>::zero(3);
  dfree.da = Eigen::Vector3d(0.1, -0.2, 0.05);
  dfree.dp = Eigen::Vector3d(1, 2, -1);
  double free_err = 0;
  const auto vf = variational_flow(free, dfree, 1.0, opts);
  for (std::size_t k = 0; k < vf.base.size(); ++k) {
    free_err = std::max(free_err, (vf.perturbations[k].da - (dfree.da + vf.base.times[k] * dfree.dp)).cwiseAbs().maxCoeff());
  }
  return {!error && worst < 10 * eps && free_err < 1e-14,
          "20 cases n=3, eps = 1e-6: |variational - central difference| " + sci(worst) + " < " +
              sci(10 * eps) + "; free case deviation " + sci(free_err) + " (rounding only)"};
}

}  // namespace

int main() {
  const OracleStats oracle = run_oracle_set();
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"oracle equivalence", [&] { return criterion1(oracle); }},
      {"closed-form 2x2", criterion2},
      {"classical Calogero-Moser", criterion3},
      {"conservation", [&] { return criterion4(oracle); }},
      {"degenerate strata", criterion5},
      {"polar specialization", criterion6},
      {"geodesic billiards", criterion7},
      {"metric properties", criterion8},
      {"variational flow", criterion9},
  };
  int failed = 0;
  int index = 1;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d [%s] %s: %s\n", index++, o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
