#pragma once

// Adaptive Dormand-Prince 5(4) integrator over flat Eigen vectors with an
// acceptance hook and per-step callbacks for dense output.

#include "orbitflow/core.hpp"

#include <functional>
#include <limits>
#include <span>

namespace orbitflow {

struct OdeOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double h_initial = 0;  // 0: automatic
  double h_min = 1e-13;
  double h_max = std::numeric_limits<double>::infinity();
  long max_steps = 10'000'000;
};

class StepUnderflow : public std::runtime_error {
 public:
  StepUnderflow(double t, double h)
      : std::runtime_error("step size underflow at t = " + std::to_string(t) +
                           " (h = " + std::to_string(h) + ")"),
        time(t) {}
  double time;
};

struct OdeStats {
  long accepted = 0;
  long rejected = 0;
};

/// Cubic Hermite interpolant on [t0, t1] from values and slopes.
inline Vector hermite(double t0, const Vector& y0, const Vector& f0, double t1, const Vector& y1,
                      const Vector& f1, double t) {
  const double h = t1 - t0;
  const double s = (t - t0) / h;
  const double s2 = s * s;
  const double s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1;
  const double h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2;
  const double h11 = s3 - s2;
  return h00 * y0 + (h10 * h) * f0 + h01 * y1 + (h11 * h) * f1;
}

class DormandPrince {
 public:
  using Rhs = std::function<Vector(double, const Vector&)>;
  /// Return false to reject a trial step (it is retried with h / 4).
  using Admit = std::function<bool(double, const Vector&)>;
  using OnStep = std::function<void(double t0, const Vector& y0, const Vector& f0, double t1,
                                    const Vector& y1, const Vector& f1)>;

  explicit DormandPrince(OdeOptions opts = {}) : opts_(opts) {}

  /// Steps are shortened to land exactly on every time in `stops` (sorted,
  /// inside (t0, t_end]) as well as on t_end.
  OdeStats solve(const Rhs& f, double t0, Vector y, double t_end, const Admit& admit,
                 const OnStep& on_step, std::span<const double> stops = {}) const {
    OdeStats stats;
    double t = t0;
    Vector k1 = f(t, y);
    double h = opts_.h_initial > 0 ? opts_.h_initial : initial_step(f, t, y, k1, t_end - t0);
    Vector k2, k3, k4, k5, k6, k7, y_new, err;
    std::size_t next_stop = 0;
    while (t < t_end) {
      if (stats.accepted + stats.rejected > opts_.max_steps) throw StepUnderflow(t, h);
      while (next_stop < stops.size() && stops[next_stop] <= t) ++next_stop;
      const double target = next_stop < stops.size() ? std::min(stops[next_stop], t_end) : t_end;
      // The untruncated proposal is kept so landing on a stop does not
      // shrink the following step.
      const double h_proposed = h;
      bool last = false;
      if (t + h >= target) {
        h = target - t;
        last = true;
      }
      k2 = f(t + c2 * h, y + h * (a21 * k1));
      k3 = f(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
      k4 = f(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
      k5 = f(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
      k6 = f(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      const bool finite = y_new.allFinite();
      if (finite) {
        k7 = f(t + h, y_new);
        err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
      }
      const double norm = finite ? error_norm(err, y, y_new) : std::numeric_limits<double>::infinity();
      if (!std::isfinite(norm) || norm > 1.0) {
        ++stats.rejected;
        const double factor =
            std::isfinite(norm) ? std::max(0.2, 0.9 * std::pow(norm, -0.2)) : 0.25;
        h *= factor;
        if (h < opts_.h_min) throw StepUnderflow(t, h);
        continue;
      }
      const double t_new = last ? target : t + h;
      if (admit && !admit(t_new, y_new)) {
        ++stats.rejected;
        h *= 0.25;
        if (h < opts_.h_min) throw StepUnderflow(t, h);
        continue;
      }
      ++stats.accepted;
      if (on_step) on_step(t, y, k1, t_new, y_new, k7);
      t = t_new;
      y.swap(y_new);
      k1.swap(k7);
      const double grow = norm > 0 ? std::min(5.0, 0.9 * std::pow(norm, -0.2)) : 5.0;
      h = std::min(std::max(h * std::max(grow, 0.2), last ? h_proposed : 0.0), opts_.h_max);
    }
    return stats;
  }

 private:
  double error_norm(const Vector& err, const Vector& y0, const Vector& y1) const {
    double sum = 0;
    for (Eigen::Index i = 0; i < err.size(); ++i) {
      const double scale = opts_.atol + opts_.rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
      const double r = err[i] / scale;
      sum += r * r;
    }
    return err.size() ? std::sqrt(sum / double(err.size())) : 0.0;
  }

  // Hairer, Norsett & Wanner starting step heuristic.
  double initial_step(const Rhs& f, double t, const Vector& y, const Vector& f0,
                      double span) const {
    auto scaled = [&](const Vector& v) {
      double sum = 0;
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double r = v[i] / (opts_.atol + opts_.rtol * std::abs(y[i]));
        sum += r * r;
      }
      return v.size() ? std::sqrt(sum / double(v.size())) : 0.0;
    };
    const double d0 = scaled(y);
    const double d1 = scaled(f0);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, span);
    const Vector f1 = f(t + h0, y + h0 * f0);
    const double d2 = scaled(f1 - f0) / h0;
    const double m = std::max(d1, d2);
    const double h1 = m <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / m, 0.2);
    return std::min({100 * h0, h1, span, opts_.h_max});
  }

  OdeOptions opts_;

  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // b - b*, the embedded 4th-order error weights.
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

}  // namespace orbitflow
