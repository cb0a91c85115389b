#include "orbitflow/dynamics.hpp"
#include "orbitflow/random.hpp"
#include "orbitflow/reduction.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace orbitflow;

namespace {

template <class S>
double max_abs(const Matrix<S>& m) {
  return m.size() ? m.cwiseAbs().maxCoeff() : 0.0;
}

template <class S>
ReducedState<S> random_reduced(int n, std::mt19937_64& rng) {
  auto [s, g] = reduce(random_regular_pair<S>(n, rng));
  return s;
}

}  // namespace

TEST(MomentumMap, HandExample) {
  CotangentPoint<double> x{RealMatrix::Zero(2, 2), RealMatrix::Zero(2, 2)};
  x.A(0, 0) = 1;
  x.alpha << 0, 1, 1, 0;
  RealMatrix expected(2, 2);
  expected << 0, 1, -1, 0;
  EXPECT_EQ(momentum_map(x), expected);
}

TEST(MomentumMap, CommutingIsZero) {
  CotangentPoint<double> x{Eigen::Vector3d(1, 2, 3).asDiagonal(),
                           Eigen::Vector3d(4, -1, 0.5).asDiagonal()};
  EXPECT_EQ(max_abs(momentum_map(x)), 0.0);
}

TEST(MomentumMap, ConservedAlongLines) {
  std::mt19937_64 rng(3);
  auto x = random_regular_pair<Complex>(4, rng);
  const ComplexMatrix J0 = momentum_map(x);
  for (double t : {0.5, 1.0}) {
    CotangentPoint<Complex> y{x.A + t * x.alpha, x.alpha};
    EXPECT_LT(max_abs<Complex>(momentum_map(y) - J0), 1e-12);
  }
}

TEST(MomentumMap, Equivariance) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 10; ++k) {
    auto x = random_regular_pair<Complex>(3, rng);
    const ComplexMatrix g = random_group_element<Complex>(3, rng);
    CotangentPoint<Complex> y{g * x.A * g.adjoint(), g * x.alpha * g.adjoint()};
    EXPECT_LT(max_abs<Complex>(momentum_map(y) - g * momentum_map(x) * g.adjoint()), 1e-10);
  }
}

TEST(Reduce, CommutingPair) {
  CotangentPoint<double> x{Eigen::Vector2d(2, 1).asDiagonal(), Eigen::Vector2d(0.3, -0.7).asDiagonal()};
  auto [s, frame] = reduce(x);
  EXPECT_EQ(s.a, Eigen::Vector2d(2, 1));
  EXPECT_NEAR(s.p[0], 0.3, 1e-15);
  EXPECT_NEAR(s.p[1], -0.7, 1e-15);
  EXPECT_EQ(max_abs(s.Y), 0.0);
  EXPECT_EQ(frame.residual.size(), 2u);
}

TEST(Reduce, FrameDiagonalizes) {
  std::mt19937_64 rng(9);
  for (int n = 2; n <= 5; ++n) {
    auto x = random_regular_pair<Complex>(n, rng);
    auto [s, frame] = reduce(x);
    const ComplexMatrix D = frame.g * x.A * frame.g.adjoint();
    EXPECT_LT(max_abs<Complex>(D - ComplexMatrix(s.a.cast<Complex>().asDiagonal())), 1e-10);
    const ComplexMatrix Yg = frame.g * momentum_map(x) * frame.g.adjoint();
    EXPECT_LT(max_abs<Complex>(Yg - s.Y), 1e-10);
  }
}

TEST(Reduce, GaugeInvariant) {
  std::mt19937_64 rng(13);
  for (int n = 2; n <= 6; ++n) {
    for (int trial = 0; trial < 5; ++trial) {
      auto x = random_regular_pair<Complex>(n, rng);
      const ComplexMatrix g = random_group_element<Complex>(n, rng);
      CotangentPoint<Complex> y{g * x.A * g.adjoint(), g * x.alpha * g.adjoint()};
      y.A = (0.5 * (y.A + y.A.adjoint())).eval();
      y.alpha = (0.5 * (y.alpha + y.alpha.adjoint())).eval();
      auto [s1, f1] = reduce(x);
      auto [s2, f2] = reduce(y);
      EXPECT_LT((s1.a - s2.a).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_LT((s1.p - s2.p).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_LT(max_abs<Complex>(s1.Y - s2.Y), 1e-10);
    }
    auto xs = random_regular_pair<double>(n, rng);
    const RealMatrix h = random_group_element<double>(n, rng);
    CotangentPoint<double> ys{h * xs.A * h.transpose(), h * xs.alpha * h.transpose()};
    ys.A = (0.5 * (ys.A + ys.A.transpose())).eval();
    ys.alpha = (0.5 * (ys.alpha + ys.alpha.transpose())).eval();
    EXPECT_LT(max_abs<double>(reduce(xs).first.Y - reduce(ys).first.Y), 1e-10);
  }
}

TEST(Reduce, RankOneMomentum) {
  // Y' = i (c I + v v^*) with zero diagonal forces |v_i|^2 = -c, c < 0.
  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss;
  for (int n = 2; n <= 5; ++n) {
    const Vector a = random_spectrum(n, rng);
    Eigen::VectorXcd v(n);
    const double c = -0.8;
    for (int i = 0; i < n; ++i) v[i] = std::polar(1.0, 6.0 * gauss(rng));
    v *= std::sqrt(-c);
    const ComplexMatrix Yp = Complex(0, 1) * (c * ComplexMatrix::Identity(n, n) + v * v.adjoint());
    ComplexMatrix alpha = ComplexMatrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      alpha(i, i) = gauss(rng);
      for (int j = 0; j < n; ++j) {
        if (i != j) alpha(i, j) = Yp(i, j) / (a[i] - a[j]);
      }
    }
    const ComplexMatrix g = random_group_element<Complex>(n, rng);
    ComplexMatrix A = g * a.cast<Complex>().asDiagonal() * g.adjoint();
    ComplexMatrix al = g * alpha * g.adjoint();
    CotangentPoint<Complex> x{0.5 * (A + A.adjoint()), 0.5 * (al + al.adjoint())};
    auto [s, frame] = reduce(x);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        EXPECT_NEAR(s.Y(i, j).real(), 0.0, 1e-10);
        EXPECT_NEAR(s.Y(i, j).imag(), -c, 1e-10) << "i=" << i << " j=" << j;
      }
    }
  }
}

TEST(Reduce, DegenerateBlock) {
  std::mt19937_64 rng(19);
  const int n = 4;
  const Vector a = (Vector(n) << 2, 1, 1, -1).finished();
  const ComplexMatrix g = random_group_element<Complex>(n, rng);
  ComplexMatrix A = g * a.cast<Complex>().asDiagonal() * g.adjoint();
  ComplexMatrix al = random_hermitian<Complex>(n, rng);
  CotangentPoint<Complex> x{0.5 * (A + A.adjoint()), al};
  auto [s, frame] = reduce(x);
  EXPECT_EQ(s.a[1], s.a[2]);
  EXPECT_EQ(s.Y(1, 2), Complex(0));
  EXPECT_EQ(s.Y(2, 1), Complex(0));
  EXPECT_GE(s.p[1], s.p[2]);
  for (int i = 0; i < n; ++i) EXPECT_EQ(s.Y(i, i), Complex(0));
  EXPECT_NO_THROW(validate_state(s));
  // Ambient energy is still preserved.
  EXPECT_NEAR(hamiltonian_ambient(x), hamiltonian_reduced(s), 1e-10);
}

TEST(Reconstruct, DiagonalWhenSpinFree) {
  SymmetricState s{Eigen::Vector3d(3, 2, 1), Eigen::Vector3d(1, 0, -1), RealMatrix::Zero(3, 3)};
  const auto x = reconstruct(s);
  EXPECT_EQ(max_abs<double>(x.alpha - RealMatrix(s.p.asDiagonal())), 0.0);
}

TEST(Reconstruct, RoundTrip) {
  std::mt19937_64 rng(23);
  for (int k = 0; k < 100; ++k) {
    const int n = 2 + k % 5;
    if (k % 2) {
      const auto s = random_reduced<Complex>(n, rng);
      const auto [t, f] = reduce(reconstruct(s));
      EXPECT_LT((s.a - t.a).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_LT((s.p - t.p).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_LT(max_abs<Complex>(s.Y - t.Y), 1e-10);
      const ComplexMatrix J = momentum_map(reconstruct(s));
      EXPECT_LT(max_abs<Complex>(J - s.Y), 1e-10);
    } else {
      const auto s = random_reduced<double>(n, rng);
      const auto [t, f] = reduce(reconstruct(s));
      EXPECT_LT((s.a - t.a).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_LT((s.p - t.p).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_LT(max_abs<double>(s.Y - t.Y), 1e-10);
    }
  }
}

TEST(Hamiltonian, AmbientExamples) {
  CotangentPoint<double> x{RealMatrix::Identity(2, 2), RealMatrix::Zero(2, 2)};
  EXPECT_EQ(hamiltonian_ambient(x), 0.0);
  x.alpha << 0, 1, 1, 0;
  EXPECT_DOUBLE_EQ(hamiltonian_ambient(x), 1.0);
}

TEST(Hamiltonian, ReductionPreservesEnergy) {
  std::mt19937_64 rng(29);
  for (int n = 2; n <= 6; ++n) {
    const auto x = random_regular_pair<Complex>(n, rng);
    EXPECT_NEAR(hamiltonian_ambient(x), hamiltonian_reduced(reduce(x).first), 1e-10);
    const auto y = random_regular_pair<double>(n, rng);
    EXPECT_NEAR(hamiltonian_ambient(y), hamiltonian_reduced(reduce(y).first), 1e-10);
  }
}

TEST(ValidateState, Rejects) {
  HermitianState s{Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 0), ComplexMatrix::Zero(2, 2)};
  s.Y(0, 0) = Complex(0, 1);
  EXPECT_THROW(validate_state(s), InvariantError);
  s.Y.setZero();
  s.a = Eigen::Vector2d(1, 1);
  s.Y(0, 1) = Complex(0, 1);
  s.Y(1, 0) = Complex(0, 1);
  EXPECT_THROW(validate_state(s), InvariantError);
}

TEST(Gauge, ResidualRecorded) {
  HermitianState s{Eigen::Vector3d(3, 2, 1), Vector::Zero(3), ComplexMatrix::Zero(3, 3)};
  s.Y(1, 0) = Complex(0.3, 0.4);
  s.Y(0, 1) = -std::conj(s.Y(1, 0));
  std::vector<std::vector<int>> classes;
  const auto t = normalize_gauge(s, &classes);
  EXPECT_NEAR(t.Y(1, 0).real(), 0.0, 1e-15);
  EXPECT_NEAR(t.Y(1, 0).imag(), 0.5, 1e-15);
  ASSERT_EQ(classes.size(), 2u);
  EXPECT_EQ(classes[0], (std::vector<int>{0, 1}));
  EXPECT_EQ(classes[1], (std::vector<int>{2}));
}
