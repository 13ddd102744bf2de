#include <gtest/gtest.h>

#include "common.hpp"

using namespace lumpflow;
using namespace lumpflow::testing;

namespace {

TorusPtr torus(int n, cplx w1 = 1.0, cplx w2 = cplx(0.0, 1.0)) {
  LatticeSpec s;
  s.omega1 = w1;
  s.omega2 = w2;
  s.grid_n = n;
  return Torus::make(s);
}

/// Dual-lattice plane wave cos(2 pi (a u + b v)) and its wave vector.
struct PlaneWave {
  ScalarField f;
  double kx, ky;
};

PlaneWave plane_wave(const TorusPtr& t, int a, int b) {
  const LatticeSpec& l = t->lattice();
  const double w1 = l.omega1.real(), w2x = l.omega2.real(), w2y = l.omega2.imag();
  // u = (x - v w2x)/w1, v = y / w2y
  const double kx = 2.0 * M_PI * a / w1;
  const double ky = 2.0 * M_PI * (b - a * w2x / w1) / w2y;
  auto f = ScalarField::from_function(t, [&](cplx z) { return std::cos(kx * z.real() + ky * z.imag()); });
  return {f, kx, ky};
}

}  // namespace

TEST(LatticeSpec, RejectsSmallOrOddGrids) {
  EXPECT_THROW(square(6).validate(), ConfigError);
  EXPECT_THROW(square(33).validate(), ConfigError);
  EXPECT_NO_THROW(square(8).validate());
  EXPECT_NO_THROW(square(24).validate());
}

TEST(LatticeSpec, RejectsDegenerateLattice) {
  LatticeSpec s;
  s.omega2 = cplx(2.0, 0.0);
  EXPECT_THROW(s.validate(), ConfigError);
  s.omega2 = cplx(0.0, -1.0);
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Deriv, ConstantGivesZero) {
  auto t = torus(16);
  ScalarField c(t, 3.7);
  EXPECT_LT(deriv(c, Direction::x).max_abs(), 1e-14);
  EXPECT_LT(deriv(c, Direction::y).max_abs(), 1e-14);
}

TEST(Deriv, SineOnRectangularLattice) {
  const double l1 = 2.0;
  auto t = torus(32, l1, cplx(0.0, 1.5));
  auto f = ScalarField::from_function(t, [&](cplx z) { return std::sin(2.0 * M_PI * z.real() / l1); });
  auto expect = ScalarField::from_function(t, [&](cplx z) { return (2.0 * M_PI / l1) * std::cos(2.0 * M_PI * z.real() / l1); });
  EXPECT_LT((deriv(f, Direction::x) - expect).max_abs(), 1e-12);
  EXPECT_LT(deriv(f, Direction::y).max_abs(), 1e-12);
}

TEST(Deriv, PlaneWaveOnObliqueLattice) {
  auto t = torus(32, 1.0, cplx(0.5, std::sqrt(3.0) / 2.0));
  const PlaneWave w = plane_wave(t, 2, -3);
  const auto dx = ScalarField::from_function(t, [&](cplx z) { return -w.kx * std::sin(w.kx * z.real() + w.ky * z.imag()); });
  const auto dy = ScalarField::from_function(t, [&](cplx z) { return -w.ky * std::sin(w.kx * z.real() + w.ky * z.imag()); });
  EXPECT_LT((deriv(w.f, Direction::x) - dx).max_abs(), 1e-11);
  EXPECT_LT((deriv(w.f, Direction::y) - dy).max_abs(), 1e-11);
}

TEST(Deriv, MixedPartialsCommute) {
  auto t = torus(32);
  std::mt19937_64 rng(1);
  auto f = random_smooth_scalar(t, rng, 5);
  auto a = deriv(deriv(f, Direction::x), Direction::y);
  auto b = deriv(deriv(f, Direction::y), Direction::x);
  EXPECT_LT((a - b).max_abs(), 1e-12);
}

TEST(Laplacian, ConstantGivesZero) {
  auto t = torus(16);
  EXPECT_LT(laplacian(ScalarField(t, -2.0)).max_abs(), 1e-14);
}

TEST(Laplacian, PlaneWaveEigenfunction) {
  for (auto t : {torus(32), torus(32, 1.0, cplx(0.3, 1.1))}) {
    const PlaneWave w = plane_wave(t, 3, 1);
    const double k2 = w.kx * w.kx + w.ky * w.ky;
    EXPECT_LT((laplacian(w.f) + w.f * k2).max_abs(), 1e-10 * k2);
  }
}

TEST(Laplacian, IntegratesToZero) {
  auto t = torus(32, 1.0, cplx(0.2, 0.9));
  std::mt19937_64 rng(2);
  auto f = random_smooth_scalar(t, rng, 6);
  EXPECT_NEAR(integrate(laplacian(f)), 0.0, 1e-10);
}

TEST(Laplacian, MatchesSecondDerivativesOnBandLimitedFields) {
  auto t = torus(32);
  std::mt19937_64 rng(3);
  auto f = random_smooth_scalar(t, rng, 8);
  auto dxx = deriv(deriv(f, Direction::x), Direction::x);
  auto dyy = deriv(deriv(f, Direction::y), Direction::y);
  EXPECT_LT((laplacian(f) - dxx - dyy).max_abs(), 1e-10);
}

TEST(Laplacian, KeepsFullSymbolOnNyquistMode) {
  // (-1)^ix has wave number N/2 in x; D_x annihilates it but Delta must not.
  const int n = 16;
  auto t = torus(n);
  ScalarField f(t);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = (i % n) % 2 == 0 ? 1.0 : -1.0;
  EXPECT_LT(deriv(f, Direction::x).max_abs(), 1e-12);
  const double k = M_PI * n;
  EXPECT_LT((laplacian(f) + f * (k * k)).max_abs(), 1e-9 * k * k);
}

TEST(Integrate, Areas) {
  EXPECT_NEAR(integrate(ScalarField(torus(16), 1.0)), 1.0, 1e-15);
  EXPECT_NEAR(integrate(ScalarField(torus(16, 2.0, cplx(0.0, 2.0)), 1.0)), 4.0, 1e-14);
}

TEST(Integrate, SineSquared) {
  auto t = torus(16);
  auto f = ScalarField::from_function(t, [](cplx z) { return std::pow(std::sin(2.0 * M_PI * z.real()), 2); });
  EXPECT_NEAR(integrate(f), 0.5, 1e-14);
}

TEST(L2Inner, PositiveAndSymmetric) {
  auto t = torus(16);
  std::mt19937_64 rng(4);
  Field y = random_field(t, rng), z = random_field(t, rng);
  EXPECT_GT(l2_inner(y, y), 0.0);
  EXPECT_EQ(l2_inner(Field(t), Field(t)), 0.0);
  EXPECT_EQ(l2_inner(y, z), l2_inner(z, y));
}

TEST(L2Inner, FourierModesAreOrthogonalWithHalfArea) {
  // <cos k.x, cos k'.x> = delta_{k k'} area / 2 for k != 0
  auto t = torus(32, 1.0, cplx(0.4, 1.3));
  const double area = t->area();
  const std::vector<std::pair<int, int>> ks = {{1, 0}, {0, 1}, {2, -1}, {3, 2}};
  for (std::size_t i = 0; i < ks.size(); ++i)
    for (std::size_t j = 0; j < ks.size(); ++j) {
      auto a = plane_wave(t, ks[i].first, ks[i].second).f;
      auto b = plane_wave(t, ks[j].first, ks[j].second).f;
      EXPECT_NEAR(l2_inner(a, b), i == j ? area / 2.0 : 0.0, 1e-13);
    }
}

TEST(SobolevNorm, ConstantField) {
  auto t = torus(16, 2.0, cplx(0.0, 1.5));
  Field c(t);
  c[0] = ScalarField(t, 3.0);
  c[2] = ScalarField(t, -4.0);
  for (int k = 0; k <= 3; ++k) EXPECT_NEAR(sobolev_norm(c, k), 5.0 * std::sqrt(3.0), 1e-12);
}

TEST(SobolevNorm, MonotoneInOrder) {
  auto t = torus(32);
  std::mt19937_64 rng(5);
  Field y = random_field(t, rng);
  for (int k = 0; k < 3; ++k) EXPECT_LE(sobolev_norm(y, k), sobolev_norm(y, k + 1));
  EXPECT_NEAR(sobolev_norm(y, 0), l2_norm(y), 1e-12 * l2_norm(y));
}

TEST(SobolevNorm, SingleModeRatio) {
  auto t = torus(32, 1.0, cplx(0.3, 0.8));
  const PlaneWave w = plane_wave(t, 2, 1);
  Field y(t);
  y[1] = w.f;
  const double r = std::pow(sobolev_norm(y, 1) / sobolev_norm(y, 0), 2);
  EXPECT_NEAR(r, 1.0 + w.kx * w.kx + w.ky * w.ky, 1e-10 * r);
  EXPECT_THROW((void)sobolev_norm(y, 4), ConfigError);
}

TEST(CkNorm, Basics) {
  auto t = torus(16);
  Field c(t);
  c[1] = ScalarField(t, -2.5);
  EXPECT_DOUBLE_EQ(ck_norm(c, 0), 2.5);
  std::mt19937_64 rng(6);
  Field y = random_field(t, rng);
  EXPECT_LE(ck_norm(y, 0), ck_norm(y, 1));
  const Field psi = eval_map(generic_point(square(32)), torus(32));
  EXPECT_NEAR(ck_norm(psi, 0), 1.0, 1e-12);
}

TEST(Dealias, RemovesHighModesAndKeepsLowOnes) {
  auto t = torus(32);
  const PlaneWave lo = plane_wave(t, 3, 2), hi = plane_wave(t, 13, 0);
  EXPECT_LT((dealias(lo.f) - lo.f).max_abs(), 1e-13);
  EXPECT_LT(dealias(hi.f).max_abs(), 1e-13);
}

TEST(Fields, MixingGridsThrows) {
  Field a(torus(16)), b(torus(32));
  EXPECT_THROW((void)l2_inner(a, b), LatticeMismatch);
}

TEST(Fields, CrossAndDot) {
  auto t = torus(8);
  Field e1 = Field::from_function(t, [](cplx) { return Vec3(1, 0, 0); });
  Field e2 = Field::from_function(t, [](cplx) { return Vec3(0, 1, 0); });
  Field e3 = cross(e1, e2);
  EXPECT_DOUBLE_EQ(e3.at(5)[2], 1.0);
  EXPECT_DOUBLE_EQ(dot(e1, e2).max_abs(), 0.0);
}
