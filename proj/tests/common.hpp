#pragma once

#include <random>

#include <Eigen/Core>

#include "lumpflow/experiment.hpp"

namespace lumpflow::testing {

inline LatticeSpec square(int n) {
  LatticeSpec s;
  s.grid_n = n;
  return s;
}

/// Well-resolved generic n = 2 point (harmonic residual ~1e-10 at grid_n 64).
inline ModuliPoint generic_point(const LatticeSpec& lat = square(64)) { return ExperimentConfig::default_q0(lat); }

inline Eigen::VectorXd generic_velocity() { return ExperimentConfig::default_q1(); }

/// Further admissible n = 2 points.
inline ModuliPoint point_b(const LatticeSpec& lat = square(64)) {
  return ModuliPoint::from_params(lat, cplx(0.8, 0.3), {cplx(0.15, 0.1), cplx(0.6, 0.45)}, {cplx(0.35, 0.7)});
}
inline ModuliPoint point_c(const LatticeSpec& lat = square(64)) {
  return ModuliPoint::from_params(lat, cplx(1.2, -0.2), {cplx(0.05, 0.3), cplx(0.5, 0.05)}, {cplx(0.2, 0.75)});
}

inline Field random_field(const TorusPtr& t, std::mt19937_64& rng, bool smooth = true) {
  std::normal_distribution<double> nd;
  Field f(t);
  for (std::size_t p = 0; p < f.size(); ++p) f.set(p, Vec3(nd(rng), nd(rng), nd(rng)));
  return smooth ? dealias(f) : f;
}

/// Random smooth scalar: a few low Fourier modes with random amplitudes.
inline ScalarField random_smooth_scalar(const TorusPtr& t, std::mt19937_64& rng, int kmax = 3) {
  std::normal_distribution<double> nd;
  const LatticeSpec& lat = t->lattice();
  std::vector<std::tuple<int, int, double, double>> modes;
  for (int a = -kmax; a <= kmax; ++a)
    for (int b = -kmax; b <= kmax; ++b) modes.emplace_back(a, b, nd(rng) / (1 + a * a + b * b), nd(rng));
  return ScalarField::from_function(t, [&](cplx z) {
    // fractional coordinates (u, v) with z = u omega1 + v omega2
    const double v = z.imag() / lat.omega2.imag();
    const double u = (z.real() - v * lat.omega2.real()) / lat.omega1.real();
    double s = 0.0;
    for (auto [a, b, amp, ph] : modes) s += amp * std::cos(2.0 * M_PI * (a * u + b * v) + ph);
    return s;
  });
}

}  // namespace lumpflow::testing
