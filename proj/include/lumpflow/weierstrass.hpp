#pragma once

// Weierstrass sigma and zeta functions of the lattice omega1 Z + omega2 Z,
// evaluated through the Jacobi theta_1 series after reducing the argument to
// the centred fundamental cell.
//
// With tau = omega2/omega1, nome q = exp(i pi tau) and v = pi z / omega1:
//   sigma(z) = (omega1/pi) exp(eta1 z^2 / (2 omega1)) theta1(v) / theta1'(0)
//   eta1     = -(pi^2 / (3 omega1)) theta1'''(0) / theta1'(0)
//   eta2     = (eta1 omega2 - 2 pi i) / omega1            (Legendre)
// where eta_k is the quasi-period of zeta: zeta(z + omega_k) = zeta(z) + eta_k.
// For w = m omega1 + n omega2:
//   sigma(z + w) = (-1)^{m+n+mn} exp(eta_w (z + w/2)) sigma(z),  eta_w = m eta1 + n eta2.

#include <cmath>
#include <complex>
#include <utility>
#include <vector>

#include "lumpflow/errors.hpp"
#include "lumpflow/torus_field.hpp"

namespace lumpflow {

class WeierstrassLattice {
public:
  explicit WeierstrassLattice(const LatticeSpec& spec) : WeierstrassLattice(spec.omega1, spec.omega2) {}

  WeierstrassLattice(cplx omega1, cplx omega2) : w1_(omega1.real()), w2_(omega2) {
    if (!(omega1.imag() == 0.0 && w1_ > 0.0 && (w2_ / w1_).imag() > 0.0))
      throw ConfigError("WeierstrassLattice: need real omega1 > 0 and Im(omega2/omega1) > 0");
    const cplx tau = w2_ / w1_;
    // After reduction |Im v| <= pi Im(tau) / 2, so term k is bounded by
    // |c_k| exp((2k+1) pi Im(tau) / 2).
    cplx d1 = 0.0, d3 = 0.0;
    for (int k = 0; k < 64; ++k) {
      const double h = k + 0.5;
      const cplx c = (k % 2 == 0 ? 1.0 : -1.0) * std::exp(cplx(0.0, M_PI) * tau * (h * h));
      if (k > 1 && std::abs(c) * std::exp(h * M_PI * tau.imag()) < 1e-18) break;
      coef_.push_back(2.0 * c);  // theta1(v) = sum coef_k sin((2k+1) v)
      const double m = 2 * k + 1;
      d1 += 2.0 * c * m;
      d3 -= 2.0 * c * m * m * m;
    }
    theta1_prime0_ = d1;
    eta1_ = -(M_PI * M_PI / (3.0 * w1_)) * d3 / d1;
    eta2_ = (eta1_ * w2_ - cplx(0.0, 2.0 * M_PI)) / w1_;
  }

  [[nodiscard]] cplx eta1() const { return eta1_; }
  [[nodiscard]] cplx eta2() const { return eta2_; }
  [[nodiscard]] double omega1() const { return w1_; }
  [[nodiscard]] cplx omega2() const { return w2_; }

  /// Splits z = z0 + m omega1 + n omega2 with z0 in the centred cell.
  struct Reduced {
    cplx z0;
    int m;
    int n;
  };
  [[nodiscard]] Reduced reduce(cplx z) const {
    const double vcoord = z.imag() / w2_.imag();
    const double ucoord = (z.real() - vcoord * w2_.real()) / w1_;
    const int n = int(std::lround(vcoord));
    const int m = int(std::lround(ucoord));
    return {z - double(m) * w1_ - double(n) * w2_, m, n};
  }

  /// sigma(z) and sigma'(z) together; both are entire and this never divides.
  [[nodiscard]] std::pair<cplx, cplx> sigma_and_derivative(cplx z) const {
    const Reduced r = reduce(z);
    auto [s0, d0] = sigma_cell(r.z0);
    if (r.m == 0 && r.n == 0) return {s0, d0};
    const cplx w = double(r.m) * w1_ + double(r.n) * w2_;
    const cplx eta_w = double(r.m) * eta1_ + double(r.n) * eta2_;
    const int parity = (r.m + r.n + r.m * r.n) & 1;
    const cplx factor = (parity ? -1.0 : 1.0) * std::exp(eta_w * (r.z0 + 0.5 * w));
    return {factor * s0, factor * (eta_w * s0 + d0)};
  }

  [[nodiscard]] cplx sigma(cplx z) const { return sigma_and_derivative(z).first; }

  /// zeta = sigma'/sigma; throws within `pole_tol` of a lattice point.
  [[nodiscard]] cplx zeta(cplx z, double pole_tol = 1e-10) const {
    const Reduced r = reduce(z);
    if (std::abs(r.z0) < pole_tol) throw NumericalError("zeta: argument at a lattice point");
    auto [s0, d0] = sigma_cell(r.z0);
    return d0 / s0 + double(r.m) * eta1_ + double(r.n) * eta2_;
  }

private:
  [[nodiscard]] std::pair<cplx, cplx> sigma_cell(cplx z) const {
    const cplx v = (M_PI / w1_) * z;
    // sin/cos of odd multiples of v by the three-term recurrence
    //   s_{m+2} = 2 cos(2v) s_m - s_{m-2},
    // seeded with std::sin/std::cos so theta1 keeps full relative accuracy near 0.
    // complex sin/cos from real parts: one sincos and one sinh/cosh pair
    const double sx = std::sin(v.real()), cx = std::cos(v.real());
    const double shy = std::sinh(v.imag()), chy = std::cosh(v.imag());
    const cplx sv(sx * chy, cx * shy);
    const cplx cv(cx * chy, -sx * shy);
    const cplx two_cos2v = 2.0 * (1.0 - 2.0 * sv * sv);
    cplx s_prev = -sv, s_cur = sv;
    cplx c_prev = cv, c_cur = cv;
    cplx th = 0.0, thp = 0.0;
    for (std::size_t k = 0; k < coef_.size(); ++k) {
      const double m = 2.0 * k + 1.0;
      th += coef_[k] * s_cur;
      thp += coef_[k] * m * c_cur;
      const cplx s_next = two_cos2v * s_cur - s_prev;
      const cplx c_next = two_cos2v * c_cur - c_prev;
      s_prev = s_cur;
      s_cur = s_next;
      c_prev = c_cur;
      c_cur = c_next;
    }
    const cplx gauss = std::exp(eta1_ * z * z / (2.0 * w1_));
    const cplx pref = (w1_ / M_PI) / theta1_prime0_;
    const cplx s = pref * gauss * th;
    const cplx ds = pref * gauss * (eta1_ * z / w1_ * th + (M_PI / w1_) * thp);
    return {s, ds};
  }

  double w1_;
  cplx w2_;
  std::vector<cplx> coef_;
  cplx theta1_prime0_;
  cplx eta1_, eta2_;
};

/// Truncated Weierstrass product z prod_{0<|w|<=radius} (1 - z/w) exp(z/w + z^2/(2 w^2)).
/// Slowly convergent; an independent check of the theta-series evaluation.
inline cplx sigma_product(cplx z, cplx omega1, cplx omega2, double radius) {
  const double h = std::abs((std::conj(omega1) * omega2).imag()) / std::max(std::abs(omega1), std::abs(omega2));
  const int mmax = int(std::ceil(radius / h)) + 1;
  cplx prod = z;
  for (int m = -mmax; m <= mmax; ++m)
    for (int n = -mmax; n <= mmax; ++n) {
      if (m == 0 && n == 0) continue;
      const cplx w = double(m) * omega1 + double(n) * omega2;
      if (std::abs(w) > radius) continue;
      const cplx u = z / w;
      prod *= (1.0 - u) * std::exp(u + 0.5 * u * u);
    }
  return prod;
}

}  // namespace lumpflow
