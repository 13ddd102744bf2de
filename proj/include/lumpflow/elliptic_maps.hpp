#pragma once

// psi(q, .) : Sigma -> S^2 for the elliptic function f = N/D with
//   N(z) = lambda prod sigma(z - a_i),  D(z) = prod sigma(z - b_j),
// evaluated in homogeneous form so poles of f need no special handling:
//   psi = (2 Re(N conj D), 2 Im(N conj D), |N|^2 - |D|^2) / (|N|^2 + |D|^2).
// The chart pole is p = (0,0,1): psi = p where D = 0, psi = -p where N = 0.

#include <cmath>
#include <vector>

#include "lumpflow/errors.hpp"
#include "lumpflow/moduli_point.hpp"
#include "lumpflow/torus_field.hpp"
#include "lumpflow/weierstrass.hpp"

namespace lumpflow {

inline cplx sigma(cplx z, const LatticeSpec& lattice) { return WeierstrassLattice(lattice).sigma(z); }
inline cplx zeta_w(cplx z, const LatticeSpec& lattice) { return WeierstrassLattice(lattice).zeta(z); }

/// Stereographic projection from p = (0,0,1).
inline cplx stereographic(const Vec3& x) {
  const double den = 1.0 - x[2];
  if (!(std::abs(den) > 1e-300)) throw NumericalError("stereographic: point is the projection pole");
  return cplx(x[0], x[1]) / den;
}

inline Vec3 inverse_stereographic(cplx w) {
  const double r2 = std::norm(w);
  return Vec3(2.0 * w.real(), 2.0 * w.imag(), r2 - 1.0) / (1.0 + r2);
}

/// psi from homogeneous coordinates (N, D).
inline Vec3 homogeneous_to_sphere(cplx num, cplx den) {
  const double nn = std::norm(num), dd = std::norm(den);
  const double s = nn + dd;
  const cplx p = num * std::conj(den);
  return Vec3(2.0 * p.real(), 2.0 * p.imag(), nn - dd) / s;
}

/// Derivative of psi along a parameter change (dN, dD) of the homogeneous pair.
inline Vec3 homogeneous_variation(cplx num, cplx den, cplx dnum, cplx dden, const Vec3& psi) {
  const double s = std::norm(num) + std::norm(den);
  const double dn = 2.0 * (std::conj(num) * dnum).real();
  const double dd = 2.0 * (std::conj(den) * dden).real();
  const cplx dp = dnum * std::conj(den) + num * std::conj(dden);
  const double ds = dn + dd;
  return Vec3(2.0 * dp.real() - psi[0] * ds, 2.0 * dp.imag() - psi[1] * ds, (dn - dd) - psi[2] * ds) / s;
}

/// psi together with its first moduli derivatives psi_mu, mu = 0..4n-1.
struct MapJet {
  Field psi;
  std::vector<Field> tangents;
};

/// Evaluates psi(q, .) and psi_mu(q, .) on a fixed grid. Holds the sigma
/// machinery for one lattice; const member functions are thread safe.
class EllipticMap {
public:
  explicit EllipticMap(TorusPtr torus) : torus_(std::move(torus)), w_(torus_->lattice()) {}

  [[nodiscard]] const TorusPtr& torus() const { return torus_; }
  [[nodiscard]] const WeierstrassLattice& weierstrass() const { return w_; }

  [[nodiscard]] Field eval(const ModuliPoint& q) const {
    check(q);
    Field out(torus_);
    for (std::size_t i = 0; i < out.size(); ++i) {
      auto [num, den] = homogeneous(q, torus_->point(i));
      out.set(i, homogeneous_to_sphere(num, den));
    }
    return out;
  }

  [[nodiscard]] Vec3 eval_at(const ModuliPoint& q, cplx z) const {
    auto [num, den] = homogeneous(q, z);
    return homogeneous_to_sphere(num, den);
  }

  /// psi and all psi_mu, analytically through the homogeneous pair. Since N and
  /// D are holomorphic in every complex parameter c, d/d(Re c) = d/dc and
  /// d/d(Im c) = i d/dc.
  [[nodiscard]] MapJet jet(const ModuliPoint& q) const {
    check(q);
    const int n = q.n;
    const int dim = q.dim();
    MapJet out{Field(torus_), std::vector<Field>(dim, Field(torus_))};
    std::vector<cplx> sa(n), dsa(n), sb(n), dsb(n), dn(dim / 2), dd(dim / 2);
    const cplx lam = q.lambda();
    std::vector<cplx> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = q.a(i);
      b[i] = q.b(i);
    }
    for (std::size_t p = 0; p < out.psi.size(); ++p) {
      const cplx z = torus_->point(p);
      for (int i = 0; i < n; ++i) {
        std::tie(sa[i], dsa[i]) = w_.sigma_and_derivative(z - a[i]);
        std::tie(sb[i], dsb[i]) = w_.sigma_and_derivative(z - b[i]);
      }
      cplx pa = 1.0, pb = 1.0;
      for (int i = 0; i < n; ++i) {
        pa *= sa[i];
        pb *= sb[i];
      }
      const cplx num = lam * pa, den = pb;
      // products with one factor omitted, without dividing by a possibly zero sigma
      auto omit = [n](const std::vector<cplx>& s, int k) {
        cplx r = 1.0;
        for (int i = 0; i < n; ++i)
          if (i != k) r *= s[i];
        return r;
      };
      const cplx pb_omit_last = omit(sb, n - 1);
      dn[0] = pa;
      dd[0] = 0.0;
      for (int k = 0; k < n; ++k) {
        dn[1 + k] = -lam * dsa[k] * omit(sa, k);
        dd[1 + k] = -dsb[n - 1] * pb_omit_last;  // b_n moves with every a_k
      }
      for (int j = 0; j < n - 1; ++j) {
        dn[1 + n + j] = 0.0;
        dd[1 + n + j] = -dsb[j] * omit(sb, j) + dsb[n - 1] * pb_omit_last;
      }
      const Vec3 psi = homogeneous_to_sphere(num, den);
      out.psi.set(p, psi);
      const cplx I(0.0, 1.0);
      for (int c = 0; c < dim / 2; ++c) {
        out.tangents[2 * c].set(p, homogeneous_variation(num, den, dn[c], dd[c], psi));
        out.tangents[2 * c + 1].set(p, homogeneous_variation(num, den, I * dn[c], I * dd[c], psi));
      }
    }
    return out;
  }

  [[nodiscard]] std::vector<Field> tangents(const ModuliPoint& q) const { return jet(q).tangents; }

  /// psi_{mu nu} by symmetric differences of the analytic psi_mu, symmetrized.
  /// Result is indexed [mu * dim + nu].
  [[nodiscard]] std::vector<Field> second_derivatives(const ModuliPoint& q, double h = 1e-5) const {
    const int dim = q.dim();
    std::vector<std::vector<Field>> col(dim);
    for (int nu = 0; nu < dim; ++nu) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
      e[nu] = h;
      auto tp = tangents(q.moved(e));
      auto tm = tangents(q.moved(-e));
      col[nu].resize(dim);
      for (int mu = 0; mu < dim; ++mu) {
        tp[mu] -= tm[mu];
        tp[mu] *= 1.0 / (2.0 * h);
        col[nu][mu] = std::move(tp[mu]);
      }
    }
    std::vector<Field> out(std::size_t(dim) * dim);
    for (int mu = 0; mu < dim; ++mu)
      for (int nu = mu; nu < dim; ++nu) {
        Field s = col[nu][mu] + col[mu][nu];
        s *= 0.5;
        out[mu * dim + nu] = s;
        out[nu * dim + mu] = std::move(s);
      }
    return out;
  }

  /// psi_{mu lambda} v^lambda for all mu: one pair of extra jet evaluations.
  [[nodiscard]] std::vector<Field> directional_second(const ModuliPoint& q, const Eigen::VectorXd& v,
                                                     double h = 1e-5) const {
    const double vn = v.norm();
    const int dim = q.dim();
    if (vn == 0.0) return std::vector<Field>(dim, Field(torus_));
    const double s = h / vn;
    auto tp = tangents(q.moved(s * v));
    auto tm = tangents(q.moved(-s * v));
    for (int mu = 0; mu < dim; ++mu) {
      tp[mu] -= tm[mu];
      tp[mu] *= 1.0 / (2.0 * s);
    }
    return tp;
  }

private:
  void check(const ModuliPoint& q) const {
    if (q.lattice.omega1 != torus_->lattice().omega1 || q.lattice.omega2 != torus_->lattice().omega2)
      throw LatticeMismatch();
    require_admissible(q);
  }

  [[nodiscard]] std::pair<cplx, cplx> homogeneous(const ModuliPoint& q, cplx z) const {
    cplx num = q.lambda(), den = 1.0;
    for (int i = 0; i < q.n; ++i) {
      num *= w_.sigma(z - q.a(i));
      den *= w_.sigma(z - q.b(i));
    }
    return {num, den};
  }

  TorusPtr torus_;
  WeierstrassLattice w_;
};

// Free-function forms.

inline Field eval_map(const ModuliPoint& q, const TorusPtr& grid) { return EllipticMap(grid).eval(q); }

inline Field d_moduli(const ModuliPoint& q, int mu, const TorusPtr& grid) {
  if (mu < 0 || mu >= q.dim()) throw ConfigError("d_moduli: index out of range");
  return EllipticMap(grid).jet(q).tangents[mu];
}

inline Field d2_moduli(const ModuliPoint& q, int mu, int nu, const TorusPtr& grid, double h = 1e-5) {
  const int dim = q.dim();
  if (mu < 0 || mu >= dim || nu < 0 || nu >= dim) throw ConfigError("d2_moduli: index out of range");
  EllipticMap m(grid);
  auto fd = [&](int a, int b) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
    e[b] = h;
    Field d = m.jet(q.moved(e)).tangents[a] - m.jet(q.moved(-e)).tangents[a];
    return d * (1.0 / (2.0 * h));
  };
  if (mu == nu) return fd(mu, nu);
  Field s = fd(mu, nu) + fd(nu, mu);
  return s * 0.5;
}

/// Pointwise harmonic-map residual psi_xx + psi_yy + |grad psi|^2 psi.
inline Field harmonic_residual(const Field& psi) {
  auto [px, py] = gradient(psi);
  ScalarField g2 = dot(px, px) + dot(py, py);
  return laplacian(psi) + g2 * psi;
}

}  // namespace lumpflow
