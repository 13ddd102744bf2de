#pragma once

// Jacobi operator J, its first-order piece A, the corrected adjoint term and
// the improved operator L = J + Adag, on R^3-valued sections over a harmonic
// map psi. Derivatives are the spectral D_x, D_y of torus_field, which are
// antisymmetric in the quadrature inner product, so that
//   Adag Z = 2 D_d[(psi.Z) psi_d] + 4 |grad psi|^2 (psi.Z) psi
// makes L = -Delta - |grad psi|^2 + A + A^T + 4 |grad psi|^2 psi psi^T
// an exactly symmetric matrix on the grid.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lumpflow/elliptic_maps.hpp"

namespace lumpflow {

class OperatorContext {
public:
  /// `harmonic_tol` bounds the C^0 harmonic residual of psi; pass infinity to
  /// accept under-resolved maps (coarse spectral studies).
  explicit OperatorContext(Field psi, double harmonic_tol = 1e-5) : psi_(std::move(psi)) {
    auto g = gradient(psi_);
    psi_x_ = std::move(g.first);
    psi_y_ = std::move(g.second);
    lap_ = laplacian(psi_);
    grad2_ = dot(psi_x_, psi_x_) + dot(psi_y_, psi_y_);
    double unit = 0.0;
    for (std::size_t i = 0; i < psi_.size(); ++i) unit = std::max(unit, std::abs(psi_.at(i).norm() - 1.0));
    if (unit > 1e-10) throw NumericalError("OperatorContext: psi is not unit norm");
    Field r = lap_ + grad2_ * psi_;
    harmonic_residual_ = ck_norm(r, 0);
    if (harmonic_residual_ > harmonic_tol)
      throw NumericalError("OperatorContext: harmonic residual " + std::to_string(harmonic_residual_) +
                           " exceeds tolerance");
  }

  static OperatorContext at(const ModuliPoint& q, const TorusPtr& grid, double harmonic_tol = 1e-5) {
    return OperatorContext(eval_map(q, grid), harmonic_tol);
  }

  [[nodiscard]] const Field& psi() const { return psi_; }
  [[nodiscard]] const Field& psi_x() const { return psi_x_; }
  [[nodiscard]] const Field& psi_y() const { return psi_y_; }
  [[nodiscard]] const Field& laplacian_psi() const { return lap_; }
  [[nodiscard]] const ScalarField& grad2() const { return grad2_; }
  [[nodiscard]] const TorusPtr& torus() const { return psi_.torus(); }
  [[nodiscard]] double harmonic_residual() const { return harmonic_residual_; }

private:
  Field psi_, psi_x_, psi_y_, lap_;
  ScalarField grad2_;
  double harmonic_residual_ = 0.0;
};

/// A V = -2 (psi_x.V_x + psi_y.V_y) psi
inline Field apply_A(const OperatorContext& c, const Field& v) {
  require_same(c.torus(), v.torus());
  auto [vx, vy] = gradient(v);
  ScalarField s = dot(c.psi_x(), vx) + dot(c.psi_y(), vy);
  return (s * -2.0) * c.psi();
}

inline Field apply_J(const OperatorContext& c, const Field& v) {
  require_same(c.torus(), v.torus());
  auto [vx, vy] = gradient(v);
  ScalarField s = dot(c.psi_x(), vx) + dot(c.psi_y(), vy);
  Field out = laplacian(v) * -1.0;
  out -= c.grad2() * v;
  out -= (s * 2.0) * c.psi();
  return out;
}

inline Field apply_Adagger(const OperatorContext& c, const Field& z) {
  require_same(c.torus(), z.torus());
  const ScalarField pz = dot(c.psi(), z);
  Field out = deriv(pz * c.psi_x(), Direction::x) + deriv(pz * c.psi_y(), Direction::y);
  out *= 2.0;
  out += (pz * c.grad2() * 4.0) * c.psi();
  return out;
}

inline Field apply_L(const OperatorContext& c, const Field& y) { return apply_J(c, y) + apply_Adagger(c, y); }

/// B = L + Delta: the first and zeroth order part of L.
inline Field apply_B(const OperatorContext& c, const Field& y) {
  require_same(c.torus(), y.torus());
  auto [yx, yy] = gradient(y);
  const ScalarField s = dot(c.psi_x(), yx) + dot(c.psi_y(), yy);
  const ScalarField pz = dot(c.psi(), y);
  Field out = c.grad2() * y * -1.0;
  out -= (s * 2.0) * c.psi();
  Field div = deriv(pz * c.psi_x(), Direction::x) + deriv(pz * c.psi_y(), Direction::y);
  out.axpy(2.0, div);
  out += (pz * c.grad2() * 4.0) * c.psi();
  return out;
}

inline Field project_tangent(const Field& psi, const Field& y) {
  require_same(psi.torus(), y.torus());
  return y - dot(psi, y) * psi;
}
inline Field project_tangent(const OperatorContext& c, const Field& y) { return project_tangent(c.psi(), y); }

/// Q1(Y) = int |grad Y|^2 - |grad psi|^2 |Y|^2 - 4 (psi_d.Y_d)(psi.Y) + 4 |grad psi|^2 (psi.Y)^2,
/// with the Dirichlet term taken as -<Y, Delta Y> so Nyquist content is counted
/// consistently with L.
inline double q1_form(const OperatorContext& c, const Field& y) {
  auto [yx, yy] = gradient(y);
  const ScalarField py = dot(c.psi(), y);
  ScalarField dens = c.grad2() * dot(y, y) * -1.0;
  dens -= (dot(c.psi_x(), yx) + dot(c.psi_y(), yy)) * py * 4.0;
  dens += c.grad2() * py * py * 4.0;
  return integrate(dens) - l2_inner(y, laplacian(y));
}

inline double q2_form(const OperatorContext& c, const Field& y) { return q1_form(c, apply_L(c, y)); }

// ---------------------------------------------------------------- dense analysis

enum class OperatorKind { J, L };

inline const char* to_string(OperatorKind k) { return k == OperatorKind::J ? "J" : "L"; }

/// Flattening of a Field: component-major, index c * N^2 + p.
inline Eigen::VectorXd flatten(const Field& f) {
  const std::size_t m = f.size();
  Eigen::VectorXd v(3 * m);
  for (int c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < m; ++p) v[c * m + p] = f[c][p];
  return v;
}

inline Field unflatten(const TorusPtr& t, const Eigen::VectorXd& v) {
  Field f(t);
  const std::size_t m = t->size();
  for (int c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < m; ++p) f[c][p] = v[c * m + p];
  return f;
}

inline constexpr int kDenseGridLimit = 32;

/// Matrix of J or L acting on flattened Fields, built column by column.
inline Eigen::MatrixXd assemble_dense(const OperatorContext& c, OperatorKind kind) {
  const TorusPtr& t = c.torus();
  if (t->n() > kDenseGridLimit) throw ConfigError("assemble_dense: grid_n must not exceed 32");
  const Eigen::Index dim = 3 * Eigen::Index(t->size());
  Eigen::MatrixXd m(dim, dim);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    e[j] = 1.0;
    const Field col = unflatten(t, e);
    m.col(j) = flatten(kind == OperatorKind::J ? apply_J(c, col) : apply_L(c, col));
    e[j] = 0.0;
  }
  return m;
}

/// W^{1/2} M W^{-1/2} with W the diagonal quadrature weight.
inline Eigen::MatrixXd weighted(const OperatorContext& c, const Eigen::MatrixXd& m) {
  const double w = c.torus()->cell_area();
  Eigen::VectorXd sq = Eigen::VectorXd::Constant(m.rows(), std::sqrt(w));
  return sq.asDiagonal() * m * sq.cwiseInverse().asDiagonal();
}

/// max |M - M^T| / max |M|
inline double symmetry_defect(const Eigen::MatrixXd& m) {
  return (m - m.transpose()).cwiseAbs().maxCoeff() / std::max(m.cwiseAbs().maxCoeff(), 1e-300);
}

/// Orthonormal tangent frame at each point, as a 3N^2 x 2N^2 matrix.
inline Eigen::MatrixXd tangent_frame(const Field& psi) {
  const std::size_t m = psi.size();
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(3 * m, 2 * m);
  for (std::size_t p = 0; p < m; ++p) {
    const Vec3 n = psi.at(p);
    // pick the coordinate axis least aligned with n
    Eigen::Index k;
    n.cwiseAbs().minCoeff(&k);
    Vec3 e1 = Vec3::Unit(k) - n[k] * n;
    e1.normalize();
    const Vec3 e2 = n.cross(e1);
    for (int c = 0; c < 3; ++c) {
      t(c * m + p, p) = e1[c];
      t(c * m + p, m + p) = e2[c];
    }
  }
  return t;
}

struct SpectrumReport {
  std::string op;
  int grid_n = 0;
  bool tangent_only = false;
  std::vector<double> eigenvalues;  ///< lowest, ascending
  int kernel_dim = -1;              ///< -1 when indeterminate
  double gap_ratio = 0.0;
  bool determinate = false;
  double scale = 0.0;  ///< largest |eigenvalue|
  double coercivity = std::numeric_limits<double>::quiet_NaN();
  double coercivity_h1 = std::numeric_limits<double>::quiet_NaN();

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json j;
    j["operator"] = op + (tangent_only ? "_tangent" : "");
    j["grid_n"] = grid_n;
    j["eigenvalues"] = eigenvalues;
    j["kernel_dim"] = kernel_dim;
    j["gap_ratio"] = gap_ratio;
    j["determinate"] = determinate;
    j["coercivity"] = std::isfinite(coercivity) ? nlohmann::json(coercivity) : nlohmann::json(nullptr);
    j["coercivity_h1"] = std::isfinite(coercivity_h1) ? nlohmann::json(coercivity_h1) : nlohmann::json(nullptr);
    return j;
  }
};

namespace detail {

/// Kernel = eigenvalues below the largest ratio jump among the lowest `window`.
inline void detect_kernel(SpectrumReport& r, const Eigen::VectorXd& ev, int window, double min_ratio) {
  r.scale = ev.cwiseAbs().maxCoeff();
  const double floor = 1e-9 * std::max(r.scale, 1e-300);
  const int w = std::min<int>(window, int(ev.size()) - 1);
  double best = 0.0;
  int at = -1;
  for (int k = 0; k < w; ++k) {
    const double lo = std::max(std::abs(ev[k]), floor);
    const double hi = std::max(std::abs(ev[k + 1]), floor);
    const double ratio = hi / lo;
    if (ratio > best) {
      best = ratio;
      at = k + 1;
    }
  }
  r.gap_ratio = best;
  r.determinate = best >= min_ratio;
  r.kernel_dim = r.determinate ? at : -1;
}

}  // namespace detail

/// Spectrum of the weighted dense operator: L on all sections, or J
/// compressed onto tangent sections via a pointwise orthonormal frame.
/// `degree` sets the reporting window 4n+8 and the kernel window 4n+4.
inline SpectrumReport kernel_dimension(const OperatorContext& c, OperatorKind kind, int degree,
                                       double min_ratio = 10.0) {
  SpectrumReport r;
  r.op = to_string(kind);
  r.grid_n = c.torus()->n();
  r.tangent_only = kind == OperatorKind::J;
  Eigen::MatrixXd m = weighted(c, assemble_dense(c, kind));
  Eigen::MatrixXd h1;  // weighted H^1 Gram matrix: I - Delta
  {
    const Eigen::Index dim = m.rows();
    h1 = Eigen::MatrixXd::Identity(dim, dim);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
    for (Eigen::Index j = 0; j < dim; ++j) {
      e[j] = 1.0;
      h1.col(j) -= flatten(laplacian(unflatten(c.torus(), e)));
      e[j] = 0.0;
    }
  }
  if (kind == OperatorKind::J) {
    const Eigen::MatrixXd t = tangent_frame(c.psi());
    m = t.transpose() * m * t;
    h1 = t.transpose() * h1 * t;
  }
  m = 0.5 * (m + m.transpose()).eval();
  h1 = 0.5 * (h1 + h1.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const int report = std::min<int>(4 * degree + 8, int(ev.size()));
  r.eigenvalues.assign(ev.data(), ev.data() + report);
  detail::detect_kernel(r, ev, 4 * degree + 4, min_ratio);
  if (r.determinate) {
    r.coercivity = ev[r.kernel_dim];
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> gs(m, h1, Eigen::EigenvaluesOnly);
    r.coercivity_h1 = gs.eigenvalues()[r.kernel_dim];
  }
  return r;
}

/// Smallest eigenvalue of L beyond its numerical kernel; throws when the
/// kernel is indeterminate.
inline double coercivity_estimate(const OperatorContext& c, int degree) {
  const SpectrumReport r = kernel_dimension(c, OperatorKind::L, degree);
  if (!r.determinate) throw NumericalError("coercivity_estimate: kernel dimension is indeterminate");
  return r.coercivity;
}

}  // namespace lumpflow
