#pragma once

// Decomposition phi = psi(q) + eps^2 Y with <Y, psi_mu> = 0 and |phi| = 1, the
// forcing terms of the coupled (Y, q) system, the energies E1, E2 and the
// total-error functional.
//
// Time conventions: t is the wave-map time, tau = eps t the slow time;
// qdot = dq/dtau, qddot = d^2q/dtau^2, while Y_t, Y_tt are t-derivatives.
// The system evaluated here is
//   Y_tt + L Y = k + eps j',
//   qddot + G(qdot, qdot) = eps h + eps^2 gamma^{-1} <Y, psi_{.l}> qddot^l,
// with L = J + Adag as in jacobi.hpp.

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "lumpflow/jacobi.hpp"
#include "lumpflow/moduli_geometry.hpp"
#include "lumpflow/wave_solver.hpp"

namespace lumpflow {

struct ModulationDecomposition {
  ModuliPoint q;
  Eigen::VectorXd qdot;
  Field Y, Y_t;
  double eps = 0.0;
  double t = 0.0;
  double tau = 0.0;
  Eigen::VectorXd ortho;  ///< <Y, psi_mu>
  double ortho_max = 0.0;
  double chi_c0 = 0.0;
  int newton_iterations = 0;
  // cached at q
  Field psi;
  std::vector<Field> tangents;
  MetricData metric;
  Eigen::MatrixXd Y_psi2;  ///< <Y, psi_{mu nu}>
};

struct ProjectionResult {
  ModuliPoint q;
  int iterations = 0;
  double residual = 0.0;  ///< max_mu |<phi - psi(q), psi_mu(q)>|
};

struct MMatrixReport {
  Eigen::MatrixXd M;
  double condition = 0.0;
  double alpha_a = 0.0;    ///< max_{mu nu} || gamma^{mu l} psi_{l nu} ||_0
  double deviation = 0.0;  ///< max |M - I| entrywise
  double bound = 0.0;      ///< eps^2 alpha_a ||Y||_0
};

struct CoupledResidual {
  double y_residual = 0.0;  ///< || Y_tt + L Y - k - eps j' ||_0
  double q_residual = 0.0;  ///< max_mu of the modulation-equation defect
  Field y_defect;
  Eigen::VectorXd q_defect;
};

/// One row of a decomposed trajectory, compared against the geodesic.
struct HistoryRow {
  double t = 0.0, tau = 0.0, eps = 0.0;
  Eigen::VectorXd q, qdot;            ///< decomposed
  Eigen::VectorXd q_star, qdot_star;  ///< geodesic at the same tau
  Eigen::VectorXd qddot_star;
  double Y_h3 = 0.0, Yt_h2 = 0.0;
  double ortho_max = 0.0, chi_c0 = 0.0;
  double E1 = 0.0, E2 = 0.0;
  double Mfunc = 0.0;  ///< filled by error_functional
};

class Modulation {
public:
  explicit Modulation(TorusPtr grid, double fd_step = 1e-5, double fd_step3 = 1e-3)
      : geo_(std::move(grid), fd_step), h_(fd_step), h3_(fd_step3) {}

  [[nodiscard]] const EllipticMap& map() const { return geo_.map(); }
  [[nodiscard]] const ModuliGeometry& geometry() const { return geo_; }
  [[nodiscard]] const TorusPtr& grid() const { return geo_.grid(); }

  /// <R, psi_{mu nu}(q)> for all mu, nu by symmetric differences in q.
  [[nodiscard]] Eigen::MatrixXd second_moments(const ModuliPoint& q, const Field& r) const {
    const int dim = q.dim();
    Eigen::MatrixXd m(dim, dim);
    for (int nu = 0; nu < dim; ++nu) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
      e[nu] = h_;
      const auto tp = map().tangents(q.moved(e));
      const auto tm = map().tangents(q.moved(-e));
      for (int mu = 0; mu < dim; ++mu) m(mu, nu) = (l2_inner(r, tp[mu]) - l2_inner(r, tm[mu])) / (2.0 * h_);
    }
    return 0.5 * (m + m.transpose());
  }

  /// Newton solve of F_mu(q) = <phi - psi(q), psi_mu(q)> = 0 with Jacobian
  /// -gamma + <phi - psi, psi_{mu nu}>. Converges when |F| < tol ||phi||_0.
  /// A smaller absolute `tol_floor` keeps iterating past that point for as
  /// long as Newton still gains.
  [[nodiscard]] ProjectionResult project_to_moduli(const Field& phi, const ModuliPoint& guess, double tol = 1e-10,
                                                   int max_iter = 50, double tol_floor = -1.0) const {
    require_same(phi.torus(), grid());
    const double scale = l2_norm(phi);
    if (tol_floor < 0.0) tol_floor = tol * scale;
    ProjectionResult res{guess, 0, 0.0};
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it <= max_iter; ++it) {
      const MapJet jet = map().jet(res.q);
      const Field r = phi - jet.psi;
      Eigen::VectorXd f(res.q.dim());
      for (int mu = 0; mu < res.q.dim(); ++mu) f[mu] = l2_inner(r, jet.tangents[mu]);
      res.residual = f.cwiseAbs().maxCoeff();
      const bool met = res.residual < tol * scale;
      if (met && (res.residual <= tol_floor || res.residual > 0.25 * prev)) return res;
      if (it == max_iter) break;
      prev = res.residual;
      const MetricData m = metric_from_tangents(jet.tangents, res.q);
      const Eigen::MatrixXd jac = -m.gamma + second_moments(res.q, r);
      const Eigen::VectorXd dq = jac.partialPivLu().solve(-f);
      if (!dq.allFinite()) throw NonConvergence("project_to_moduli: singular Newton system");
      res.q = res.q.moved(dq);
      require_admissible(res.q);
      res.iterations = it + 1;
    }
    if (res.residual < tol * scale) return res;
    throw NonConvergence("project_to_moduli: no convergence in " + std::to_string(max_iter) + " iterations");
  }

  [[nodiscard]] ModulationDecomposition decompose(const Field& phi, const Field& phi_t, double eps,
                                                  const ModuliPoint& guess) const {
    if (!(eps > 0.0)) throw ConfigError("decompose: eps must be positive");
    const double e2 = eps * eps;
    // drive |F| to rounding level so <Y, psi_mu> = F / eps^2 stays small
    const ProjectionResult pr = project_to_moduli(phi, guess, 1e-10, 50, 1e-13 * e2);
    ModulationDecomposition d;
    d.q = pr.q;
    d.eps = eps;
    d.newton_iterations = pr.iterations;
    const MapJet jet = map().jet(d.q);
    d.psi = jet.psi;
    d.tangents = jet.tangents;
    d.metric = metric_from_tangents(d.tangents, d.q);
    const Field r = phi - d.psi;
    d.Y = r * (1.0 / e2);
    d.Y_psi2 = second_moments(d.q, r) / e2;
    const int dim = d.q.dim();
    Eigen::VectorXd rhs(dim);
    for (int nu = 0; nu < dim; ++nu) rhs[nu] = l2_inner(phi_t, d.tangents[nu]);
    const Eigen::MatrixXd k = eps * (d.metric.gamma - e2 * d.Y_psi2);
    d.qdot = k.partialPivLu().solve(rhs);
    if (!d.qdot.allFinite()) throw NumericalError("decompose: singular velocity system");
    d.Y_t = phi_t;
    for (int mu = 0; mu < dim; ++mu) d.Y_t.axpy(-eps * d.qdot[mu], d.tangents[mu]);
    d.Y_t *= 1.0 / e2;
    d.ortho.resize(dim);
    for (int mu = 0; mu < dim; ++mu) d.ortho[mu] = l2_inner(d.Y, d.tangents[mu]);
    d.ortho_max = d.ortho.cwiseAbs().maxCoeff();
    d.chi_c0 = chi(d).max_abs();
    return d;
  }

  [[nodiscard]] ModulationDecomposition decompose(const WaveState& s, const ModuliPoint& guess) const {
    ModulationDecomposition d = decompose(s.phi, s.phi_t, s.eps, guess);
    d.t = s.t;
    d.tau = s.eps * s.t;
    return d;
  }

  /// chi = psi.Y + eps^2 |Y|^2 / 2
  [[nodiscard]] static ScalarField chi(const Field& psi, const Field& y, double eps) {
    return dot(psi, y) + dot(y, y) * (0.5 * eps * eps);
  }
  [[nodiscard]] static ScalarField chi(const ModulationDecomposition& d) { return chi(d.psi, d.Y, d.eps); }

  /// psi_tau = qdot^mu psi_mu and psi_{mu l} qdot^l (for all mu) from one pair of jets.
  struct Velocity {
    MapJet jet;
    Field psi_tau;
    std::vector<Field> psi_mu_dot;  ///< psi_{mu l} qdot^l
    Field psi_qq;                   ///< psi_{mu l} qdot^mu qdot^l
  };

  [[nodiscard]] Velocity velocity(const ModuliPoint& q, const Eigen::VectorXd& qdot) const {
    Velocity v{map().jet(q), Field(grid()), {}, Field(grid())};
    for (int mu = 0; mu < q.dim(); ++mu) v.psi_tau.axpy(qdot[mu], v.jet.tangents[mu]);
    v.psi_mu_dot = map().directional_second(q, qdot, h_);
    for (int mu = 0; mu < q.dim(); ++mu) v.psi_qq.axpy(qdot[mu], v.psi_mu_dot[mu]);
    return v;
  }

  /// k = -(psi_tautau + |psi_tau|^2 psi)
  [[nodiscard]] Field compute_k(const ModuliPoint& q, const Eigen::VectorXd& qdot, const Eigen::VectorXd& qddot) const {
    const Velocity v = velocity(q, qdot);
    Field psi_tt = v.psi_qq;
    for (int mu = 0; mu < q.dim(); ++mu) psi_tt.axpy(qddot[mu], v.jet.tangents[mu]);
    Field k = psi_tt + dot(v.psi_tau, v.psi_tau) * v.jet.psi;
    return k * -1.0;
  }

  /// j' = j + jhat with
  ///   j    = -{ 2(psi_tau.Y_t) psi + eps[(|Y_t|^2 - |Y_d|^2) psi + (|psi_tau|^2 - 2 psi_d.Y_d) Y]
  ///            + 2 eps^2 (psi_tau.Y_t) Y + eps^3 (|Y_t|^2 - |Y_d|^2) Y },
  ///   jhat = eps { |Y|^2 Delta psi - 2 (Y.Y_d) psi_d }.
  [[nodiscard]] static Field jprime_terms(double eps, const Field& psi, const Field& psi_tau, const Field& y,
                                          const Field& y_t) {
    auto [px, py] = gradient(psi);
    auto [yx, yy] = gradient(y);
    const ScalarField pt_yt = dot(psi_tau, y_t);
    const ScalarField kin = dot(y_t, y_t) - dot(yx, yx) - dot(yy, yy);
    const ScalarField cross_grad = dot(px, yx) + dot(py, yy);
    const ScalarField pt2 = dot(psi_tau, psi_tau);
    Field j = (pt_yt * 2.0) * psi;
    j.axpy(eps, kin * psi);
    j.axpy(eps, (pt2 - cross_grad * 2.0) * y);
    j.axpy(2.0 * eps * eps, pt_yt * y);
    j.axpy(eps * eps * eps, kin * y);
    j *= -1.0;
    Field jhat = dot(y, y) * laplacian(psi);
    jhat -= (dot(y, yx) * 2.0) * px;
    jhat -= (dot(y, yy) * 2.0) * py;
    j.axpy(eps, jhat);
    return j;
  }

  [[nodiscard]] Field compute_jprime(double eps, const ModuliPoint& q, const Eigen::VectorXd& qdot, const Field& y,
                                     const Field& y_t) const {
    const MapJet jet = map().jet(q);
    Field psi_tau(grid());
    for (int mu = 0; mu < q.dim(); ++mu) psi_tau.axpy(qdot[mu], jet.tangents[mu]);
    return jprime_terms(eps, jet.psi, psi_tau, y, y_t);
  }

  /// h^mu = gamma^{mu nu} { 2 <Y_t, psi_{nu l}> qdot^l + eps <Y, psi_{nu l r}> qdot^l qdot^r + <j', psi_nu> }.
  /// Only the tangential part of j' contributes; expanded, the last bracket is
  ///   -eps <|psi_tau|^2 Y, psi_nu> + 2 eps <(psi_d.Y_d) Y, psi_nu> - 2 eps <(Y.Y_d) psi_d, psi_nu>
  ///   - 2 eps^2 <(psi_tau.Y_t) Y, psi_nu> - eps^3 <(|Y_t|^2 - |Y_d|^2) Y, psi_nu>.
  [[nodiscard]] Eigen::VectorXd compute_h(double eps, const ModuliPoint& q, const Eigen::VectorXd& qdot,
                                          const Field& y, const Field& y_t) const {
    const int dim = q.dim();
    const Velocity v = velocity(q, qdot);
    const MetricData m = metric_from_tangents(v.jet.tangents, q);
    const Field jp = jprime_terms(eps, v.jet.psi, v.psi_tau, y, y_t);
    const auto third = third_directional(q, qdot, v.jet.tangents);
    Eigen::VectorXd low(dim);
    for (int nu = 0; nu < dim; ++nu)
      low[nu] = 2.0 * l2_inner(y_t, v.psi_mu_dot[nu]) + eps * l2_inner(y, third[nu]) + l2_inner(jp, v.jet.tangents[nu]);
    return m.gamma_inv * low;
  }

  /// M = I - eps^2 gamma^{-1} <Y, psi_{. .}>
  [[nodiscard]] MMatrixReport compute_M_matrix(double eps, const ModuliPoint& q, const Field& y) const {
    const int dim = q.dim();
    const auto t = map().tangents(q);
    const MetricData m = metric_from_tangents(t, q);
    const auto second = map().second_derivatives(q, h_);
    MMatrixReport r;
    Eigen::MatrixXd ypsi(dim, dim);
    for (int l = 0; l < dim; ++l)
      for (int n = 0; n < dim; ++n) ypsi(l, n) = l2_inner(y, second[l * dim + n]);
    r.M = Eigen::MatrixXd::Identity(dim, dim) - eps * eps * m.gamma_inv * ypsi;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(r.M);
    const auto& sv = svd.singularValues();
    r.condition = sv[0] / sv[sv.size() - 1];
    if (!(sv[sv.size() - 1] > 0.0) || !std::isfinite(r.condition))
      throw NumericalError("compute_M_matrix: M is singular");
    for (int mu = 0; mu < dim; ++mu)
      for (int n = 0; n < dim; ++n) {
        Field f(grid());
        for (int l = 0; l < dim; ++l) f.axpy(m.gamma_inv(mu, l), second[l * dim + n]);
        r.alpha_a = std::max(r.alpha_a, l2_norm(f));
      }
    r.deviation = (r.M - Eigen::MatrixXd::Identity(dim, dim)).cwiseAbs().maxCoeff();
    r.bound = eps * eps * r.alpha_a * l2_norm(y);
    return r;
  }

  /// E1 = |Y_t|^2/2 + Q1(Y)/2,  E2 = |(LY)_t|^2/2 + Q2(Y)/2 with
  /// (LY)_t = L Y_t + eps (d_tau B) Y, d_tau B by central differences along qdot.
  [[nodiscard]] std::pair<double, double> energies_E1_E2(const ModulationDecomposition& d,
                                                         double dtau = 1e-4) const {
    const OperatorContext ctx(d.psi, std::numeric_limits<double>::infinity());
    const double e1 = 0.5 * l2_inner(d.Y_t, d.Y_t) + 0.5 * q1_form(ctx, d.Y);
    Field lyt = apply_L(ctx, d.Y_t);
    if (d.qdot.norm() > 0.0) {
      const OperatorContext cp(map().eval(d.q.moved(dtau * d.qdot)), std::numeric_limits<double>::infinity());
      const OperatorContext cm(map().eval(d.q.moved(-dtau * d.qdot)), std::numeric_limits<double>::infinity());
      Field db = apply_B(cp, d.Y) - apply_B(cm, d.Y);
      lyt.axpy(d.eps / (2.0 * dtau), db);
    }
    const double e2 = 0.5 * l2_inner(lyt, lyt) + 0.5 * q2_form(ctx, d.Y);
    return {e1, e2};
  }

  /// Defects of the coupled system at the middle of three consecutive
  /// decompositions: Y_tt from the second difference in t, qddot from the
  /// central difference of qdot in tau.
  [[nodiscard]] CoupledResidual coupled_residual(const ModulationDecomposition& prev, const ModulationDecomposition& mid,
                                                 const ModulationDecomposition& next) const {
    const double dtp = mid.t - prev.t, dtn = next.t - mid.t;
    const double dtaup = mid.tau - prev.tau, dtaun = next.tau - mid.tau;
    if (!(dtp > 0.0 && dtn > 0.0)) throw ConfigError("coupled_residual: samples must be increasing in t");
    const double eps = mid.eps;
    // non-uniform three-point second difference
    Field ytt = prev.Y * (2.0 / (dtp * (dtp + dtn)));
    ytt.axpy(-2.0 / (dtp * dtn), mid.Y);
    ytt.axpy(2.0 / (dtn * (dtp + dtn)), next.Y);
    Eigen::VectorXd qddot = Eigen::VectorXd::Zero(mid.q.dim());
    if (dtaup > 0.0 && dtaun > 0.0)
      qddot = (dtaup * dtaup * (next.qdot - mid.qdot) + dtaun * dtaun * (mid.qdot - prev.qdot)) /
              (dtaup * dtaun * (dtaup + dtaun));
    return residual_at(mid, ytt, qddot);
  }

  /// Residuals for given Y_tt and qddot at a decomposition.
  [[nodiscard]] CoupledResidual residual_at(const ModulationDecomposition& d, const Field& ytt,
                                            const Eigen::VectorXd& qddot) const {
    const double eps = d.eps;
    const OperatorContext ctx(d.psi, std::numeric_limits<double>::infinity());
    CoupledResidual out;
    out.y_defect = ytt + apply_L(ctx, d.Y) - compute_k(d.q, d.qdot, qddot);
    out.y_defect.axpy(-eps, compute_jprime(eps, d.q, d.qdot, d.Y, d.Y_t));
    out.y_residual = l2_norm(out.y_defect);
    out.q_defect = q_defect(eps, d.q, d.qdot, qddot, d.Y, d.Y_t, &d.Y_psi2);
    out.q_residual = out.q_defect.cwiseAbs().maxCoeff();
    return out;
  }

  /// qddot + G(qdot, qdot) - eps h - eps^2 gamma^{-1} <Y, psi_{. l}> qddot^l
  [[nodiscard]] Eigen::VectorXd q_defect(double eps, const ModuliPoint& q, const Eigen::VectorXd& qdot,
                                         const Eigen::VectorXd& qddot, const Field& y, const Field& y_t,
                                         const Eigen::MatrixXd* y_psi2 = nullptr) const {
    Eigen::VectorXd out = qddot - geo_.acceleration(q, qdot).qddot;
    if (eps == 0.0) return out;
    out -= eps * compute_h(eps, q, qdot, y, y_t);
    const MetricData m = geo_.metric(q);
    const Eigen::MatrixXd yp = y_psi2 ? *y_psi2 : second_moments(q, y);
    out -= eps * eps * (m.gamma_inv * (yp * qddot));
    return out;
  }

private:
  /// psi_{nu l r} qdot^l qdot^r by a second difference of psi_nu along qdot.
  [[nodiscard]] std::vector<Field> third_directional(const ModuliPoint& q, const Eigen::VectorXd& qdot,
                                                     const std::vector<Field>& at_q) const {
    const int dim = q.dim();
    const double vn = qdot.norm();
    if (vn == 0.0) return std::vector<Field>(dim, Field(grid()));
    const double s = h3_ / vn;
    auto tp = map().tangents(q.moved(s * qdot));
    const auto tm = map().tangents(q.moved(-s * qdot));
    for (int nu = 0; nu < dim; ++nu) {
      tp[nu] += tm[nu];
      tp[nu].axpy(-2.0, at_q[nu]);
      tp[nu] *= 1.0 / (s * s);
    }
    return tp;
  }

  ModuliGeometry geo_;
  double h_, h3_;
};

/// Running maximum of eps^2 |qt|^2 + |qt'|^2 + |qt''|^2 + ||Y||_3^2 + ||Y_t||_2^2 with
/// q = q_* + eps^2 qt and primes t-derivatives: qt' = (qdot - qdot_*)/eps and qt''
/// from central differences of qt' in t (one-sided at the ends).
inline std::vector<double> error_functional(std::vector<HistoryRow>& rows) {
  const std::size_t n = rows.size();
  std::vector<double> out(n, 0.0);
  if (n == 0) return out;
  const double eps = rows.front().eps;
  if (!((rows.front().q - rows.front().q_star).cwiseAbs().maxCoeff() <= 1e-6))
    throw ConfigError("error_functional: trajectory and geodesic start from different points");
  std::vector<Eigen::VectorXd> qt(n), qt1(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double e2 = eps > 0.0 ? eps * eps : 1.0;
    qt[k] = (rows[k].q - rows[k].q_star) / e2;
    qt1[k] = eps > 0.0 ? Eigen::VectorXd((rows[k].qdot - rows[k].qdot_star) / eps)
                       : Eigen::VectorXd::Zero(rows[k].q.size());
  }
  double running = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    Eigen::VectorXd qt2 = Eigen::VectorXd::Zero(qt[k].size());
    if (n >= 2) {
      const std::size_t a = k == 0 ? 0 : k - 1;
      const std::size_t b = k + 1 == n ? n - 1 : k + 1;
      const double dt = rows[b].t - rows[a].t;
      if (dt > 0.0) qt2 = (qt1[b] - qt1[a]) / dt;
    }
    const double v = eps * eps * qt[k].squaredNorm() + qt1[k].squaredNorm() + qt2.squaredNorm() +
                     rows[k].Y_h3 * rows[k].Y_h3 + rows[k].Yt_h2 * rows[k].Yt_h2;
    running = std::max(running, v);
    out[k] = running;
    rows[k].Mfunc = running;
  }
  return out;
}

inline void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& rows) {
  if (rows.empty()) return;
  const int dim = int(rows.front().q.size());
  os << "t,tau";
  for (int i = 0; i < dim; ++i) os << ",q_" << i;
  for (int i = 0; i < dim; ++i) os << ",qdot_" << i;
  os << ",Y_h3,Yt_h2,ortho_max,chi_c0,E1,E2,Mfunc\n";
  os.precision(17);
  for (const auto& r : rows) {
    os << r.t << ',' << r.tau;
    for (int i = 0; i < dim; ++i) os << ',' << r.q[i];
    for (int i = 0; i < dim; ++i) os << ',' << r.qdot[i];
    os << ',' << r.Y_h3 << ',' << r.Yt_h2 << ',' << r.ortho_max << ',' << r.chi_c0 << ',' << r.E1 << ',' << r.E2
       << ',' << r.Mfunc << '\n';
  }
}

}  // namespace lumpflow
