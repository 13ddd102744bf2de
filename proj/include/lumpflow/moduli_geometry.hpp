#pragma once

// L^2 metric, Christoffel symbols and geodesic flow on the moduli space.

#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lumpflow/elliptic_maps.hpp"

namespace lumpflow {

struct MetricData {
  Eigen::MatrixXd gamma;
  Eigen::MatrixXd gamma_inv;
  ModuliPoint at;
  double min_eigenvalue = 0.0;
  double condition = 0.0;
};

/// Gram matrix of the tangent fields, symmetrized; throws if not positive definite.
inline MetricData metric_from_tangents(const std::vector<Field>& t, const ModuliPoint& at) {
  const int dim = int(t.size());
  MetricData m;
  m.at = at;
  m.gamma.resize(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = i; j < dim; ++j) m.gamma(i, j) = m.gamma(j, i) = l2_inner(t[i], t[j]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.gamma);
  const auto& ev = es.eigenvalues();
  m.min_eigenvalue = ev.minCoeff();
  m.condition = ev.maxCoeff() / ev.minCoeff();
  if (!(m.min_eigenvalue > 0.0) || !std::isfinite(m.condition))
    throw NumericalError("metric is not positive definite (chart degeneracy)");
  m.gamma_inv = es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  m.gamma_inv = 0.5 * (m.gamma_inv + m.gamma_inv.transpose()).eval();
  return m;
}

/// G^mu_{lambda nu} stored densely, index (mu, lambda, nu).
struct Christoffel {
  int dim = 0;
  std::vector<double> data;
  double operator()(int mu, int lam, int nu) const { return data[(std::size_t(mu) * dim + lam) * dim + nu]; }
  double& operator()(int mu, int lam, int nu) { return data[(std::size_t(mu) * dim + lam) * dim + nu]; }
  /// G(v, w)^mu = G^mu_{lambda nu} v^lambda w^nu
  [[nodiscard]] Eigen::VectorXd contract(const Eigen::VectorXd& v, const Eigen::VectorXd& w) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(dim);
    for (int mu = 0; mu < dim; ++mu)
      for (int l = 0; l < dim; ++l)
        for (int n = 0; n < dim; ++n) out[mu] += (*this)(mu, l, n) * v[l] * w[n];
    return out;
  }
};

struct GeodesicState {
  ModuliPoint q;
  Eigen::VectorXd qdot;
  double tau = 0.0;
};

enum class GeodesicStatus { completed, chart_exit, drift_rejected };

inline const char* to_string(GeodesicStatus s) {
  switch (s) {
    case GeodesicStatus::completed: return "completed";
    case GeodesicStatus::chart_exit: return "chart_exit";
    case GeodesicStatus::drift_rejected: return "drift_rejected";
  }
  return "?";
}

struct GeodesicTrajectory {
  std::vector<double> tau;
  std::vector<Eigen::VectorXd> q;
  std::vector<Eigen::VectorXd> qdot;
  std::vector<double> speed;        ///< gamma(qdot, qdot)
  std::vector<double> speed_drift;  ///< relative to the initial speed
  GeodesicStatus status = GeodesicStatus::completed;
  std::string message;
  double max_speed_drift = 0.0;
  ModuliPoint base;  ///< lattice and degree of the samples

  [[nodiscard]] ModuliPoint point(std::size_t k) const {
    ModuliPoint p = base;
    p.q = q[k];
    return p;
  }

  void write_csv(std::ostream& os) const {
    const int dim = base.dim();
    os << "tau";
    for (int i = 0; i < dim; ++i) os << ",q_" << i;
    for (int i = 0; i < dim; ++i) os << ",qdot_" << i;
    os << ",speed,speed_drift\n";
    os.precision(17);
    for (std::size_t k = 0; k < tau.size(); ++k) {
      os << tau[k];
      for (int i = 0; i < dim; ++i) os << ',' << q[k][i];
      for (int i = 0; i < dim; ++i) os << ',' << qdot[k][i];
      os << ',' << speed[k] << ',' << speed_drift[k] << '\n';
    }
  }
};

class ModuliGeometry {
public:
  explicit ModuliGeometry(TorusPtr metric_grid, double fd_step = 1e-5)
      : map_(std::move(metric_grid)), h_(fd_step) {}

  [[nodiscard]] const EllipticMap& map() const { return map_; }
  [[nodiscard]] const TorusPtr& grid() const { return map_.torus(); }

  [[nodiscard]] MetricData metric(const ModuliPoint& q) const { return metric_from_tangents(map_.tangents(q), q); }

  [[nodiscard]] Christoffel christoffel(const ModuliPoint& q) const {
    const auto t = map_.tangents(q);
    const MetricData m = metric_from_tangents(t, q);
    const auto second = map_.second_derivatives(q, h_);
    const int dim = q.dim();
    Eigen::MatrixXd lower(dim, dim * dim);  // <psi_a, psi_{l n}>
    for (int a = 0; a < dim; ++a)
      for (int l = 0; l < dim; ++l)
        for (int n = l; n < dim; ++n) lower(a, l * dim + n) = lower(a, n * dim + l) = l2_inner(t[a], second[l * dim + n]);
    Eigen::MatrixXd up = m.gamma_inv * lower;
    Christoffel g{dim, std::vector<double>(std::size_t(dim) * dim * dim)};
    for (int mu = 0; mu < dim; ++mu)
      for (int l = 0; l < dim; ++l)
        for (int n = 0; n < dim; ++n) g(mu, l, n) = up(mu, l * dim + n);
    return g;
  }

  /// Levi-Civita symbols from central differences of the metric (oracle).
  [[nodiscard]] Christoffel levi_civita_fd(const ModuliPoint& q, double step = 1e-4) const {
    const int dim = q.dim();
    std::vector<Eigen::MatrixXd> dg(dim);  // dg[l](a, n) = d_l gamma_{a n}
    for (int l = 0; l < dim; ++l) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
      e[l] = step;
      dg[l] = (metric(q.moved(e)).gamma - metric(q.moved(-e)).gamma) / (2.0 * step);
    }
    const Eigen::MatrixXd ginv = metric(q).gamma_inv;
    Christoffel g{dim, std::vector<double>(std::size_t(dim) * dim * dim, 0.0)};
    for (int l = 0; l < dim; ++l)
      for (int n = 0; n < dim; ++n) {
        Eigen::VectorXd low(dim);
        for (int a = 0; a < dim; ++a) low[a] = 0.5 * (dg[l](a, n) + dg[n](a, l) - dg[a](l, n));
        Eigen::VectorXd up = ginv * low;
        for (int mu = 0; mu < dim; ++mu) g(mu, l, n) = up[mu];
      }
    return g;
  }

  struct Acceleration {
    Eigen::VectorXd qddot;
    double speed = 0.0;  ///< gamma(qdot, qdot) at q
  };

  /// qddot = -G(qdot, qdot). The contraction psi_{l n} v^l v^n is taken as a
  /// symmetric difference of v^mu psi_mu along v, so only three jets are needed.
  [[nodiscard]] Acceleration acceleration(const ModuliPoint& q, const Eigen::VectorXd& v) const {
    const auto t = map_.tangents(q);
    const MetricData m = metric_from_tangents(t, q);
    Acceleration out{Eigen::VectorXd::Zero(q.dim()), v.dot(m.gamma * v)};
    const double vn = v.norm();
    if (vn == 0.0) return out;
    const double s = h_ / vn;
    const auto tp = map_.tangents(q.moved(s * v));
    const auto tm = map_.tangents(q.moved(-s * v));
    Field d2(grid());
    for (int mu = 0; mu < q.dim(); ++mu) {
      d2.axpy(v[mu] / (2.0 * s), tp[mu]);
      d2.axpy(-v[mu] / (2.0 * s), tm[mu]);
    }
    Eigen::VectorXd low(q.dim());
    for (int a = 0; a < q.dim(); ++a) low[a] = l2_inner(t[a], d2);
    out.qddot = -(m.gamma_inv * low);
    return out;
  }

  [[nodiscard]] std::pair<Eigen::VectorXd, Eigen::VectorXd> geodesic_rhs(const GeodesicState& s) const {
    return {s.qdot, acceleration(s.q, s.qdot).qddot};
  }

  /// Classical RK4 with fixed step; samples every `sample_every` steps. Stops
  /// early on chart exit or when the relative speed drift exceeds `drift_tol`.
  [[nodiscard]] GeodesicTrajectory integrate(const GeodesicState& s0, double tau_end, double dtau,
                                             int sample_every = 1, double drift_tol = 1e-4) const {
    if (!(dtau > 0.0)) throw ConfigError("geodesic_integrate: dtau must be positive");
    if (s0.qdot.size() != s0.q.dim()) throw ConfigError("geodesic_integrate: qdot has wrong length");
    GeodesicTrajectory tr;
    tr.base = s0.q;
    const long steps = std::lround((tau_end - s0.tau) / dtau);
    Eigen::VectorXd q = s0.q.q, v = s0.qdot;
    ModuliPoint p = s0.q;
    auto at = [&p](const Eigen::VectorXd& x) {
      ModuliPoint r = p;
      r.q = x;
      return r;
    };
    try {
      require_admissible(s0.q);
      auto acc = acceleration(at(q), v);
      const double speed0 = acc.speed;
      auto record = [&](double tau, double speed) {
        const double drift = speed0 > 0.0 ? std::abs(speed - speed0) / speed0 : std::abs(speed);
        tr.tau.push_back(tau);
        tr.q.push_back(q);
        tr.qdot.push_back(v);
        tr.speed.push_back(speed);
        tr.speed_drift.push_back(drift);
        tr.max_speed_drift = std::max(tr.max_speed_drift, drift);
      };
      record(s0.tau, speed0);
      for (long k = 1; k <= steps; ++k) {
        const Eigen::VectorXd k1q = v, k1v = acc.qddot;
        const Eigen::VectorXd k2q = v + 0.5 * dtau * k1v;
        const Eigen::VectorXd k2v = acceleration(at(q + 0.5 * dtau * k1q), k2q).qddot;
        const Eigen::VectorXd k3q = v + 0.5 * dtau * k2v;
        const Eigen::VectorXd k3v = acceleration(at(q + 0.5 * dtau * k2q), k3q).qddot;
        const Eigen::VectorXd k4q = v + dtau * k3v;
        const Eigen::VectorXd k4v = acceleration(at(q + dtau * k3q), k4q).qddot;
        q += dtau / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
        v += dtau / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        acc = acceleration(at(q), v);
        const double drift = speed0 > 0.0 ? std::abs(acc.speed - speed0) / speed0 : 0.0;
        if (k % sample_every == 0 || k == steps) {
          record(s0.tau + double(k) * dtau, acc.speed);
        } else {
          tr.max_speed_drift = std::max(tr.max_speed_drift, drift);
        }
        if (drift > drift_tol) {
          tr.status = GeodesicStatus::drift_rejected;
          tr.message = "speed drift exceeded tolerance at tau = " + std::to_string(s0.tau + double(k) * dtau);
          return tr;
        }
      }
    } catch (const ChartExit& e) {
      tr.status = GeodesicStatus::chart_exit;
      tr.message = e.what();
    }
    return tr;
  }

private:
  EllipticMap map_;
  double h_;
};

}  // namespace lumpflow
