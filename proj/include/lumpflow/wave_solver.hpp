#pragma once

// Wave maps R x Sigma -> S^2:
//   phi_tt - Delta phi + (|phi_t|^2 - |grad phi|^2) phi = 0,  |phi| = 1,
// integrated with a constrained velocity-Verlet (RATTLE) step: the position
// constraint is enforced by a multiplier along phi^n, the velocity constraint
// phi.phi_t = 0 by projection at the new level. The scheme is symmetric, hence
// time reversible, and second order.

#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "lumpflow/elliptic_maps.hpp"

namespace lumpflow {

struct WaveState {
  Field phi;
  Field phi_t;
  double t = 0.0;
  double eps = 0.0;
};

struct Energies {
  double T = 0.0;      ///< kinetic, 1/2 int |phi_t|^2
  double E = 0.0;      ///< potential, 1/2 int |grad phi|^2
  double total = 0.0;  ///< T + E
};

/// Dirichlet energy via Parseval with the Laplacian symbol.
inline double dirichlet_energy(const Field& phi) { return -0.5 * l2_inner(phi, laplacian(phi)); }

inline Energies energies(const WaveState& s) {
  Energies e;
  e.T = 0.5 * l2_inner(s.phi_t, s.phi_t);
  e.E = dirichlet_energy(s.phi);
  e.total = e.T + e.E;
  return e;
}

struct Degree {
  int value = 0;
  double raw = 0.0;
  double distance = 0.0;  ///< |raw - value|
  bool determinate = false;
};

/// (1/4pi) int phi.(phi_y x phi_x). This orientation makes maps that are
/// holomorphic in the stereographic chart from (0,0,1) have positive degree.
inline Degree degree(const Field& phi) {
  auto [px, py] = gradient(phi);
  Degree d;
  d.raw = integrate(dot(phi, cross(py, px))) / (4.0 * M_PI);
  d.value = int(std::lround(d.raw));
  d.distance = std::abs(d.raw - d.value);
  d.determinate = d.distance <= 0.1;
  return d;
}

/// phi = psi(q0), phi_t = eps q1^mu psi_mu(q0).
inline WaveState initial_data(const ModuliPoint& q0, const Eigen::VectorXd& q1, double eps, const TorusPtr& grid) {
  if (q1.size() != q0.dim()) throw ConfigError("initial_data: q1 has wrong length");
  if (!(eps >= 0.0)) throw ConfigError("initial_data: eps must be non-negative");
  const MapJet jet = EllipticMap(grid).jet(q0);
  WaveState s{jet.psi, Field(grid), 0.0, eps};
  for (int mu = 0; mu < q0.dim(); ++mu) s.phi_t.axpy(eps * q1[mu], jet.tangents[mu]);
  return s;
}

struct StepDiagnostics {
  double prenorm_defect = 0.0;  ///< max | |phi~| - 1 | before the constraint multiplier
};

inline constexpr double kDefaultCfl = 0.25;

/// One RATTLE step. Throws ConfigError on CFL violation and BlowUp on NaN.
inline StepDiagnostics step(WaveState& s, double dt, double cfl = kDefaultCfl) {
  const TorusPtr& grid = s.phi.torus();
  const double h = grid->lattice().spacing_min();
  if (!(dt > 0.0) || dt > cfl * h * (1.0 + 1e-12))
    throw ConfigError("step: dt violates the CFL bound " + std::to_string(cfl * h));
  StepDiagnostics diag;
  const std::size_t m = s.phi.size();

  // half kick with the explicit multiplier |grad phi|^2 - |phi_t|^2
  Field lap = laplacian(s.phi);
  const ScalarField g2 = dot(s.phi, lap) * -1.0;  // = |grad phi|^2 for unit phi, in the Laplacian's norm
  const ScalarField mult = g2 - dot(s.phi_t, s.phi_t);
  Field w = s.phi_t;
  w.axpy(0.5 * dt, lap);
  w.axpy(0.5 * dt, mult * s.phi);

  // drift and position constraint along phi^n
  Field next = s.phi;
  next.axpy(dt, w);
  for (std::size_t p = 0; p < m; ++p) {
    const Vec3 x = next.at(p);
    const Vec3 n = s.phi.at(p);
    const double b = x.dot(n);
    const double c = x.squaredNorm() - 1.0;
    diag.prenorm_defect = std::max(diag.prenorm_defect, std::abs(std::sqrt(x.squaredNorm()) - 1.0));
    const double disc = b * b - c;
    if (!(disc >= 0.0)) throw BlowUp("step: constraint multiplier has no real root");
    // smaller root of s^2 + 2 b s + c = 0, in cancellation-free form
    const double root = -c / (b + std::copysign(std::sqrt(disc), b));
    next.set(p, x + root * n);
    const Vec3 wp = w.at(p) + (root / dt) * n;
    w.set(p, wp);
  }

  // second half kick and velocity constraint at the new level
  w.axpy(0.5 * dt, laplacian(next));
  for (std::size_t p = 0; p < m; ++p) {
    const Vec3 n = next.at(p);
    const Vec3 v = w.at(p);
    w.set(p, v - n.dot(v) * n);
  }
  s.phi = std::move(next);
  s.phi_t = std::move(w);
  s.t += dt;
  if (!s.phi.is_finite() || !s.phi_t.is_finite()) throw BlowUp("step: non-finite field at t = " + std::to_string(s.t));
  return diag;
}

struct MonitorRow {
  double t = 0.0;
  double T = 0.0, E = 0.0, total = 0.0;
  double degree_raw = 0.0;
  double unitnorm_defect = 0.0;  ///< max | |phi| - 1 | after the step
  double prenorm_defect = 0.0;   ///< largest pre-constraint defect since the last sample
  double tangency_defect = 0.0;  ///< max |phi.phi_t|
};

enum class RunStatus { completed, blow_up };

struct EvolveResult {
  std::vector<MonitorRow> monitors;
  std::vector<WaveState> samples;  ///< only when requested
  WaveState final_state;
  RunStatus status = RunStatus::completed;
  std::string message;
  double dt = 0.0;  ///< step actually used
  long steps = 0;
  double max_energy_drift = 0.0;  ///< max |total - total0| / total0
  double max_prenorm_defect = 0.0;
  bool degree_constant = true;

  void write_monitor_csv(std::ostream& os) const {
    os << "t,T,E,total,degree_raw,unitnorm_defect,prenorm_defect,tangency_defect\n";
    os.precision(17);
    for (const auto& r : monitors)
      os << r.t << ',' << r.T << ',' << r.E << ',' << r.total << ',' << r.degree_raw << ',' << r.unitnorm_defect
         << ',' << r.prenorm_defect << ',' << r.tangency_defect << '\n';
  }
};

inline MonitorRow monitor(const WaveState& s) {
  MonitorRow r;
  r.t = s.t;
  const Energies e = energies(s);
  r.T = e.T;
  r.E = e.E;
  r.total = e.total;
  r.degree_raw = degree(s.phi).raw;
  for (std::size_t p = 0; p < s.phi.size(); ++p) {
    const Vec3 n = s.phi.at(p);
    r.unitnorm_defect = std::max(r.unitnorm_defect, std::abs(n.norm() - 1.0));
    r.tangency_defect = std::max(r.tangency_defect, std::abs(n.dot(s.phi_t.at(p))));
  }
  return r;
}

struct EvolveOptions {
  int sample_every = 1;      ///< monitor stride in steps
  bool keep_samples = false;  ///< store a WaveState at each monitored step
  double cfl = kDefaultCfl;
  double spike_tol = 0.1;  ///< relative energy change treated as blow-up
  /// Called at t0 and at every monitored step; may throw to abort.
  std::function<void(const WaveState&)> on_sample;
};

/// Integrates to t_end with the largest step <= dt that lands on t_end exactly.
inline EvolveResult evolve(const WaveState& s0, double t_end, double dt, const EvolveOptions& opt = {}) {
  if (!(dt > 0.0)) throw ConfigError("evolve: dt must be positive");
  if (opt.sample_every < 1) throw ConfigError("evolve: sample_every must be >= 1");
  EvolveResult res;
  const double span = t_end - s0.t;
  res.steps = std::max<long>(0, long(std::ceil(span / dt - 1e-9)));
  res.dt = res.steps > 0 ? span / double(res.steps) : dt;
  WaveState s = s0;
  const MonitorRow first = monitor(s);
  const double e0 = first.total;
  const int deg0 = int(std::lround(first.degree_raw));
  res.monitors.push_back(first);
  if (opt.keep_samples) res.samples.push_back(s);
  if (opt.on_sample) opt.on_sample(s);
  double pre = 0.0;
  try {
    for (long k = 1; k <= res.steps; ++k) {
      const StepDiagnostics d = step(s, res.dt, opt.cfl);
      if (k == res.steps) s.t = t_end;  // remove accumulated rounding in t
      pre = std::max(pre, d.prenorm_defect);
      res.max_prenorm_defect = std::max(res.max_prenorm_defect, d.prenorm_defect);
      if (k % opt.sample_every == 0 || k == res.steps) {
        MonitorRow r = monitor(s);
        r.prenorm_defect = pre;
        pre = 0.0;
        res.monitors.push_back(r);
        const double drift = e0 > 0.0 ? std::abs(r.total - e0) / e0 : std::abs(r.total);
        res.max_energy_drift = std::max(res.max_energy_drift, drift);
        if (int(std::lround(r.degree_raw)) != deg0) res.degree_constant = false;
        if (drift > opt.spike_tol) throw BlowUp("energy spike at t = " + std::to_string(s.t));
        if (opt.keep_samples) res.samples.push_back(s);
        if (opt.on_sample) opt.on_sample(s);
      }
    }
  } catch (const BlowUp& e) {
    res.status = RunStatus::blow_up;
    res.message = e.what();
  }
  res.final_state = std::move(s);
  return res;
}

}  // namespace lumpflow
