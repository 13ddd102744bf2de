#pragma once

// Coordinates on the moduli space of degree-n elliptic functions
//   f(z) = lambda sigma(z-a_1)...sigma(z-a_n) / (sigma(z-b_1)...sigma(z-b_n)),
// packed as q = (Re lambda, Im lambda, Re a_1, Im a_1, ..., Re b_{n-1}, Im b_{n-1})
// with b_n = a_1 + ... + a_n - b_1 - ... - b_{n-1} always derived.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "lumpflow/errors.hpp"
#include "lumpflow/torus_field.hpp"

namespace lumpflow {

struct ModuliPoint {
  int n = 2;
  Eigen::VectorXd q;
  LatticeSpec lattice;

  [[nodiscard]] int dim() const { return 4 * n; }

  [[nodiscard]] cplx lambda() const { return {q[0], q[1]}; }
  [[nodiscard]] cplx a(int i) const { return {q[2 + 2 * i], q[3 + 2 * i]}; }
  /// b_j for j < n-1 is free; b_{n-1} is fixed by sum(a) = sum(b).
  [[nodiscard]] cplx b(int j) const {
    if (j < n - 1) return {q[2 + 2 * n + 2 * j], q[3 + 2 * n + 2 * j]};
    cplx s = 0.0;
    for (int i = 0; i < n; ++i) s += a(i);
    for (int k = 0; k < n - 1; ++k) s -= b(k);
    return s;
  }

  static ModuliPoint from_params(const LatticeSpec& lattice, cplx lambda, const std::vector<cplx>& a,
                                 const std::vector<cplx>& b_free) {
    const int n = int(a.size());
    if (n < 2) throw ConfigError("degree n must be at least 2");
    if (int(b_free.size()) != n - 1) throw ConfigError("expected n-1 free poles b");
    ModuliPoint p;
    p.n = n;
    p.lattice = lattice;
    p.q.resize(4 * n);
    p.q[0] = lambda.real();
    p.q[1] = lambda.imag();
    for (int i = 0; i < n; ++i) {
      p.q[2 + 2 * i] = a[i].real();
      p.q[3 + 2 * i] = a[i].imag();
    }
    for (int j = 0; j < n - 1; ++j) {
      p.q[2 + 2 * n + 2 * j] = b_free[j].real();
      p.q[3 + 2 * n + 2 * j] = b_free[j].imag();
    }
    return p;
  }

  [[nodiscard]] ModuliPoint moved(const Eigen::VectorXd& dq) const {
    ModuliPoint p = *this;
    p.q += dq;
    return p;
  }
};

struct ModuliTangent {
  Eigen::VectorXd v;
  ModuliPoint base;
};

/// Distance between two points of C/Lambda.
inline double torus_distance(cplx z1, cplx z2, const LatticeSpec& lat) {
  const cplx d = z1 - z2;
  const double w1 = lat.omega1.real();
  const cplx w2 = lat.omega2;
  const double vc = d.imag() / w2.imag();
  const double uc = (d.real() - vc * w2.real()) / w1;
  const cplx d0 = d - std::round(uc) * w1 - std::round(vc) * w2;
  double best = std::numeric_limits<double>::infinity();
  for (int i = -1; i <= 1; ++i)
    for (int j = -1; j <= 1; ++j) best = std::min(best, std::abs(d0 + double(i) * w1 + double(j) * w2));
  return best;
}

inline double default_delta_sep(const LatticeSpec& lat) {
  return 0.05 * std::min(std::abs(lat.omega1), std::abs(lat.omega2));
}

struct Admissibility {
  bool ok = false;
  double min_ab_separation = 0.0;  ///< min over zero/pole pairs, mod Lambda
  double min_aa_separation = 0.0;  ///< min over distinct zeros
  double min_bb_separation = 0.0;  ///< min over distinct poles
  double lambda_abs = 0.0;
  double delta_sep = 0.0;
  std::string reason;
};

/// Checks lambda != 0 and that all zeros and poles are simple and mutually
/// separated by at least `delta_sep` on the torus. A negative `delta_sep`
/// selects the default 0.05 min(|omega1|, |omega2|).
inline Admissibility admissible(const ModuliPoint& p, double delta_sep = -1.0) {
  Admissibility r;
  r.delta_sep = delta_sep < 0.0 ? default_delta_sep(p.lattice) : delta_sep;
  if (p.n < 2 || p.q.size() != p.dim()) {
    r.reason = "moduli vector has wrong length or degree < 2";
    return r;
  }
  if (!p.q.allFinite()) {
    r.reason = "moduli vector is not finite";
    return r;
  }
  r.lambda_abs = std::abs(p.lambda());
  const double inf = std::numeric_limits<double>::infinity();
  r.min_ab_separation = r.min_aa_separation = r.min_bb_separation = inf;
  for (int i = 0; i < p.n; ++i) {
    for (int j = 0; j < p.n; ++j)
      r.min_ab_separation = std::min(r.min_ab_separation, torus_distance(p.a(i), p.b(j), p.lattice));
    for (int k = i + 1; k < p.n; ++k) {
      r.min_aa_separation = std::min(r.min_aa_separation, torus_distance(p.a(i), p.a(k), p.lattice));
      r.min_bb_separation = std::min(r.min_bb_separation, torus_distance(p.b(i), p.b(k), p.lattice));
    }
  }
  if (!(r.lambda_abs > 0.0)) {
    r.reason = "lambda vanishes";
  } else if (r.min_ab_separation < r.delta_sep) {
    r.reason = "a zero and a pole are closer than delta_sep";
  } else if (r.min_aa_separation < r.delta_sep) {
    r.reason = "two zeros are closer than delta_sep";
  } else if (r.min_bb_separation < r.delta_sep) {
    r.reason = "two poles are closer than delta_sep";
  } else {
    r.ok = true;
  }
  return r;
}

inline void require_admissible(const ModuliPoint& p, double delta_sep = -1.0) {
  auto r = admissible(p, delta_sep);
  if (!r.ok) throw ChartExit("inadmissible moduli point: " + r.reason);
}

// ---------------------------------------------------------------- JSON

inline nlohmann::json complex_to_json(cplx z) { return nlohmann::json::array({z.real(), z.imag()}); }

inline cplx complex_from_json(const nlohmann::json& j) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (!j.is_array() || j.size() != 2) throw ConfigError("complex numbers are encoded as [re, im]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline nlohmann::json to_json(const ModuliPoint& p) {
  nlohmann::json j;
  j["n"] = p.n;
  j["lattice"] = {{"omega1", complex_to_json(p.lattice.omega1)},
                  {"omega2", complex_to_json(p.lattice.omega2)}};
  j["lambda"] = complex_to_json(p.lambda());
  j["a"] = nlohmann::json::array();
  for (int i = 0; i < p.n; ++i) j["a"].push_back(complex_to_json(p.a(i)));
  j["b"] = nlohmann::json::array();
  for (int k = 0; k < p.n - 1; ++k) j["b"].push_back(complex_to_json(p.b(k)));
  return j;
}

/// Parses the flat ModuliPoint document; `grid_n` is taken from `base`.
inline ModuliPoint moduli_point_from_json(const nlohmann::json& j, LatticeSpec base = {}) {
  try {
    LatticeSpec lat = base;
    if (j.contains("lattice")) {
      lat.omega1 = complex_from_json(j.at("lattice").at("omega1"));
      lat.omega2 = complex_from_json(j.at("lattice").at("omega2"));
    }
    std::vector<cplx> a, b;
    for (const auto& z : j.at("a")) a.push_back(complex_from_json(z));
    for (const auto& z : j.at("b")) b.push_back(complex_from_json(z));
    const int n = j.value("n", int(a.size()));
    if (n != int(a.size())) throw ConfigError("n does not match the number of zeros a");
    if (int(b.size()) == n) b.pop_back();  // tolerate a redundant b_n; it is re-derived
    return ModuliPoint::from_params(lat, complex_from_json(j.at("lambda")), a, b);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed moduli point: ") + e.what());
  }
}

}  // namespace lumpflow
