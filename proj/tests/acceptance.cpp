// Acceptance report: one PASS/FAIL line per criterion. Exits 0 once every
// criterion has been evaluated; --strict exits 1 if any criterion failed.

#include <array>
#include <chrono>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "common.hpp"

using namespace lumpflow;
using namespace lumpflow::testing;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(3) << v;
  return os.str();
}

/// Seeded perturbations of the default point, kept if admissible and resolved at grid_n 64.
std::vector<ModuliPoint> random_points(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.08, 0.08);
  const ModuliPoint base = generic_point();
  const TorusPtr t = Torus::make(square(64));
  std::vector<ModuliPoint> out;
  while (int(out.size()) < count) {
    Eigen::VectorXd dq(base.dim());
    for (int i = 0; i < base.dim(); ++i) dq[i] = u(rng);
    const ModuliPoint q = base.moved(dq);
    if (!admissible(q).ok) continue;
    if (ck_norm(harmonic_residual(eval_map(q, t)), 0) > 1e-6) continue;
    out.push_back(q);
  }
  return out;
}

Outcome energy_quantization() {
  const auto t0 = std::chrono::steady_clock::now();
  const double e = dirichlet_energy(eval_map(generic_point(square(128)), Torus::make(square(128))));
  const double rel = std::abs(e / (8.0 * M_PI) - 1.0);
  const double secs = seconds_since(t0);
  return {rel < 1e-6 && secs < 5.0, "|E/8pi - 1| = " + fmt(rel) + " at grid_n 128 in " + fmt(secs) + " s"};
}

Outcome kernel_dimensions() {
  std::ostringstream os;
  bool ok = true;
  for (int n : {16, 24}) {
    const OperatorContext c(eval_map(generic_point(square(n)), Torus::make(square(n))), kInf);
    for (OperatorKind k : {OperatorKind::J, OperatorKind::L}) {
      const auto t0 = std::chrono::steady_clock::now();
      const SpectrumReport r = kernel_dimension(c, k, 2);
      const double secs = seconds_since(t0);
      const int want = k == OperatorKind::J ? 8 : 9;
      ok = ok && r.kernel_dim == want && r.gap_ratio >= 10.0 && secs < 120.0;
      os << (k == OperatorKind::J ? "J" : "L") << "@" << n << ": " << r.kernel_dim << " (gap " << fmt(r.gap_ratio)
         << ", " << fmt(secs) << " s)  ";
    }
  }
  return {ok, os.str()};
}

Outcome self_adjointness() {
  const OperatorContext c16(eval_map(generic_point(square(16)), Torus::make(square(16))), kInf);
  const double dl = symmetry_defect(weighted(c16, assemble_dense(c16, OperatorKind::L)));
  const OperatorContext c = OperatorContext::at(generic_point(), Torus::make(square(64)));
  std::mt19937_64 rng(3);
  double dj = 0.0;
  for (int k = 0; k < 5; ++k) {
    const Field v = random_smooth_scalar(c.torus(), rng) * c.psi();
    const Field w = random_field(c.torus(), rng);
    dj = std::max(dj, std::abs(l2_inner(apply_J(c, v), w) - l2_inner(v, apply_J(c, w))));
  }
  return {dl < 1e-9 && dj > 1e-3, "weighted L defect " + fmt(dl) + " (grid_n 16), J defect on normal sections " + fmt(dj)};
}

/// ||alpha||_2 of a scalar via the vector Sobolev norm.
double scalar_h2(const ScalarField& a) {
  Field f(a.torus());
  f[0] = a;
  return sobolev_norm(f, 2);
}

Outcome normal_section_identity() {
  const OperatorContext c = OperatorContext::at(generic_point(), Torus::make(square(64)));
  auto [px, py] = gradient(c.psi());
  std::mt19937_64 rng(4);
  double stated = 0.0, symmetric = 0.0;
  for (int k = 0; k < 20; ++k) {
    const ScalarField a = random_smooth_scalar(c.torus(), rng);
    const Field la = apply_L(c, a * c.psi());
    const Field lap_term = laplacian(a) * c.psi();
    Field grad_term = deriv(a, Direction::x) * px;
    grad_term += deriv(a, Direction::y) * py;
    const double h2 = scalar_h2(a);
    stated = std::max(stated, l2_norm(la + lap_term + grad_term * 4.0) / h2);
    symmetric = std::max(symmetric, l2_norm(la + lap_term) / h2);
  }
  return {stated < 1e-8, "max ||L(a psi) + (Da)psi + 4 grad a.grad psi||/||a||_2 = " + fmt(stated) +
                             "; without the gradient term " + fmt(symmetric)};
}

Outcome projection_inequality() {
  const OperatorContext c = OperatorContext::at(generic_point(), Torus::make(square(64)));
  std::mt19937_64 rng(5);
  double worst = kInf;
  for (int k = 0; k < 50; ++k) {
    const Field y = random_field(c.torus(), rng);
    worst = std::min(worst, q1_form(c, y) - q1_form(c, project_tangent(c, y)));
  }
  return {worst >= -1e-8, "min Q1(Y) - Q1(PY) over 50 fields = " + fmt(worst)};
}

Outcome coercive_core() {
  std::ostringstream os;
  bool ok = true;
  for (const ModuliPoint& q : {generic_point(square(16)), point_b(square(16)), point_c(square(16))}) {
    const OperatorContext c(eval_map(q, Torus::make(square(16))), kInf);
    const double v = coercivity_estimate(c, 2);
    ok = ok && v > 0.0;
    os << fmt(v) << " ";
  }
  return {ok, "smallest L eigenvalue beyond the kernel at 3 points (grid_n 16): " + os.str()};
}

Outcome static_persistence() {
  const TorusPtr t = Torus::make(square(64));
  const WaveState s0 = initial_data(generic_point(), Eigen::VectorXd::Zero(8), 0.1, t);
  const EvolveResult r = evolve(s0, 1.0, kDefaultCfl * t->lattice().spacing_min(), {.sample_every = 64});
  const double d = ck_norm(r.final_state.phi - s0.phi, 0);
  return {r.status == RunStatus::completed && d < 1e-6, "C0 drift over [0,1] = " + fmt(d)};
}

Outcome conservation() {
  const TorusPtr t = Torus::make(square(64));
  const WaveState s0 = initial_data(generic_point(), generic_velocity(), 0.1, t);
  const EvolveResult r = evolve(s0, 10.0, kDefaultCfl * t->lattice().spacing_min(), {.sample_every = 16});
  return {r.status == RunStatus::completed && r.max_energy_drift < 1e-6 && r.degree_constant,
          "relative energy drift over [0,10] = " + fmt(r.max_energy_drift) +
              (r.degree_constant ? ", degree constant" : ", degree changed")};
}

Outcome constraints(const ConvergenceReport& rep) {
  double chi = 0.0, ortho = 0.0;
  for (const auto& r : rep.rows) {
    chi = std::max(chi, r.chi_max);
    ortho = std::max(ortho, r.ortho_max);
  }
  return {!rep.any_flagged && chi < 1e-6 && ortho < 1e-6,
          "over the eps ladder runs: max chi = " + fmt(chi) + ", max |<Y, psi_mu>| = " + fmt(ortho)};
}

Outcome christoffel() {
  const ModuliGeometry geo(Torus::make(square(64)));
  double worst = 0.0;
  for (const ModuliPoint& q : random_points(3, 10)) {
    const Christoffel a = geo.christoffel(q), b = geo.levi_civita_fd(q);
    for (std::size_t i = 0; i < a.data.size(); ++i) worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
  }
  return {worst < 1e-4, "max |Gamma - Gamma_fd| at 3 random points = " + fmt(worst)};
}

Outcome geodesic_speed() {
  const ModuliGeometry geo(Torus::make(square(64)));
  const GeodesicTrajectory tr = geo.integrate({generic_point(), generic_velocity(), 0.0}, 1.0, 1e-3, 100);
  return {tr.status == GeodesicStatus::completed && tr.max_speed_drift < 1e-8,
          "speed drift over [0,1] = " + fmt(tr.max_speed_drift) + " (" + to_string(tr.status) + ")"};
}

Outcome main_theorem(const ConvergenceReport& rep, double secs) {
  std::ostringstream os;
  for (const auto& r : rep.rows)
    os << "eps " << r.eps << ": c0 " << fmt(r.err_c0) << ", c1 " << fmt(r.err_c1) << ", M " << fmt(r.Mfunc_max)
       << "; ";
  os << "order_c0 " << fmt(rep.fit_c0.order) << ", M ratio " << fmt(rep.m_ratio) << ", " << fmt(secs) << " s";
  if (!rep.order_c0_in_range) os << " [warning: rate outside 2 +- 0.4]";
  const bool ok = !rep.any_flagged && rep.monotone_c0 && rep.monotone_c1 && rep.m_bounded && secs < 1800.0;
  return {ok, os.str()};
}

/// Decompositions at t0 - d, t0, t0 + d of the default moving run.
std::array<ModulationDecomposition, 3> triple(const Modulation& mod, double eps, double t0, double d) {
  const TorusPtr& t = mod.grid();
  const ModuliPoint q0 = generic_point(t->lattice());
  const WaveState s0 = initial_data(q0, generic_velocity(), eps, t);
  const long m = long(std::ceil(d / (kDefaultCfl * t->lattice().spacing_min())));
  EvolveOptions opt;
  opt.sample_every = int(m);
  opt.keep_samples = true;
  const EvolveResult r = evolve(s0, t0 + d, d / double(m), opt);
  ModuliPoint g = q0;
  const std::size_t last = r.samples.size() - 1;
  for (std::size_t i = 0; i + 2 < last; ++i) g = mod.decompose(r.samples[i], g).q;
  std::array<ModulationDecomposition, 3> out;
  for (int k = 0; k < 3; ++k) {
    out[k] = mod.decompose(r.samples[last - 2 + k], g);
    g = out[k].q;
  }
  return out;
}

Outcome coupled_residual() {
  const Modulation mod(Torus::make(square(64)));
  const auto c = triple(mod, 0.2, 0.4, 0.04);
  const auto f = triple(mod, 0.2, 0.4, 0.02);
  const CoupledResidual rc = mod.coupled_residual(c[0], c[1], c[2]);
  const CoupledResidual rf = mod.coupled_residual(f[0], f[1], f[2]);
  const double ry = rc.y_residual / rf.y_residual, rq = rc.q_residual / rf.q_residual;
  const bool ok = std::abs(ry - 4.0) <= 2.0 && std::abs(rq - 4.0) <= 2.0;
  return {ok, "halving ratios: Y equation " + fmt(ry) + " (" + fmt(rc.y_residual) + " -> " + fmt(rf.y_residual) +
                  "), q equation " + fmt(rq) + " (" + fmt(rc.q_residual) + " -> " + fmt(rf.q_residual) + ")"};
}

Outcome guarded(const std::function<Outcome()>& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

}  // namespace

int main(int argc, char** argv) {
  const bool strict = argc > 1 && std::strcmp(argv[1], "--strict") == 0;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> simple = {
      {"energy quantization", energy_quantization},
      {"kernel dimensions", kernel_dimensions},
      {"self-adjointness dichotomy", self_adjointness},
      {"normal-section identity", normal_section_identity},
      {"projection inequality", projection_inequality},
      {"coercive core", coercive_core},
      {"static persistence", static_persistence},
      {"conservation", conservation},
  };
  std::vector<std::pair<std::string, Outcome>> results;
  for (const auto& [name, f] : simple) results.emplace_back(name, guarded(f));

  ConvergenceReport rep;
  double ladder_secs = 0.0;
  Outcome ladder_error;
  try {
    const auto t0 = std::chrono::steady_clock::now();
    rep = run_adiabatic(ExperimentConfig::from_json(nlohmann::json::object()));
    ladder_secs = seconds_since(t0);
  } catch (const std::exception& e) {
    ladder_error = {false, std::string("exception: ") + e.what()};
  }
  const bool ladder_ok = ladder_error.detail.empty();
  results.emplace_back("constraint preservation", ladder_ok ? guarded([&] { return constraints(rep); }) : ladder_error);
  results.emplace_back("Christoffel identity", guarded(christoffel));
  results.emplace_back("geodesic speed", guarded(geodesic_speed));
  results.emplace_back("adiabatic convergence",
                       ladder_ok ? guarded([&] { return main_theorem(rep, ladder_secs); }) : ladder_error);
  results.emplace_back("coupled-system residual", guarded(coupled_residual));

  int failed = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& [name, o] = results[i];
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << name << ": " << o.detail << std::endl;
  }
  std::cout << (results.size() - failed) << "/" << results.size() << " criteria pass" << std::endl;
  return strict && failed ? 1 : 0;
}
