#pragma once

// Configuration-driven experiment harness behind the command-line tool:
// validation suites, metric/geodesic/evolve/spectrum runs and the eps-ladder
// adiabatic convergence study. Every command writes its artifacts under the
// output directory together with manifest.json.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lumpflow/jacobi.hpp"
#include "lumpflow/moduli_geometry.hpp"
#include "lumpflow/modulation.hpp"
#include "lumpflow/plot.hpp"
#include "lumpflow/wave_solver.hpp"

#ifndef LUMPFLOW_VERSION
#define LUMPFLOW_VERSION "0.0.0"
#endif

namespace lumpflow {

inline constexpr int kSchemaVersion = 1;

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumerical = 3, kExitValidation = 4 };

struct ExperimentConfig {
  LatticeSpec lattice;
  ModuliPoint q0;
  Eigen::VectorXd q1;
  std::vector<double> eps_ladder{0.2, 0.1, 0.05};
  double tau_star = 0.5;
  int tau_samples = 50;  ///< uniform tau grid on [0, tau_star], endpoints included
  double dt_cfl = kDefaultCfl;
  double dtau_geodesic = 1e-3;
  int metric_grid_n = 64;
  int spectrum_grid_n = 16;
  bool history_energies = true;
  double evolve_eps = 0.1;
  double evolve_t_end = 10.0;
  int evolve_monitor_stride = 16;
  double geodesic_tau_end = 1.0;
  int geodesic_sample_every = 10;
  std::string output_dir = "out";
  std::uint64_t seed = 12345;

  /// n = 2 point used when the config omits moduli.
  static ModuliPoint default_q0(const LatticeSpec& lat) {
    return ModuliPoint::from_params(lat, 1.0, {cplx(0.1, 0.15), cplx(0.55, 0.2)}, {cplx(0.3, 0.6)});
  }
  static Eigen::VectorXd default_q1() {
    Eigen::VectorXd v(8);
    v << 0.0, 0.0, 0.3, 0.1, -0.2, 0.25, 0.1, -0.2;
    return v;
  }

  ExperimentConfig() : q0(default_q0(lattice)), q1(default_q1()) {}

  [[nodiscard]] TorusPtr grid() const { return Torus::make(lattice); }
  [[nodiscard]] TorusPtr metric_grid() const { return Torus::make(lattice.with_grid(metric_grid_n)); }
  [[nodiscard]] TorusPtr spectrum_grid() const { return Torus::make(lattice.with_grid(spectrum_grid_n)); }

  /// Structural checks; admissibility of q0 is reported separately.
  void validate() const {
    lattice.validate();
    lattice.with_grid(metric_grid_n).validate();
    lattice.with_grid(spectrum_grid_n).validate();
    if (!(q0.lattice.omega1 == lattice.omega1 && q0.lattice.omega2 == lattice.omega2))
      throw ConfigError("q0 lattice differs from the configured lattice");
    if (q1.size() != q0.dim()) throw ConfigError("q1 must have 4n = " + std::to_string(q0.dim()) + " entries");
    if (!q1.allFinite()) throw ConfigError("q1 must be finite");
    if (eps_ladder.empty()) throw ConfigError("eps_ladder must not be empty");
    for (std::size_t i = 0; i < eps_ladder.size(); ++i) {
      if (!(eps_ladder[i] > 0.0 && eps_ladder[i] < 1.0)) throw ConfigError("eps values must lie in (0, 1)");
      if (i > 0 && !(eps_ladder[i] < eps_ladder[i - 1])) throw ConfigError("eps_ladder must be strictly descending");
    }
    if (!(tau_star > 0.0)) throw ConfigError("tau_star must be positive");
    if (tau_samples < 2) throw ConfigError("tau_samples must be at least 2");
    if (!(dt_cfl > 0.0 && dt_cfl <= 1.0)) throw ConfigError("dt_cfl must lie in (0, 1]");
    if (!(dtau_geodesic > 0.0)) throw ConfigError("dtau_geodesic must be positive");
    if (!(evolve_eps > 0.0 && evolve_eps < 1.0)) throw ConfigError("evolve.eps must lie in (0, 1)");
    if (!(evolve_t_end > 0.0)) throw ConfigError("evolve.t_end must be positive");
    if (evolve_monitor_stride < 1) throw ConfigError("evolve.monitor_stride must be >= 1");
    if (!(geodesic_tau_end > 0.0)) throw ConfigError("geodesic.tau_end must be positive");
    if (geodesic_sample_every < 1) throw ConfigError("geodesic.sample_every must be >= 1");
  }

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json j;
    j["schema"] = kSchemaVersion;
    j["lattice"] = {{"omega1", complex_to_json(lattice.omega1)},
                    {"omega2", complex_to_json(lattice.omega2)},
                    {"grid_n", lattice.grid_n}};
    nlohmann::json q0j = lumpflow::to_json(q0);
    q0j.erase("lattice");
    j["moduli"] = {{"n", q0.n}, {"q0", q0j}, {"q1", std::vector<double>(q1.data(), q1.data() + q1.size())}};
    j["eps_ladder"] = eps_ladder;
    j["tau_star"] = tau_star;
    j["tau_samples"] = tau_samples;
    j["dt_cfl"] = dt_cfl;
    j["dtau_geodesic"] = dtau_geodesic;
    j["metric_grid_n"] = metric_grid_n;
    j["spectrum_grid_n"] = spectrum_grid_n;
    j["history_energies"] = history_energies;
    j["evolve"] = {{"eps", evolve_eps}, {"t_end", evolve_t_end}, {"monitor_stride", evolve_monitor_stride}};
    j["geodesic"] = {{"tau_end", geodesic_tau_end}, {"sample_every", geodesic_sample_every}};
    j["output_dir"] = output_dir;
    j["seed"] = seed;
    return j;
  }

  /// Missing keys take defaults; unknown keys are rejected.
  static ExperimentConfig from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known = {
        "schema", "lattice", "moduli", "eps_ladder", "tau_star", "tau_samples", "dt_cfl", "dtau_geodesic",
        "metric_grid_n", "spectrum_grid_n", "history_energies", "evolve", "geodesic", "output_dir", "seed"};
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [k, v] : j.items())
      if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown config key: " + k);
    ExperimentConfig c;
    try {
      if (j.contains("schema") && j.at("schema").get<int>() != kSchemaVersion)
        throw ConfigError("unsupported config schema " + j.at("schema").dump());
      if (j.contains("lattice")) {
        const auto& l = j.at("lattice");
        if (l.contains("omega1")) c.lattice.omega1 = complex_from_json(l.at("omega1"));
        if (l.contains("omega2")) c.lattice.omega2 = complex_from_json(l.at("omega2"));
        if (l.contains("grid_n")) c.lattice.grid_n = l.at("grid_n").get<int>();
      }
      c.q0 = default_q0(c.lattice);
      if (j.contains("moduli")) {
        const auto& m = j.at("moduli");
        if (m.contains("q0")) {
          nlohmann::json q0j = m.at("q0");
          if (m.contains("n") && !q0j.contains("n")) q0j["n"] = m.at("n");
          c.q0 = moduli_point_from_json(q0j, c.lattice);
        }
        if (m.contains("n") && m.at("n").get<int>() != c.q0.n) throw ConfigError("moduli.n does not match q0");
        if (m.contains("q1")) {
          const auto v = m.at("q1").get<std::vector<double>>();
          c.q1 = Eigen::Map<const Eigen::VectorXd>(v.data(), Eigen::Index(v.size()));
        } else if (c.q0.dim() != 8) {
          c.q1 = Eigen::VectorXd::Zero(c.q0.dim());
        }
      }
      c.eps_ladder = j.value("eps_ladder", c.eps_ladder);
      c.tau_star = j.value("tau_star", c.tau_star);
      c.tau_samples = j.value("tau_samples", c.tau_samples);
      c.dt_cfl = j.value("dt_cfl", c.dt_cfl);
      c.dtau_geodesic = j.value("dtau_geodesic", c.dtau_geodesic);
      c.metric_grid_n = j.value("metric_grid_n", c.lattice.grid_n);
      c.spectrum_grid_n = j.value("spectrum_grid_n", c.spectrum_grid_n);
      c.history_energies = j.value("history_energies", c.history_energies);
      if (j.contains("evolve")) {
        const auto& e = j.at("evolve");
        c.evolve_eps = e.value("eps", c.evolve_eps);
        c.evolve_t_end = e.value("t_end", c.evolve_t_end);
        c.evolve_monitor_stride = e.value("monitor_stride", c.evolve_monitor_stride);
      }
      if (j.contains("geodesic")) {
        const auto& g = j.at("geodesic");
        c.geodesic_tau_end = g.value("tau_end", c.geodesic_tau_end);
        c.geodesic_sample_every = g.value("sample_every", c.geodesic_sample_every);
      }
      c.output_dir = j.value("output_dir", c.output_dir);
      c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed config: ") + e.what());
    }
    c.validate();
    return c;
  }

  static ExperimentConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return from_json(j);
  }

  /// FNV-1a over the canonical JSON echo, output_dir excluded.
  [[nodiscard]] std::string hash() const {
    nlohmann::json j = to_json();
    j.erase("output_dir");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : j.dump()) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
  }
};

/// Artifact writer for one command invocation.
class RunContext {
public:
  RunContext(const ExperimentConfig& cfg, std::string command, std::ostream* log = &std::cerr)
      : cfg_(cfg), command_(std::move(command)), hash_(cfg.hash()), log_(log), start_(clock::now()) {
    dir_ = cfg.output_dir;
    std::filesystem::create_directories(dir_);
  }

  [[nodiscard]] const std::string& hash() const { return hash_; }
  [[nodiscard]] const std::filesystem::path& dir() const { return dir_; }
  [[nodiscard]] double elapsed() const { return std::chrono::duration<double>(clock::now() - start_).count(); }

  void log(const std::string& msg) const {
    if (log_) *log_ << "[" << command_ << "] " << msg << std::endl;
  }

  /// CSV file whose first line records the config hash and code version.
  std::ofstream csv(const std::string& name) {
    std::ofstream os = open(name);
    os << "# config_hash=" << hash_ << " version=" << LUMPFLOW_VERSION << " command=" << command_ << '\n';
    return os;
  }

  std::ofstream open(const std::string& name) {
    outputs_.push_back(name);
    std::ofstream os(dir_ / name);
    if (!os) throw ConfigError("cannot write " + (dir_ / name).string());
    return os;
  }

  void write_json(const std::string& name, nlohmann::json j) {
    j["schema"] = kSchemaVersion;
    j["config_hash"] = hash_;
    std::ofstream os = open(name);
    os << j.dump(2) << '\n';
  }

  void write_manifest(int exit_code, const std::string& status) {
    nlohmann::json m;
    m["schema"] = kSchemaVersion;
    m["command"] = command_;
    m["version"] = LUMPFLOW_VERSION;
    m["config"] = cfg_.to_json();
    m["config_hash"] = hash_;
    m["wall_time_s"] = elapsed();
    m["exit_code"] = exit_code;
    m["status"] = status;
    m["outputs"] = outputs_;
    std::ofstream os(dir_ / "manifest.json");
    os << m.dump(2) << '\n';
  }

private:
  using clock = std::chrono::steady_clock;
  const ExperimentConfig& cfg_;
  std::string command_, hash_;
  std::ostream* log_;
  clock::time_point start_;
  std::filesystem::path dir_;
  std::vector<std::string> outputs_;
};

/// Inadmissible user input is a configuration error, not a chart exit.
inline void require_config_point(const ExperimentConfig& cfg) {
  const Admissibility a = admissible(cfg.q0);
  if (!a.ok) throw ConfigError("q0 is not admissible: " + a.reason);
}

inline nlohmann::json to_json(const Eigen::MatrixXd& m) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(std::size_t(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[std::size_t(c)] = m(r, c);
    j.push_back(row);
  }
  return j;
}

inline std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

// ---------------------------------------------------------------- validate

struct SuiteResult {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::vector<SuiteResult> suites;
  [[nodiscard]] bool passed() const {
    return std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.passed; });
  }
  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json j;
    j["passed"] = passed();
    j["suites"] = nlohmann::json::array();
    for (const auto& s : suites)
      j["suites"].push_back(
          {{"name", s.name}, {"passed", s.passed}, {"value", s.value}, {"threshold", s.threshold}, {"detail", s.detail}});
    return j;
  }
};

namespace detail {

template <class F>
SuiteResult run_suite(const std::string& name, F&& f) {
  SuiteResult r{name};
  try {
    f(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  return r;
}

}  // namespace detail

inline ValidationReport run_validation(const ExperimentConfig& cfg) {
  ValidationReport rep;
  const ModuliPoint& q0 = cfg.q0;
  const Admissibility adm = admissible(q0);
  rep.suites.push_back(detail::run_suite("admissibility", [&](SuiteResult& r) {
    r.passed = adm.ok;
    r.value = adm.min_ab_separation;
    r.threshold = adm.delta_sep;
    r.detail = adm.ok ? "q0 admissible" : adm.reason;
  }));
  if (!adm.ok) return rep;

  rep.suites.push_back(detail::run_suite("sigma_oracle", [&](SuiteResult& r) {
    const WeierstrassLattice w(cfg.lattice);
    const cplx w1 = cfg.lattice.omega1, w2 = cfg.lattice.omega2;
    double prod_err = 0.0, quasi_err = 0.0;
    for (cplx z : {cplx(0.13, 0.07), cplx(-0.21, 0.17), 0.1 * w1 + 0.25 * w2}) {
      const cplx s = w.sigma(z);
      prod_err = std::max(prod_err, std::abs(s - sigma_product(z, w1, w2, 40.0)) / std::abs(s));
      const cplx shifted = -std::exp(w.eta1() * (z + 0.5 * w1)) * s;
      quasi_err = std::max(quasi_err, std::abs(w.sigma(z + w1) - shifted) / std::abs(shifted));
    }
    const double legendre = std::abs(w.eta1() * w2 - w.eta2() * w1 - cplx(0.0, 2.0 * M_PI));
    r.value = prod_err;
    r.threshold = 1e-4;
    r.passed = prod_err < 1e-4 && quasi_err < 1e-10 && legendre < 1e-10;
    std::ostringstream os;
    os << "product rel err " << prod_err << ", quasi-period rel err " << quasi_err << ", Legendre defect " << legendre;
    r.detail = os.str();
  }));

  rep.suites.push_back(detail::run_suite("harmonic_energy", [&](SuiteResult& r) {
    const Field psi = eval_map(q0, cfg.grid());
    const double res = ck_norm(harmonic_residual(psi), 0);
    const double e = dirichlet_energy(psi);
    const double target = 4.0 * M_PI * q0.n;
    const double rel = std::abs(e - target) / target;
    const Degree d = degree(psi);
    r.value = rel;
    r.threshold = 1e-6;
    r.passed = rel < 1e-6 && res < 1e-6 && d.determinate && d.value == q0.n;
    std::ostringstream os;
    os << "E/(4 pi n) - 1 = " << e / target - 1.0 << ", harmonic residual " << res << ", degree " << d.raw;
    r.detail = os.str();
  }));

  const OperatorContext sctx(eval_map(q0, cfg.spectrum_grid()), std::numeric_limits<double>::infinity());
  rep.suites.push_back(detail::run_suite("kernel_dimensions", [&](SuiteResult& r) {
    const SpectrumReport j = kernel_dimension(sctx, OperatorKind::J, q0.n);
    const SpectrumReport l = kernel_dimension(sctx, OperatorKind::L, q0.n);
    r.value = std::min(j.gap_ratio, l.gap_ratio);
    r.threshold = 10.0;
    r.passed = j.kernel_dim == 4 * q0.n && l.kernel_dim == 4 * q0.n + 1 && r.value >= 10.0;
    std::ostringstream os;
    os << "J kernel " << j.kernel_dim << " (gap " << j.gap_ratio << "), L kernel " << l.kernel_dim << " (gap "
       << l.gap_ratio << ") at grid_n " << cfg.spectrum_grid_n;
    r.detail = os.str();
  }));

  rep.suites.push_back(detail::run_suite("self_adjointness", [&](SuiteResult& r) {
    const double dl = symmetry_defect(weighted(sctx, assemble_dense(sctx, OperatorKind::L)));
    const double dj = symmetry_defect(weighted(sctx, assemble_dense(sctx, OperatorKind::J)));
    // randomized pairs on the full grid
    const TorusPtr g = cfg.grid();
    const OperatorContext ctx(eval_map(q0, g), std::numeric_limits<double>::infinity());
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> nd;
    double pair = 0.0;
    for (int k = 0; k < 20; ++k) {
      Field y(g), z(g);
      for (std::size_t p = 0; p < y.size(); ++p) {
        y.set(p, Vec3(nd(rng), nd(rng), nd(rng)));
        z.set(p, Vec3(nd(rng), nd(rng), nd(rng)));
      }
      y = dealias(y);
      z = dealias(z);
      const Field ly = apply_L(ctx, y), lz = apply_L(ctx, z);
      pair = std::max(pair, std::abs(l2_inner(ly, z) - l2_inner(y, lz)) / (l2_norm(ly) * l2_norm(z)));
    }
    r.value = std::max(dl, pair);
    r.threshold = 1e-9;
    r.passed = dl < 1e-9 && pair < 1e-9 && dj > 1e-3;
    std::ostringstream os;
    os << "L defect " << dl << " (random pairs " << pair << "), J defect " << dj;
    r.detail = os.str();
  }));

  rep.suites.push_back(detail::run_suite("christoffel", [&](SuiteResult& r) {
    const ModuliGeometry geo(cfg.metric_grid());
    const Christoffel a = geo.christoffel(q0), b = geo.levi_civita_fd(q0);
    double err = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) err = std::max(err, std::abs(a.data[i] - b.data[i]));
    r.value = err;
    r.threshold = 1e-4;
    r.passed = err < 1e-4;
    r.detail = "max |Gamma - Gamma_fd| = " + std::to_string(err);
  }));

  rep.suites.push_back(detail::run_suite("static_persistence", [&](SuiteResult& r) {
    const TorusPtr g = cfg.grid();
    const WaveState s0 = initial_data(q0, Eigen::VectorXd::Zero(q0.dim()), cfg.evolve_eps, g);
    const EvolveResult res = evolve(s0, 1.0, cfg.dt_cfl * cfg.lattice.spacing_min(), {.cfl = cfg.dt_cfl});
    const double drift = ck_norm(res.final_state.phi - s0.phi, 0);
    r.value = drift;
    r.threshold = 1e-6;
    r.passed = res.status == RunStatus::completed && drift < 1e-6;
    r.detail = "C0 drift over t in [0,1] = " + std::to_string(drift);
  }));
  return rep;
}

inline int cmd_validate(const ExperimentConfig& cfg, std::ostream* log = &std::cerr) {
  RunContext run(cfg, "validate", log);
  const ValidationReport rep = run_validation(cfg);
  for (const auto& s : rep.suites) run.log((s.passed ? "PASS " : "FAIL ") + s.name + ": " + s.detail);
  run.write_json("validate.json", rep.to_json());
  const int code = rep.passed() ? kExitOk : kExitValidation;
  run.write_manifest(code, rep.passed() ? "passed" : "failed");
  return code;
}

// ---------------------------------------------------------------- metric

inline int cmd_metric(const ExperimentConfig& cfg, std::ostream* log = &std::cerr) {
  RunContext run(cfg, "metric", log);
  require_config_point(cfg);
  const ModuliGeometry geo(cfg.metric_grid());
  const MetricData m = geo.metric(cfg.q0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.gamma, Eigen::EigenvaluesOnly);
  nlohmann::json j;
  j["q"] = to_json(cfg.q0);
  j["grid_n"] = cfg.metric_grid_n;
  j["gamma"] = to_json(m.gamma);
  j["gamma_inv"] = to_json(m.gamma_inv);
  j["eigenvalues"] = to_vector(es.eigenvalues());
  j["condition"] = m.condition;
  j["symmetry_defect"] = (m.gamma - m.gamma.transpose()).cwiseAbs().maxCoeff();
  run.write_json("metric.json", j);
  auto os = run.csv("metric.csv");
  os.precision(17);
  for (Eigen::Index r = 0; r < m.gamma.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.gamma.cols(); ++c) os << (c ? "," : "") << m.gamma(r, c);
    os << '\n';
  }
  run.log("min eigenvalue " + std::to_string(m.min_eigenvalue) + ", condition " + std::to_string(m.condition));
  run.write_manifest(kExitOk, "completed");
  return kExitOk;
}

// ---------------------------------------------------------------- geodesic

inline int cmd_geodesic(const ExperimentConfig& cfg, std::ostream* log = &std::cerr) {
  RunContext run(cfg, "geodesic", log);
  require_config_point(cfg);
  const ModuliGeometry geo(cfg.metric_grid());
  const GeodesicTrajectory tr = geo.integrate({cfg.q0, cfg.q1, 0.0}, cfg.geodesic_tau_end, cfg.dtau_geodesic,
                                              cfg.geodesic_sample_every);
  {
    auto os = run.csv("geodesic.csv");
    tr.write_csv(os);
  }
  nlohmann::json j;
  j["status"] = to_string(tr.status);
  j["message"] = tr.message;
  j["tau_end_reached"] = tr.tau.empty() ? 0.0 : tr.tau.back();
  j["max_speed_drift"] = tr.max_speed_drift;
  j["samples"] = tr.tau.size();
  run.write_json("geodesic.json", j);
  const int code = tr.status == GeodesicStatus::completed ? kExitOk : kExitNumerical;
  run.log(std::string("status ") + to_string(tr.status) + ", max speed drift " + std::to_string(tr.max_speed_drift));
  run.write_manifest(code, to_string(tr.status));
  return code;
}

// ---------------------------------------------------------------- evolve

inline int cmd_evolve(const ExperimentConfig& cfg, std::ostream* log = &std::cerr) {
  RunContext run(cfg, "evolve", log);
  require_config_point(cfg);
  const TorusPtr g = cfg.grid();
  const WaveState s0 = initial_data(cfg.q0, cfg.q1, cfg.evolve_eps, g);
  EvolveOptions opt;
  opt.sample_every = cfg.evolve_monitor_stride;
  opt.cfl = cfg.dt_cfl;
  const EvolveResult res = evolve(s0, cfg.evolve_t_end, cfg.dt_cfl * cfg.lattice.spacing_min(), opt);
  {
    auto os = run.csv("evolve_monitors.csv");
    res.write_monitor_csv(os);
  }
  nlohmann::json j;
  j["status"] = res.status == RunStatus::completed ? "completed" : "blow_up";
  j["message"] = res.message;
  j["t_reached"] = res.final_state.t;
  j["dt"] = res.dt;
  j["steps"] = res.steps;
  j["max_energy_drift"] = res.max_energy_drift;
  j["max_prenorm_defect"] = res.max_prenorm_defect;
  j["degree_constant"] = res.degree_constant;
  run.write_json("evolve.json", j);
  const int code = res.status == RunStatus::completed ? kExitOk : kExitNumerical;
  run.log("energy drift " + std::to_string(res.max_energy_drift) + ", " + j["status"].get<std::string>());
  run.write_manifest(code, j["status"]);
  return code;
}

// ---------------------------------------------------------------- spectrum

inline int cmd_spectrum(const ExperimentConfig& cfg, std::ostream* log = &std::cerr) {
  RunContext run(cfg, "spectrum", log);
  require_config_point(cfg);
  const OperatorContext ctx(eval_map(cfg.q0, cfg.spectrum_grid()), std::numeric_limits<double>::infinity());
  const SpectrumReport j = kernel_dimension(ctx, OperatorKind::J, cfg.q0.n);
  const SpectrumReport l = kernel_dimension(ctx, OperatorKind::L, cfg.q0.n);
  nlohmann::json out;
  out["grid_n"] = cfg.spectrum_grid_n;
  out["harmonic_residual"] = ctx.harmonic_residual();
  out["J"] = j.to_json();
  out["L"] = l.to_json();
  out["expected"] = {{"J", 4 * cfg.q0.n}, {"L", 4 * cfg.q0.n + 1}};
  run.write_json("spectrum.json", out);
  run.log("kernel_dim J = " + std::to_string(j.kernel_dim) + ", L = " + std::to_string(l.kernel_dim));
  const int code = j.determinate && l.determinate ? kExitOk : kExitNumerical;
  run.write_manifest(code, code == kExitOk ? "completed" : "indeterminate kernel");
  return code;
}

// ---------------------------------------------------------------- adiabatic

/// Geodesic q_*(tau) sampled on the comparison grid, with psi_* and its
/// space and tau derivatives on the PDE grid.
struct GeodesicReference {
  std::vector<double> tau;
  std::vector<ModuliPoint> q;
  std::vector<Eigen::VectorXd> qdot, qddot;
  std::vector<Field> psi, psi_x, psi_y, psi_tau;
  GeodesicTrajectory trajectory;
};

inline GeodesicReference build_reference(const ExperimentConfig& cfg) {
  const int samples = cfg.tau_samples;
  const double dtau_sample = cfg.tau_star / double(samples - 1);
  const long sub = std::max<long>(1, std::lround(dtau_sample / cfg.dtau_geodesic));
  const ModuliGeometry geo(cfg.metric_grid());
  GeodesicReference ref;
  ref.trajectory = geo.integrate({cfg.q0, cfg.q1, 0.0}, cfg.tau_star, dtau_sample / double(sub), int(sub));
  if (ref.trajectory.status != GeodesicStatus::completed)
    throw ChartExit("geodesic reference stopped before tau_star: " + ref.trajectory.message);
  if (int(ref.trajectory.tau.size()) != samples) throw NumericalError("geodesic reference has wrong sample count");
  const EllipticMap map(cfg.grid());
  for (int k = 0; k < samples; ++k) {
    const ModuliPoint q = ref.trajectory.point(std::size_t(k));
    const Eigen::VectorXd& v = ref.trajectory.qdot[std::size_t(k)];
    const MapJet jet = map.jet(q);
    Field pt(cfg.grid());
    for (int mu = 0; mu < q.dim(); ++mu) pt.axpy(v[mu], jet.tangents[mu]);
    auto [gx, gy] = gradient(jet.psi);
    ref.tau.push_back(double(k) * dtau_sample);
    ref.q.push_back(q);
    ref.qdot.push_back(v);
    ref.qddot.push_back(geo.acceleration(q, v).qddot);
    ref.psi.push_back(jet.psi);
    ref.psi_x.push_back(std::move(gx));
    ref.psi_y.push_back(std::move(gy));
    ref.psi_tau.push_back(std::move(pt));
  }
  return ref;
}

struct ConvergenceRow {
  double eps = 0.0;
  double err_c0 = 0.0, err_c1 = 0.0;
  double energy_drift = 0.0;
  double chi_max = 0.0, ortho_max = 0.0;
  double Mfunc_max = 0.0;
  double wall_time = 0.0;
  bool flagged = false;
  std::string message;
  double dt = 0.0;
  long steps = 0;
  int samples = 0;
  std::vector<HistoryRow> history;
};

/// max over grid points of |a - b|
inline double max_pointwise_distance(const Field& a, const Field& b) { return ck_norm(a - b, 0); }

inline ConvergenceRow run_ladder_rung(const ExperimentConfig& cfg, const GeodesicReference& ref, double eps) {
  const auto t0 = std::chrono::steady_clock::now();
  ConvergenceRow row;
  row.eps = eps;
  const TorusPtr g = cfg.grid();
  const Modulation mod(g);
  const int samples = int(ref.tau.size());
  const double dtau_sample = ref.tau[1] - ref.tau[0];
  const double dt_sample = dtau_sample / eps;
  const long sub = long(std::ceil(dt_sample / (cfg.dt_cfl * cfg.lattice.spacing_min()) - 1e-9));
  row.dt = dt_sample / double(sub);
  ModuliPoint guess = cfg.q0;
  Eigen::VectorXd guess_v = cfg.q1;
  EvolveOptions opt;
  opt.sample_every = int(sub);
  opt.cfl = cfg.dt_cfl;
  opt.on_sample = [&](const WaveState& s) {
    const long k = std::lround(s.t / dt_sample);
    if (k < 0 || k >= samples) throw NumericalError("adiabatic: sample outside the reference grid");
    const std::size_t i = std::size_t(k);
    auto [px, py] = gradient(s.phi);
    Field pt = s.phi_t * (1.0 / eps);
    const double c0 = max_pointwise_distance(s.phi, ref.psi[i]);
    const double c1 = std::max({c0, max_pointwise_distance(px, ref.psi_x[i]), max_pointwise_distance(py, ref.psi_y[i]),
                                max_pointwise_distance(pt, ref.psi_tau[i])});
    row.err_c0 = std::max(row.err_c0, c0);
    row.err_c1 = std::max(row.err_c1, c1);
    // extrapolated warm start
    ModuliPoint start = k > 0 ? guess.moved(dtau_sample * guess_v) : guess;
    if (!admissible(start).ok) start = guess;
    const ModulationDecomposition d = mod.decompose(s, start);
    guess = d.q;
    guess_v = d.qdot;
    HistoryRow h;
    h.t = s.t;
    h.tau = eps * s.t;
    h.eps = eps;
    h.q = d.q.q;
    h.qdot = d.qdot;
    h.q_star = ref.q[i].q;
    h.qdot_star = ref.qdot[i];
    h.qddot_star = ref.qddot[i];
    h.Y_h3 = sobolev_norm(d.Y, 3);
    h.Yt_h2 = sobolev_norm(d.Y_t, 2);
    h.ortho_max = d.ortho_max;
    h.chi_c0 = d.chi_c0;
    if (cfg.history_energies) std::tie(h.E1, h.E2) = mod.energies_E1_E2(d);
    row.chi_max = std::max(row.chi_max, d.chi_c0);
    row.ortho_max = std::max(row.ortho_max, d.ortho_max);
    row.history.push_back(std::move(h));
  };
  try {
    const EvolveResult res = evolve(initial_data(cfg.q0, cfg.q1, eps, g), cfg.tau_star / eps, row.dt, opt);
    row.steps = res.steps;
    row.energy_drift = res.max_energy_drift;
    if (res.status != RunStatus::completed) {
      row.flagged = true;
      row.message = "blow-up: " + res.message;
    }
  } catch (const ChartExit& e) {
    row.flagged = true;
    row.message = std::string("chart exit: ") + e.what();
  } catch (const NumericalError& e) {
    row.flagged = true;
    row.message = std::string("numerical failure: ") + e.what();
  }
  row.samples = int(row.history.size());
  if (!row.flagged && row.samples != samples) {
    row.flagged = true;
    row.message = "run ended before tau_star";
  }
  if (!row.history.empty()) {
    error_functional(row.history);
    row.Mfunc_max = row.history.back().Mfunc;
  }
  row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

struct PowerFit {
  double order = std::numeric_limits<double>::quiet_NaN();
  double log_constant = std::numeric_limits<double>::quiet_NaN();
  double residual = std::numeric_limits<double>::quiet_NaN();  ///< rms of log residuals
  int points = 0;
};

/// Least squares log y = c + p log x.
inline PowerFit fit_power_law(const std::vector<double>& x, const std::vector<double>& y) {
  PowerFit f;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] > 0.0 && y[i] > 0.0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  f.points = int(lx.size());
  if (f.points < 2) return f;
  Eigen::MatrixXd a(f.points, 2);
  Eigen::VectorXd b(f.points);
  for (int i = 0; i < f.points; ++i) {
    a(i, 0) = 1.0;
    a(i, 1) = lx[std::size_t(i)];
    b[i] = ly[std::size_t(i)];
  }
  const Eigen::Vector2d c = a.colPivHouseholderQr().solve(b);
  f.log_constant = c[0];
  f.order = c[1];
  f.residual = std::sqrt((a * c - b).squaredNorm() / f.points);
  return f;
}

struct ConvergenceReport {
  std::vector<ConvergenceRow> rows;  ///< descending eps
  PowerFit fit_c0, fit_c1;
  bool monotone_c0 = false, monotone_c1 = false;
  bool order_c0_in_range = false;  ///< 2 +- 0.4; a warning only
  double m_ratio = std::numeric_limits<double>::quiet_NaN();  ///< max/min Mfunc_max over unflagged rows
  bool m_bounded = false;                                      ///< m_ratio <= 2
  double reference_speed_drift = 0.0;
  bool any_flagged = false;
  std::vector<std::string> warnings;

  [[nodiscard]] nlohmann::json to_json() const {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    nlohmann::json j;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows)
      j["rows"].push_back({{"eps", r.eps}, {"err_c0", r.err_c0}, {"err_c1", r.err_c1},
                           {"energy_drift", r.energy_drift}, {"chi_max", r.chi_max}, {"ortho_max", r.ortho_max},
                           {"Mfunc_max", r.Mfunc_max}, {"wall_time", r.wall_time}, {"flagged", r.flagged},
                           {"message", r.message}, {"dt", r.dt}, {"steps", r.steps}, {"samples", r.samples}});
    j["order_c0"] = num(fit_c0.order);
    j["order_c1"] = num(fit_c1.order);
    j["fit_residual_c0"] = num(fit_c0.residual);
    j["fit_residual_c1"] = num(fit_c1.residual);
    j["fit_points"] = fit_c0.points;
    j["checks"] = {{"monotone_c0", monotone_c0},
                   {"monotone_c1", monotone_c1},
                   {"order_c0_in_range", order_c0_in_range},
                   {"m_ratio", num(m_ratio)},
                   {"m_bounded", m_bounded}};
    j["reference_speed_drift"] = reference_speed_drift;
    j["any_flagged"] = any_flagged;
    j["warnings"] = warnings;
    return j;
  }
};

inline ConvergenceReport assemble_report(std::vector<ConvergenceRow> rows, double reference_speed_drift) {
  ConvergenceReport rep;
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.eps > b.eps; });
  rep.rows = std::move(rows);
  rep.reference_speed_drift = reference_speed_drift;
  std::vector<double> e, c0, c1, m;
  for (const auto& r : rep.rows) {
    if (r.flagged) {
      rep.any_flagged = true;
      rep.warnings.push_back("eps = " + std::to_string(r.eps) + " flagged: " + r.message);
      continue;
    }
    e.push_back(r.eps);
    c0.push_back(r.err_c0);
    c1.push_back(r.err_c1);
    m.push_back(r.Mfunc_max);
  }
  rep.fit_c0 = fit_power_law(e, c0);
  rep.fit_c1 = fit_power_law(e, c1);
  rep.monotone_c0 = !rep.any_flagged && e.size() >= 2;
  rep.monotone_c1 = rep.monotone_c0;
  for (std::size_t i = 1; i < e.size(); ++i) {
    rep.monotone_c0 = rep.monotone_c0 && c0[i] < c0[i - 1];
    rep.monotone_c1 = rep.monotone_c1 && c1[i] < c1[i - 1];
  }
  rep.order_c0_in_range = std::abs(rep.fit_c0.order - 2.0) <= 0.4;
  if (!m.empty()) {
    const auto [lo, hi] = std::minmax_element(m.begin(), m.end());
    rep.m_ratio = *lo > 0.0 ? *hi / *lo : std::numeric_limits<double>::infinity();
    rep.m_bounded = rep.m_ratio <= 2.0;
  }
  if (!rep.monotone_c0) rep.warnings.push_back("err_c0 is not strictly decreasing in eps");
  if (!rep.monotone_c1) rep.warnings.push_back("err_c1 is not strictly decreasing in eps");
  if (!rep.order_c0_in_range) rep.warnings.push_back("fitted order_c0 outside 2 +- 0.4");
  if (!rep.m_bounded) rep.warnings.push_back("M functional varies by more than a factor 2 across the ladder");
  return rep;
}

/// Geodesic reference, then one worker per eps, joined into a report.
inline ConvergenceReport run_adiabatic(const ExperimentConfig& cfg, const std::function<void(const std::string&)>& log = {}) {
  require_config_point(cfg);
  const GeodesicReference ref = build_reference(cfg);
  if (log) log("geodesic reference: " + std::to_string(ref.tau.size()) + " samples, speed drift " +
               std::to_string(ref.trajectory.max_speed_drift));
  std::vector<std::future<ConvergenceRow>> jobs;
  for (double eps : cfg.eps_ladder)
    jobs.push_back(std::async(std::launch::async, [&cfg, &ref, eps] { return run_ladder_rung(cfg, ref, eps); }));
  std::vector<ConvergenceRow> rows;
  for (auto& j : jobs) {
    rows.push_back(j.get());
    const auto& r = rows.back();
    if (log)
      log("eps " + std::to_string(r.eps) + ": err_c0 " + std::to_string(r.err_c0) + ", err_c1 " +
          std::to_string(r.err_c1) + ", M " + std::to_string(r.Mfunc_max) + (r.flagged ? " [flagged]" : ""));
  }
  return assemble_report(std::move(rows), ref.trajectory.max_speed_drift);
}

inline void write_adiabatic_outputs(RunContext& run, const ConvergenceReport& rep) {
  {
    auto os = run.csv("adiabatic.csv");
    os << "config_hash,eps,err_c0,err_c1,energy_drift,chi_max,ortho_max,Mfunc_max,wall_time,flagged\n";
    os.precision(17);
    for (const auto& r : rep.rows)
      os << run.hash() << ',' << r.eps << ',' << r.err_c0 << ',' << r.err_c1 << ',' << r.energy_drift << ','
         << r.chi_max << ',' << r.ortho_max << ',' << r.Mfunc_max << ',' << r.wall_time << ',' << int(r.flagged)
         << '\n';
  }
  run.write_json("adiabatic.json", rep.to_json());
  for (std::size_t k = 0; k < rep.rows.size(); ++k) {
    auto os = run.csv("history_" + std::to_string(k) + ".csv");
    write_history_csv(os, rep.rows[k].history);
  }

  plot::Chart err{"deviation from the geodesic", "eps", "max deviation", true, true, {}};
  plot::Series s0{"err_c0", {}, {}}, s1{"err_c1", {}, {}};
  for (const auto& r : rep.rows) {
    if (r.flagged) continue;
    s0.x.push_back(r.eps);
    s0.y.push_back(r.err_c0);
    s1.x.push_back(r.eps);
    s1.y.push_back(r.err_c1);
  }
  err.series = {s0, s1};
  if (!s0.x.empty()) {
    plot::Series ref2{"slope 2", {}, {}}, ref1{"slope 1", {}, {}};
    for (double e : s0.x) {
      ref2.x.push_back(e);
      ref2.y.push_back(s0.y.back() * std::pow(e / s0.x.back(), 2.0));
      ref1.x.push_back(e);
      ref1.y.push_back(s1.y.back() * (e / s1.x.back()));
    }
    err.series.push_back(ref2);
    err.series.push_back(ref1);
  }
  plot::Chart mf{"running error functional M", "tau", "M", false, true, {}};
  for (const auto& r : rep.rows) {
    plot::Series s{"eps " + std::to_string(r.eps).substr(0, 5), {}, {}};
    for (const auto& h : r.history) {
      s.x.push_back(h.tau);
      s.y.push_back(h.Mfunc);
    }
    mf.series.push_back(std::move(s));
  }
  for (const auto& [name, chart] : {std::pair{std::string("adiabatic_errors"), &err}, std::pair{std::string("adiabatic_mfunc"), &mf}}) {
    {
      auto os = run.open(name + ".svg");
      plot::write_svg(os, *chart);
    }
    {
      auto os = run.open(name + ".dat");
      plot::write_gnuplot_data(os, *chart);
    }
    auto os = run.open(name + ".gp");
    plot::write_gnuplot_script(os, *chart, name + ".dat", name + ".png");
  }
}

inline int cmd_adiabatic(const ExperimentConfig& cfg, std::ostream* log = &std::cerr) {
  RunContext run(cfg, "adiabatic", log);
  const ConvergenceReport rep = run_adiabatic(cfg, [&run](const std::string& m) { run.log(m); });
  write_adiabatic_outputs(run, rep);
  for (const auto& w : rep.warnings) run.log("warning: " + w);
  run.log("order_c0 " + std::to_string(rep.fit_c0.order) + ", order_c1 " + std::to_string(rep.fit_c1.order));
  const int code = rep.any_flagged ? kExitNumerical : kExitOk;
  run.write_manifest(code, rep.any_flagged ? "flagged rows" : "completed");
  return code;
}

/// Maps exceptions to exit codes.
inline int run_guarded(const std::function<int()>& f, std::ostream& err = std::cerr) {
  try {
    return f();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace lumpflow
