#include <gtest/gtest.h>

#include "common.hpp"

using namespace lumpflow;
using namespace lumpflow::testing;

namespace {

WaveState moving(int n, double eps) {
  return initial_data(generic_point(square(n)), generic_velocity(), eps, Torus::make(square(n)));
}

double cfl_dt(int n) { return kDefaultCfl * square(n).spacing_min(); }

double max_diff(const Field& a, const Field& b) { return ck_norm(a - b, 0); }

}  // namespace

TEST(InitialData, VelocityMatchesMetric) {
  const TorusPtr t = Torus::make(square(64));
  const ModuliPoint q = generic_point();
  const Eigen::VectorXd v = generic_velocity();
  EXPECT_EQ(ck_norm(initial_data(q, v, 0.0, t).phi_t, 0), 0.0);
  const double eps = 0.1;
  const WaveState s = initial_data(q, v, eps, t);
  const MetricData m = metric_from_tangents(EllipticMap(t).jet(q).tangents, q);
  EXPECT_NEAR(l2_norm(s.phi_t), eps * std::sqrt(v.dot(m.gamma * v)), 1e-12);
  EXPECT_LT(dot(s.phi, s.phi_t).max_abs(), 1e-12);
  EXPECT_THROW((void)initial_data(q, Eigen::VectorXd::Zero(3), eps, t), ConfigError);
  EXPECT_THROW((void)initial_data(q, v, -1.0, t), ConfigError);
}

TEST(Energies, KineticScalesQuadraticallyAndConstantMapIsFree) {
  const double t1 = energies(moving(32, 0.05)).T, t2 = energies(moving(32, 0.1)).T;
  EXPECT_NEAR(t2 / t1, 4.0, 1e-12);
  const TorusPtr t = Torus::make(square(16));
  WaveState c{Field::from_function(t, [](cplx) { return Vec3(0, 0, 1); }), Field(t), 0.0, 0.0};
  EXPECT_EQ(energies(c).total, 0.0);
  EXPECT_EQ(degree(c.phi).value, 0);
}

TEST(Energies, HarmonicMapSitsAtTheTopologicalBound) {
  const WaveState s = moving(64, 0.0);
  const Degree d = degree(s.phi);
  EXPECT_EQ(d.value, 2);
  EXPECT_TRUE(d.determinate);
  EXPECT_GE(energies(s).E, 8.0 * M_PI - 1e-6);
  EXPECT_NEAR(energies(s).E, 8.0 * M_PI, 1e-6);
}

TEST(Step, CflViolationThrows) {
  WaveState s = moving(16, 0.1);
  EXPECT_THROW(step(s, 1.01 * cfl_dt(16)), ConfigError);
  EXPECT_THROW(step(s, 0.0), ConfigError);
  EXPECT_NO_THROW(step(s, cfl_dt(16)));
}

TEST(Step, PreservesConstraints) {
  WaveState s = moving(32, 0.2);
  for (int k = 0; k < 20; ++k) step(s, cfl_dt(32));
  const MonitorRow r = monitor(s);
  EXPECT_LT(r.unitnorm_defect, 1e-13);
  EXPECT_LT(r.tangency_defect, 1e-13);
}

TEST(Evolve, StaticHarmonicMapStaysPut) {
  const WaveState s0 = moving(64, 0.0);
  const EvolveResult r = evolve(s0, 1.0, cfl_dt(64), {.sample_every = 64});
  ASSERT_EQ(r.status, RunStatus::completed);
  EXPECT_DOUBLE_EQ(r.final_state.t, 1.0);
  EXPECT_LT(max_diff(r.final_state.phi, s0.phi), 1e-6);
}

TEST(Evolve, SecondOrderInTime) {
  const WaveState s0 = moving(32, 0.3);
  const double dt = cfl_dt(32);
  std::vector<Field> phi;
  for (double f : {1.0, 0.5, 0.25}) phi.push_back(evolve(s0, 0.5, dt * f, {.sample_every = 1000}).final_state.phi);
  const double ratio = l2_norm(phi[0] - phi[1]) / l2_norm(phi[1] - phi[2]);
  EXPECT_NEAR(ratio, 4.0, 1.2);
}

TEST(Evolve, TimeReversible) {
  const WaveState s0 = moving(32, 0.3);
  const double dt = cfl_dt(32);
  WaveState mid = evolve(s0, 0.5, dt, {.sample_every = 1000}).final_state;
  mid.phi_t = mid.phi_t * -1.0;
  mid.t = 0.0;
  const WaveState back = evolve(mid, 0.5, dt, {.sample_every = 1000}).final_state;
  EXPECT_LT(max_diff(back.phi, s0.phi), 1e-10);
  EXPECT_LT(max_diff(back.phi_t * -1.0, s0.phi_t), 1e-10);
}

TEST(Evolve, EnergyAndDegreeOverLongRun) {
  const EvolveResult r = evolve(moving(64, 0.1), 10.0, cfl_dt(64), {.sample_every = 32});
  ASSERT_EQ(r.status, RunStatus::completed) << r.message;
  EXPECT_LT(r.max_energy_drift, 1e-6);
  EXPECT_TRUE(r.degree_constant);
  for (const MonitorRow& m : r.monitors) EXPECT_GE(m.E, 8.0 * M_PI - 1e-6);
}

TEST(Evolve, LandsExactlyOnEndTime) {
  const EvolveResult r = evolve(moving(16, 0.1), 0.3, 0.013, {.sample_every = 5});
  EXPECT_DOUBLE_EQ(r.final_state.t, 0.3);
  EXPECT_EQ(r.steps, 24);
  EXPECT_NEAR(r.dt * r.steps, 0.3, 1e-15);
  EXPECT_EQ(r.monitors.size(), 1u + 24 / 5 + 1);
}

TEST(Evolve, AbortFromSampleHookIsReportedAsBlowUp) {
  EvolveOptions opt;
  opt.sample_every = 2;
  opt.on_sample = [](const WaveState& s) {
    if (s.t > 0.05) throw BlowUp("stop");
  };
  const EvolveResult r = evolve(moving(16, 0.1), 1.0, cfl_dt(16), opt);
  EXPECT_EQ(r.status, RunStatus::blow_up);
  EXPECT_LT(r.final_state.t, 0.1);
}

TEST(Evolve, MonitorCsv) {
  const EvolveResult r = evolve(moving(16, 0.1), 0.05, cfl_dt(16), {.sample_every = 2});
  std::ostringstream os;
  r.write_monitor_csv(os);
  const std::string s = os.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "t,T,E,total,degree_raw,unitnorm_defect,prenorm_defect,tangency_defect");
  EXPECT_EQ(std::size_t(std::count(s.begin(), s.end(), '\n')), 1 + r.monitors.size());
}
