#include <gtest/gtest.h>

#include "common.hpp"

using namespace lumpflow;
using namespace lumpflow::testing;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

const OperatorContext& ctx64() {
  static const OperatorContext c = OperatorContext::at(generic_point(), Torus::make(square(64)));
  return c;
}

const OperatorContext& ctx16() {
  static const OperatorContext c(eval_map(generic_point(square(16)), Torus::make(square(16))), kInf);
  return c;
}

Field tangent_random(const OperatorContext& c, std::mt19937_64& rng) {
  return project_tangent(c, random_field(c.torus(), rng));
}

/// ||alpha||_2 as the Sobolev norm of the scalar lifted to one component.
double scalar_h2(const ScalarField& a) {
  Field f(a.torus());
  f[0] = a;
  return sobolev_norm(f, 2);
}

}  // namespace

TEST(OperatorContext, RejectsUnderResolvedOrNonUnitMaps) {
  EXPECT_THROW((void)OperatorContext::at(generic_point(square(16)), Torus::make(square(16)), 1e-8), NumericalError);
  Field bad = ctx64().psi() * 1.1;
  EXPECT_THROW((void)OperatorContext(bad, kInf), NumericalError);
  EXPECT_LT(ctx64().harmonic_residual(), 1e-6);
}

TEST(ApplyJ, AnnihilatesModuliTangents) {
  const OperatorContext& c = ctx64();
  const MapJet jet = EllipticMap(c.torus()).jet(generic_point());
  for (const Field& t : jet.tangents) EXPECT_LT(l2_norm(apply_J(c, t)) / sobolev_norm(t, 2), 1e-5);
}

TEST(ApplyJ, SymmetricOnTangentSectionsOnly) {
  const OperatorContext& c = ctx64();
  std::mt19937_64 rng(21);
  for (int k = 0; k < 5; ++k) {
    const Field v = tangent_random(c, rng), w = tangent_random(c, rng);
    const double a = l2_inner(apply_J(c, v), w), b = l2_inner(v, apply_J(c, w));
    EXPECT_LT(std::abs(a - b), 1e-9 * l2_norm(apply_J(c, v)) * l2_norm(w));
  }
  const ScalarField alpha = random_smooth_scalar(c.torus(), rng);
  const Field v = alpha * c.psi();
  const Field w = random_field(c.torus(), rng);
  EXPECT_GT(std::abs(l2_inner(apply_J(c, v), w) - l2_inner(v, apply_J(c, w))), 1e-3);
}

TEST(ApplyAdagger, VanishesOnTangentAndIsLinear) {
  const OperatorContext& c = ctx64();
  std::mt19937_64 rng(22);
  const Field z = tangent_random(c, rng);
  EXPECT_LT(ck_norm(apply_Adagger(c, z), 0), 1e-10);
  const Field z1 = random_field(c.torus(), rng), z2 = random_field(c.torus(), rng);
  const Field lhs = apply_Adagger(c, z1 * 0.7 + z2 * -1.3);
  const Field rhs = apply_Adagger(c, z1) * 0.7 + apply_Adagger(c, z2) * -1.3;
  EXPECT_LT(ck_norm(lhs - rhs, 0), 1e-12 * ck_norm(rhs, 0));
}

TEST(ApplyAdagger, AdjointOfAUpToTheNormalCorrection) {
  // Adag = A^T + 4 |grad psi|^2 psi psi^T
  const OperatorContext& c = ctx64();
  std::mt19937_64 rng(23);
  for (int k = 0; k < 5; ++k) {
    const Field v = random_field(c.torus(), rng), w = random_field(c.torus(), rng);
    const double lhs = l2_inner(apply_A(c, v), w);
    const double corr = 4.0 * integrate(c.grad2() * dot(c.psi(), v) * dot(c.psi(), w));
    const double rhs = l2_inner(v, apply_Adagger(c, w)) - corr;
    EXPECT_LT(std::abs(lhs - rhs), 1e-9 * l2_norm(apply_A(c, v)) * l2_norm(w));
  }
}

TEST(ApplyL, SelfAdjointOnRandomPairs) {
  const OperatorContext& c = ctx64();
  std::mt19937_64 rng(24);
  for (int k = 0; k < 20; ++k) {
    const Field y = random_field(c.torus(), rng), z = random_field(c.torus(), rng);
    const Field ly = apply_L(c, y);
    EXPECT_LT(std::abs(l2_inner(ly, z) - l2_inner(y, apply_L(c, z))), 1e-9 * l2_norm(ly) * l2_norm(z));
  }
}

TEST(ApplyL, AnnihilatesPsi) { EXPECT_LT(l2_norm(apply_L(ctx64(), ctx64().psi())), 1e-8); }

TEST(ApplyL, NormalSectionsSeeOnlyTheScalarLaplacian) {
  // For the symmetric L, L(alpha psi) = -(Delta alpha) psi on a harmonic psi.
  const OperatorContext& c = ctx64();
  std::mt19937_64 rng(25);
  for (int k = 0; k < 5; ++k) {
    const ScalarField alpha = random_smooth_scalar(c.torus(), rng);
    const Field lhs = apply_L(c, alpha * c.psi());
    const Field rhs = (laplacian(alpha) * -1.0) * c.psi();
    EXPECT_LT(l2_norm(lhs - rhs), 1e-8 * scalar_h2(alpha));
  }
}

TEST(ApplyB, IsLPlusLaplacian) {
  const OperatorContext& c = ctx64();
  std::mt19937_64 rng(26);
  const Field y = random_field(c.torus(), rng);
  EXPECT_LT(ck_norm(apply_B(c, y) - apply_L(c, y) - laplacian(y), 0), 1e-9 * ck_norm(apply_L(c, y), 0));
}

TEST(ProjectTangent, Properties) {
  const OperatorContext& c = ctx64();
  std::mt19937_64 rng(27);
  EXPECT_LT(ck_norm(project_tangent(c, c.psi()), 0), 1e-14);
  const Field y = random_field(c.torus(), rng);
  const Field p = project_tangent(c, y);
  EXPECT_LT(ck_norm(project_tangent(c, p) - p, 0), 1e-12);
  EXPECT_LT(dot(c.psi(), p).max_abs(), 1e-12);
}

TEST(Q1Form, MatchesQuadraticFormOfL) {
  const OperatorContext& c = ctx64();
  std::mt19937_64 rng(28);
  for (int k = 0; k < 5; ++k) {
    const Field y = random_field(c.torus(), rng);
    const double q = q1_form(c, y);
    EXPECT_NEAR(q, l2_inner(y, apply_L(c, y)), 1e-8 * std::max(1.0, std::abs(q)));
  }
}

TEST(Q1Form, ProjectionDoesNotIncrease) {
  const OperatorContext& c = ctx64();
  std::mt19937_64 rng(29);
  for (int k = 0; k < 50; ++k) {
    const Field y = random_field(c.torus(), rng);
    EXPECT_GE(q1_form(c, y), q1_form(c, project_tangent(c, y)) - 1e-8);
  }
}

TEST(Q1Form, VanishesOnKernelDirections) {
  const OperatorContext& c = ctx64();
  const MapJet jet = EllipticMap(c.torus()).jet(generic_point());
  for (const Field& t : jet.tangents) EXPECT_LT(std::abs(q1_form(c, t)), 1e-6 * std::pow(sobolev_norm(t, 1), 2));
}

TEST(Q2Form, PsiAndDenseConsistency) {
  EXPECT_LT(std::abs(q2_form(ctx64(), ctx64().psi())), 1e-12);
  const OperatorContext& c = ctx16();
  const Eigen::MatrixXd l = assemble_dense(c, OperatorKind::L);
  std::mt19937_64 rng(30);
  for (int k = 0; k < 3; ++k) {
    const Field y = random_field(c.torus(), rng);
    const Eigen::VectorXd v = flatten(y);
    const Eigen::VectorXd lv = l * v;
    const double dense = c.torus()->cell_area() * lv.dot(l * lv);
    const double q = q2_form(c, y);
    EXPECT_NEAR(q, dense, 1e-6 * std::abs(dense));
  }
}

TEST(Q2Form, NonNegativeAwayFromKernel) {
  const OperatorContext& c = ctx64();
  const MapJet jet = EllipticMap(c.torus()).jet(generic_point());
  const MetricData m = metric_from_tangents(jet.tangents, generic_point());
  std::mt19937_64 rng(31);
  for (int k = 0; k < 5; ++k) {
    Field y = tangent_random(c, rng);
    Eigen::VectorXd b(8);
    for (int mu = 0; mu < 8; ++mu) b[mu] = l2_inner(y, jet.tangents[mu]);
    const Eigen::VectorXd coef = m.gamma_inv * b;
    for (int mu = 0; mu < 8; ++mu) y.axpy(-coef[mu], jet.tangents[mu]);
    EXPECT_GE(q2_form(c, y), -1e-8 * l2_norm(apply_L(c, y)));
  }
}

TEST(AssembleDense, MatchesMatrixFreeAndSymmetryDichotomy) {
  const OperatorContext& c = ctx16();
  const Eigen::MatrixXd l = assemble_dense(c, OperatorKind::L);
  const Eigen::MatrixXd j = assemble_dense(c, OperatorKind::J);
  std::mt19937_64 rng(32);
  for (int k = 0; k < 10; ++k) {
    const Field y = random_field(c.torus(), rng, false);
    const Eigen::VectorXd diff = l * flatten(y) - flatten(apply_L(c, y));
    EXPECT_LT(diff.cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, (l * flatten(y)).cwiseAbs().maxCoeff()));
  }
  EXPECT_TRUE(l.rowwise().sum().allFinite());
  EXPECT_LT(symmetry_defect(weighted(c, l)), 1e-9);
  EXPECT_GT(symmetry_defect(weighted(c, j)), 1e-3);
  EXPECT_THROW((void)assemble_dense(ctx64(), OperatorKind::L), ConfigError);
}

TEST(KernelDimension, JAndLAtGrid16) {
  const OperatorContext& c = ctx16();
  const SpectrumReport j = kernel_dimension(c, OperatorKind::J, 2);
  const SpectrumReport l = kernel_dimension(c, OperatorKind::L, 2);
  EXPECT_EQ(j.kernel_dim, 8);
  EXPECT_EQ(l.kernel_dim, 9);
  EXPECT_GE(j.gap_ratio, 10.0);
  EXPECT_GE(l.gap_ratio, 10.0);
  EXPECT_GT(j.eigenvalues.front(), -1e-5 * j.scale);
  // the tangent restriction never lowers the estimate
  EXPECT_GE(j.coercivity, l.coercivity - 1e-6 * l.scale);
  const nlohmann::json js = j.to_json();
  EXPECT_EQ(js["operator"], "J_tangent");
  EXPECT_EQ(js["kernel_dim"], 8);
}

TEST(Coercivity, PositiveAtThreePoints) {
  for (const ModuliPoint& q : {generic_point(square(16)), point_b(square(16)), point_c(square(16))}) {
    const OperatorContext c(eval_map(q, Torus::make(square(16))), kInf);
    EXPECT_GT(coercivity_estimate(c, 2), 0.0);
  }
}

TEST(Coercivity, DecreasesAsZerosMerge) {
  // a_2 approaches a_1 along a straight line; b_2 follows the sum rule
  const LatticeSpec lat = square(16);
  std::vector<double> c;
  for (double s : {0.45, 0.3, 0.18}) {
    const cplx a1(0.1, 0.15);
    const cplx a2 = a1 + s * cplx(1.0, 0.2) / std::abs(cplx(1.0, 0.2));
    const ModuliPoint q = ModuliPoint::from_params(lat, 1.0, {a1, a2}, {cplx(0.3, 0.6)});
    ASSERT_TRUE(admissible(q).ok);
    c.push_back(coercivity_estimate(OperatorContext(eval_map(q, Torus::make(lat)), kInf), 2));
  }
  EXPECT_GT(c[0], c[1]);
  EXPECT_GT(c[1], c[2]);
}
