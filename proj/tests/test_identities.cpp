#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "charts.hpp"
#include "geotomo/helmholtz.hpp"
#include "geotomo/identities.hpp"

using namespace geotomo;

namespace {

template <int D>
SymmetricTensorField<D> random_tensor(std::mt19937_64& rng, int m) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<std::string> comps;
  for (int c = 0; c < component_count(D, m); ++c)
    comps.push_back(Expression::format_number(u(rng)) + " + " + Expression::format_number(u(rng)) + "*sin(x1 + " +
                    Expression::format_number(u(rng)) + "*x2)");
  return SymmetricTensorField<D>::from_strings(m, comps);
}

}  // namespace

TEST(Pestov, ZeroFunction) {
  const auto u = SMFunction<2>::constant(testing_charts::builtin<2>()[3], 0.0);
  const auto rep = pestov_residual(u);
  for (const auto& t : rep.terms) EXPECT_EQ(t.second, 0.0);
  EXPECT_EQ(rep.residual, 0.0);
  EXPECT_TRUE(rep.pass);
}

TEST(Pestov, EuclideanCutoffCosine) {
  const auto chart = MetricChart<2>::euclidean();
  const auto u = SMFunction<2>::from_string(chart, "(1 - x1^2 - x2^2)^3*v1");
  const auto rep = pestov_residual(u);
  EXPECT_LT(rep.relative_residual, 1e-4);
  EXPECT_GT(rep.term("|X u|^2"), 0.0);
  EXPECT_EQ(rep.term("(R grad_v u, grad_v u)"), 0.0);
}

TEST(Pestov, SphereCapRandomFunctions) {
  const auto chart = MetricChart<2>::sphere_cap(0.8);
  std::mt19937_64 rng(11);
  for (int t = 0; t < 3; ++t) {
    const auto rep = pestov_residual(random_sm_function(chart, rng));
    EXPECT_LT(rep.relative_residual, 1e-3);
    EXPECT_GT(rep.term("(R grad_v u, grad_v u)"), 0.0);
  }
}

TEST(Pestov, AllMetrics3D) {
  std::mt19937_64 rng(12);
  for (const auto& chart : testing_charts::builtin<3>()) {
    const auto rep = pestov_residual(random_sm_function(chart, rng), QuadratureSpec{6, 16, 4, 8});
    EXPECT_LT(rep.relative_residual, 1e-3) << chart.name();
  }
}

TEST(Pestov, ResidualShrinksUnderRefinement) {
  std::mt19937_64 rng(13);
  for (const auto& chart : testing_charts::builtin<2>()) {
    const auto u = random_sm_function(chart, rng);
    const double coarse = std::abs(pestov_residual(u, QuadratureSpec{4, 8, 4, 4}).residual);
    const double fine = std::abs(pestov_residual(u, QuadratureSpec{8, 32, 4, 4}).residual);
    EXPECT_GE(coarse, 4.0 * fine) << chart.name();
  }
}

TEST(Pestov, NonCompactFunctionRejected) {
  const auto chart = MetricChart<2>::euclidean();
  EXPECT_THROW(pestov_residual(SMFunction<2>::from_string(chart, "x1*v2")), PreconditionError);
  // Vanishing values but nonvanishing derivative.
  EXPECT_THROW(pestov_residual(SMFunction<2>::from_string(chart, "(1 - x1^2 - x2^2)*v2")), PreconditionError);
}

TEST(Structural, ExactForArbitraryFunctions) {
  std::mt19937_64 rng(14);
  for (const auto& chart : testing_charts::builtin<2>())
    for (bool compact : {true, false}) {
      const auto u = random_sm_function(chart, rng, compact);
      for (int m = 0; m <= 3; ++m) {
        const auto rep = structural_relation(u, m, QuadratureSpec{6, 16, 4, 4});
        EXPECT_LT(rep.relative_residual, 1e-12) << chart.name() << " m=" << m;
        EXPECT_TRUE(rep.pass);
      }
    }
}

TEST(Structural, ZeroFunction) {
  const auto rep = structural_relation(SMFunction<2>::constant(MetricChart<2>::euclidean(), 0.0), 2);
  EXPECT_EQ(rep.residual, 0.0);
  EXPECT_EQ(rep.relative_residual, 0.0);
}

TEST(Structural, Works3D) {
  std::mt19937_64 rng(15);
  const auto chart = testing_charts::builtin<3>()[2];
  const auto rep = structural_relation(random_sm_function(chart, rng, false), 2, QuadratureSpec{4, 8, 4, 8});
  EXPECT_LT(rep.relative_residual, 1e-12);
}

TEST(DivFree, CurlOfBump) {
  const auto chart = MetricChart<2>::euclidean();
  // psi = (1 - |x|^2)^2, f = (d2 psi, -d1 psi)
  const auto f = SymmetricTensorField<2>::from_strings(1, {"-4*x2*(1 - x1^2 - x2^2)", "4*x1*(1 - x1^2 - x2^2)"});
  const auto rep = divfree_identity_pointwise(chart, f, 200, 1);
  EXPECT_LT(rep.max_residual(), 1e-8);
  EXPECT_TRUE(rep.pass);
}

TEST(DivFree, CurlCurlOrderTwo) {
  const auto chart = MetricChart<2>::euclidean();
  // psi = sin(x1) x2: f11 = psi_22, f12 = -psi_12, f22 = psi_11
  const auto f = SymmetricTensorField<2>::from_strings(2, {"0", "-cos(x1)", "-sin(x1)*x2"});
  EXPECT_LT(divfree_identity_pointwise(chart, f, 200, 2).max_residual(), 1e-7);
}

TEST(DivFree, OrderZeroIsExact) {
  const auto chart = testing_charts::builtin<2>()[2];
  const auto f = SymmetricTensorField<2>::from_strings(0, {"exp(x1)*x2"});
  EXPECT_EQ(divfree_identity_pointwise(chart, f, 50, 3).max_residual(), 0.0);
}

TEST(DivFree, DivergentFieldRejected) {
  const auto f = SymmetricTensorField<2>::from_strings(1, {"x1", "0"});
  EXPECT_THROW(divfree_identity_pointwise(MetricChart<2>::euclidean(), f), PreconditionError);
}

TEST(DivFree, ProjectedFields) {
  const auto chart = MetricChart<2>::euclidean();
  const auto f1 = SymmetricTensorField<2>::from_strings(1, {"x1^2 + x2", "x1*x2 - 1"});
  const auto f2 = SymmetricTensorField<2>::from_strings(2, {"x1^2 + x2", "x1*x2 - 1", "x2^3 + 2*x1"});
  for (const auto& f : {f1, f2}) {
    const auto fs = helmholtz_decompose(chart, f).solenoidal;
    const auto rep = divfree_identity_pointwise(chart, fs, 200, 4, 1e-4, 1e-6);
    EXPECT_LT(rep.max_residual(), 1e-4) << f.order();
  }
}

TEST(Estf, TraceFreeSaturates) {
  const auto chart = MetricChart<2>::euclidean();
  const auto f = SymmetricTensorField<2>::from_strings(2, {"1 + x1", "x2^2", "-(1 + x1)"});
  const auto rep = estf_check(chart, f);
  EXPECT_NEAR(rep.term("|grad_v f|^2"), 4.0 * rep.term("|f|^2"), 1e-6 * rep.term("|f|^2"));
  EXPECT_NEAR(rep.term("|grad_v f|^2"), rep.term("bound"), 1e-6 * rep.term("bound"));
  EXPECT_TRUE(rep.pass);
}

TEST(Estf, PureTraceHasNoVerticalGradient) {
  const auto chart = MetricChart<2>::euclidean();
  const auto rep = estf_check(chart, SymmetricTensorField<2>::constant(2, {1.0, 0.0, 1.0}));
  EXPECT_NEAR(rep.term("|grad_v f|^2"), 0.0, 1e-20);
  EXPECT_TRUE(rep.pass);
}

TEST(Estf, OrderOneInTwoDimensions) {
  const auto chart = MetricChart<2>::euclidean();
  const auto f = SymmetricTensorField<2>::from_strings(1, {"x1 + 2", "sin(x2)"});
  const auto rep = estf_check(chart, f);
  EXPECT_NEAR(rep.term("|grad_v f|^2"), rep.term("|f|^2"), 1e-10 * rep.term("|f|^2"));
}

TEST(Estf, RandomTensorsAllOrders) {
  std::mt19937_64 rng(16);
  for (const auto& chart : testing_charts::builtin<2>())
    for (int m = 0; m <= 4; ++m) {
      const auto rep = estf_check(chart, random_tensor<2>(rng, m), QuadratureSpec{6, 16, 4, 4});
      EXPECT_TRUE(rep.pass) << chart.name() << " m=" << m << " rel=" << rep.relative_residual;
    }
  for (const auto& chart : testing_charts::builtin<3>())
    for (int m = 0; m <= 4; ++m) {
      const auto rep = estf_check(chart, random_tensor<3>(rng, m), QuadratureSpec{3, 8, 6, 12});
      EXPECT_TRUE(rep.pass) << chart.name() << " m=" << m << " rel=" << rep.relative_residual;
    }
}

TEST(Jacobi, NeedsCertificate) {
  const auto chart = MetricChart<2>::euclidean();
  std::mt19937_64 rng(17);
  const auto z = random_section(chart, rng);
  EXPECT_THROW(jacobi_positivity(z, 1.0, std::nullopt), PreconditionError);
  auto cert = is_beta_conjugate_free(chart, 0.5, FanSpec{4, 4});
  EXPECT_THROW(jacobi_positivity(z, 1.0, cert), PreconditionError);
}

TEST(Jacobi, EuclideanPositive) {
  const auto chart = MetricChart<2>::euclidean();
  std::mt19937_64 rng(18);
  const auto cert = is_beta_conjugate_free(chart, 2.0, FanSpec{4, 4});
  const auto rep = jacobi_positivity(random_section(chart, rng), 2.0, cert);
  EXPECT_GT(rep.term("value"), 0.0);
  EXPECT_EQ(rep.term("(RZ, Z)"), 0.0);
  EXPECT_TRUE(rep.pass);
}

TEST(Jacobi, ZeroSection) {
  const auto chart = MetricChart<2>::sphere_cap(0.6);
  const auto cert = is_beta_conjugate_free(chart, 1.5, FanSpec{4, 4});
  const auto rep = jacobi_positivity(NSection<2>::zero(chart), 1.5, cert);
  EXPECT_EQ(rep.term("|XZ|^2"), 0.0);
  EXPECT_EQ(rep.term("(RZ, Z)"), 0.0);
  EXPECT_TRUE(rep.pass);
}

TEST(Jacobi, SphereCapRandomSections) {
  // Geodesic diameter 4 atan(0.6) ~ 2.16 is below pi / sqrt(1.5) ~ 2.57.
  const auto chart = MetricChart<2>::sphere_cap(0.6);
  const auto cert = is_beta_conjugate_free(chart, 1.5, FanSpec{16, 16});
  ASSERT_TRUE(cert.free);
  std::mt19937_64 rng(19);
  for (int t = 0; t < 20; ++t) {
    const auto rep = jacobi_positivity(random_section(chart, rng), 1.5, cert, QuadratureSpec{8, 16, 4, 4});
    EXPECT_GE(rep.term("value"), -1e-8);
    EXPECT_TRUE(rep.pass);
  }
}

TEST(Jacobi, NonCompactSectionRejected) {
  const auto chart = MetricChart<2>::euclidean();
  std::mt19937_64 rng(20);
  const auto cert = is_beta_conjugate_free(chart, 1.0, FanSpec{4, 4});
  EXPECT_THROW(jacobi_positivity(random_section(chart, rng, false), 1.0, cert), PreconditionError);
}

TEST(ThresholdMinimizer, Examples) {
  auto r = threshold_minimizer(2, 2);
  EXPECT_NEAR(r.gamma, 0.5, 1e-8);
  EXPECT_NEAR(r.beta, 1.5, 1e-8);
  r = threshold_minimizer(3, 2);
  EXPECT_NEAR(r.gamma, 1.0 / 3.0, 1e-8);
  EXPECT_NEAR(r.beta, 1.6, 1e-8);
  r = threshold_minimizer(2, 1);
  EXPECT_NEAR(r.beta, 1.0, 1e-12);
  EXPECT_NEAR(r.gamma, 1.0, 1e-8);
}

TEST(ThresholdMinimizer, ClosedFormsOnFullRange) {
  for (int d = 2; d <= 10; ++d)
    for (int m = 1; m <= 10; ++m) {
      const auto r = threshold_minimizer(d, m);
      EXPECT_NEAR(r.gamma, 1.0 / (m + d - 2), 1e-8) << d << " " << m;
      EXPECT_NEAR(r.beta, m * (m + d - 1.0) / (2.0 * m + d - 2), 1e-8) << d << " " << m;
      EXPECT_NEAR(r.beta, beta_thresholds(d, m).second, 1e-8);
    }
}

TEST(ThresholdMinimizer, NonPositiveDenominatorIsDomainError) {
  EXPECT_THROW(threshold_minimizer(2, 2, std::pair{0.0, 10.0}), DomainError);
  EXPECT_THROW(threshold_minimizer(1, 2), InputError);
}

TEST(GammaSplit, GammaZero) {
  std::mt19937_64 rng(21);
  const auto u = random_sm_function(testing_charts::builtin<2>()[2], rng);
  const auto rep = gamma_split_expansion(u, 0.0, QuadratureSpec{6, 16, 4, 4});
  EXPECT_EQ(rep.term("direct"), rep.term("|grad_h u|^2"));
  EXPECT_TRUE(rep.pass);
}

TEST(GammaSplit, ZeroFunction) {
  const auto rep = gamma_split_expansion(SMFunction<2>::constant(MetricChart<2>::euclidean(), 0.0), 0.5);
  EXPECT_EQ(rep.term("direct"), 0.0);
  EXPECT_TRUE(rep.pass);
}

TEST(GammaSplit, RandomExpansionAgrees) {
  std::mt19937_64 rng(22);
  for (const auto& chart : testing_charts::builtin<2>()) {
    const auto rep = gamma_split_expansion(random_sm_function(chart, rng, false), 0.5, QuadratureSpec{6, 16, 4, 4});
    EXPECT_LT(rep.relative_residual, 1e-10) << chart.name();
    EXPECT_GE(rep.term("direct"), 0.0);
  }
}

TEST(Commutators, ReportAndPrintedSign) {
  std::mt19937_64 rng(23);
  const auto chart = MetricChart<2>::sphere_cap(0.8);
  const auto u = random_sm_function(chart, rng, false);
  const auto z = random_section(chart, rng, false);
  const auto rep = commutator_residuals(u, z, 50, 5);
  EXPECT_TRUE(rep.pass) << rep.max_residual();
  EXPECT_EQ(rep.residuals.size(), 5u);
  EXPECT_GT(commutator_residuals(u, z, 50, 5, 1e-7, true).residuals[4].second, 1e-3);
}
