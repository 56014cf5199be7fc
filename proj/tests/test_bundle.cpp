#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "charts.hpp"
#include "geotomo/bundle.hpp"
#include "geotomo/geodesics.hpp"
#include "oracles.hpp"

using namespace geotomo;

namespace {

using V2 = Vec<double, 2>;
using V3 = Vec<double, 3>;

V2 angle(double t) { return V2{std::cos(t), std::sin(t)}; }

template <int D>
struct Sample {
  Vec<double, D> x, v;
};

template <int D>
Sample<D> random_sample(std::mt19937_64& rng, const MetricChart<D>& chart, double shrink = 0.9) {
  const auto x = oracle::random_point<D>(rng, shrink * chart.radius());
  return {x, oracle::random_unit<D>(rng, chart.metric(x))};
}

template <int D>
SMFunction<D> test_function(const MetricChart<D>& chart) {
  if constexpr (D == 2)
    return SMFunction<D>::from_string(chart, "sin(x1 + 2*v2) + x2*v1*v2 + exp(0.3*x1*v1) + v1^3");
  else
    return SMFunction<D>::from_string(chart, "sin(x1 + 2*v2 - x3) + x2*v1*v3 + exp(0.3*x1*v1) + v3^3*x2");
}

template <int D>
NSection<D> test_section(const MetricChart<D>& chart) {
  std::vector<Expression> w;
  if constexpr (D == 2) {
    w = {Expression::parse("cos(x2 + v1) + x1*v2", 2, true), Expression::parse("x1^2 - v1*v2 + 0.5", 2, true)};
  } else {
    w = {Expression::parse("cos(x2 + v1) + x1*v2", 3, true), Expression::parse("x1^2 - v1*v3 + 0.5", 3, true),
         Expression::parse("sin(x3*v2) + x2", 3, true)};
  }
  return NSection<D>::tangential_part(chart, w);
}

template <int D>
double max_abs(const Vec<double, D>& a) {
  double m = 0.0;
  for (double c : a) m = std::max(m, std::abs(c));
  return m;
}

template <int D>
void check_commutators(const MetricChart<D>& chart, int samples, std::uint64_t seed) {
  const auto u = test_function(chart);
  const auto z = test_section(chart);
  // [X, grad_v] = -grad_h
  const auto c1 = X(vgrad(u)) - vgrad(X(u)) + hgrad(u);
  // [X, grad_h] = R grad_v
  const auto c2 = X(hgrad(u)) - hgrad(X(u)) - curvature(vgrad(u));
  // div_h grad_v - div_v grad_h = (d - 1) X
  const auto c3 = hdiv(vgrad(u)) - vdiv(hgrad(u)) - static_cast<double>(D - 1) * X(u);
  // [X, div_v] = -div_h
  const auto c4 = X(vdiv(z)) - vdiv(X(z)) + hdiv(z);
  // [X, div_h] = div_v R. This is the sign forced by taking adjoints of
  // [X, grad_h] = R grad_v; the opposite sign fails on every curved metric.
  const auto c5 = X(hdiv(z)) - hdiv(X(z)) - vdiv(curvature(z));
  std::mt19937_64 rng(seed);
  double w1 = 0, w2 = 0, w3 = 0, w4 = 0, w5 = 0;
  for (int s = 0; s < samples; ++s) {
    const auto p = random_sample(rng, chart);
    w1 = std::max(w1, max_abs<D>(c1(p.x, p.v)));
    w2 = std::max(w2, max_abs<D>(c2(p.x, p.v)));
    w3 = std::max(w3, std::abs(c3(p.x, p.v)));
    w4 = std::max(w4, std::abs(c4(p.x, p.v)));
    w5 = std::max(w5, std::abs(c5(p.x, p.v)));
  }
  EXPECT_LT(w1, 1e-7) << chart.name();
  EXPECT_LT(w2, 1e-7) << chart.name();
  EXPECT_LT(w3, 1e-7) << chart.name();
  EXPECT_LT(w4, 1e-7) << chart.name();
  EXPECT_LT(w5, 1e-7) << chart.name();
}

}  // namespace

TEST(SMFunction, DegreeZeroExtension) {
  const auto chart = testing_charts::builtin<3>()[2];
  const auto u = test_function(chart);
  std::mt19937_64 rng(1);
  for (int s = 0; s < 50; ++s) {
    const auto p = random_sample(rng, chart);
    const double ref = u(p.x, p.v);
    for (double c : {0.1, 2.0, 37.0}) {
      V3 y{c * p.v[0], c * p.v[1], c * p.v[2]};
      EXPECT_NEAR(u.extended(p.x, y), ref, 1e-12);
    }
  }
}

TEST(SMFunction, ZeroDirectionRejected) {
  const auto u = SMFunction<2>::from_string(MetricChart<2>::euclidean(), "v1");
  EXPECT_THROW(u(V2{0.0, 0.0}, V2{0.0, 0.0}), InputError);
}

TEST(XScalar, BasePullbackIsDirectionalDerivative) {
  const auto chart = MetricChart<2>::euclidean();
  const auto u = SMFunction<2>::from_string(chart, "x1^2*x2 + sin(x2)");
  const auto xu = X(u);
  std::mt19937_64 rng(2);
  for (int s = 0; s < 20; ++s) {
    const auto p = random_sample(rng, chart);
    const double grad0 = 2 * p.x[0] * p.x[1], grad1 = p.x[0] * p.x[0] + std::cos(p.x[1]);
    EXPECT_NEAR(xu(p.x, p.v), p.v[0] * grad0 + p.v[1] * grad1, 1e-13);
  }
}

TEST(XScalar, ConstantsAreAnnihilated) {
  for (const auto& chart : testing_charts::builtin<2>()) {
    const auto xu = X(SMFunction<2>::constant(chart, 3.5));
    std::mt19937_64 rng(3);
    for (int s = 0; s < 10; ++s) {
      const auto p = random_sample(rng, chart);
      EXPECT_NEAR(xu(p.x, p.v), 0.0, 1e-14);
    }
  }
}

TEST(XScalar, TensorFunctionMatchesFlowDifference) {
  for (const auto& chart : testing_charts::builtin<3>()) {
    const auto f = SymmetricTensorField<3>::from_strings(2, {"x1 + 1", "x2*x3", "0.3", "sin(x1)", "x3^2", "x1*x2 - 0.5"});
    const auto u = SMFunction<3>::from_tensor(chart, f);
    const auto xu = X(u);
    std::mt19937_64 rng(4);
    for (int s = 0; s < 10; ++s) {
      const auto p = random_sample(rng, chart, 0.7);
      const double h = 1e-4;
      const auto a = flow(chart, PhasePoint<3>{p.x, p.v}, h, h);
      const auto b = flow(chart, PhasePoint<3>{p.x, p.v}, -h, h);
      const double ref = (f.on_sphere(a.x, a.v) - f.on_sphere(b.x, b.v)) / (2 * h);
      EXPECT_NEAR(xu(p.x, p.v), ref, 1e-6) << chart.name();
    }
  }
}

TEST(VGrad, BaseFunctionsHaveNoVerticalGradient) {
  const auto chart = testing_charts::builtin<2>()[2];
  const auto z = vgrad(SMFunction<2>::from_string(chart, "x1^3 + cos(x2)"));
  std::mt19937_64 rng(5);
  for (int s = 0; s < 10; ++s) {
    const auto p = random_sample(rng, chart);
    EXPECT_LT(max_abs<2>(z(p.x, p.v)), 1e-14);
  }
}

TEST(VGrad, CircleDerivative) {
  const auto chart = MetricChart<2>::euclidean();
  const auto z = vgrad(SMFunction<2>::from_string(chart, "v1"));
  for (double t = 0.0; t < 6.3; t += 0.3) {
    const auto w = z(V2{0.1, 0.2}, angle(t));
    EXPECT_NEAR(w[0], std::sin(t) * std::sin(t), 1e-14);
    EXPECT_NEAR(w[1], -std::sin(t) * std::cos(t), 1e-14);
    EXPECT_NEAR(w[0] * w[0] + w[1] * w[1], std::pow(std::sin(t), 2), 1e-14);
  }
}

TEST(VGrad, TangentToFibers) {
  for (const auto& chart : testing_charts::builtin<3>()) {
    const auto z = vgrad(test_function(chart));
    std::mt19937_64 rng(6);
    double worst = 0.0;
    for (int s = 0; s < 1000; ++s) {
      const auto p = random_sample(rng, chart);
      worst = std::max(worst, std::abs(inner(chart.metric(p.x), z(p.x, p.v), p.v)));
    }
    EXPECT_LT(worst, 1e-10) << chart.name();
  }
}

TEST(HGrad, ConstantsGiveZero) {
  const auto chart = testing_charts::builtin<2>()[3];
  const auto z = hgrad(SMFunction<2>::constant(chart, 2.0));
  std::mt19937_64 rng(1);
  const V2 x{0.2, 0.3};
  EXPECT_LT(max_abs<2>(z(x, oracle::random_unit<2>(rng, chart.metric(x)))), 1e-14);
}

TEST(HGrad, EuclideanProjectionOfGradient) {
  const auto chart = MetricChart<2>::euclidean();
  const auto z = hgrad(SMFunction<2>::from_string(chart, "x1^2*x2 + sin(x2)"));
  std::mt19937_64 rng(7);
  for (int s = 0; s < 20; ++s) {
    const auto p = random_sample(rng, chart);
    const V2 grad{2 * p.x[0] * p.x[1], p.x[0] * p.x[0] + std::cos(p.x[1])};
    const double dv = dot(grad, p.v);
    const auto w = z(p.x, p.v);
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(w[j], grad[j] - dv * p.v[j], 1e-13);
  }
}

TEST(HGrad, TangentToFibers) {
  for (const auto& chart : testing_charts::builtin<3>()) {
    const auto z = hgrad(test_function(chart));
    std::mt19937_64 rng(8);
    double worst = 0.0;
    for (int s = 0; s < 1000; ++s) {
      const auto p = random_sample(rng, chart);
      worst = std::max(worst, std::abs(inner(chart.metric(p.x), z(p.x, p.v), p.v)));
    }
    EXPECT_LT(worst, 1e-10) << chart.name();
  }
}

TEST(XSection, EuclideanRotatedDirectionIsParallel) {
  const auto chart = MetricChart<2>::euclidean();
  const auto z = X(NSection<2>::from_strings(chart, {"-v2", "v1"}));
  std::mt19937_64 rng(9);
  for (int s = 0; s < 10; ++s) {
    const auto p = random_sample(rng, chart);
    EXPECT_LT(max_abs<2>(z(p.x, p.v)), 1e-14);
  }
}

TEST(XSection, ZeroSectionStaysZero) {
  const auto chart = MetricChart<2>::euclidean();
  const auto z = X(vgrad(SMFunction<2>::from_string(chart, "x1*x2")));
  EXPECT_LT(max_abs<2>(z(V2{0.3, 0.1}, angle(0.4))), 1e-15);
}

TEST(XSection, MatchesCovariantFlowDifference) {
  for (const auto& chart : testing_charts::builtin<2>()) {
    const auto z = test_section(chart);
    const auto xz = X(z);
    std::mt19937_64 rng(10);
    for (int s = 0; s < 10; ++s) {
      const auto p = random_sample(rng, chart, 0.7);
      const double h = 1e-4;
      const auto a = flow(chart, PhasePoint<2>{p.x, p.v}, h, h);
      const auto b = flow(chart, PhasePoint<2>{p.x, p.v}, -h, h);
      const auto za = z(a.x, a.v), zb = z(b.x, b.v), z0 = z(p.x, p.v);
      const auto gam = oracle::christoffel<2>(oracle::metric_of(chart), p.x);
      const auto got = xz(p.x, p.v);
      for (int l = 0; l < 2; ++l) {
        double ref = (za[l] - zb[l]) / (2 * h);
        for (int j = 0; j < 2; ++j)
          for (int k = 0; k < 2; ++k) ref += gam[l][j][k] * p.v[j] * z0[k];
        EXPECT_NEAR(got[l], ref, 1e-6) << chart.name();
      }
    }
  }
}

TEST(XSection, NonTangentInputIsConsistencyError) {
  const auto chart = testing_charts::builtin<2>()[2];
  const auto z = X(NSection<2>::from_strings(chart, {"x1 + v1", "x2"}));
  EXPECT_THROW(z(V2{0.3, 0.1}, angle(0.4)), ConsistencyError);
}

TEST(Divergences, ZeroSection) {
  const auto chart = testing_charts::builtin<2>()[4];
  const auto z = NSection<2>::zero(chart);
  EXPECT_EQ(vdiv(z)(V2{0.1, 0.1}, angle(1.0)), 0.0);
  EXPECT_EQ(hdiv(z)(V2{0.1, 0.1}, angle(1.0)), 0.0);
}

TEST(Divergences, VerticalAdjointness) {
  for (const auto& chart : testing_charts::builtin<2>()) {
    const SMQuadrature<2> quad(chart, QuadratureSpec{12, 32, 4, 4});
    const auto u = test_function(chart);
    const auto z = test_section(chart);
    const double lhs = l2_inner_sections(quad, vgrad(u), z);
    const double rhs = -l2_inner_sm(quad, u, vdiv(z));
    EXPECT_NEAR(lhs, rhs, 1e-6 * std::abs(lhs)) << chart.name();
  }
}

TEST(Divergences, VerticalAdjointness3D) {
  const auto chart = testing_charts::builtin<3>()[2];
  const SMQuadrature<3> quad(chart, QuadratureSpec{4, 8, 12, 24});
  const auto u = test_function(chart);
  const auto z = test_section(chart);
  const double lhs = l2_inner_sections(quad, vgrad(u), z);
  const double rhs = -l2_inner_sm(quad, u, vdiv(z));
  EXPECT_NEAR(lhs, rhs, 1e-6 * std::abs(lhs));
}

TEST(Divergences, HorizontalAdjointnessWithVanishingBoundary) {
  for (const auto& chart : testing_charts::builtin<2>()) {
    const double r2 = chart.radius() * chart.radius();
    const auto bump = SMFunction<2>::from_string(chart, "(1 - (x1^2 + x2^2)/" + Expression::format_number(r2) + ")^6");
    const auto u = bump * test_function(chart);
    const auto z = test_section(chart);
    const SMQuadrature<2> quad(chart, QuadratureSpec{48, 32, 4, 4});
    const double lhs = l2_inner_sections(quad, hgrad(u), z);
    const double rhs = -l2_inner_sm(quad, u, hdiv(z));
    EXPECT_NEAR(lhs, rhs, 1e-6 * std::abs(lhs)) << chart.name();
  }
}

TEST(VerticalLaplacian, FiberHarmonicsAreEigenfunctions) {
  // cos(k theta) with v = e^{-lambda} (cos theta, sin theta): T_k(e^lambda v1).
  const std::string lam = "(0.3*x1 - 0.2*x2^2)";
  const auto chart = MetricChart<2>::conformal(1.0, Expression::parse(lam, 2));
  const std::string c = "(exp(" + lam + ")*v1)";
  const std::vector<std::pair<int, std::string>> harmonics{
      {1, c}, {2, "2*" + c + "^2 - 1"}, {3, "4*" + c + "^3 - 3*" + c}, {4, "8*" + c + "^4 - 8*" + c + "^2 + 1"}};
  std::mt19937_64 rng(11);
  for (const auto& [k, src] : harmonics) {
    const auto u = SMFunction<2>::from_string(chart, src);
    const auto lap = vertical_laplacian(u);
    for (int s = 0; s < 20; ++s) {
      const auto p = random_sample(rng, chart);
      EXPECT_NEAR(lap(p.x, p.v), k * k * u(p.x, p.v), 1e-10) << "k = " << k;
    }
  }
}

TEST(VerticalLaplacian, SphericalHarmonicsIn3D) {
  // Degree-k pieces of a tensor are eigenfunctions with eigenvalue k(k+1).
  const auto chart = testing_charts::builtin<3>()[3];
  const auto f = SymmetricTensorField<3>::from_strings(
      3, {"1", "x1", "0.2", "x2", "x3", "0.5", "x1*x2", "0.1", "-1", "2"});
  const auto pieces = degree_decompose(chart, f);
  std::mt19937_64 rng(12);
  for (const auto& piece : pieces) {
    const int k = piece.order();
    const auto u = SMFunction<3>::from_tensor(chart, piece);
    const auto lap = vertical_laplacian(u);
    for (int s = 0; s < 20; ++s) {
      const auto p = random_sample(rng, chart);
      EXPECT_NEAR(lap(p.x, p.v), k * (k + 1) * u(p.x, p.v), 1e-9);
    }
  }
}

TEST(VerticalLaplacian, BaseFunctionsAreHarmonic) {
  const auto chart = testing_charts::builtin<2>()[5];
  const auto lap = vertical_laplacian(SMFunction<2>::from_string(chart, "exp(x1)*x2"));
  EXPECT_NEAR(lap(V2{0.3, -0.2}, V2{0.6, 0.0}), 0.0, 1e-13);
}

TEST(VerticalLaplacian, TraceFreeQuadraticPiece) {
  const auto chart = testing_charts::builtin<2>()[2];
  const auto f = SymmetricTensorField<2>::from_strings(2, {"x1 + 2", "x2^2 - 0.4", "x1*x2 + 0.5"});
  const auto f2 = SMFunction<2>::from_tensor(chart, degree_decompose(chart, f)[0]);
  const auto residual = vertical_laplacian(f2) - 4.0 * f2;
  std::mt19937_64 rng(13);
  for (int s = 0; s < 50; ++s) {
    const auto p = random_sample(rng, chart);
    EXPECT_LT(std::abs(residual(p.x, p.v)), 1e-6);
  }
}

TEST(L2Inner, VolumeOfDiskBundle) {
  const auto chart = MetricChart<2>::euclidean();
  const SMQuadrature<2> quad(chart);
  const auto one = SMFunction<2>::constant(chart, 1.0);
  const double ref = 2 * std::numbers::pi * std::numbers::pi;
  EXPECT_NEAR(l2_inner_sm(quad, one, one), ref, 1e-4 * ref);
}

TEST(L2Inner, FiberOrthogonality) {
  const auto chart = MetricChart<2>::euclidean();
  const SMQuadrature<2> quad(chart);
  EXPECT_NEAR(l2_inner_sm(quad, SMFunction<2>::from_string(chart, "v1"), SMFunction<2>::from_string(chart, "v2")), 0.0,
              1e-10);
}

TEST(L2Inner, UnitSectionNorm) {
  const auto chart = testing_charts::builtin<2>()[2];
  const SMQuadrature<2> quad(chart, QuadratureSpec{16, 32, 4, 4});
  // For a conformal metric the coordinate rotation of v is g-unit and orthogonal to v.
  const auto z = NSection<2>::from_strings(chart, {"-v2", "v1"});
  const auto one = SMFunction<2>::constant(chart, 1.0);
  EXPECT_NEAR(l2_inner_sections(quad, z, z), l2_inner_sm(quad, one, one), 1e-12);
  EXPECT_LT(max_tangency_defect(quad, z), 1e-12);
}

TEST(L2Inner, FiberFrameIndependence) {
  const auto chart = testing_charts::builtin<2>()[2];
  const auto u = test_function(chart);
  const auto cells = base_cells<2>(1.0, 8);
  const SMQuadrature<2> a(chart, cells, circle_rule(64));
  const SMQuadrature<2> b(chart, cells, circle_rule(64, 0.21));
  const double ia = l2_inner_sm(a, u, u), ib = l2_inner_sm(b, u, u);
  EXPECT_NEAR(ia, ib, 1e-8 * ia);
}

TEST(Commutators, AllBuiltinMetrics2D) {
  std::uint64_t seed = 100;
  for (const auto& chart : testing_charts::builtin<2>()) check_commutators(chart, 500, seed++);
}

TEST(Commutators, AllBuiltinMetrics3D) {
  std::uint64_t seed = 200;
  for (const auto& chart : testing_charts::builtin<3>()) check_commutators(chart, 500, seed++);
}

TEST(Commutators, OutputsStayTangent) {
  const auto chart = testing_charts::builtin<3>()[2];
  const auto u = test_function(chart);
  const auto z = test_section(chart);
  const SMQuadrature<3> quad(chart, QuadratureSpec{3, 8, 4, 8});
  for (const auto& s : {vgrad(u), hgrad(u), X(z), curvature(z), X(vgrad(u)), X(hgrad(u))})
    EXPECT_LT(max_tangency_defect(quad, s), 1e-9);
}

TEST(Nesting, TooDeepThrows) {
  const auto chart = MetricChart<2>::euclidean();
  auto u = SMFunction<2>::from_string(chart, "x1*v1");
  for (int k = 0; k <= max_dual_depth; ++k) u = X(u);
  EXPECT_THROW(u(V2{0.1, 0.1}, angle(0.2)), Error);
}
