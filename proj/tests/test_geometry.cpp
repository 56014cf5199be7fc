#include <gtest/gtest.h>

#include <random>

#include "charts.hpp"
#include "geotomo/geometry.hpp"
#include "oracles.hpp"

using namespace geotomo;

namespace {
template <int Dim>
Vec<double, Dim> make_unit(const MetricChart<Dim>& chart, const Vec<double, Dim>& x) {
  Vec<double, Dim> v{};
  v[0] = 1.0 / std::sqrt(chart.metric(x)[0][0]);
  return v;
}
}  // namespace

TEST(Christoffel, EuclideanVanishes) {
  const auto chart = MetricChart<2>::euclidean(1.0, 3.0);
  const auto g = christoffel(chart, Vec<double, 2>{0.2, -0.4});
  for (const auto& m : g)
    for (const auto& row : m)
      for (double c : row) EXPECT_EQ(c, 0.0);
}

TEST(Christoffel, ConformalLinearLambda) {
  const auto chart = MetricChart<2>::conformal(1.0, Expression::parse("x1", 2));
  for (const Vec<double, 2> x : {Vec<double, 2>{0.0, 0.0}, Vec<double, 2>{0.3, -0.5}}) {
    const auto g = christoffel(chart, x);
    const auto ref = oracle::christoffel<2>(oracle::metric_of(chart), x);
    EXPECT_NEAR(g[0][0][0], 1.0, 1e-12);
    EXPECT_NEAR(g[0][1][1], -1.0, 1e-12);
    EXPECT_NEAR(g[1][0][1], 1.0, 1e-12);
    EXPECT_NEAR(g[1][1][0], 1.0, 1e-12);
    for (int l = 0; l < 2; ++l)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) EXPECT_NEAR(g[l][j][k], ref[l][j][k], 1e-8);
  }
}

TEST(Christoffel, SphereCapOriginVanishes) {
  const auto chart = MetricChart<3>::sphere_cap(1.0);
  const Vec<double, 3> x{};
  const auto g = christoffel(chart, x);
  const auto ref = oracle::christoffel<3>(oracle::metric_of(chart), x);
  for (int l = 0; l < 3; ++l)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) {
        EXPECT_NEAR(g[l][j][k], 0.0, 1e-14);
        EXPECT_NEAR(ref[l][j][k], 0.0, 1e-10);
      }
}

template <int Dim>
void check_against_oracle() {
  std::mt19937_64 rng(11);
  for (const auto& chart : testing_charts::builtin<Dim>()) {
    for (int s = 0; s < 20; ++s) {
      const auto x = oracle::random_point<Dim>(rng, 0.95 * chart.radius());
      const auto g = christoffel(chart, x);
      const auto ref = oracle::christoffel<Dim>(oracle::metric_of(chart), x);
      for (int l = 0; l < Dim; ++l)
        for (int j = 0; j < Dim; ++j)
          for (int k = 0; k < Dim; ++k) {
            EXPECT_NEAR(g[l][j][k], ref[l][j][k], 1e-7) << chart.name();
            EXPECT_EQ(g[l][j][k], g[l][k][j]);
          }
    }
  }
}

TEST(Christoffel, MatchesFiniteDifferenceOracle2D) { check_against_oracle<2>(); }
TEST(Christoffel, MatchesFiniteDifferenceOracle3D) { check_against_oracle<3>(); }

template <int Dim>
void modes_agree() {
  std::mt19937_64 rng(5);
  for (const auto& chart : testing_charts::builtin<Dim>()) {
    const auto fd = chart.with_derivative_mode(DerivativeMode::central_difference);
    for (int s = 0; s < 50; ++s) {
      const auto x = oracle::random_point<Dim>(rng, chart.radius());
      const auto a = christoffel(chart, x);
      const auto b = christoffel(fd, x);
      for (int l = 0; l < Dim; ++l)
        for (int j = 0; j < Dim; ++j)
          for (int k = 0; k < Dim; ++k) EXPECT_NEAR(a[l][j][k], b[l][j][k], 1e-6) << chart.name();
    }
  }
}

TEST(Christoffel, AlgorithmicAndCentralDifferenceAgree2D) { modes_agree<2>(); }
TEST(Christoffel, AlgorithmicAndCentralDifferenceAgree3D) { modes_agree<3>(); }

TEST(Christoffel, Errors) {
  const auto chart = MetricChart<2>::euclidean();
  EXPECT_THROW(christoffel(chart, Vec<double, 2>{1.0, 0.1}), DomainError);
  const auto bad = MetricChart<2>::conformal(1.0, Expression::parse("(x1 - 2)^0.5", 2));
  EXPECT_THROW(christoffel(bad, Vec<double, 2>{0.0, 0.0}), GeometryError);
}

TEST(MetricChart, RejectsInvalidParameters) {
  EXPECT_THROW(MetricChart<2>::euclidean(0.0), InputError);
  EXPECT_THROW(MetricChart<2>::hyperbolic(1.0, 1.0), InputError);
  EXPECT_THROW(MetricChart<2>::anisotropic(1.0, -1.5), InputError);
  EXPECT_THROW(MetricChart<2>(MetricFamily::conformal, 1.0), InputError);
  EXPECT_THROW(metric_family_from_string("torus"), InputError);
}

template <int Dim>
void inverse_and_spd() {
  std::mt19937_64 rng(3);
  for (const auto& chart : testing_charts::builtin<Dim>()) {
    for (int s = 0; s < 50; ++s) {
      const auto x = oracle::random_point<Dim>(rng, chart.radius());
      const auto g = chart.metric(x);
      const auto gi = inverse(g);
      const auto id = mul(gi, g);
      Mat<double, Dim> lower;
      EXPECT_TRUE(cholesky(g, lower));
      for (int i = 0; i < Dim; ++i)
        for (int j = 0; j < Dim; ++j) {
          EXPECT_NEAR(id[i][j], i == j ? 1.0 : 0.0, 1e-12);
          EXPECT_EQ(g[i][j], g[j][i]);
        }
    }
  }
}

TEST(MetricChart, SymmetricPositiveDefiniteWithExactInverse2D) { inverse_and_spd<2>(); }
TEST(MetricChart, SymmetricPositiveDefiniteWithExactInverse3D) { inverse_and_spd<3>(); }

TEST(CurvatureOperator, FlatMetricsGiveZero) {
  std::mt19937_64 rng(1);
  for (const auto& chart : {MetricChart<3>::euclidean(), MetricChart<3>::euclidean(1.0, 0.25)}) {
    const auto x = oracle::random_point<3>(rng, 1.0);
    const auto v = oracle::random_unit<3>(rng, chart.metric(x));
    const auto op = curvature_operator(chart, x, v);
    for (const auto& row : op.matrix)
      for (double c : row) EXPECT_EQ(c, 0.0);
  }
}

template <int Dim>
void sphere_cap_identity() {
  std::mt19937_64 rng(17);
  const auto chart = MetricChart<Dim>::sphere_cap(1.0);
  for (int s = 0; s < 100; ++s) {
    const auto x = oracle::random_point<Dim>(rng, 1.0);
    const auto v = oracle::random_unit<Dim>(rng, chart.metric(x));
    const auto op = curvature_operator(chart, x, v);
    double worst = 0.0;
    for (int a = 0; a < Dim - 1; ++a)
      for (int b = 0; b < Dim - 1; ++b) worst = std::max(worst, std::abs(op.matrix[a][b] - (a == b ? 1.0 : 0.0)));
    EXPECT_LT(worst, 1e-6);
    if (s < 10) {
      // Brute-force oracle on the first frame vector.
      const auto w = op.frame[0];
      const auto rw = oracle::curvature_apply<Dim>(oracle::metric_of(chart), x, w, v);
      for (int i = 0; i < Dim; ++i) EXPECT_NEAR(rw[i], w[i], 1e-5);
    }
  }
}

TEST(CurvatureOperator, SphereCapIsIdentity2D) { sphere_cap_identity<2>(); }
TEST(CurvatureOperator, SphereCapIsIdentity3D) { sphere_cap_identity<3>(); }

template <int Dim>
void self_adjoint_and_oracle() {
  std::mt19937_64 rng(23);
  for (const auto& chart : testing_charts::builtin<Dim>()) {
    for (int s = 0; s < 100; ++s) {
      const auto x = oracle::random_point<Dim>(rng, chart.radius());
      const auto g = chart.metric(x);
      const auto v = oracle::random_unit<Dim>(rng, g);
      const auto op = curvature_operator(chart, x, v);
      for (int a = 0; a < Dim - 1; ++a) {
        EXPECT_NEAR(inner(g, op.frame[a], v), 0.0, 1e-12);
        for (int b = 0; b < Dim - 1; ++b) {
          EXPECT_NEAR(inner(g, op.frame[a], op.frame[b]), a == b ? 1.0 : 0.0, 1e-12);
          EXPECT_NEAR(op.matrix[a][b], op.matrix[b][a], 1e-9) << chart.name();
        }
      }
      if (s < 5) {
        const auto w = op.frame[Dim - 2];
        const auto rw = oracle::curvature_apply<Dim>(oracle::metric_of(chart), x, w, v);
        const auto m = curvature_matrix(chart, x, v);
        const auto mine = mul(m, w);
        for (int i = 0; i < Dim; ++i) EXPECT_NEAR(mine[i], rw[i], 1e-5) << chart.name();
      }
    }
  }
}

TEST(CurvatureOperator, SelfAdjointAndMatchesOracle2D) { self_adjoint_and_oracle<2>(); }
TEST(CurvatureOperator, SelfAdjointAndMatchesOracle3D) { self_adjoint_and_oracle<3>(); }

TEST(CurvatureOperator, ConformalTwoDimensionalGaussCurvature) {
  // For g = e^{2 lambda} delta in 2D, K = -e^{-2 lambda} Laplacian(lambda).
  const auto chart = MetricChart<2>::conformal(1.0, Expression::parse("0.5*x1^2 + 0.25*x2^2", 2));
  const Vec<double, 2> x{0.3, -0.2};
  const double lam = 0.5 * 0.09 + 0.25 * 0.04;
  const double k = -std::exp(-2.0 * lam) * (1.0 + 0.5);
  const auto v = make_unit(chart, x);
  const auto op = curvature_operator(chart, x, v);
  EXPECT_NEAR(op.matrix[0][0], k, 1e-12);
}

TEST(CurvatureOperator, RejectsNonUnitVector) {
  const auto chart = MetricChart<2>::sphere_cap(1.0);
  EXPECT_THROW(curvature_operator(chart, Vec<double, 2>{0.0, 0.0}, Vec<double, 2>{1.0, 0.0}), NormalizationError);
}

TEST(CurvatureOperator, CentralDifferenceModeAgrees) {
  const auto chart = MetricChart<2>::hyperbolic(0.8);
  const auto fd = chart.with_derivative_mode(DerivativeMode::central_difference);
  const Vec<double, 2> x{0.1, 0.4};
  const auto v = make_unit(chart, x);
  EXPECT_NEAR(curvature_operator(chart, x, v).matrix[0][0], -1.0, 1e-10);
  EXPECT_NEAR(curvature_operator(fd, x, v).matrix[0][0], -1.0, 1e-4);
}
