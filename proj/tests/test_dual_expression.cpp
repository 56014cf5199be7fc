#include <gtest/gtest.h>

#include <cmath>

#include "geotomo/dual.hpp"
#include "geotomo/expression.hpp"

using namespace geotomo;

TEST(Dual, ProductAndQuotientRules) {
  using D = Dual<double, 2>;
  const D x = make_variable<2>(1.5, 0);
  const D y = make_variable<2>(-0.5, 1);
  const D f = x * y / (x + 2.0);
  const double fx = (y.v * (x.v + 2.0) - x.v * y.v) / ((x.v + 2.0) * (x.v + 2.0));
  const double fy = x.v / (x.v + 2.0);
  EXPECT_NEAR(f.d[0], fx, 1e-15);
  EXPECT_NEAR(f.d[1], fy, 1e-15);
}

TEST(Dual, NestedGivesSecondDerivatives) {
  using D1 = Dual<double, 1>;
  using D2 = Dual<D1, 1>;
  const double x0 = 0.7;
  const D2 x = make_variable<1>(make_variable<1>(x0, 0), 0);
  const D2 f = sin(x) * exp(x);
  // f'' = 2 cos(x) e^x
  EXPECT_NEAR(f.d[0].d[0], 2.0 * std::cos(x0) * std::exp(x0), 1e-14);
  EXPECT_NEAR(f.v.d[0], (std::sin(x0) + std::cos(x0)) * std::exp(x0), 1e-14);
}

TEST(Dual, IntegerPowerOfNegativeBase) {
  using D = Dual<double, 1>;
  const D x = make_variable<1>(-2.0, 0);
  const D f = ipow(x, 3);
  EXPECT_DOUBLE_EQ(f.v, -8.0);
  EXPECT_DOUBLE_EQ(f.d[0], 12.0);
}

TEST(Expression, ParsesPrecedenceAndFunctions) {
  const auto e = Expression::parse("1 + 2*x1^2 - x2/4 + sin(x1)*exp(-x2)", 2);
  const Vec<double, 2> x{0.3, -1.1};
  const double expect = 1 + 2 * 0.09 + 1.1 / 4 + std::sin(0.3) * std::exp(1.1);
  EXPECT_NEAR(e(x), expect, 1e-14);
}

TEST(Expression, UnaryMinusBindsLooserThanPower) {
  const auto e = Expression::parse("-x1^2", 1);
  EXPECT_DOUBLE_EQ(e(Vec<double, 1>{3.0}), -9.0);
}

TEST(Expression, FiberVariablesOnlyWhenEnabled) {
  EXPECT_THROW(Expression::parse("v1", 2), ParseError);
  const auto e = Expression::parse("x1*v2", 2, true);
  EXPECT_TRUE(e.depends_on_fiber());
  EXPECT_DOUBLE_EQ(e(Vec<double, 2>{2.0, 0.0}, Vec<double, 2>{0.0, 3.0}), 6.0);
}

TEST(Expression, RejectsMalformedInput) {
  EXPECT_THROW(Expression::parse("x1 +", 2), ParseError);
  EXPECT_THROW(Expression::parse("x3", 2), ParseError);
  EXPECT_THROW(Expression::parse("tan(x1)", 2), ParseError);
  EXPECT_THROW(Expression::parse("(x1", 2), ParseError);
  try {
    Expression::parse("x1 $ 2", 2);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 3u);
  }
}

TEST(Expression, DerivativesThroughDuals) {
  const auto e = Expression::parse("x1^2*x2 + cos(x2)", 2);
  using D = Dual<double, 2>;
  const Vec<D, 2> x{make_variable<2>(0.5, 0), make_variable<2>(2.0, 1)};
  const D r = e(x);
  EXPECT_NEAR(r.d[0], 2 * 0.5 * 2.0, 1e-15);
  EXPECT_NEAR(r.d[1], 0.25 - std::sin(2.0), 1e-15);
}

TEST(Expression, ArithmeticComposition) {
  const auto a = Expression::parse("x1", 2);
  const auto b = Expression::parse("x2 - 1", 2);
  const auto c = -2.5 * (a * b) + a;
  const Vec<double, 2> x{2.0, 3.0};
  EXPECT_DOUBLE_EQ(c(x), -2.5 * 2.0 * 2.0 + 2.0);
}
