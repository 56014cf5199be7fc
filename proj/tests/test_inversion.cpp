#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "geotomo/inversion.hpp"

using namespace geotomo;

namespace {

const std::string kChi = "(1 - (x1^2 + x2^2))";

template <int Dim>
InversionProblem<Dim> problem_for(const MetricChart<Dim>& chart, const SymmetricTensorField<Dim>& f,
                                  FanSpec fan = {64, 64, 1e-3}) {
  return {.chart = chart, .data = compute_ray_data(chart, f, fan), .order = f.order()};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TEST(Inversion, ZeroDataGivesZero) {
  const auto chart = MetricChart<2>::euclidean();
  for (int m : {0, 1, 2}) {
    const auto res = reconstruct_solenoidal(problem_for(chart, SymmetricTensorField<2>::zero(m), {16, 16, 1e-3}));
    for (double c : res.coefficients) EXPECT_EQ(c, 0.0);
    EXPECT_EQ(l2_norm(chart, res.solenoidal), 0.0);
  }
}

TEST(Inversion, AdjointCheckPasses) {
  const auto chart = MetricChart<2>::euclidean();
  const auto f = SymmetricTensorField<2>::from_strings(1, {"x2", "-x1"});
  const auto res = reconstruct_solenoidal(problem_for(chart, f, {16, 16, 1e-3}));
  EXPECT_LT(res.dot_test, 1e-10);
  EXPECT_GT(res.alpha, 0.0);
  EXPECT_NEAR(res.alpha, 1e-3 * res.norm_estimate, 1e-15 * res.norm_estimate);
}

TEST(Inversion, ScalarBump) {
  const auto chart = MetricChart<2>::euclidean();
  const auto f = SymmetricTensorField<2>::from_strings(0, {"exp(-8*((x1 - 0.2)^2 + x2^2))"});
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = reconstruct_solenoidal(problem_for(chart, f));
  const double err = l2_norm(chart, res.solenoidal - f) / l2_norm(chart, f);
  std::cout << "m=0 error " << err << " iterations " << res.iterations << " time " << seconds_since(t0) << "\n";
  EXPECT_LT(err, 0.05);
}

TEST(Inversion, HistoryIsMonotone) {
  const auto chart = MetricChart<2>::euclidean();
  const auto f = SymmetricTensorField<2>::from_strings(1, {"x2*exp(x1)", "x1^2 - x2"});
  const auto res = reconstruct_solenoidal(problem_for(chart, f, {24, 24, 1e-3}));
  ASSERT_GT(res.history.size(), 2u);
  for (std::size_t k = 1; k < res.history.size(); ++k) EXPECT_LE(res.history[k], res.history[k - 1] * (1 + 1e-12));
}

TEST(Inversion, SolenoidalVectorField) {
  const auto chart = MetricChart<2>::euclidean();
  // curl of psi = chi^2 sin(x1 + 2 x2)
  const auto f = SymmetricTensorField<2>::from_strings(
      1, {"2*" + kChi + "^2*cos(x1 + 2*x2) - 4*x2*" + kChi + "*sin(x1 + 2*x2)",
          "-(" + kChi + "^2*cos(x1 + 2*x2) - 4*x1*" + kChi + "*sin(x1 + 2*x2))"});
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = reconstruct_solenoidal(problem_for(chart, f));
  const double err = l2_norm(chart, res.solenoidal - f) / l2_norm(chart, f);
  std::cout << "m=1 error " << err << " iterations " << res.iterations << " time " << seconds_since(t0) << "\n";
  EXPECT_LT(err, 0.10);
}

TEST(Inversion, OrderTwoMixSuppressesPotential) {
  const auto chart = MetricChart<2>::euclidean();
  const auto fs = SymmetricTensorField<2>::from_strings(2, {"6*exp(x1)*x2", "-3*exp(x1)*x2^2", "exp(x1)*x2^3"});
  const auto h = SymmetricTensorField<2>::from_strings(1, {kChi + "*(x1 - x2^2)", kChi + "*(0.5 + x1*x2)"});
  const auto ph = dsym(chart, h);
  auto t0 = std::chrono::steady_clock::now();
  const auto mix = reconstruct_solenoidal(problem_for(chart, fs + ph));
  const double err = l2_norm(chart, mix.solenoidal - fs) / l2_norm(chart, fs);
  std::cout << "m=2 error " << err << " iterations " << mix.iterations << " time " << seconds_since(t0) << "\n";
  EXPECT_LT(err, 0.10);
  t0 = std::chrono::steady_clock::now();
  const auto pot = reconstruct_solenoidal(problem_for(chart, ph));
  const double ratio = l2_norm(chart, pot.solenoidal) / l2_norm(chart, ph);
  std::cout << "m=2 potential ratio " << ratio << " iterations " << pot.iterations << " time " << seconds_since(t0)
            << "\n";
  EXPECT_LT(ratio, 0.10);
}

TEST(Inversion, RejectsMismatchedData) {
  const auto chart = MetricChart<2>::euclidean();
  auto prob = problem_for(chart, SymmetricTensorField<2>::from_strings(1, {"1", "0"}), {8, 8, 1e-3});
  prob.order = 2;
  EXPECT_THROW(reconstruct_solenoidal(prob), InputError);
  prob.order = 1;
  prob.chart = MetricChart<2>::euclidean(0.9);
  EXPECT_THROW(reconstruct_solenoidal(prob), InputError);
}

TEST(Inversion, StagnationIsSolverError) {
  const auto chart = MetricChart<2>::euclidean();
  auto prob = problem_for(chart, SymmetricTensorField<2>::from_strings(1, {"x2", "x1^2"}), {16, 16, 1e-3});
  prob.max_iterations = 3;
  prob.tolerance = 1e-14;
  try {
    reconstruct_solenoidal(prob);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.history().size(), 4u);
  }
}

TEST(Experiment, SmallRun) {
  const auto chart = MetricChart<2>::euclidean();
  ExperimentOptions opt;
  opt.fan = {32, 32, 1e-3};
  opt.nodes_per_axis = 17;
  const auto rep = sinjectivity_experiment(chart, 1, 2, 0.0, 11, opt);
  ASSERT_EQ(rep.trials.size(), 2u);
  EXPECT_TRUE(rep.conjugate_free);
  EXPECT_TRUE(rep.simple);
  std::cout << nlohmann::json(rep).dump() << "\n";
  EXPECT_LT(rep.median_solenoidal_error, 0.2);
  EXPECT_LT(rep.median_potential_ratio, 0.2);
  const auto again = sinjectivity_experiment(chart, 1, 2, 0.0, 11, opt);
  EXPECT_EQ(nlohmann::json(rep).dump(), nlohmann::json(again).dump());
}
