#pragma once

// Reconstruction of the solenoidal part of a tensor field from ray data:
// regularized least squares on a node grid, then a Helmholtz projection.

#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "geotomo/errors.hpp"
#include "geotomo/geodesics.hpp"
#include "geotomo/helmholtz.hpp"
#include "geotomo/solvers.hpp"
#include "geotomo/xray.hpp"
#include "json.hpp"

namespace geotomo {

template <int Dim>
struct InversionProblem {
  MetricChart<Dim> chart;
  RayDataSet<Dim> data;
  int order = 0;
  int nodes_per_axis = 33;
  double alpha = -1.0;        // < 0: 1e-3 times the power-iteration estimate of |A|^2
  double operator_dt = 0.0;   // 0: 4 times the data dt
  int max_iterations = 3000;
  double tolerance = 1e-7;    // normal-equation residual relative to |A| |d|
  double data_floor = 1e-12;  // RMS data level treated as zero
  HelmholtzOptions helmholtz{};
};

template <int Dim>
struct InversionResult {
  NodeGrid<Dim> grid;
  std::vector<double> coefficients;    // grid solution before projection
  SymmetricTensorField<Dim> raw;       // grid field of the coefficients
  SymmetricTensorField<Dim> solenoidal;
  std::vector<double> history;         // normal-equation residual per iteration
  double alpha = 0.0;
  double norm_estimate = 0.0;          // |A|^2
  double dot_test = 0.0;               // relative adjoint mismatch
  int iterations = 0;
};

namespace detail {

/// Discrete divergence of grid fields of the given order, weighted so that
/// |D c|^2 approximates |delta f|^2 in L^2(M). Rows at Cartesian cell centres
/// inside the ball, one cell per grid spacing.
template <int Dim>
Eigen::SparseMatrix<double, Eigen::RowMajor> grid_divergence(const MetricChart<Dim>& chart, const NodeGrid<Dim>& grid,
                                                             int order) {
  const auto cells = base_cells<Dim>(chart.radius(), std::max(1, (grid.nodes_per_axis() - 1) / 2));
  const int nc = component_count(Dim, order);
  const int count = component_count(Dim, order - 1);
  const std::size_t nn = grid.node_count();
  constexpr int corners = 1 << Dim;
  std::vector<std::vector<Eigen::Triplet<double>>> parts(cells.size());
  parallel_for(cells.size(), [&](std::size_t q) {
    using D = Dual<double, Dim>;
    const auto& x = cells[q].x;
    const auto jet = metric_jet(chart, x);
    const auto gamma = christoffel_from(jet.ginv, jet.dg);
    const auto g = chart.metric(x);
    const double w = std::sqrt(cells[q].volume * std::sqrt(determinant(g)));
    const auto coords = orthonormal_coordinates(order - 1, fiber_frame(g));
    Vec<D, Dim> xd;
    for (int i = 0; i < Dim; ++i) xd[i] = make_variable<Dim>(x[i], i);
    std::array<std::size_t, corners> ids;
    std::array<D, corners> weights;
    grid.stencil(xd, ids, weights);
    std::vector<D> f(nc);
    std::vector<double> out;
    Eigen::MatrixXd raw(count, nc * corners);
    for (int c = 0; c < nc; ++c)
      for (int k = 0; k < corners; ++k) {
        for (auto& e : f) e = D(0.0);
        f[c] = weights[k];
        divergence_components(order - 1, f, jet.ginv, gamma, out);
        for (int i = 0; i < count; ++i) raw(i, c * corners + k) = out[i];
      }
    const Eigen::MatrixXd rows = w * (coords * raw);
    for (int i = 0; i < count; ++i)
      for (int c = 0; c < nc; ++c)
        for (int k = 0; k < corners; ++k)
          if (rows(i, c * corners + k) != 0.0)
            parts[q].emplace_back(static_cast<int>(q * count + i), static_cast<int>(c * nn + ids[k]),
                                  rows(i, c * corners + k));
  });
  std::vector<Eigen::Triplet<double>> all;
  for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
  Eigen::SparseMatrix<double, Eigen::RowMajor> d(static_cast<Eigen::Index>(cells.size() * count),
                                                 static_cast<Eigen::Index>(nc * nn));
  d.setFromTriplets(all.begin(), all.end());
  return d;
}

/// Scaled identity on nodes whose cells meet the ball (order 0 regularizer).
template <int Dim>
Eigen::SparseMatrix<double, Eigen::RowMajor> grid_identity(const NodeGrid<Dim>& grid, int order) {
  const auto n = static_cast<Eigen::Index>(grid.node_count() * component_count(Dim, order));
  Eigen::SparseMatrix<double, Eigen::RowMajor> id(n, n);
  id.setIdentity();
  return id * std::pow(grid.spacing(), Dim / 2.0);
}

}  // namespace detail

template <int Dim>
InversionResult<Dim> reconstruct_solenoidal(const InversionProblem<Dim>& problem) {
  const auto& chart = problem.chart;
  const auto& meta = problem.data.meta;
  if (meta.metric != chart.name() || meta.dim != Dim || meta.radius != chart.radius() || meta.params != chart.params())
    throw InputError("ray data was computed on a different chart");
  if (meta.order != problem.order) throw InputError("ray data order does not match the problem order");
  validate_influx(chart, problem.data);
  InversionResult<Dim> res;
  res.grid = NodeGrid<Dim>(chart.radius(), problem.nodes_per_axis);
  std::vector<PhasePoint<Dim>> rays;
  rays.reserve(problem.data.records.size());
  for (const auto& r : problem.data.records) rays.push_back({r.x, r.v});
  const double dt = problem.operator_dt > 0.0 ? problem.operator_dt : 4.0 * resolve_dt(chart.radius(), meta.dt);
  const GridRayTransform<Dim> op(chart, res.grid, problem.order, rays, dt);
  const auto& a = op.matrix();
  const auto reg = problem.order == 0 ? detail::grid_identity(res.grid, 0)
                                      : detail::grid_divergence(chart, res.grid, problem.order);
  const auto n = static_cast<Eigen::Index>(op.cols());

  // Adjoint check on random vectors before solving.
  {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd f(n), d(a.rows());
    for (auto& c : f) c = normal(rng);
    for (auto& c : d) c = normal(rng);
    const double lhs = op.forward(f).dot(d), rhs = f.dot(op.backproject(d));
    res.dot_test = std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-300);
    if (res.dot_test > 1e-10) throw ConsistencyError("backprojection is not the adjoint of the forward map");
  }

  const LinearMap fwd = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return a * x; };
  const LinearMap adj = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd { return a.transpose() * y; };
  res.norm_estimate = operator_norm2(fwd, adj, n, 20);
  res.alpha = problem.alpha >= 0.0 ? problem.alpha : 1e-3 * res.norm_estimate;
  const double alpha = res.alpha;
  const LinearMap normal = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    const Eigen::VectorXd rx = reg * x;
    return a.transpose() * (a * x) + alpha * (reg.transpose() * rx);
  };
  const auto vals = problem.data.values();
  const Eigen::VectorXd rhs = a.transpose() * Eigen::Map<const Eigen::VectorXd>(vals.data(), a.rows());
  // Scale-aware stop: data that is nearly invisible (a potential field) has a
  // tiny right-hand side, and a purely relative test would chase rounding.
  const double anorm = std::sqrt(res.norm_estimate);
  const double dnorm = Eigen::Map<const Eigen::VectorXd>(vals.data(), a.rows()).norm();
  const double target =
      std::max(problem.tolerance * anorm * dnorm, problem.data_floor * anorm * std::sqrt(static_cast<double>(a.rows())));
  const double rel = rhs.norm() > 0.0 ? std::max(problem.tolerance, target / rhs.norm()) : 1.0;
  const auto sol = conjugate_residual(normal, rhs, {rel, problem.max_iterations, true});
  res.history = sol.history;
  res.iterations = sol.iterations;
  res.coefficients.assign(sol.x.data(), sol.x.data() + sol.x.size());
  res.raw = grid_field(res.grid, problem.order, res.coefficients);
  res.solenoidal = problem.order == 0 ? res.raw : helmholtz_decompose(chart, res.raw, problem.helmholtz).solenoidal;
  return res;
}

// ---------------------------------------------------------------------------
// Round-trip experiment.

struct TrialRecord {
  double solenoidal_error = 0.0;  // |f_hat - f^s| / |f^s|
  double potential_ratio = 0.0;   // |f_hat(d^s h data)| / |d^s h|; 0 for m = 0
  int iterations = 0;
};

struct ExperimentReport {
  int order = 0;
  double noise = 0.0;
  std::vector<TrialRecord> trials;
  double median_solenoidal_error = 0.0;
  double median_potential_ratio = 0.0;
  double beta = 0.0;
  bool conjugate_free = false;
  bool simple = false;
};

inline void to_json(nlohmann::json& j, const ExperimentReport& r) {
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : r.trials)
    trials.push_back(
        {{"solenoidal_error", t.solenoidal_error}, {"potential_ratio", t.potential_ratio}, {"iterations", t.iterations}});
  j = {{"order", r.order},
       {"noise", r.noise},
       {"trials", trials},
       {"median_solenoidal_error", r.median_solenoidal_error},
       {"median_potential_ratio", r.median_potential_ratio},
       {"certificate", {{"beta", r.beta}, {"conjugate_free", r.conjugate_free}, {"simple", r.simple}}}};
}

struct ExperimentOptions {
  FanSpec fan{64, 64, 1e-3};
  int nodes_per_axis = 33;
  double data_dt = 0.0;
  FanSpec certificate_fan{16, 16, 1e-3};
};

namespace detail {

inline double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t k = xs.size() / 2;
  return xs.size() % 2 ? xs[k] : 0.5 * (xs[k - 1] + xs[k]);
}

template <int Dim>
std::string random_smooth(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto num = [&] { return Expression::format_number(u(rng)); };
  std::string lin = num();
  for (int i = 1; i <= Dim; ++i) lin += " + " + num() + "*x" + std::to_string(i);
  std::string s = num() + " + " + num() + "*sin(" + lin + ")";
  s += " + " + num() + "*x1*x2";
  return s;
}

template <int Dim>
void add_noise(RayDataSet<Dim>& data, double level, std::mt19937_64& rng) {
  if (level <= 0.0 || data.records.empty()) return;
  double rms = 0.0;
  for (const auto& r : data.records) rms += r.value * r.value;
  rms = std::sqrt(rms / static_cast<double>(data.records.size()));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& r : data.records) r.value += level * rms * normal(rng);
}

}  // namespace detail

/// Random fields from the expression grammar: each trial reconstructs
/// f = (random tensor) and, separately, a pure potential d^s h.
template <int Dim>
ExperimentReport sinjectivity_experiment(const MetricChart<Dim>& chart, int order, int trials, double noise,
                                         std::uint64_t seed, const ExperimentOptions& opt = {}) {
  if (trials < 1) throw InputError("need at least one trial");
  ExperimentReport rep;
  rep.order = order;
  rep.noise = noise;
  rep.beta = order >= 1 ? beta_thresholds(Dim, order).second : 0.0;
  rep.conjugate_free = is_beta_conjugate_free(chart, rep.beta, opt.certificate_fan).free;
  rep.simple = simplicity_probe(chart, opt.certificate_fan).pass();
  std::mt19937_64 rng(seed);
  const std::string r2 = Expression::format_number(chart.radius() * chart.radius());
  const std::string chi = "(1 - (x1^2 + x2^2" + std::string(Dim == 3 ? " + x3^2" : "") + ")/" + r2 + ")";
  std::vector<double> sol_err, pot_ratio;
  for (int t = 0; t < trials; ++t) {
    std::vector<std::string> comps;
    for (int c = 0; c < component_count(Dim, order); ++c) comps.push_back(detail::random_smooth<Dim>(rng));
    const auto f = SymmetricTensorField<Dim>::from_strings(order, comps);
    const auto truth = order == 0 ? f : helmholtz_decompose(chart, f).solenoidal;
    InversionProblem<Dim> prob{.chart = chart,
                               .data = compute_ray_data(chart, f, opt.fan, opt.data_dt),
                               .order = order,
                               .nodes_per_axis = opt.nodes_per_axis};
    detail::add_noise(prob.data, noise, rng);
    const auto res = reconstruct_solenoidal(prob);
    TrialRecord rec;
    rec.iterations = res.iterations;
    rec.solenoidal_error = l2_norm(chart, res.solenoidal - truth) / l2_norm(chart, truth);
    if (order >= 1) {
      std::vector<std::string> hc;
      for (int c = 0; c < component_count(Dim, order - 1); ++c)
        hc.push_back(chi + "*(" + detail::random_smooth<Dim>(rng) + ")");
      const auto ph = dsym(chart, SymmetricTensorField<Dim>::from_strings(order - 1, hc));
      InversionProblem<Dim> pp{.chart = chart,
                               .data = compute_ray_data(chart, ph, opt.fan, opt.data_dt),
                               .order = order,
                               .nodes_per_axis = opt.nodes_per_axis};
      detail::add_noise(pp.data, noise, rng);
      rec.potential_ratio = l2_norm(chart, reconstruct_solenoidal(pp).solenoidal) / l2_norm(chart, ph);
    }
    sol_err.push_back(rec.solenoidal_error);
    pot_ratio.push_back(rec.potential_ratio);
    rep.trials.push_back(rec);
  }
  rep.median_solenoidal_error = detail::median(sol_err);
  rep.median_potential_ratio = detail::median(pot_ratio);
  return rep;
}

}  // namespace geotomo
