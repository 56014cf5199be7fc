#pragma once

// Splitting f = f^s + d^s p with p = 0 on the boundary, by least squares over
// a finite space of potentials. Default space: Chebyshev polynomials times the
// boundary factor chi; alternative: chi times a multilinear grid field.

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <cmath>
#include <vector>

#include "geotomo/errors.hpp"
#include "geotomo/geometry.hpp"
#include "geotomo/grid.hpp"
#include "geotomo/parallel.hpp"
#include "geotomo/quadrature.hpp"
#include "geotomo/solvers.hpp"
#include "geotomo/symmetric.hpp"
#include "geotomo/tensorfield.hpp"

namespace geotomo {

/// Matrix taking symmetric storage of an order-m tensor to coordinates in a
/// g-orthonormal frame, scaled so that the Euclidean norm of the image is
/// the g-norm |T|_g. `frame` holds the frame vectors as columns.
template <int Dim>
Eigen::MatrixXd orthonormal_coordinates(int order, const Mat<double, Dim>& frame) {
  const auto& set = multi_indices(Dim, order);
  const int n = set.size();
  Eigen::MatrixXd m(n, n);
  std::vector<double> unit(n, 0.0);
  for (int k = 0; k < n; ++k) {
    unit.assign(n, 0.0);
    unit[k] = 1.0;
    const auto t = tensor_from_poly(substitute(poly_from_tensor(unit, Dim, order), frame));
    for (int i = 0; i < n; ++i) m(i, k) = std::sqrt(set.multiplicity(i)) * t[i];
  }
  return m;
}

/// Pointwise |f|_g^2 summed against the given base nodes (volume weights,
/// sqrt(det g) applied here).
template <int Dim>
double l2_norm2_base(const MetricChart<Dim>& chart, const SymmetricTensorField<Dim>& f,
                     const std::vector<BaseNode<Dim>>& nodes) {
  std::vector<double> part(nodes.size());
  parallel_for(nodes.size(), [&](std::size_t q) {
    const auto g = chart.metric(nodes[q].x);
    const auto coords = orthonormal_coordinates(f.order(), fiber_frame(g));
    const auto c = f.components(nodes[q].x);
    const Eigen::VectorXd t = coords * Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
    part[q] = nodes[q].volume * std::sqrt(determinant(g)) * t.squaredNorm();
  });
  return SMQuadrature<Dim>::ordered_sum(part);
}

/// L^2(M) norm of a tensor field on the default Cartesian cells.
template <int Dim>
double l2_norm(const MetricChart<Dim>& chart, const SymmetricTensorField<Dim>& f, int cells_per_radius = 32) {
  return std::sqrt(l2_norm2_base(chart, f, base_cells<Dim>(chart.radius(), cells_per_radius)));
}

struct HelmholtzOptions {
  int degree = -1;  // polynomial degree of p / chi; -1 picks 10 (d = 2) or 6 (d = 3)
  int radial = 0;   // quadrature counts; 0 derives them from the degree
  int angular = 0;
};

template <int Dim>
struct HelmholtzResult {
  SymmetricTensorField<Dim> solenoidal;
  SymmetricTensorField<Dim> potential;   // p, order m - 1
  SymmetricTensorField<Dim> gradient;    // d^s p
  double field_norm = 0.0;               // |f|
  double solenoidal_norm = 0.0;          // |f^s|
  double divergence_norm = 0.0;          // |delta f^s|
};

namespace detail {

/// Rows of d^s applied to every basis potential at x, in orthonormal
/// coordinates: out(i, c * nb + b) for potential component c, basis b.
template <int Dim>
Eigen::MatrixXd dsym_rows(const MetricChart<Dim>& chart, int order, const std::vector<Dual<double, Dim>>& basis,
                          const Vec<double, Dim>& x, const Eigen::MatrixXd& coords) {
  using D = Dual<double, Dim>;
  const int nb = static_cast<int>(basis.size());
  const int nc = component_count(Dim, order - 1);
  const int count = component_count(Dim, order);
  const auto gamma = christoffel_symbols(chart, x);
  Eigen::MatrixXd raw(count, nb * nc);
  std::vector<D> h(nc);
  std::vector<double> out;
  for (int c = 0; c < nc; ++c)
    for (int b = 0; b < nb; ++b) {
      for (auto& e : h) e = D(0.0);
      h[c] = basis[b];
      dsym_components(order, h, gamma, out);
      for (int i = 0; i < count; ++i) raw(i, c * nb + b) = out[i];
    }
  return coords * raw;
}

template <int Dim>
HelmholtzResult<Dim> finish_decomposition(const MetricChart<Dim>& chart, const SymmetricTensorField<Dim>& f,
                                          SymmetricTensorField<Dim> p, const std::vector<BaseNode<Dim>>& nodes) {
  HelmholtzResult<Dim> res;
  res.potential = std::move(p);
  res.gradient = dsym(chart, res.potential);
  res.solenoidal = f - res.gradient;
  res.field_norm = std::sqrt(l2_norm2_base(chart, f, nodes));
  res.solenoidal_norm = std::sqrt(l2_norm2_base(chart, res.solenoidal, nodes));
  res.divergence_norm = std::sqrt(l2_norm2_base(chart, divergence(chart, res.solenoidal), nodes));
  return res;
}

}  // namespace detail

/// Polynomial least squares: p = chi * (Chebyshev polynomial), solved densely.
/// Polar Gauss quadrature makes the projection exact for polynomial data on
/// the flat metric.
template <int Dim>
HelmholtzResult<Dim> helmholtz_decompose(const MetricChart<Dim>& chart, const SymmetricTensorField<Dim>& f,
                                         HelmholtzOptions opt = {}) {
  const int m = f.order();
  if (m < 1) throw InputError("Helmholtz decomposition needs order >= 1");
  if (opt.degree < 0) opt.degree = Dim == 2 ? 10 : 6;
  if (opt.radial <= 0) opt.radial = opt.degree + m + 3;
  if (opt.angular <= 0) opt.angular = 2 * (opt.degree + m) + 4;
  const ChebyshevBasis<Dim> basis(chart.radius(), opt.degree, true);
  const auto nodes = polar_cells<Dim>(chart.radius(), opt.radial, opt.angular);
  const int nb = basis.size();
  const int nc = component_count(Dim, m - 1);
  const int count = component_count(Dim, m);
  const auto rows = static_cast<Eigen::Index>(nodes.size()) * count;
  Eigen::MatrixXd a(rows, nb * nc);
  Eigen::VectorXd rhs(rows);
  parallel_for(nodes.size(), [&](std::size_t q) {
    using D = Dual<double, Dim>;
    const auto& x = nodes[q].x;
    const auto g = chart.metric(x);
    const double w = std::sqrt(nodes[q].volume * std::sqrt(determinant(g)));
    const auto coords = orthonormal_coordinates(m, fiber_frame(g));
    Vec<D, Dim> xd;
    for (int i = 0; i < Dim; ++i) xd[i] = make_variable<Dim>(x[i], i);
    std::vector<D> bv;
    basis.evaluate(xd, bv);
    const auto block = detail::dsym_rows(chart, m, bv, x, coords);
    const auto fc = f.components(x);
    const Eigen::VectorXd ft = coords * Eigen::Map<const Eigen::VectorXd>(fc.data(), count);
    const auto r0 = static_cast<Eigen::Index>(q) * count;
    a.middleRows(r0, count) = w * block;
    rhs.segment(r0, count) = w * ft;
  });
  const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(rhs);
  std::vector<double> c(coef.data(), coef.data() + coef.size());
  return detail::finish_decomposition(chart, f, polynomial_field(basis, m - 1, std::move(c)), nodes);
}

/// Grid variant: p = chi * (multilinear field on an n^d node grid), CGLS on
/// the least-squares system over Cartesian cells. Throws SolverError when
/// CGLS does not reach the tolerance.
template <int Dim>
HelmholtzResult<Dim> helmholtz_decompose_grid(const MetricChart<Dim>& chart, const SymmetricTensorField<Dim>& f,
                                              int nodes_per_axis = 33, SolveOptions opt = {1e-8, 10000, true}) {
  const int m = f.order();
  if (m < 1) throw InputError("Helmholtz decomposition needs order >= 1");
  const double r = chart.radius();
  const NodeGrid<Dim> grid(r, nodes_per_axis);
  const auto cells = base_cells<Dim>(r, std::max(1, (nodes_per_axis - 1) / 2));
  const int nc = component_count(Dim, m - 1);
  const int count = component_count(Dim, m);
  const std::size_t nn = grid.node_count();
  constexpr int corners = 1 << Dim;
  std::vector<std::vector<Eigen::Triplet<double>>> parts(cells.size());
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(cells.size()) * count);
  parallel_for(cells.size(), [&](std::size_t q) {
    using D = Dual<double, Dim>;
    const auto& x = cells[q].x;
    const auto g = chart.metric(x);
    const double w = std::sqrt(cells[q].volume * std::sqrt(determinant(g)));
    const auto coords = orthonormal_coordinates(m, fiber_frame(g));
    Vec<D, Dim> xd;
    for (int i = 0; i < Dim; ++i) xd[i] = make_variable<Dim>(x[i], i);
    std::array<std::size_t, corners> ids;
    std::array<D, corners> weights;
    grid.stencil(xd, ids, weights);
    const D chi = (r * r - dot(xd, xd)) / (r * r);
    std::vector<D> bv(corners);
    for (int k = 0; k < corners; ++k) bv[k] = chi * weights[k];
    const auto block = detail::dsym_rows(chart, m, bv, x, coords);
    const auto r0 = static_cast<Eigen::Index>(q) * count;
    for (int i = 0; i < count; ++i)
      for (int c = 0; c < nc; ++c)
        for (int k = 0; k < corners; ++k) {
          const double v = w * block(i, c * corners + k);
          if (v != 0.0)
            parts[q].emplace_back(static_cast<int>(r0 + i), static_cast<int>(c * nn + ids[k]), v);
        }
    const auto fc = f.components(x);
    rhs.segment(r0, count) = w * (coords * Eigen::Map<const Eigen::VectorXd>(fc.data(), count));
  });
  std::vector<Eigen::Triplet<double>> all;
  for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
  Eigen::SparseMatrix<double, Eigen::RowMajor> a(rhs.size(), static_cast<Eigen::Index>(nc * nn));
  a.setFromTriplets(all.begin(), all.end());
  const auto sol = cgls([&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return a * v; },
                        [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return a.transpose() * v; }, rhs,
                        a.cols(), opt);
  std::vector<double> values(sol.x.data(), sol.x.data() + sol.x.size());
  const auto chi = Expression::parse(
      "1 - (" + std::string(Dim == 2 ? "x1^2 + x2^2" : "x1^2 + x2^2 + x3^2") + ")/" + Expression::format_number(r * r),
      Dim);
  return detail::finish_decomposition(chart, f, scaled_by(chi, grid_field(grid, m - 1, std::move(values))), cells);
}

}  // namespace geotomo
