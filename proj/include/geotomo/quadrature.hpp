#pragma once

// Product quadrature on M and on SM.
//
// Base: Cartesian cells of side h = r/n intersected with the ball. In 2D the
// cell/disk intersection area and centroid are exact (piecewise closed
// forms); in 3D partial cells are resolved by 16 x 16 sub-columns with exact
// z-chords. Each cell contributes one node at its centroid with weight
// volume * sqrt(det g).
//
// Fiber: d = 2 uniform trapezoid in the angle; d = 3 Gauss-Legendre in the
// polar cosine times uniform azimuth. Fiber nodes are unit vectors w in R^d
// mapped to v = E w with E a g-orthonormal frame.

#include <boost/math/special_functions/legendre.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "geotomo/errors.hpp"
#include "geotomo/geometry.hpp"
#include "geotomo/linalg.hpp"
#include "geotomo/parallel.hpp"

namespace geotomo {

template <int Dim>
struct BaseNode {
  Vec<double, Dim> x{};
  /// Euclidean volume of the cell inside the ball.
  double volume = 0.0;
};

namespace detail {

// Integrals over [a, b] used for the disk/rectangle intersection; s(x) = sqrt(r^2 - x^2).
struct DiskMoments {
  double r;
  double s(double x) const { return std::sqrt(std::max(0.0, r * r - x * x)); }
  double F(double x) const { return 0.5 * (x * s(x) + r * r * std::asin(std::clamp(x / r, -1.0, 1.0))); }
  double G(double x) const {
    const double q = std::max(0.0, r * r - x * x);
    return -q * std::sqrt(q) / 3.0;
  }
};

/// Exact area and centroid of [x0,x1]x[y0,y1] intersected with the disk of radius r.
inline void rect_disk(double r, double x0, double x1, double y0, double y1, double& area, double& cx, double& cy) {
  const DiskMoments dm{r};
  std::vector<double> br{std::max(x0, -r), std::min(x1, r)};
  area = cx = cy = 0.0;
  if (br[0] >= br[1]) return;
  for (double y : {y0, y1})
    if (std::abs(y) < r) {
      const double b = std::sqrt(r * r - y * y);
      for (double c : {-b, b})
        if (c > br[0] && c < br[1]) br.push_back(c);
    }
  std::sort(br.begin(), br.end());
  double mx = 0.0, my2 = 0.0;
  for (std::size_t k = 0; k + 1 < br.size(); ++k) {
    const double a = br[k], b = br[k + 1];
    if (b - a <= 0.0) continue;
    const double m = 0.5 * (a + b);
    const double sm = dm.s(m);
    const bool top_s = sm < y1;
    const bool bot_s = -sm > y0;
    const double top = top_s ? sm : y1;
    const double bot = bot_s ? -sm : y0;
    if (top - bot <= 0.0) continue;
    const double i0 = b - a;
    const double ix = 0.5 * (b * b - a * a);
    const double is = dm.F(b) - dm.F(a);
    const double ixs = dm.G(b) - dm.G(a);
    const double is2 = r * r * (b - a) - (b * b * b - a * a * a) / 3.0;
    // integral of top, x*top, top^2 minus the same for bottom
    const double t0 = top_s ? is : y1 * i0;
    const double t1 = top_s ? ixs : y1 * ix;
    const double t2 = top_s ? is2 : y1 * y1 * i0;
    const double b0 = bot_s ? -is : y0 * i0;
    const double b1 = bot_s ? -ixs : y0 * ix;
    const double b2 = bot_s ? is2 : y0 * y0 * i0;
    area += t0 - b0;
    mx += t1 - b1;
    my2 += t2 - b2;
  }
  if (area > 0.0) {
    cx = mx / area;
    cy = 0.5 * my2 / area;
  }
}

}  // namespace detail

/// Cells of side radius / cells_per_radius meeting the ball.
template <int Dim>
std::vector<BaseNode<Dim>> base_cells(double radius, int cells_per_radius) {
  if (cells_per_radius < 1) throw InputError("need at least one cell per radius");
  const int n = 2 * cells_per_radius;
  const double h = radius / cells_per_radius;
  std::vector<BaseNode<Dim>> nodes;
  auto edge = [&](int k) { return -radius + h * k; };
  if constexpr (Dim == 2) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double area, cx, cy;
        detail::rect_disk(radius, edge(i), edge(i + 1), edge(j), edge(j + 1), area, cx, cy);
        if (area > 1e-14 * h * h) nodes.push_back({Vec<double, 2>{cx, cy}, area});
      }
  } else {
    constexpr int sub = 16;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          const double x0 = edge(i), y0 = edge(j), z0 = edge(k);
          double far2 = 0.0, near2 = 0.0;
          for (double lo : {x0, y0, z0}) {
            const double hi = lo + h;
            far2 += std::max(lo * lo, hi * hi);
            near2 += (lo <= 0.0 && hi >= 0.0) ? 0.0 : std::min(lo * lo, hi * hi);
          }
          if (near2 >= radius * radius) continue;
          if (far2 <= radius * radius) {
            nodes.push_back({Vec<double, 3>{x0 + 0.5 * h, y0 + 0.5 * h, z0 + 0.5 * h}, h * h * h});
            continue;
          }
          const double hs = h / sub;
          double vol = 0.0;
          Vec<double, 3> c{};
          for (int a = 0; a < sub; ++a)
            for (int b = 0; b < sub; ++b) {
              const double xc = x0 + (a + 0.5) * hs, yc = y0 + (b + 0.5) * hs;
              const double q = radius * radius - xc * xc - yc * yc;
              if (q <= 0.0) continue;
              const double s = std::sqrt(q);
              const double lo = std::max(z0, -s), hi = std::min(z0 + h, s);
              if (hi <= lo) continue;
              const double dv = (hi - lo) * hs * hs;
              vol += dv;
              c[0] += xc * dv;
              c[1] += yc * dv;
              c[2] += 0.5 * (hi + lo) * dv;
            }
          if (vol > 1e-14 * h * h * h) nodes.push_back({(1.0 / vol) * c, vol});
        }
  }
  return nodes;
}

/// Unit vectors on S^{d-1} with weights summing to |S^{d-1}|.
template <int Dim>
struct FiberRule {
  std::vector<Vec<double, Dim>> directions;
  std::vector<double> weights;
};

/// d = 2: `angles` uniform nodes offset by `offset` (in units of the spacing).
inline FiberRule<2> circle_rule(int angles, double offset = 0.0) {
  if (angles < 1) throw InputError("need at least one fiber angle");
  FiberRule<2> r;
  for (int k = 0; k < angles; ++k) {
    const double t = 2.0 * std::numbers::pi * (k + offset) / angles;
    r.directions.push_back(Vec<double, 2>{std::cos(t), std::sin(t)});
    r.weights.push_back(2.0 * std::numbers::pi / angles);
  }
  return r;
}

/// Gauss-Legendre nodes and weights on [-1, 1].
inline void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  if (n < 1) throw InputError("need at least one Gauss-Legendre node");
  nodes.clear();
  weights.clear();
  const auto zeros = boost::math::legendre_p_zeros<double>(n);  // nonnegative zeros
  std::vector<double> all;
  for (double z : zeros) {
    all.push_back(z);
    if (z > 0.0) all.push_back(-z);
  }
  std::sort(all.begin(), all.end());
  for (double x : all) {
    const double dp = boost::math::legendre_p_prime(n, x);
    nodes.push_back(x);
    weights.push_back(2.0 / ((1.0 - x * x) * dp * dp));
  }
}

/// d = 3: Gauss-Legendre in cos(polar) times uniform azimuth, then rotated.
inline FiberRule<3> sphere_rule(int polar, int azimuth, const Mat<double, 3>& rotation = identity<double, 3>()) {
  if (azimuth < 1) throw InputError("need at least one azimuth");
  std::vector<double> z, w;
  gauss_legendre(polar, z, w);
  FiberRule<3> r;
  for (std::size_t i = 0; i < z.size(); ++i)
    for (int k = 0; k < azimuth; ++k) {
      const double phi = 2.0 * std::numbers::pi * (k + 0.5) / azimuth;
      const double s = std::sqrt(std::max(0.0, 1.0 - z[i] * z[i]));
      r.directions.push_back(mul(rotation, Vec<double, 3>{s * std::cos(phi), s * std::sin(phi), z[i]}));
      r.weights.push_back(w[i] * 2.0 * std::numbers::pi / azimuth);
    }
  return r;
}

/// Polar product rule on the ball: Gauss-Legendre in the radius (weight
/// r^{d-1}) times uniform angles (d = 2) or a sphere rule (d = 3). Exact for
/// polynomials of moderate degree, unlike the Cartesian cells.
template <int Dim>
std::vector<BaseNode<Dim>> polar_cells(double radius, int radial, int angular) {
  if (radial < 1 || angular < 1) throw InputError("polar rule needs positive counts");
  std::vector<double> t, w;
  gauss_legendre(radial, t, w);
  std::vector<BaseNode<Dim>> nodes;
  if constexpr (Dim == 2) {
    const auto ring = circle_rule(angular, 0.5);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double r = 0.5 * radius * (t[i] + 1.0);
      for (std::size_t k = 0; k < ring.directions.size(); ++k)
        nodes.push_back({r * ring.directions[k], 0.5 * radius * w[i] * r * ring.weights[k]});
    }
  } else {
    const auto shell = sphere_rule((angular + 1) / 2, angular);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double r = 0.5 * radius * (t[i] + 1.0);
      for (std::size_t k = 0; k < shell.directions.size(); ++k)
        nodes.push_back({r * shell.directions[k], 0.5 * radius * w[i] * r * r * shell.weights[k]});
    }
  }
  return nodes;
}

struct QuadratureSpec {
  int cells_per_radius = 32;
  int angles = 64;   // d = 2
  int polar = 16;    // d = 3
  int azimuth = 32;  // d = 3
};

/// Quadrature on SM for a fixed chart. Sums are reduced per cell and then
/// over cells in index order, so results do not depend on the thread count.
template <int Dim>
class SMQuadrature {
 public:
  SMQuadrature(const MetricChart<Dim>& chart, const QuadratureSpec& spec = {})
      : SMQuadrature(chart, base_cells<Dim>(chart.radius(), spec.cells_per_radius), default_rule(spec)) {}

  SMQuadrature(const MetricChart<Dim>& chart, std::vector<BaseNode<Dim>> cells, FiberRule<Dim> rule)
      : chart_(chart), cells_(std::move(cells)), rule_(std::move(rule)) {
    if (cells_.empty() || rule_.directions.empty()) throw InputError("empty quadrature set");
    weights_.resize(cells_.size());
    frames_.resize(cells_.size());
    for (std::size_t c = 0; c < cells_.size(); ++c) {
      const auto g = chart_.metric(cells_[c].x);
      weights_[c] = cells_[c].volume * std::sqrt(determinant(g));
      frames_[c] = fiber_frame(g);
    }
  }

  const MetricChart<Dim>& chart() const { return chart_; }
  const std::vector<BaseNode<Dim>>& cells() const { return cells_; }
  const FiberRule<Dim>& fiber() const { return rule_; }
  /// volume * sqrt(det g) of cell c.
  double base_weight(std::size_t c) const { return weights_[c]; }
  const Mat<double, Dim>& frame(std::size_t c) const { return frames_[c]; }
  std::size_t node_count() const { return cells_.size() * rule_.directions.size(); }

  /// Integral over M of fn(x).
  template <class Fn>
  double integrate_base(Fn&& fn) const {
    std::vector<double> part(cells_.size());
    parallel_for(cells_.size(), [&](std::size_t c) { part[c] = weights_[c] * fn(cells_[c].x); });
    return ordered_sum(part);
  }

  /// K simultaneous integrals over SM; fn(x, v) returns std::array<double, K>.
  template <int K, class Fn>
  std::array<double, K> integrate_many(Fn&& fn) const {
    std::vector<std::array<double, K>> part(cells_.size());
    parallel_for(cells_.size(), [&](std::size_t c) {
      std::array<double, K> acc{};
      for (std::size_t q = 0; q < rule_.directions.size(); ++q) {
        const auto v = mul(frames_[c], rule_.directions[q]);
        const auto val = fn(cells_[c].x, v);
        for (int k = 0; k < K; ++k) acc[k] += rule_.weights[q] * val[k];
      }
      for (int k = 0; k < K; ++k) acc[k] *= weights_[c];
      part[c] = acc;
    });
    std::array<double, K> total{};
    for (int k = 0; k < K; ++k) {
      std::vector<double> col(part.size());
      for (std::size_t c = 0; c < part.size(); ++c) col[c] = part[c][k];
      total[k] = ordered_sum(col);
    }
    return total;
  }

  template <class Fn>
  double integrate(Fn&& fn) const {
    return integrate_many<1>([&](const Vec<double, Dim>& x, const Vec<double, Dim>& v) {
      return std::array<double, 1>{fn(x, v)};
    })[0];
  }

  /// Pairwise summation in index order.
  static double ordered_sum(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    std::vector<double> level = xs;
    while (level.size() > 1) {
      std::vector<double> next((level.size() + 1) / 2);
      for (std::size_t i = 0; i < next.size(); ++i)
        next[i] = level[2 * i] + (2 * i + 1 < level.size() ? level[2 * i + 1] : 0.0);
      level = std::move(next);
    }
    return level[0];
  }

 private:
  static FiberRule<Dim> default_rule(const QuadratureSpec& spec) {
    if constexpr (Dim == 2)
      return circle_rule(spec.angles);
    else
      return sphere_rule(spec.polar, spec.azimuth);
  }

  MetricChart<Dim> chart_;
  std::vector<BaseNode<Dim>> cells_;
  FiberRule<Dim> rule_;
  std::vector<double> weights_;
  std::vector<Mat<double, Dim>> frames_;
};

}  // namespace geotomo
