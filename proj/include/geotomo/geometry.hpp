#pragma once

// Single-chart Riemannian manifolds: the closed ball |x| <= radius in R^d
// carrying a closed-form metric g_ij(x).

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "geotomo/dual.hpp"
#include "geotomo/errors.hpp"
#include "geotomo/expression.hpp"
#include "geotomo/linalg.hpp"

namespace geotomo {

enum class MetricFamily { euclidean, conformal, sphere_cap, hyperbolic, anisotropic };
enum class DerivativeMode { algorithmic, central_difference };

inline std::string to_string(MetricFamily f) {
  switch (f) {
    case MetricFamily::euclidean:
      return "euclidean";
    case MetricFamily::conformal:
      return "conformal";
    case MetricFamily::sphere_cap:
      return "sphere_cap";
    case MetricFamily::hyperbolic:
      return "hyperbolic";
    case MetricFamily::anisotropic:
      return "anisotropic";
  }
  return "unknown";
}

inline MetricFamily metric_family_from_string(const std::string& name) {
  for (auto f : {MetricFamily::euclidean, MetricFamily::conformal, MetricFamily::sphere_cap,
                 MetricFamily::hyperbolic, MetricFamily::anisotropic})
    if (to_string(f) == name) return f;
  throw InputError("unknown metric family '" + name + "'");
}

/// Christoffel symbols, indexed [l][j][k] for Gamma^l_{jk}.
template <class T, int D>
using Christoffel = Vec<Mat<T, D>, D>;

/// Riemann tensor R^l_{ijk}, indexed [l][i][j][k], with R(d_j, d_k) d_i = R^l_{ijk} d_l.
template <class T, int D>
using Riemann = Vec<Vec<Mat<T, D>, D>, D>;

template <int Dim>
class MetricChart {
  static_assert(Dim == 2 || Dim == 3, "charts are 2- or 3-dimensional");

 public:
  static constexpr int dim = Dim;

  /// Built-in families and their parameters:
  ///   euclidean    g = c delta              params {c = 1}
  ///   conformal    g = exp(2 lambda) delta  lambda expression in x1..xd
  ///   sphere_cap   g = 4 delta / (1 + K|x|^2)^2   params {K = 1}
  ///   hyperbolic   g = 4 delta / (1 - K|x|^2)^2   params {K = 1}, K r^2 < 1
  ///   anisotropic  g = delta + a x x^T      params {a}, 1 + a r^2 > 0
  MetricChart(MetricFamily family, double radius, std::vector<double> params = {},
              std::optional<Expression> lambda = std::nullopt)
      : family_(family), radius_(radius), params_(std::move(params)), lambda_(std::move(lambda)) {
    if (!(radius_ > 0.0)) throw InputError("chart radius must be positive");
    fd_step_ = 1e-5 * radius_;
    switch (family_) {
      case MetricFamily::euclidean:
        if (params_.empty()) params_ = {1.0};
        if (!(params_[0] > 0.0)) throw InputError("euclidean scale must be positive");
        break;
      case MetricFamily::conformal:
        if (!lambda_) throw InputError("conformal metric needs a lambda expression");
        if (lambda_->dim() != Dim) throw InputError("lambda expression has the wrong dimension");
        break;
      case MetricFamily::sphere_cap:
        if (params_.empty()) params_ = {1.0};
        if (!(params_[0] > 0.0)) throw InputError("sphere_cap curvature must be positive");
        break;
      case MetricFamily::hyperbolic:
        if (params_.empty()) params_ = {1.0};
        if (!(params_[0] > 0.0)) throw InputError("hyperbolic curvature parameter must be positive");
        if (params_[0] * radius_ * radius_ >= 1.0) throw InputError("hyperbolic chart needs K r^2 < 1");
        break;
      case MetricFamily::anisotropic:
        if (params_.empty()) throw InputError("anisotropic metric needs a strength parameter");
        if (!(1.0 + std::min(0.0, params_[0]) * radius_ * radius_ > 0.0))
          throw InputError("anisotropic metric is not positive definite on the chart");
        break;
    }
  }

  static MetricChart euclidean(double radius = 1.0, double scale = 1.0) {
    return MetricChart(MetricFamily::euclidean, radius, {scale});
  }
  static MetricChart conformal(double radius, Expression lambda) {
    return MetricChart(MetricFamily::conformal, radius, {}, std::move(lambda));
  }
  static MetricChart sphere_cap(double radius, double curvature = 1.0) {
    return MetricChart(MetricFamily::sphere_cap, radius, {curvature});
  }
  static MetricChart hyperbolic(double radius, double curvature = 1.0) {
    return MetricChart(MetricFamily::hyperbolic, radius, {curvature});
  }
  static MetricChart anisotropic(double radius, double strength) {
    return MetricChart(MetricFamily::anisotropic, radius, {strength});
  }

  MetricChart with_derivative_mode(DerivativeMode mode, double step = 0.0) const {
    MetricChart c = *this;
    c.mode_ = mode;
    c.fd_step_ = step > 0.0 ? step : 1e-5 * radius_;
    return c;
  }

  MetricFamily family() const { return family_; }
  double radius() const { return radius_; }
  const std::vector<double>& params() const { return params_; }
  const std::optional<Expression>& lambda() const { return lambda_; }
  DerivativeMode derivative_mode() const { return mode_; }
  double fd_step() const { return fd_step_; }

  /// Same metric on the same domain (derivative mode may differ).
  bool same_metric(const MetricChart& o) const {
    const bool lam = lambda_.has_value() == o.lambda_.has_value() && (!lambda_ || lambda_->source() == o.lambda_->source());
    return family_ == o.family_ && radius_ == o.radius_ && params_ == o.params_ && lam;
  }

  std::string name() const {
    std::string s = to_string(family_);
    if (lambda_) s += "(" + lambda_->source() + ")";
    return s;
  }

  template <Scalar T>
  Mat<T, Dim> metric(const Vec<T, Dim>& x) const {
    T factor(1.0);
    T r2 = dot(x, x);
    switch (family_) {
      case MetricFamily::euclidean:
        factor = T(params_[0]);
        break;
      case MetricFamily::conformal: {
        using std::exp;
        factor = exp(2.0 * (*lambda_)(x));
        break;
      }
      case MetricFamily::sphere_cap: {
        T s = 1.0 + params_[0] * r2;
        factor = 4.0 / (s * s);
        break;
      }
      case MetricFamily::hyperbolic: {
        T s = 1.0 - params_[0] * r2;
        factor = 4.0 / (s * s);
        break;
      }
      case MetricFamily::anisotropic: {
        Mat<T, Dim> g = identity<T, Dim>();
        for (int i = 0; i < Dim; ++i)
          for (int j = 0; j < Dim; ++j) g[i][j] += params_[0] * (x[i] * x[j]);
        return g;
      }
    }
    Mat<T, Dim> g{};
    for (int i = 0; i < Dim; ++i) g[i][i] = factor;
    return g;
  }

  bool contains(const Vec<double, Dim>& x, double tol = 1e-12) const {
    return norm(x) <= radius_ * (1.0 + tol);
  }

  /// Upper estimate of the g-diameter: 2 r sqrt(max eigenvalue of g) over a
  /// radial sample set.
  double diameter_estimate() const {
    double worst = 0.0;
    for (int k = 0; k <= 16; ++k) {
      for (int axis = 0; axis < Dim; ++axis) {
        Vec<double, Dim> x{};
        x[axis] = radius_ * (-1.0 + k / 8.0);
        const auto g = metric(x);
        double row = 0.0;
        for (int i = 0; i < Dim; ++i) {
          double s = 0.0;
          for (int j = 0; j < Dim; ++j) s += std::abs(g[i][j]);
          row = std::max(row, s);
        }
        worst = std::max(worst, row);
      }
    }
    return 2.0 * radius_ * std::sqrt(worst);
  }

 private:
  MetricFamily family_;
  double radius_;
  std::vector<double> params_;
  std::optional<Expression> lambda_;
  DerivativeMode mode_ = DerivativeMode::algorithmic;
  double fd_step_ = 0.0;
};

/// g, g^{-1} and the coordinate derivatives d_k g.
template <class T, int Dim>
struct MetricJet {
  Mat<T, Dim> g;
  Mat<T, Dim> ginv;
  Vec<Mat<T, Dim>, Dim> dg;
};

template <Scalar T, int Dim>
MetricJet<T, Dim> metric_jet(const MetricChart<Dim>& chart, const Vec<T, Dim>& x) {
  using D = Dual<T, Dim>;
  Vec<D, Dim> xd;
  for (int i = 0; i < Dim; ++i) xd[i] = make_variable<Dim>(x[i], i);
  const auto gd = chart.metric(xd);
  MetricJet<T, Dim> jet;
  for (int i = 0; i < Dim; ++i)
    for (int j = 0; j < Dim; ++j) {
      jet.g[i][j] = gd[i][j].v;
      for (int k = 0; k < Dim; ++k) jet.dg[k][i][j] = gd[i][j].d[k];
    }
  jet.ginv = inverse(jet.g);
  return jet;
}

template <class T, int Dim>
Christoffel<T, Dim> christoffel_from(const Mat<T, Dim>& ginv, const Vec<Mat<T, Dim>, Dim>& dg) {
  // Gamma^l_{jk} = 1/2 g^{lp} (d_j g_{pk} + d_k g_{pj} - d_p g_{jk})
  Christoffel<T, Dim> gamma{};
  for (int j = 0; j < Dim; ++j)
    for (int k = j; k < Dim; ++k) {
      Vec<T, Dim> lowered{};
      for (int p = 0; p < Dim; ++p) lowered[p] = 0.5 * (dg[j][p][k] + dg[k][p][j] - dg[p][j][k]);
      for (int l = 0; l < Dim; ++l) {
        T s(0.0);
        for (int p = 0; p < Dim; ++p) s += ginv[l][p] * lowered[p];
        gamma[l][j][k] = s;
        gamma[l][k][j] = s;
      }
    }
  return gamma;
}

namespace detail {

template <int Dim>
Christoffel<double, Dim> christoffel_fd(const MetricChart<Dim>& chart, const Vec<double, Dim>& x) {
  const double h = chart.fd_step();
  Vec<Mat<double, Dim>, Dim> dg{};
  for (int k = 0; k < Dim; ++k) {
    Vec<double, Dim> xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    const auto gp = chart.metric(xp);
    const auto gm = chart.metric(xm);
    for (int i = 0; i < Dim; ++i)
      for (int j = 0; j < Dim; ++j) dg[k][i][j] = (gp[i][j] - gm[i][j]) / (2.0 * h);
  }
  return christoffel_from(inverse(chart.metric(x)), dg);
}

}  // namespace detail

/// Christoffel symbols without domain or definiteness checks. Non-double
/// scalar types always use forward-mode derivatives; doubles honour the
/// chart's derivative mode.
template <Scalar T, int Dim>
Christoffel<T, Dim> christoffel_symbols(const MetricChart<Dim>& chart, const Vec<T, Dim>& x) {
  if constexpr (std::is_same_v<T, double>) {
    if (chart.derivative_mode() == DerivativeMode::central_difference) return detail::christoffel_fd(chart, x);
  }
  const auto jet = metric_jet(chart, x);
  return christoffel_from(jet.ginv, jet.dg);
}

template <int Dim>
void check_point(const MetricChart<Dim>& chart, const Vec<double, Dim>& x) {
  if (!chart.contains(x, 1e-9)) throw DomainError("point outside the chart domain");
  Mat<double, Dim> lower;
  if (!cholesky(chart.metric(x), lower)) throw GeometryError("metric is not positive definite at the point");
}

/// Checked Levi-Civita symbols at a point of the chart.
template <int Dim>
Christoffel<double, Dim> christoffel(const MetricChart<Dim>& chart, const Vec<double, Dim>& x) {
  check_point(chart, x);
  return christoffel_symbols(chart, x);
}

template <Scalar T, int Dim>
Riemann<T, Dim> riemann_tensor(const MetricChart<Dim>& chart, const Vec<T, Dim>& x) {
  // dgamma[j][l][a][b] = d_j Gamma^l_{ab}
  Vec<Christoffel<T, Dim>, Dim> dgamma{};
  Christoffel<T, Dim> gamma;
  bool done = false;
  if constexpr (std::is_same_v<T, double>) {
    if (chart.derivative_mode() == DerivativeMode::central_difference) {
      const double h = chart.fd_step();
      gamma = detail::christoffel_fd(chart, x);
      for (int j = 0; j < Dim; ++j) {
        Vec<double, Dim> xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        const auto gp = detail::christoffel_fd(chart, xp);
        const auto gm = detail::christoffel_fd(chart, xm);
        for (int l = 0; l < Dim; ++l)
          for (int a = 0; a < Dim; ++a)
            for (int b = 0; b < Dim; ++b) dgamma[j][l][a][b] = (gp[l][a][b] - gm[l][a][b]) / (2.0 * h);
      }
      done = true;
    }
  }
  if (!done) {
    using D = Dual<T, Dim>;
    Vec<D, Dim> xd;
    for (int i = 0; i < Dim; ++i) xd[i] = make_variable<Dim>(x[i], i);
    const auto gd = christoffel_symbols(chart, xd);
    for (int l = 0; l < Dim; ++l)
      for (int a = 0; a < Dim; ++a)
        for (int b = 0; b < Dim; ++b) {
          gamma[l][a][b] = gd[l][a][b].v;
          for (int j = 0; j < Dim; ++j) dgamma[j][l][a][b] = gd[l][a][b].d[j];
        }
  }
  Riemann<T, Dim> r{};
  for (int l = 0; l < Dim; ++l)
    for (int i = 0; i < Dim; ++i)
      for (int j = 0; j < Dim; ++j)
        for (int k = 0; k < Dim; ++k) {
          T s = dgamma[j][l][k][i] - dgamma[k][l][j][i];
          for (int p = 0; p < Dim; ++p) s += gamma[l][j][p] * gamma[p][k][i] - gamma[l][k][p] * gamma[p][j][i];
          r[l][i][j][k] = s;
        }
  return r;
}

/// Coordinate matrix M with (R(w, v) v)^l = M[l][j] w^j.
template <Scalar T, int Dim>
Mat<T, Dim> curvature_matrix(const MetricChart<Dim>& chart, const Vec<T, Dim>& x, const Vec<T, Dim>& v) {
  const auto r = riemann_tensor(chart, x);
  Mat<T, Dim> m{};
  for (int l = 0; l < Dim; ++l)
    for (int j = 0; j < Dim; ++j) {
      T s(0.0);
      for (int i = 0; i < Dim; ++i)
        for (int k = 0; k < Dim; ++k) s += r[l][i][j][k] * (v[i] * v[k]);
      m[l][j] = s;
    }
  return m;
}

/// Columns of the result form a g-orthonormal basis of T_xM: e_a = L^{-T} u_a
/// for g = L L^T.
template <Scalar T, int Dim>
Mat<T, Dim> fiber_frame(const Mat<T, Dim>& g) {
  Mat<T, Dim> lower;
  if (!cholesky(g, lower)) throw GeometryError("metric is not positive definite");
  return transpose(inverse_lower(lower));
}

/// g-orthonormal basis {v, e_1, .., e_{d-1}} of T_xM, returned as columns.
/// The completion of v uses coordinate vectors (in Cholesky-whitened
/// coordinates) ordered by increasing alignment with v, ties broken by index.
template <Scalar T, int Dim>
Mat<T, Dim> adapted_frame(const Mat<T, Dim>& g, const Vec<T, Dim>& v) {
  using std::sqrt;
  Mat<T, Dim> lower;
  if (!cholesky(g, lower)) throw GeometryError("metric is not positive definite");
  const Vec<T, Dim> vt = mul_transposed(lower, v);
  std::array<int, Dim> order;
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return std::abs(value_of(vt[a])) < std::abs(value_of(vt[b])); });
  std::array<Vec<T, Dim>, Dim> basis{};
  basis[0] = vt;
  {
    T n = sqrt(dot(vt, vt));
    for (auto& c : basis[0]) c = c / n;
  }
  int filled = 1;
  for (int idx = 0; idx < Dim && filled < Dim; ++idx) {
    Vec<T, Dim> w{};
    w[order[idx]] = T(1.0);
    for (int b = 0; b < filled; ++b) {
      const T c = dot(w, basis[b]);
      for (int i = 0; i < Dim; ++i) w[i] -= c * basis[b][i];
    }
    const T n = sqrt(dot(w, w));
    if (value_of(n) < 1e-8) continue;
    for (auto& c : w) c = c / n;
    basis[filled++] = w;
  }
  const Mat<T, Dim> back = transpose(inverse_lower(lower));
  Mat<T, Dim> frame{};
  for (int b = 0; b < Dim; ++b) {
    const auto col = mul(back, basis[b]);
    for (int i = 0; i < Dim; ++i) frame[i][b] = col[i];
  }
  return frame;
}

template <int Dim>
struct CurvatureOperator {
  /// g-orthonormal frame of {v}^perp.
  std::array<Vec<double, Dim>, Dim - 1> frame{};
  /// matrix[a][b] = <e_a, R(e_b, v) v>_g.
  std::array<std::array<double, Dim - 1>, Dim - 1> matrix{};
};

template <int Dim>
CurvatureOperator<Dim> curvature_operator(const MetricChart<Dim>& chart, const Vec<double, Dim>& x,
                                          const Vec<double, Dim>& v) {
  check_point(chart, x);
  const auto g = chart.metric(x);
  if (std::abs(inner(g, v, v) - 1.0) > 1e-10) throw NormalizationError("curvature operator needs a g-unit vector");
  const auto frame = adapted_frame(g, v);
  const auto m = curvature_matrix(chart, x, v);
  CurvatureOperator<Dim> op;
  for (int a = 0; a < Dim - 1; ++a)
    for (int i = 0; i < Dim; ++i) op.frame[a][i] = frame[i][a + 1];
  for (int a = 0; a < Dim - 1; ++a)
    for (int b = 0; b < Dim - 1; ++b) op.matrix[a][b] = inner(g, op.frame[a], mul(m, op.frame[b]));
  return op;
}

template <Scalar T, int Dim>
T metric_norm2(const Mat<T, Dim>& g, const Vec<T, Dim>& v) {
  return inner(g, v, v);
}

}  // namespace geotomo
