#pragma once

// Differential calculus on the unit sphere bundle SM of a chart.
//
// Scalar functions on SM (SMFunction) and sections Z(x, v) of the bundle N
// (NSection) are expression trees. Every node is evaluated through its
// degree-0 extension u(x, y) = u(x, y / |y|_g) on TM \ 0, so the operators
// X, grad_v, grad_h, div_v, div_h are the local-coordinate formulas applied to
// dual-number derivatives of the extension in (x, y).

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "geotomo/dual.hpp"
#include "geotomo/errors.hpp"
#include "geotomo/expression.hpp"
#include "geotomo/geometry.hpp"
#include "geotomo/linalg.hpp"
#include "geotomo/quadrature.hpp"
#include "geotomo/tensorfield.hpp"

namespace geotomo {

template <int Dim>
struct SMNode;
template <int Dim>
struct SectionNode;

template <int Dim>
class SMFunction {
 public:
  SMFunction(MetricChart<Dim> chart, std::shared_ptr<const SMNode<Dim>> node)
      : chart_(std::move(chart)), node_(std::move(node)) {}

  /// u(x, v) in the variables x1..xd, v1..vd.
  static SMFunction from_expression(const MetricChart<Dim>& chart, Expression u);
  static SMFunction from_string(const MetricChart<Dim>& chart, const std::string& u) {
    return from_expression(chart, Expression::parse(u, Dim, true));
  }
  /// f(x, v) = f_{i_1..i_m}(x) v^{i_1}..v^{i_m}.
  static SMFunction from_tensor(const MetricChart<Dim>& chart, SymmetricTensorField<Dim> f);
  static SMFunction constant(const MetricChart<Dim>& chart, double c) {
    return from_expression(chart, Expression::constant(c, Dim));
  }

  const MetricChart<Dim>& chart() const { return chart_; }
  const SMNode<Dim>& node() const { return *node_; }

  /// Degree-0 extension at (x, y), y != 0.
  template <Scalar T>
  T extended(const Vec<T, Dim>& x, const Vec<T, Dim>& y) const;

  /// Value at (x, v) in SM. v is normalized first.
  double operator()(const Vec<double, Dim>& x, const Vec<double, Dim>& v) const { return extended(x, v); }

 private:
  MetricChart<Dim> chart_;
  std::shared_ptr<const SMNode<Dim>> node_;
};

template <int Dim>
class NSection {
 public:
  NSection(MetricChart<Dim> chart, std::shared_ptr<const SectionNode<Dim>> node)
      : chart_(std::move(chart)), node_(std::move(node)) {}

  /// Components W^j(x, v) taken as given; they must be g-orthogonal to v.
  static NSection from_expressions(const MetricChart<Dim>& chart, std::vector<Expression> components);
  static NSection from_strings(const MetricChart<Dim>& chart, const std::vector<std::string>& components);
  /// W - g(W, v) v for arbitrary components W^j(x, v).
  static NSection tangential_part(const MetricChart<Dim>& chart, std::vector<Expression> components);
  static NSection zero(const MetricChart<Dim>& chart);

  const MetricChart<Dim>& chart() const { return chart_; }
  const SectionNode<Dim>& node() const { return *node_; }

  template <Scalar T>
  Vec<T, Dim> extended(const Vec<T, Dim>& x, const Vec<T, Dim>& y) const;

  Vec<double, Dim> operator()(const Vec<double, Dim>& x, const Vec<double, Dim>& v) const { return extended(x, v); }

 private:
  MetricChart<Dim> chart_;
  std::shared_ptr<const SectionNode<Dim>> node_;
};

template <int Dim>
struct SMNode {
  using F = SMFunction<Dim>;
  using S = NSection<Dim>;
  struct Formula {
    Expression u;
  };
  struct Tensor {
    SymmetricTensorField<Dim> f;
  };
  struct Combination {
    std::vector<std::pair<double, F>> terms;
  };
  struct Product {
    F a, b;
  };
  struct Geodesic {  // X u
    F u;
  };
  struct VerticalDiv {
    S z;
  };
  struct HorizontalDiv {
    S z;
  };
  struct Pairing {  // g(Z, W)
    S z, w;
  };
  std::variant<Formula, Tensor, Combination, Product, Geodesic, VerticalDiv, HorizontalDiv, Pairing> data;
};

template <int Dim>
struct SectionNode {
  using F = SMFunction<Dim>;
  using S = NSection<Dim>;
  struct Components {
    std::vector<Expression> w;
    bool project = false;
  };
  struct Combination {
    std::vector<std::pair<double, S>> terms;
  };
  struct Scaled {  // u Z
    F u;
    S z;
  };
  struct VerticalGrad {
    F u;
  };
  struct HorizontalGrad {
    F u;
  };
  struct Geodesic {  // X Z
    S z;
  };
  struct Curvature {  // R(Z, v) v
    S z;
  };
  std::variant<Components, Combination, Scaled, VerticalGrad, HorizontalGrad, Geodesic, Curvature> data;
};

namespace detail {

template <Scalar T, int Dim>
Vec<T, Dim> unit_direction(const Mat<T, Dim>& g, const Vec<T, Dim>& y) {
  using std::sqrt;
  const T n = sqrt(inner(g, y, y));
  if (value_of(n) <= 0.0) throw InputError("fiber direction must be nonzero");
  Vec<T, Dim> v;
  for (int i = 0; i < Dim; ++i) v[i] = y[i] / n;
  return v;
}

/// First-order jet of an extended quantity in (x, y) at a point of SM.
template <Scalar T, int Dim>
struct BundleLift {
  using D = Dual<T, 2 * Dim>;
  Vec<D, Dim> x, y;
  BundleLift(const Vec<T, Dim>& x0, const Vec<T, Dim>& v0) {
    for (int i = 0; i < Dim; ++i) {
      x[i] = make_variable<2 * Dim>(x0[i], i);
      y[i] = make_variable<2 * Dim>(v0[i], Dim + i);
    }
  }
};

/// delta_j q = d_{x^j} q - Gamma^l_{jk} v^k d_{y^l} q.
template <Scalar T, int Dim>
Vec<T, Dim> horizontal_derivative(const Dual<T, 2 * Dim>& q, const Christoffel<T, Dim>& gamma, const Vec<T, Dim>& v) {
  Vec<T, Dim> out;
  for (int j = 0; j < Dim; ++j) {
    T s = q.d[j];
    for (int l = 0; l < Dim; ++l) {
      T gv(0.0);
      for (int k = 0; k < Dim; ++k) gv += gamma[l][j][k] * v[k];
      s -= gv * q.d[Dim + l];
    }
    out[j] = s;
  }
  return out;
}

[[noreturn]] inline void nesting_too_deep() { throw Error("derivative nesting too deep"); }

template <Scalar T, int Dim>
T eval_fn(const SMFunction<Dim>& u, const Vec<T, Dim>& x, const Vec<T, Dim>& v);
template <Scalar T, int Dim>
Vec<T, Dim> eval_section(const NSection<Dim>& z, const Vec<T, Dim>& x, const Vec<T, Dim>& v);

// X u at (x, v) in SM.
template <Scalar T, int Dim>
T geodesic_derivative(const SMFunction<Dim>& u, const Vec<T, Dim>& x, const Vec<T, Dim>& v) {
  if constexpr (dual_depth_v<T> >= max_dual_depth) {
    nesting_too_deep();
  } else {
    const BundleLift<T, Dim> lift(x, v);
    const auto q = u.extended(lift.x, lift.y);
    const auto delta = horizontal_derivative(q, christoffel_symbols(u.chart(), x), v);
    return dot(v, delta);
  }
}

// Evaluation on SM: (x, v) with |v|_g = 1 already.
template <Scalar T, int Dim>
T eval_fn(const SMFunction<Dim>& fn, const Vec<T, Dim>& x, const Vec<T, Dim>& v) {
  using N = SMNode<Dim>;
  const auto& node = fn.node();
  const auto& chart = fn.chart();
  if (const auto* n = std::get_if<typename N::Formula>(&node.data)) return n->u(x, v);
  if (const auto* n = std::get_if<typename N::Tensor>(&node.data)) return n->f.on_sphere(x, v);
  if (const auto* n = std::get_if<typename N::Combination>(&node.data)) {
    T s(0.0);
    for (const auto& [c, f] : n->terms) s += c * eval_fn(f, x, v);
    return s;
  }
  if (const auto* n = std::get_if<typename N::Product>(&node.data)) return eval_fn(n->a, x, v) * eval_fn(n->b, x, v);
  if (const auto* n = std::get_if<typename N::Geodesic>(&node.data)) return geodesic_derivative(n->u, x, v);
  if (const auto* n = std::get_if<typename N::Pairing>(&node.data))
    return inner(chart.metric(x), eval_section(n->z, x, v), eval_section(n->w, x, v));
  if constexpr (dual_depth_v<T> >= max_dual_depth) {
    nesting_too_deep();
  } else {
    const BundleLift<T, Dim> lift(x, v);
    if (const auto* n = std::get_if<typename N::VerticalDiv>(&node.data)) {
      // div_v Z = d_{y^j} Z^j
      const auto z = n->z.extended(lift.x, lift.y);
      T s(0.0);
      for (int j = 0; j < Dim; ++j) s += z[j].d[Dim + j];
      return s;
    }
    const auto* n = std::get_if<typename N::HorizontalDiv>(&node.data);
    // div_h Z = (delta_j + Gamma_j) Z^j
    const auto z = n->z.extended(lift.x, lift.y);
    const auto gamma = christoffel_symbols(chart, x);
    T s(0.0);
    for (int j = 0; j < Dim; ++j) {
      s += horizontal_derivative(z[j], gamma, v)[j];
      for (int k = 0; k < Dim; ++k) s += gamma[k][j][k] * z[j].v;
    }
    return s;
  }
}

template <Scalar T, int Dim>
Vec<T, Dim> eval_section(const NSection<Dim>& sec, const Vec<T, Dim>& x, const Vec<T, Dim>& v) {
  using N = SectionNode<Dim>;
  const auto& node = sec.node();
  const auto& chart = sec.chart();
  if (const auto* n = std::get_if<typename N::Components>(&node.data)) {
    Vec<T, Dim> z;
    for (int j = 0; j < Dim; ++j) z[j] = n->w[j](x, v);
    if (n->project) {
      const T c = inner(chart.metric(x), z, v);
      for (int j = 0; j < Dim; ++j) z[j] -= c * v[j];
    }
    return z;
  }
  if (const auto* n = std::get_if<typename N::Combination>(&node.data)) {
    Vec<T, Dim> z{};
    for (const auto& [c, s] : n->terms) {
      const auto part = eval_section(s, x, v);
      for (int j = 0; j < Dim; ++j) z[j] += c * part[j];
    }
    return z;
  }
  if (const auto* n = std::get_if<typename N::Scaled>(&node.data)) {
    const T c = eval_fn(n->u, x, v);
    auto z = eval_section(n->z, x, v);
    for (auto& zj : z) zj = c * zj;
    return z;
  }
  if (const auto* n = std::get_if<typename N::Curvature>(&node.data))
    return mul(curvature_matrix(chart, x, v), eval_section(n->z, x, v));
  if constexpr (dual_depth_v<T> >= max_dual_depth) {
    nesting_too_deep();
  } else {
    const BundleLift<T, Dim> lift(x, v);
    const auto ginv = inverse(chart.metric(x));
    if (const auto* n = std::get_if<typename N::VerticalGrad>(&node.data)) {
      // (grad_v u)^k = g^{kl} d_{y^l} u
      const auto q = n->u.extended(lift.x, lift.y);
      Vec<T, Dim> dy;
      for (int l = 0; l < Dim; ++l) dy[l] = q.d[Dim + l];
      return mul(ginv, dy);
    }
    const auto gamma = christoffel_symbols(chart, x);
    if (const auto* n = std::get_if<typename N::HorizontalGrad>(&node.data)) {
      // (grad_h u)^j = g^{jl} delta_l u - (X u) v^j
      const auto q = n->u.extended(lift.x, lift.y);
      const auto delta = horizontal_derivative(q, gamma, v);
      const T xu = dot(v, delta);
      auto z = mul(ginv, delta);
      for (int j = 0; j < Dim; ++j) z[j] -= xu * v[j];
      return z;
    }
    const auto* n = std::get_if<typename N::Geodesic>(&node.data);
    // (X Z)^l = v^j delta_j Z^l + Gamma^l_{jk} v^j Z^k
    const auto z = n->z.extended(lift.x, lift.y);
    Vec<T, Dim> out;
    for (int l = 0; l < Dim; ++l) {
      T s = dot(v, horizontal_derivative(z[l], gamma, v));
      for (int j = 0; j < Dim; ++j)
        for (int k = 0; k < Dim; ++k) s += gamma[l][j][k] * (v[j] * z[k].v);
      out[l] = s;
    }
    const double tangency = value_of(inner(chart.metric(x), out, v));
    if (std::abs(tangency) > 1e-8)
      throw ConsistencyError("X Z left the bundle N: g(XZ, v) = " + std::to_string(tangency));
    return out;
  }
}

}  // namespace detail

template <int Dim>
template <Scalar T>
T SMFunction<Dim>::extended(const Vec<T, Dim>& x, const Vec<T, Dim>& y) const {
  const auto v = detail::unit_direction(chart_.metric(x), y);
  return detail::eval_fn(*this, x, v);
}

template <int Dim>
template <Scalar T>
Vec<T, Dim> NSection<Dim>::extended(const Vec<T, Dim>& x, const Vec<T, Dim>& y) const {
  const auto v = detail::unit_direction(chart_.metric(x), y);
  return detail::eval_section(*this, x, v);
}

// ---------------------------------------------------------------------------
// Construction.

template <int Dim>
SMFunction<Dim> SMFunction<Dim>::from_expression(const MetricChart<Dim>& chart, Expression u) {
  if (u.dim() != Dim) throw InputError("SM function expression has the wrong dimension");
  auto node = std::make_shared<SMNode<Dim>>();
  node->data = typename SMNode<Dim>::Formula{std::move(u)};
  return SMFunction(chart, std::move(node));
}

template <int Dim>
SMFunction<Dim> SMFunction<Dim>::from_tensor(const MetricChart<Dim>& chart, SymmetricTensorField<Dim> f) {
  auto node = std::make_shared<SMNode<Dim>>();
  node->data = typename SMNode<Dim>::Tensor{std::move(f)};
  return SMFunction(chart, std::move(node));
}

template <int Dim>
NSection<Dim> NSection<Dim>::from_expressions(const MetricChart<Dim>& chart, std::vector<Expression> components) {
  if (static_cast<int>(components.size()) != Dim) throw InputError("a section needs one component per dimension");
  for (const auto& e : components)
    if (e.dim() != Dim) throw InputError("section component has the wrong dimension");
  auto node = std::make_shared<SectionNode<Dim>>();
  node->data = typename SectionNode<Dim>::Components{std::move(components), false};
  return NSection(chart, std::move(node));
}

template <int Dim>
NSection<Dim> NSection<Dim>::from_strings(const MetricChart<Dim>& chart, const std::vector<std::string>& components) {
  std::vector<Expression> exprs;
  for (const auto& s : components) exprs.push_back(Expression::parse(s, Dim, true));
  return from_expressions(chart, std::move(exprs));
}

template <int Dim>
NSection<Dim> NSection<Dim>::tangential_part(const MetricChart<Dim>& chart, std::vector<Expression> components) {
  auto s = from_expressions(chart, std::move(components));
  auto node = std::make_shared<SectionNode<Dim>>(s.node());
  std::get<typename SectionNode<Dim>::Components>(node->data).project = true;
  return NSection(chart, std::move(node));
}

template <int Dim>
NSection<Dim> NSection<Dim>::zero(const MetricChart<Dim>& chart) {
  return from_expressions(chart, std::vector<Expression>(Dim, Expression::constant(0.0, Dim)));
}

namespace detail {

template <int Dim, class Node, class Alt>
std::shared_ptr<const Node> make_node(Alt alt) {
  auto node = std::make_shared<Node>();
  node->data = std::move(alt);
  return node;
}

template <int Dim>
void require_same_chart(const MetricChart<Dim>& a, const MetricChart<Dim>& b) {
  if (!a.same_metric(b)) throw InputError("operands live on different charts");
}

}  // namespace detail

template <int Dim>
SMFunction<Dim> X(const SMFunction<Dim>& u) {
  return {u.chart(), detail::make_node<Dim, SMNode<Dim>>(typename SMNode<Dim>::Geodesic{u})};
}

template <int Dim>
NSection<Dim> X(const NSection<Dim>& z) {
  return {z.chart(), detail::make_node<Dim, SectionNode<Dim>>(typename SectionNode<Dim>::Geodesic{z})};
}

template <int Dim>
NSection<Dim> vgrad(const SMFunction<Dim>& u) {
  return {u.chart(), detail::make_node<Dim, SectionNode<Dim>>(typename SectionNode<Dim>::VerticalGrad{u})};
}

template <int Dim>
NSection<Dim> hgrad(const SMFunction<Dim>& u) {
  return {u.chart(), detail::make_node<Dim, SectionNode<Dim>>(typename SectionNode<Dim>::HorizontalGrad{u})};
}

template <int Dim>
SMFunction<Dim> vdiv(const NSection<Dim>& z) {
  return {z.chart(), detail::make_node<Dim, SMNode<Dim>>(typename SMNode<Dim>::VerticalDiv{z})};
}

template <int Dim>
SMFunction<Dim> hdiv(const NSection<Dim>& z) {
  return {z.chart(), detail::make_node<Dim, SMNode<Dim>>(typename SMNode<Dim>::HorizontalDiv{z})};
}

/// R Z = R(Z, v) v.
template <int Dim>
NSection<Dim> curvature(const NSection<Dim>& z) {
  return {z.chart(), detail::make_node<Dim, SectionNode<Dim>>(typename SectionNode<Dim>::Curvature{z})};
}

/// Vertical Laplacian -div_v grad_v u.
template <int Dim>
SMFunction<Dim> vertical_laplacian(const SMFunction<Dim>& u) {
  return -1.0 * vdiv(vgrad(u));
}

/// Pointwise g(Z, W).
template <int Dim>
SMFunction<Dim> pairing(const NSection<Dim>& z, const NSection<Dim>& w) {
  detail::require_same_chart(z.chart(), w.chart());
  return {z.chart(), detail::make_node<Dim, SMNode<Dim>>(typename SMNode<Dim>::Pairing{z, w})};
}

template <int Dim>
SMFunction<Dim> linear_combination(std::vector<std::pair<double, SMFunction<Dim>>> terms) {
  if (terms.empty()) throw InputError("empty linear combination");
  for (const auto& t : terms) detail::require_same_chart(terms.front().second.chart(), t.second.chart());
  const auto chart = terms.front().second.chart();
  return {chart, detail::make_node<Dim, SMNode<Dim>>(typename SMNode<Dim>::Combination{std::move(terms)})};
}

template <int Dim>
NSection<Dim> linear_combination(std::vector<std::pair<double, NSection<Dim>>> terms) {
  if (terms.empty()) throw InputError("empty linear combination");
  for (const auto& t : terms) detail::require_same_chart(terms.front().second.chart(), t.second.chart());
  const auto chart = terms.front().second.chart();
  return {chart, detail::make_node<Dim, SectionNode<Dim>>(typename SectionNode<Dim>::Combination{std::move(terms)})};
}

template <int Dim>
SMFunction<Dim> operator+(const SMFunction<Dim>& a, const SMFunction<Dim>& b) {
  return linear_combination<Dim>({{1.0, a}, {1.0, b}});
}
template <int Dim>
SMFunction<Dim> operator-(const SMFunction<Dim>& a, const SMFunction<Dim>& b) {
  return linear_combination<Dim>({{1.0, a}, {-1.0, b}});
}
template <int Dim>
SMFunction<Dim> operator*(double c, const SMFunction<Dim>& a) {
  return linear_combination<Dim>({{c, a}});
}
template <int Dim>
SMFunction<Dim> operator*(const SMFunction<Dim>& a, const SMFunction<Dim>& b) {
  detail::require_same_chart(a.chart(), b.chart());
  return {a.chart(), detail::make_node<Dim, SMNode<Dim>>(typename SMNode<Dim>::Product{a, b})};
}

template <int Dim>
NSection<Dim> operator+(const NSection<Dim>& a, const NSection<Dim>& b) {
  return linear_combination<Dim>({{1.0, a}, {1.0, b}});
}
template <int Dim>
NSection<Dim> operator-(const NSection<Dim>& a, const NSection<Dim>& b) {
  return linear_combination<Dim>({{1.0, a}, {-1.0, b}});
}
template <int Dim>
NSection<Dim> operator*(double c, const NSection<Dim>& a) {
  return linear_combination<Dim>({{c, a}});
}
template <int Dim>
NSection<Dim> operator*(const SMFunction<Dim>& u, const NSection<Dim>& z) {
  detail::require_same_chart(u.chart(), z.chart());
  return {z.chart(), detail::make_node<Dim, SectionNode<Dim>>(typename SectionNode<Dim>::Scaled{u, z})};
}

// ---------------------------------------------------------------------------
// L2 structure.

template <int Dim>
double l2_inner_sm(const SMQuadrature<Dim>& quad, const SMFunction<Dim>& u, const SMFunction<Dim>& w) {
  return quad.integrate([&](const Vec<double, Dim>& x, const Vec<double, Dim>& v) {
    return detail::eval_fn(u, x, v) * detail::eval_fn(w, x, v);
  });
}

template <int Dim>
double l2_norm2_sm(const SMQuadrature<Dim>& quad, const SMFunction<Dim>& u) {
  return quad.integrate([&](const Vec<double, Dim>& x, const Vec<double, Dim>& v) {
    const double a = detail::eval_fn(u, x, v);
    return a * a;
  });
}

template <int Dim>
double l2_inner_sections(const SMQuadrature<Dim>& quad, const NSection<Dim>& z, const NSection<Dim>& w) {
  const auto& chart = quad.chart();
  return quad.integrate([&](const Vec<double, Dim>& x, const Vec<double, Dim>& v) {
    return inner(chart.metric(x), detail::eval_section(z, x, v), detail::eval_section(w, x, v));
  });
}

template <int Dim>
double l2_norm2_sections(const SMQuadrature<Dim>& quad, const NSection<Dim>& z) {
  return l2_inner_sections(quad, z, z);
}

/// Largest |g(Z, v)| over the quadrature nodes.
template <int Dim>
double max_tangency_defect(const SMQuadrature<Dim>& quad, const NSection<Dim>& z) {
  const auto& chart = quad.chart();
  double worst = 0.0;
  for (const auto& cell : quad.cells()) {
    const auto g = chart.metric(cell.x);
    const auto frame = fiber_frame(g);
    for (const auto& dir : quad.fiber().directions) {
      const auto v = mul(frame, dir);
      worst = std::max(worst, std::abs(inner(g, detail::eval_section(z, cell.x, v), v)));
    }
  }
  return worst;
}

}  // namespace geotomo
