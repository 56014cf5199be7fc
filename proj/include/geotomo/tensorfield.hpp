#pragma once

// Symmetric covariant m-tensor fields on a chart. A field is an immutable
// expression tree: closed-form components, d^s and divergence of other
// fields, linear combinations, degree pieces, grid- and polynomial-backed
// fields. Every node evaluates on any Scalar type, so derivatives of derived
// fields come from dual numbers all the way down.

#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "geotomo/dual.hpp"
#include "geotomo/errors.hpp"
#include "geotomo/expression.hpp"
#include "geotomo/geometry.hpp"
#include "geotomo/grid.hpp"
#include "geotomo/linalg.hpp"
#include "geotomo/symmetric.hpp"

namespace geotomo {

template <int Dim>
struct FieldNode;

/// Tensor-product Chebyshev polynomials of total degree <= degree in x/r,
/// optionally multiplied by chi = (r^2 - |x|^2)/r^2 so that they vanish on
/// the boundary sphere.
template <int Dim>
struct ChebyshevBasis {
  double radius = 1.0;
  int degree = 0;
  bool vanish_on_boundary = false;
  std::vector<std::array<int, Dim>> exponents;

  ChebyshevBasis() = default;
  ChebyshevBasis(double r, int deg, bool vanish) : radius(r), degree(deg), vanish_on_boundary(vanish) {
    if (deg < 0) throw InputError("polynomial degree must be nonnegative");
    std::array<int, Dim> e{};
    enumerate(e, 0, deg);
  }

  int size() const { return static_cast<int>(exponents.size()); }

  template <Scalar T>
  void evaluate(const Vec<T, Dim>& x, std::vector<T>& out) const {
    std::array<std::vector<T>, Dim> cheb;
    for (int a = 0; a < Dim; ++a) {
      const T s = x[a] / radius;
      cheb[a].resize(degree + 1);
      cheb[a][0] = T(1.0);
      if (degree >= 1) cheb[a][1] = s;
      for (int k = 2; k <= degree; ++k) cheb[a][k] = 2.0 * (s * cheb[a][k - 1]) - cheb[a][k - 2];
    }
    T chi(1.0);
    if (vanish_on_boundary) chi = (radius * radius - dot(x, x)) / (radius * radius);
    out.resize(exponents.size());
    for (std::size_t k = 0; k < exponents.size(); ++k) {
      T v = chi;
      for (int a = 0; a < Dim; ++a) v = v * cheb[a][exponents[k][a]];
      out[k] = v;
    }
  }

 private:
  void enumerate(std::array<int, Dim>& e, int axis, int left) {
    if (axis == Dim) {
      exponents.push_back(e);
      return;
    }
    for (int k = 0; k <= left; ++k) {
      e[axis] = k;
      enumerate(e, axis + 1, left - k);
    }
  }
};

template <int Dim>
class SymmetricTensorField {
 public:
  SymmetricTensorField() : SymmetricTensorField(zero(0)) {}
  SymmetricTensorField(int order, std::shared_ptr<const FieldNode<Dim>> node)
      : order_(order), node_(std::move(node)) {}

  static constexpr int dim = Dim;

  int order() const { return order_; }
  int size() const { return component_count(Dim, order_); }
  const MultiIndexSet& indices() const { return multi_indices(Dim, order_); }
  const FieldNode<Dim>& node() const { return *node_; }

  /// One expression per sorted multi-index, in MultiIndexSet order.
  static SymmetricTensorField from_expressions(int order, std::vector<Expression> components);
  static SymmetricTensorField from_strings(int order, const std::vector<std::string>& components);
  static SymmetricTensorField zero(int order);
  static SymmetricTensorField constant(int order, const std::vector<double>& values);
  /// Averages a raw (unsymmetric) tensor of d^m expressions, row-major.
  static SymmetricTensorField symmetrize(int order, const std::vector<Expression>& raw);

  template <Scalar T>
  void evaluate(const Vec<T, Dim>& x, std::vector<T>& out) const;

  template <Scalar T>
  std::vector<T> components(const Vec<T, Dim>& x) const {
    std::vector<T> out;
    evaluate(x, out);
    return out;
  }

  /// Component with an arbitrary index order; permutations give identical values.
  double component(const Vec<double, Dim>& x, const std::vector<int>& index) const {
    return components(x)[indices().find(index)];
  }

  /// f(x, v) = f_{i_1..i_m}(x) v^{i_1}..v^{i_m}.
  template <Scalar T>
  T on_sphere(const Vec<T, Dim>& x, const Vec<T, Dim>& v) const {
    std::vector<T> c;
    evaluate(x, c);
    return contract(c, v);
  }

  template <Scalar T>
  T contract(const std::vector<T>& c, const Vec<T, Dim>& v) const {
    const auto& set = indices();
    T s(0.0);
    for (int k = 0; k < set.size(); ++k) {
      T term = set.multiplicity(k) * c[k];
      for (int i : set.index(k)) term = term * v[i];
      s += term;
    }
    return s;
  }

 private:
  int order_ = 0;
  std::shared_ptr<const FieldNode<Dim>> node_;
};

template <int Dim>
struct FieldNode {
  using Field = SymmetricTensorField<Dim>;

  struct Components {
    std::vector<Expression> exprs;
  };
  struct Dsym {
    MetricChart<Dim> chart;
    Field parent;
  };
  struct Divergence {
    MetricChart<Dim> chart;
    Field parent;
  };
  struct Combination {
    std::vector<std::pair<double, Field>> terms;
  };
  struct DegreePiece {
    MetricChart<Dim> chart;
    Field parent;
    int k;
  };
  struct GridValues {
    NodeGrid<Dim> grid;
    // values[c * node_count + node]
    std::shared_ptr<const std::vector<double>> values;
  };
  struct ScaledBy {
    Expression factor;
    Field parent;
  };
  struct Polynomial {
    ChebyshevBasis<Dim> basis;
    // coefficients[c * basis.size() + b]
    std::shared_ptr<const std::vector<double>> coefficients;
  };

  std::variant<Components, Dsym, Divergence, Combination, DegreePiece, GridValues, ScaledBy, Polynomial> data;
};

namespace detail {

/// Covariant derivative of a symmetric tensor with components c (order n):
/// out[J * Dim + j] = d_j c_J - sum_t Gamma^p_{j J_t} c_{J, J_t -> p}.
template <Scalar T, int Dim>
void covariant_derivative(int order, const std::vector<Dual<T, Dim>>& c, const Christoffel<T, Dim>& gamma,
                          std::vector<T>& out) {
  const auto& set = multi_indices(Dim, order);
  out.assign(static_cast<std::size_t>(set.size()) * Dim, T(0.0));
  for (int J = 0; J < set.size(); ++J) {
    const auto& idx = set.index(J);
    for (int j = 0; j < Dim; ++j) {
      T s = c[J].d[j];
      for (int t = 0; t < order; ++t) {
        auto e = set.exponent(J);
        --e[idx[t]];
        for (int p = 0; p < Dim; ++p) {
          ++e[p];
          s -= gamma[p][j][idx[t]] * c[set.find_exponent(e)].v;
          --e[p];
        }
      }
      out[static_cast<std::size_t>(J) * Dim + j] = s;
    }
  }
}

/// Components of d^s h (order m) from the first jet of h (order m - 1).
template <Scalar T, int Dim>
void dsym_components(int order, const std::vector<Dual<T, Dim>>& h, const Christoffel<T, Dim>& gamma,
                     std::vector<T>& out) {
  // (d^s h)_I = (1/m) sum_s (nabla h)_{I \ i_s ; i_s}
  std::vector<T> nabla;
  covariant_derivative(order - 1, h, gamma, nabla);
  const auto& set = multi_indices(Dim, order);
  const auto& lower = multi_indices(Dim, order - 1);
  out.assign(set.size(), T(0.0));
  for (int I = 0; I < set.size(); ++I) {
    const auto& idx = set.index(I);
    T s(0.0);
    for (int t = 0; t < order; ++t) {
      auto e = set.exponent(I);
      --e[idx[t]];
      s += nabla[static_cast<std::size_t>(lower.find_exponent(e)) * Dim + idx[t]];
    }
    out[I] = s / static_cast<double>(order);
  }
}

/// Components of delta f (order m) from the first jet of f (order m + 1).
template <Scalar T, int Dim>
void divergence_components(int order, const std::vector<Dual<T, Dim>>& f, const Mat<T, Dim>& ginv,
                           const Christoffel<T, Dim>& gamma, std::vector<T>& out) {
  // (delta f)_I = g^{jk} f_{I k ; j}
  std::vector<T> nabla;
  covariant_derivative(order + 1, f, gamma, nabla);
  const auto& set = multi_indices(Dim, order);
  const auto& upper = multi_indices(Dim, order + 1);
  out.assign(set.size(), T(0.0));
  for (int I = 0; I < set.size(); ++I) {
    T s(0.0);
    for (int k = 0; k < Dim; ++k) {
      auto e = set.exponent(I);
      ++e[k];
      const std::size_t K = static_cast<std::size_t>(upper.find_exponent(e));
      for (int j = 0; j < Dim; ++j) s += ginv[j][k] * nabla[K * Dim + j];
    }
    out[I] = s;
  }
}

template <Scalar T, int Dim>
void eval_node(int order, const FieldNode<Dim>& node, const Vec<T, Dim>& x, std::vector<T>& out);

}  // namespace detail

template <int Dim>
template <Scalar T>
void SymmetricTensorField<Dim>::evaluate(const Vec<T, Dim>& x, std::vector<T>& out) const {
  detail::eval_node(order_, *node_, x, out);
}

namespace detail {

template <Scalar T, int Dim>
void eval_node(int order, const FieldNode<Dim>& node, const Vec<T, Dim>& x, std::vector<T>& out) {
  using N = FieldNode<Dim>;
  const int count = component_count(Dim, order);
  if (const auto* n = std::get_if<typename N::Components>(&node.data)) {
    out.resize(count);
    for (int k = 0; k < count; ++k) out[k] = n->exprs[k](x);
  } else if (const auto* n = std::get_if<typename N::Dsym>(&node.data)) {
    if constexpr (dual_depth_v<T> >= max_dual_depth) {
      throw Error("derivative nesting too deep");
    } else {
    using D = Dual<T, Dim>;
    Vec<D, Dim> xd;
    for (int i = 0; i < Dim; ++i) xd[i] = make_variable<Dim>(x[i], i);
    std::vector<D> h;
    n->parent.evaluate(xd, h);
    const auto gamma = christoffel_symbols(n->chart, x);
    dsym_components(order, h, gamma, out);
    }
  } else if (const auto* n = std::get_if<typename N::Divergence>(&node.data)) {
    if constexpr (dual_depth_v<T> >= max_dual_depth) {
      throw Error("derivative nesting too deep");
    } else {
    using D = Dual<T, Dim>;
    Vec<D, Dim> xd;
    for (int i = 0; i < Dim; ++i) xd[i] = make_variable<Dim>(x[i], i);
    std::vector<D> f;
    n->parent.evaluate(xd, f);
    const auto jet = metric_jet(n->chart, x);
    const auto gamma = christoffel_from(jet.ginv, jet.dg);
    divergence_components(order, f, jet.ginv, gamma, out);
    }
  } else if (const auto* n = std::get_if<typename N::Combination>(&node.data)) {
    out.assign(count, T(0.0));
    std::vector<T> part;
    for (const auto& [c, f] : n->terms) {
      f.evaluate(x, part);
      for (int k = 0; k < count; ++k) out[k] += c * part[k];
    }
  } else if (const auto* n = std::get_if<typename N::DegreePiece>(&node.data)) {
    std::vector<T> f;
    n->parent.evaluate(x, f);
    const auto g = n->chart.metric(x);
    Mat<T, Dim> lower;
    if (!cholesky(g, lower)) throw GeometryError("metric is not positive definite");
    const Mat<T, Dim> frame = transpose(inverse_lower(lower));  // v = frame * w
    const int m = n->parent.order();
    const auto pieces = harmonic_decomposition(substitute(poly_from_tensor(f, Dim, m), frame));
    out = tensor_from_poly(substitute(pieces[n->k], transpose(lower)));  // w = L^T v
  } else if (const auto* n = std::get_if<typename N::GridValues>(&node.data)) {
    std::array<std::size_t, (1 << Dim)> nodes;
    std::array<T, (1 << Dim)> weights;
    n->grid.stencil(x, nodes, weights);
    const std::size_t stride = n->grid.node_count();
    const auto& vals = *n->values;
    out.assign(count, T(0.0));
    for (int k = 0; k < count; ++k)
      for (int c = 0; c < (1 << Dim); ++c) out[k] += weights[c] * vals[k * stride + nodes[c]];
  } else if (const auto* n = std::get_if<typename N::ScaledBy>(&node.data)) {
    n->parent.evaluate(x, out);
    const T s = n->factor(x);
    for (auto& c : out) c = s * c;
  } else if (const auto* n = std::get_if<typename N::Polynomial>(&node.data)) {
    std::vector<T> basis;
    n->basis.evaluate(x, basis);
    const auto& coef = *n->coefficients;
    const std::size_t nb = basis.size();
    out.assign(count, T(0.0));
    for (int k = 0; k < count; ++k)
      for (std::size_t b = 0; b < nb; ++b) out[k] += coef[k * nb + b] * basis[b];
  }
}

}  // namespace detail

template <int Dim>
SymmetricTensorField<Dim> SymmetricTensorField<Dim>::from_expressions(int order, std::vector<Expression> components) {
  if (order < 0) throw InputError("tensor order must be nonnegative");
  if (static_cast<int>(components.size()) != component_count(Dim, order))
    throw InputError("order-" + std::to_string(order) + " field in dimension " + std::to_string(Dim) + " needs " +
                     std::to_string(component_count(Dim, order)) + " components, got " +
                     std::to_string(components.size()));
  for (const auto& e : components) {
    if (e.dim() != Dim) throw InputError("component expression has the wrong dimension");
    if (e.depends_on_fiber()) throw InputError("tensor components may not depend on v");
  }
  auto node = std::make_shared<FieldNode<Dim>>();
  node->data = typename FieldNode<Dim>::Components{std::move(components)};
  return SymmetricTensorField(order, std::move(node));
}

template <int Dim>
SymmetricTensorField<Dim> SymmetricTensorField<Dim>::from_strings(int order, const std::vector<std::string>& components) {
  std::vector<Expression> exprs;
  for (const auto& s : components) exprs.push_back(Expression::parse(s, Dim));
  return from_expressions(order, std::move(exprs));
}

template <int Dim>
SymmetricTensorField<Dim> SymmetricTensorField<Dim>::zero(int order) {
  return constant(order, std::vector<double>(component_count(Dim, order), 0.0));
}

template <int Dim>
SymmetricTensorField<Dim> SymmetricTensorField<Dim>::constant(int order, const std::vector<double>& values) {
  std::vector<Expression> exprs;
  for (double v : values) exprs.push_back(Expression::constant(v, Dim));
  return from_expressions(order, std::move(exprs));
}

template <int Dim>
SymmetricTensorField<Dim> SymmetricTensorField<Dim>::symmetrize(int order, const std::vector<Expression>& raw) {
  std::size_t expected = 1;
  for (int k = 0; k < order; ++k) expected *= Dim;
  if (raw.size() != expected) throw InputError("raw tensor has the wrong number of entries");
  const auto& set = multi_indices(Dim, order);
  std::vector<std::string> sums(set.size());
  std::vector<int> idx(order, 0);
  for (std::size_t flat = 0; flat < raw.size(); ++flat) {
    std::size_t rem = flat;
    for (int s = order - 1; s >= 0; --s) {
      idx[s] = static_cast<int>(rem % Dim);
      rem /= Dim;
    }
    auto& acc = sums[set.find(idx)];
    acc += (acc.empty() ? "(" : "+(") + raw[flat].source() + ")";
  }
  std::vector<Expression> comps;
  for (int k = 0; k < set.size(); ++k)
    comps.push_back(Expression::parse("(" + sums[k] + ")/" + Expression::format_number(set.multiplicity(k)), Dim));
  return from_expressions(order, std::move(comps));
}

// ---------------------------------------------------------------------------
// Constructors of derived fields.

/// d^s h = sigma nabla h, order m - 1 -> m.
template <int Dim>
SymmetricTensorField<Dim> dsym(const MetricChart<Dim>& chart, const SymmetricTensorField<Dim>& h) {
  auto node = std::make_shared<FieldNode<Dim>>();
  node->data = typename FieldNode<Dim>::Dsym{chart, h};
  return SymmetricTensorField<Dim>(h.order() + 1, std::move(node));
}

/// delta f = g^{jk} f_{..k;j}, order m -> m - 1.
template <int Dim>
SymmetricTensorField<Dim> divergence(const MetricChart<Dim>& chart, const SymmetricTensorField<Dim>& f) {
  if (f.order() < 1) throw InputError("divergence needs order >= 1");
  auto node = std::make_shared<FieldNode<Dim>>();
  node->data = typename FieldNode<Dim>::Divergence{chart, f};
  return SymmetricTensorField<Dim>(f.order() - 1, std::move(node));
}

template <int Dim>
SymmetricTensorField<Dim> linear_combination(std::vector<std::pair<double, SymmetricTensorField<Dim>>> terms) {
  if (terms.empty()) throw InputError("empty linear combination");
  const int order = terms.front().second.order();
  for (const auto& t : terms)
    if (t.second.order() != order) throw InputError("cannot combine fields of different order");
  auto node = std::make_shared<FieldNode<Dim>>();
  node->data = typename FieldNode<Dim>::Combination{std::move(terms)};
  return SymmetricTensorField<Dim>(order, std::move(node));
}

template <int Dim>
SymmetricTensorField<Dim> operator+(const SymmetricTensorField<Dim>& a, const SymmetricTensorField<Dim>& b) {
  return linear_combination<Dim>({{1.0, a}, {1.0, b}});
}
template <int Dim>
SymmetricTensorField<Dim> operator-(const SymmetricTensorField<Dim>& a, const SymmetricTensorField<Dim>& b) {
  return linear_combination<Dim>({{1.0, a}, {-1.0, b}});
}
template <int Dim>
SymmetricTensorField<Dim> operator*(double c, const SymmetricTensorField<Dim>& a) {
  return linear_combination<Dim>({{c, a}});
}

/// chi(x) * f for a scalar expression chi in x1..xd.
template <int Dim>
SymmetricTensorField<Dim> scaled_by(const Expression& chi, const SymmetricTensorField<Dim>& f) {
  if (chi.dim() != Dim || chi.depends_on_fiber()) throw InputError("scaling factor must be a function of x");
  auto node = std::make_shared<FieldNode<Dim>>();
  node->data = typename FieldNode<Dim>::ScaledBy{chi, f};
  return SymmetricTensorField<Dim>(f.order(), std::move(node));
}

template <int Dim>
SymmetricTensorField<Dim> grid_field(const NodeGrid<Dim>& grid, int order, std::vector<double> values) {
  if (values.size() != grid.node_count() * static_cast<std::size_t>(component_count(Dim, order)))
    throw InputError("grid field has the wrong number of values");
  auto node = std::make_shared<FieldNode<Dim>>();
  node->data = typename FieldNode<Dim>::GridValues{grid, std::make_shared<const std::vector<double>>(std::move(values))};
  return SymmetricTensorField<Dim>(order, std::move(node));
}

template <int Dim>
SymmetricTensorField<Dim> polynomial_field(const ChebyshevBasis<Dim>& basis, int order, std::vector<double> coefficients) {
  if (coefficients.size() != static_cast<std::size_t>(basis.size()) * component_count(Dim, order))
    throw InputError("polynomial field has the wrong number of coefficients");
  auto node = std::make_shared<FieldNode<Dim>>();
  node->data =
      typename FieldNode<Dim>::Polynomial{basis, std::make_shared<const std::vector<double>>(std::move(coefficients))};
  return SymmetricTensorField<Dim>(order, std::move(node));
}

/// Pieces f_{m-2k}, k = 0..floor(m/2): trace-free tensors of order m - 2k
/// whose restrictions to SM are vertical-Laplacian eigenfunctions with
/// eigenvalue (m-2k)(m-2k+d-2); they sum to f on SM.
template <int Dim>
std::vector<SymmetricTensorField<Dim>> degree_decompose(const MetricChart<Dim>& chart,
                                                        const SymmetricTensorField<Dim>& f) {
  std::vector<SymmetricTensorField<Dim>> pieces;
  for (int k = 0; 2 * k <= f.order(); ++k) {
    auto node = std::make_shared<FieldNode<Dim>>();
    node->data = typename FieldNode<Dim>::DegreePiece{chart, f, k};
    pieces.emplace_back(f.order() - 2 * k, std::move(node));
  }
  return pieces;
}

template <int Dim>
double evaluate_on_sphere(const SymmetricTensorField<Dim>& f, const Vec<double, Dim>& x, const Vec<double, Dim>& v) {
  return f.on_sphere(x, v);
}

/// Checked variant used by config-driven callers that declare the order.
template <int Dim>
double evaluate_on_sphere(const SymmetricTensorField<Dim>& f, int expected_order, const Vec<double, Dim>& x,
                          const Vec<double, Dim>& v) {
  if (f.order() != expected_order)
    throw InputError("field has order " + std::to_string(f.order()) + ", expected " + std::to_string(expected_order));
  return f.on_sphere(x, v);
}

}  // namespace geotomo
