#pragma once

// Symmetric multi-index bookkeeping and homogeneous polynomials in d
// variables. A symmetric m-tensor f corresponds to the degree-m polynomial
// v -> f_{i_1..i_m} v^{i_1}..v^{i_m}; the coefficient of the monomial with
// sorted index I is multiplicity(I) * f_I.

#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

#include "geotomo/dual.hpp"
#include "geotomo/errors.hpp"
#include "geotomo/linalg.hpp"

namespace geotomo {

class MultiIndexSet {
 public:
  MultiIndexSet(int dim, int order) : dim_(dim), order_(order) {
    if (dim < 1 || dim > 3) throw InputError("multi-index dimension must be 1..3");
    if (order < 0) throw InputError("tensor order must be nonnegative");
    std::vector<int> current(order, 0);
    build(current, 0, 0);
    table_.assign(code_size(), -1);
    for (std::size_t k = 0; k < indices_.size(); ++k) table_[code(exponents_[k])] = static_cast<int>(k);
  }

  int dim() const { return dim_; }
  int order() const { return order_; }
  int size() const { return static_cast<int>(indices_.size()); }

  /// Sorted (nondecreasing) index list of entry k.
  const std::vector<int>& index(int k) const { return indices_[k]; }
  /// exponent(k)[a] = number of occurrences of a in index(k).
  const std::array<int, 3>& exponent(int k) const { return exponents_[k]; }
  /// m! / prod(counts!): number of distinct permutations of index(k).
  double multiplicity(int k) const { return multiplicity_[k]; }

  int find_exponent(const std::array<int, 3>& e) const { return table_[code(e)]; }

  /// Position of an arbitrary (unsorted) index list.
  template <class Range>
  int find(const Range& idx) const {
    std::array<int, 3> e{};
    int n = 0;
    for (int i : idx) {
      if (i < 0 || i >= dim_) throw InputError("tensor index out of range");
      ++e[i];
      ++n;
    }
    if (n != order_) throw InputError("tensor index has the wrong length");
    return find_exponent(e);
  }

 private:
  void build(std::vector<int>& cur, int pos, int start) {
    if (pos == order_) {
      indices_.push_back(cur);
      std::array<int, 3> e{};
      for (int i : cur) ++e[i];
      exponents_.push_back(e);
      double mult = 1.0;
      for (int k = 2; k <= order_; ++k) mult *= k;
      for (int a = 0; a < 3; ++a)
        for (int k = 2; k <= e[a]; ++k) mult /= k;
      multiplicity_.push_back(mult);
      return;
    }
    for (int i = start; i < dim_; ++i) {
      cur[pos] = i;
      build(cur, pos + 1, i);
    }
  }
  std::size_t code_size() const {
    std::size_t s = 1;
    for (int a = 0; a < dim_; ++a) s *= static_cast<std::size_t>(order_ + 1);
    return s;
  }
  std::size_t code(const std::array<int, 3>& e) const {
    std::size_t c = 0;
    for (int a = 0; a < dim_; ++a) c = c * static_cast<std::size_t>(order_ + 1) + static_cast<std::size_t>(e[a]);
    return c;
  }

  int dim_;
  int order_;
  std::vector<std::vector<int>> indices_;
  std::vector<std::array<int, 3>> exponents_;
  std::vector<double> multiplicity_;
  std::vector<int> table_;
};

/// Shared, immutable multi-index set for (dim, order).
inline const MultiIndexSet& multi_indices(int dim, int order) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::unique_ptr<MultiIndexSet>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[{dim, order}];
  if (!slot) slot = std::make_unique<MultiIndexSet>(dim, order);
  return *slot;
}

/// Number of independent components C(d + m - 1, m).
inline int component_count(int dim, int order) { return multi_indices(dim, order).size(); }

/// Averages a dense raw tensor (row-major d^m array) over all index
/// permutations; returns one value per sorted multi-index.
inline std::vector<double> symmetrize_components(const std::vector<double>& raw, int dim, int order) {
  std::size_t expected = 1;
  for (int k = 0; k < order; ++k) expected *= static_cast<std::size_t>(dim);
  if (raw.size() != expected) throw InputError("raw tensor has the wrong number of entries");
  const auto& set = multi_indices(dim, order);
  std::vector<double> sum(set.size(), 0.0);
  std::vector<int> idx(order, 0);
  for (std::size_t flat = 0; flat < raw.size(); ++flat) {
    std::size_t rem = flat;
    for (int s = order - 1; s >= 0; --s) {
      idx[s] = static_cast<int>(rem % dim);
      rem /= dim;
    }
    sum[set.find(idx)] += raw[flat];
  }
  for (int k = 0; k < set.size(); ++k) sum[k] /= set.multiplicity(k);
  return sum;
}

/// Expands symmetric components back into a dense raw tensor.
inline std::vector<double> dense_components(const std::vector<double>& sym, int dim, int order) {
  const auto& set = multi_indices(dim, order);
  if (static_cast<int>(sym.size()) != set.size()) throw InputError("symmetric tensor has the wrong size");
  std::size_t total = 1;
  for (int k = 0; k < order; ++k) total *= static_cast<std::size_t>(dim);
  std::vector<double> raw(total);
  std::vector<int> idx(order, 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (int s = order - 1; s >= 0; --s) {
      idx[s] = static_cast<int>(rem % dim);
      rem /= dim;
    }
    raw[flat] = sym[set.find(idx)];
  }
  return raw;
}

// ---------------------------------------------------------------------------
// Homogeneous polynomials, coefficients indexed like MultiIndexSet(dim, degree).

template <class T>
struct HomogeneousPoly {
  int dim = 0;
  int degree = 0;
  std::vector<T> coef;

  HomogeneousPoly() = default;
  HomogeneousPoly(int d, int n) : dim(d), degree(n), coef(multi_indices(d, n).size(), T(0.0)) {}
};

template <class T>
HomogeneousPoly<T> operator+(HomogeneousPoly<T> a, const HomogeneousPoly<T>& b) {
  for (std::size_t k = 0; k < a.coef.size(); ++k) a.coef[k] += b.coef[k];
  return a;
}
template <class T>
HomogeneousPoly<T> operator-(HomogeneousPoly<T> a, const HomogeneousPoly<T>& b) {
  for (std::size_t k = 0; k < a.coef.size(); ++k) a.coef[k] -= b.coef[k];
  return a;
}
template <class T>
HomogeneousPoly<T> operator*(double c, HomogeneousPoly<T> a) {
  for (auto& x : a.coef) x = c * x;
  return a;
}

/// Euclidean Laplacian, degree n -> n - 2.
template <class T>
HomogeneousPoly<T> laplacian(const HomogeneousPoly<T>& p) {
  if (p.degree < 2) return HomogeneousPoly<T>(p.dim, std::max(0, p.degree - 2));
  HomogeneousPoly<T> r(p.dim, p.degree - 2);
  const auto& src = multi_indices(p.dim, p.degree);
  const auto& dst = multi_indices(p.dim, p.degree - 2);
  for (int k = 0; k < src.size(); ++k) {
    const auto& e = src.exponent(k);
    for (int a = 0; a < p.dim; ++a) {
      if (e[a] < 2) continue;
      auto f = e;
      f[a] -= 2;
      r.coef[dst.find_exponent(f)] += static_cast<double>(e[a] * (e[a] - 1)) * p.coef[k];
    }
  }
  return r;
}

/// Multiplication by |w|^2, degree n -> n + 2.
template <class T>
HomogeneousPoly<T> times_norm2(const HomogeneousPoly<T>& p) {
  HomogeneousPoly<T> r(p.dim, p.degree + 2);
  const auto& src = multi_indices(p.dim, p.degree);
  const auto& dst = multi_indices(p.dim, p.degree + 2);
  for (int k = 0; k < src.size(); ++k)
    for (int a = 0; a < p.dim; ++a) {
      auto f = src.exponent(k);
      f[a] += 2;
      r.coef[dst.find_exponent(f)] += p.coef[k];
    }
  return r;
}

/// q(w) = p(A w) for a d x d matrix A.
template <class T, int D>
HomogeneousPoly<T> substitute(const HomogeneousPoly<T>& p, const Mat<T, D>& a) {
  // Expand monomial by monomial: prod_s (sum_b A[i_s][b] w_b).
  const auto& src = multi_indices(D, p.degree);
  HomogeneousPoly<T> r(D, p.degree);
  const auto& dst = multi_indices(D, p.degree);
  for (int k = 0; k < src.size(); ++k) {
    const auto& idx = src.index(k);
    // Running product as a polynomial of growing degree.
    std::vector<T> cur{p.coef[k]};
    int deg = 0;
    for (int i : idx) {
      const auto& from = multi_indices(D, deg);
      const auto& to = multi_indices(D, deg + 1);
      std::vector<T> next(to.size(), T(0.0));
      for (int q = 0; q < from.size(); ++q)
        for (int b = 0; b < D; ++b) {
          auto f = from.exponent(q);
          ++f[b];
          next[to.find_exponent(f)] += a[i][b] * cur[q];
        }
      cur = std::move(next);
      ++deg;
    }
    for (int q = 0; q < dst.size(); ++q) r.coef[q] += cur[q];
  }
  return r;
}

template <class T>
HomogeneousPoly<T> poly_from_tensor(const std::vector<T>& sym, int dim, int order) {
  const auto& set = multi_indices(dim, order);
  HomogeneousPoly<T> p(dim, order);
  for (int k = 0; k < set.size(); ++k) p.coef[k] = set.multiplicity(k) * sym[k];
  return p;
}

template <class T>
std::vector<T> tensor_from_poly(const HomogeneousPoly<T>& p) {
  const auto& set = multi_indices(p.dim, p.degree);
  std::vector<T> sym(p.coef.size());
  for (int k = 0; k < set.size(); ++k) sym[k] = p.coef[k] / set.multiplicity(k);
  return sym;
}

template <class T, int D>
T evaluate_poly(const HomogeneousPoly<T>& p, const Vec<T, D>& w) {
  const auto& set = multi_indices(D, p.degree);
  T s(0.0);
  for (int k = 0; k < set.size(); ++k) {
    T term = p.coef[k];
    for (int i : set.index(k)) term = term * w[i];
    s += term;
  }
  return s;
}

/// Decomposes p = sum_k |w|^{2k} H_k with H_k harmonic of degree n - 2k.
/// Returns H_0, H_1, .. in that order.
template <class T>
std::vector<HomogeneousPoly<T>> harmonic_decomposition(const HomogeneousPoly<T>& p) {
  std::vector<HomogeneousPoly<T>> pieces;
  HomogeneousPoly<T> rest = p;
  const int n = p.dim;
  while (true) {
    const int q = rest.degree;
    // H = sum_j c_j |w|^{2j} Lap^j P, c_0 = 1,
    // c_{j+1} = -c_j / (2 (j+1) (n + 2q - 2j - 4)).
    std::vector<HomogeneousPoly<T>> laps{rest};
    for (int j = 1; 2 * j <= q; ++j) laps.push_back(laplacian(laps.back()));
    std::vector<double> c{1.0};
    for (int j = 0; 2 * (j + 1) <= q; ++j) c.push_back(-c[j] / (2.0 * (j + 1) * (n + 2 * q - 2 * j - 4)));
    HomogeneousPoly<T> harmonic = rest;
    // quotient = (rest - harmonic) / |w|^2 = -sum_{j>=1} c_j |w|^{2j-2} Lap^j P
    HomogeneousPoly<T> quotient(n, std::max(0, q - 2));
    for (std::size_t j = 1; j < c.size(); ++j) {
      HomogeneousPoly<T> term = laps[j];
      for (std::size_t k = 1; k < j; ++k) term = times_norm2(term);
      quotient = quotient - c[j] * term;
      harmonic = harmonic + c[j] * times_norm2(term);
    }
    pieces.push_back(std::move(harmonic));
    if (q < 2) break;
    rest = std::move(quotient);
  }
  return pieces;
}

}  // namespace geotomo
