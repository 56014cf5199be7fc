#pragma once

// Uniform Cartesian node grid over the bounding box [-r, r]^d of the chart,
// with multilinear interpolation usable on any scalar type.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "geotomo/dual.hpp"
#include "geotomo/errors.hpp"
#include "geotomo/linalg.hpp"

namespace geotomo {

template <int Dim>
class NodeGrid {
 public:
  NodeGrid() = default;
  NodeGrid(double radius, int nodes_per_axis) : radius_(radius), n_(nodes_per_axis) {
    if (!(radius > 0.0)) throw InputError("grid radius must be positive");
    if (nodes_per_axis < 3) throw InputError("grid needs at least 3 nodes per axis");
    h_ = 2.0 * radius_ / (n_ - 1);
  }

  double radius() const { return radius_; }
  int nodes_per_axis() const { return n_; }
  double spacing() const { return h_; }
  std::size_t node_count() const {
    std::size_t c = 1;
    for (int a = 0; a < Dim; ++a) c *= static_cast<std::size_t>(n_);
    return c;
  }

  std::size_t flat(const std::array<int, Dim>& ijk) const {
    std::size_t f = 0;
    for (int a = 0; a < Dim; ++a) f = f * static_cast<std::size_t>(n_) + static_cast<std::size_t>(ijk[a]);
    return f;
  }
  std::array<int, Dim> unflat(std::size_t f) const {
    std::array<int, Dim> ijk{};
    for (int a = Dim - 1; a >= 0; --a) {
      ijk[a] = static_cast<int>(f % static_cast<std::size_t>(n_));
      f /= static_cast<std::size_t>(n_);
    }
    return ijk;
  }
  Vec<double, Dim> node(std::size_t f) const {
    const auto ijk = unflat(f);
    Vec<double, Dim> x{};
    for (int a = 0; a < Dim; ++a) x[a] = -radius_ + h_ * ijk[a];
    return x;
  }

  /// Multilinear stencil at x: corner node indices and weights. Points
  /// outside the box are clamped to the boundary cell.
  template <Scalar T>
  void stencil(const Vec<T, Dim>& x, std::array<std::size_t, (1 << Dim)>& nodes,
               std::array<T, (1 << Dim)>& weights) const {
    std::array<int, Dim> base{};
    std::array<T, Dim> frac{};
    for (int a = 0; a < Dim; ++a) {
      const T s = (x[a] + radius_) / h_;
      int i = static_cast<int>(std::floor(value_of(s)));
      i = std::clamp(i, 0, n_ - 2);
      base[a] = i;
      frac[a] = s - static_cast<double>(i);
    }
    for (int c = 0; c < (1 << Dim); ++c) {
      std::array<int, Dim> ijk{};
      T w(1.0);
      for (int a = 0; a < Dim; ++a) {
        const int bit = (c >> a) & 1;
        ijk[a] = base[a] + bit;
        w = w * (bit ? frac[a] : 1.0 - frac[a]);
      }
      nodes[c] = flat(ijk);
      weights[c] = w;
    }
  }

  friend bool operator==(const NodeGrid& a, const NodeGrid& b) { return a.radius_ == b.radius_ && a.n_ == b.n_; }

 private:
  double radius_ = 1.0;
  int n_ = 3;
  double h_ = 1.0;
};

}  // namespace geotomo
