#pragma once

// Discretisation of the influx boundary: boundary points times inward
// directions kept a fixed angle away from glancing.

#include <cmath>
#include <numbers>
#include <vector>

#include "geotomo/errors.hpp"
#include "geotomo/geometry.hpp"

namespace geotomo {

struct FanSpec {
  int n_boundary = 32;
  int n_directions = 32;
  double margin = 1e-3;

  friend bool operator==(const FanSpec&, const FanSpec&) = default;
};

/// Outward g-unit normal at a boundary point: nu = g^{-1} x / |x|_{g^{-1}}.
template <int Dim>
Vec<double, Dim> outward_normal(const MetricChart<Dim>& chart, const Vec<double, Dim>& x) {
  const auto ginv = inverse(chart.metric(x));
  const auto n = mul(ginv, x);
  return (1.0 / std::sqrt(dot(x, n))) * n;
}

template <int Dim>
Vec<double, Dim> boundary_point(const MetricChart<Dim>& chart, int i, int n) {
  Vec<double, Dim> x{};
  const double r = chart.radius();
  if constexpr (Dim == 2) {
    const double phi = 2.0 * std::numbers::pi * i / n;
    x[0] = r * std::cos(phi);
    x[1] = r * std::sin(phi);
  } else {
    // Fibonacci lattice on the sphere.
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    const double z = 1.0 - (2.0 * i + 1.0) / n;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    x[0] = r * rho * std::cos(golden * i);
    x[1] = r * rho * std::sin(golden * i);
    x[2] = r * z;
  }
  return x;
}

template <int Dim>
struct FanRay {
  Vec<double, Dim> x{};
  Vec<double, Dim> v{};
};

/// n_boundary * n_directions rays, boundary-major order. Every ray satisfies
/// <v, nu>_g < -sin(margin).
template <int Dim>
std::vector<FanRay<Dim>> influx_fan(const MetricChart<Dim>& chart, int n_boundary, int n_directions,
                                    double margin = 1e-3) {
  if (n_boundary < 1 || n_directions < 1) throw InputError("fan counts must be at least 1");
  if (!(margin > 0.0) || margin >= std::numbers::pi / 2) throw InputError("fan margin must lie in (0, pi/2)");
  const double cone = std::numbers::pi / 2 - margin;
  std::vector<FanRay<Dim>> rays;
  rays.reserve(static_cast<std::size_t>(n_boundary) * n_directions);
  for (int i = 0; i < n_boundary; ++i) {
    const auto x = boundary_point(chart, i, n_boundary);
    const auto nu = outward_normal(chart, x);
    const auto frame = adapted_frame(chart.metric(x), nu);
    for (int j = 0; j < n_directions; ++j) {
      Vec<double, Dim> v{};
      if constexpr (Dim == 2) {
        const double alpha = -cone + cone * (2.0 * j + 1.0) / n_directions;
        for (int k = 0; k < Dim; ++k) v[k] = -std::cos(alpha) * nu[k] + std::sin(alpha) * frame[k][1];
      } else {
        // Equal-area rings inside the cone, golden-angle azimuths.
        const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
        const double cos_a =
            n_directions == 1 ? 1.0 : 1.0 - (1.0 - std::cos(cone)) * (j + 0.5) / n_directions;
        const double sin_a = std::sqrt(std::max(0.0, 1.0 - cos_a * cos_a));
        const double psi = golden * j;
        for (int k = 0; k < Dim; ++k)
          v[k] = -cos_a * nu[k] + sin_a * (std::cos(psi) * frame[k][1] + std::sin(psi) * frame[k][2]);
      }
      rays.push_back({x, v});
    }
  }
  return rays;
}

template <int Dim>
std::vector<FanRay<Dim>> influx_fan(const MetricChart<Dim>& chart, const FanSpec& spec) {
  return influx_fan(chart, spec.n_boundary, spec.n_directions, spec.margin);
}

}  // namespace geotomo
