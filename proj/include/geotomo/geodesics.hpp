#pragma once

// Geodesic flow on the unit sphere bundle: fixed-step RK4 with per-step
// renormalisation, exit times, beta-Jacobi fields and conjugate points.

#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "geotomo/errors.hpp"
#include "geotomo/fan.hpp"
#include "geotomo/geometry.hpp"
#include "geotomo/linalg.hpp"
#include "geotomo/parallel.hpp"

namespace geotomo {

template <int Dim>
struct PhasePoint {
  Vec<double, Dim> x{};
  Vec<double, Dim> v{};
};

/// Rescales v to unit g-length at x.
template <int Dim>
PhasePoint<Dim> make_phase_point(const MetricChart<Dim>& chart, const Vec<double, Dim>& x, Vec<double, Dim> v) {
  const double n = std::sqrt(inner(chart.metric(x), v, v));
  if (!(n > 0.0)) throw InputError("zero tangent vector");
  for (auto& c : v) c /= n;
  return {x, v};
}

template <int Dim>
struct GeodesicPath {
  double dt = 0.0;
  std::vector<double> times;
  std::vector<PhasePoint<Dim>> points;
  double tau = 0.0;
};

inline double resolve_dt(double radius, double dt) { return dt > 0.0 ? dt : 1e-3 * radius; }

template <int Dim>
double default_max_time(const MetricChart<Dim>& chart) {
  return 10.0 * chart.diameter_estimate();
}

namespace detail {

template <int Dim>
Vec<double, Dim> geodesic_acceleration(const MetricChart<Dim>& chart, const Vec<double, Dim>& x,
                                       const Vec<double, Dim>& v) {
  const auto gamma = christoffel_symbols(chart, x);
  Vec<double, Dim> a{};
  for (int l = 0; l < Dim; ++l) a[l] = -inner(gamma[l], v, v);
  return a;
}

template <int Dim>
void renormalize(const MetricChart<Dim>& chart, PhasePoint<Dim>& p) {
  const double n = std::sqrt(inner(chart.metric(p.x), p.v, p.v));
  for (auto& c : p.v) c /= n;
}

/// One classical RK4 step of x'' = -Gamma(x)(x', x') followed by renormalisation.
template <int Dim>
PhasePoint<Dim> rk4_step(const MetricChart<Dim>& chart, const PhasePoint<Dim>& p, double h) {
  const auto& x = p.x;
  const auto& v = p.v;
  const auto k1x = v;
  const auto k1v = geodesic_acceleration(chart, x, v);
  const auto x2 = x + (0.5 * h) * k1x;
  const auto v2 = v + (0.5 * h) * k1v;
  const auto k2v = geodesic_acceleration(chart, x2, v2);
  const auto x3 = x + (0.5 * h) * v2;
  const auto v3 = v + (0.5 * h) * k2v;
  const auto k3v = geodesic_acceleration(chart, x3, v3);
  const auto x4 = x + h * v3;
  const auto v4 = v + h * k3v;
  const auto k4v = geodesic_acceleration(chart, x4, v4);
  PhasePoint<Dim> out;
  for (int i = 0; i < Dim; ++i) {
    out.x[i] = x[i] + h / 6.0 * (k1x[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]);
    out.v[i] = v[i] + h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
  }
  renormalize(chart, out);
  return out;
}

/// Time s in (0, h] at which a single step from p crosses |x| = radius.
template <int Dim>
double bisect_crossing(const MetricChart<Dim>& chart, const PhasePoint<Dim>& p, double h) {
  double lo = 0.0, hi = h;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, h); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (norm(rk4_step(chart, p, mid).x) > chart.radius())
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

template <int Dim>
bool leaves_outward(const MetricChart<Dim>& chart, const PhasePoint<Dim>& p) {
  return norm(p.x) >= chart.radius() * (1.0 - 1e-10) && dot(p.x, p.v) >= 0.0;
}

}  // namespace detail

/// Geodesic flow phi_t. Negative t flows backwards via the reversed vector.
template <int Dim>
PhasePoint<Dim> flow(const MetricChart<Dim>& chart, const PhasePoint<Dim>& p, double t, double dt = 0.0) {
  if (t == 0.0) return p;
  if (t < 0.0) {
    auto q = flow(chart, PhasePoint<Dim>{p.x, -p.v}, -t, dt);
    q.v = -q.v;
    return q;
  }
  const double h = resolve_dt(chart.radius(), dt);
  const double limit = chart.radius() * (1.0 + 1e-9);
  const auto steps = static_cast<long>(std::floor(t / h));
  const double rest = t - static_cast<double>(steps) * h;
  PhasePoint<Dim> state = p;
  double time = 0.0;
  auto advance = [&](double step) {
    auto next = detail::rk4_step(chart, state, step);
    if (norm(next.x) > limit) {
      const double s = detail::bisect_crossing(chart, state, step);
      throw ExitError("geodesic leaves the chart before the requested time", time + s);
    }
    state = next;
    time += step;
  };
  for (long k = 0; k < steps; ++k) advance(h);
  if (rest > 0.0) advance(rest);
  return state;
}

/// Builds the sampled geodesic from p up to its exit time.
template <int Dim>
GeodesicPath<Dim> geodesic_path(const MetricChart<Dim>& chart, const PhasePoint<Dim>& p, double dt = 0.0,
                                double max_time = 0.0) {
  if (!chart.contains(p.x, 1e-9)) throw DomainError("geodesic start point outside the chart");
  GeodesicPath<Dim> path;
  path.dt = resolve_dt(chart.radius(), dt);
  path.times.push_back(0.0);
  path.points.push_back(p);
  if (detail::leaves_outward(chart, p)) return path;
  const double t_max = max_time > 0.0 ? max_time : default_max_time(chart);
  PhasePoint<Dim> state = p;
  double t = 0.0;
  while (t < t_max) {
    auto next = detail::rk4_step(chart, state, path.dt);
    if (norm(next.x) > chart.radius()) {
      const double s = detail::bisect_crossing(chart, state, path.dt);
      path.tau = t + s;
      path.times.push_back(path.tau);
      path.points.push_back(detail::rk4_step(chart, state, s));
      return path;
    }
    state = next;
    t += path.dt;
    path.times.push_back(t);
    path.points.push_back(state);
  }
  throw TrappedGeodesicError("no boundary crossing within the maximal time");
}

/// tau(x, v): first time the geodesic reaches |x| = radius.
template <int Dim>
double exit_time(const MetricChart<Dim>& chart, const PhasePoint<Dim>& p, double dt = 0.0, double max_time = 0.0) {
  if (!chart.contains(p.x, 1e-9)) throw DomainError("exit_time start point outside the chart");
  if (detail::leaves_outward(chart, p)) return 0.0;
  const double h = resolve_dt(chart.radius(), dt);
  const double t_max = max_time > 0.0 ? max_time : default_max_time(chart);
  PhasePoint<Dim> state = p;
  double t = 0.0;
  while (t < t_max) {
    auto next = detail::rk4_step(chart, state, h);
    if (norm(next.x) > chart.radius()) return t + detail::bisect_crossing(chart, state, h);
    state = next;
    t += h;
  }
  throw TrappedGeodesicError("no boundary crossing within the maximal time");
}

// ---------------------------------------------------------------------------
// beta-Jacobi fields: D_t^2 J + beta R(J, gamma') gamma' = 0, integrated in a
// parallel orthonormal frame {gamma', e_1, .., e_{d-1}} along the geodesic.

namespace detail {

template <int Dim, int Cols>
struct JacobiState {
  PhasePoint<Dim> p;
  std::array<Vec<double, Dim>, Dim - 1> frame{};
  // a[c][0] is the component along gamma', a[c][b] along e_b.
  std::array<Vec<double, Dim>, Cols> a{};
  std::array<Vec<double, Dim>, Cols> ad{};
};

template <int Dim, int Cols>
JacobiState<Dim, Cols> axpy(const JacobiState<Dim, Cols>& s, double h, const JacobiState<Dim, Cols>& k) {
  JacobiState<Dim, Cols> r = s;
  for (int i = 0; i < Dim; ++i) {
    r.p.x[i] += h * k.p.x[i];
    r.p.v[i] += h * k.p.v[i];
    for (int b = 0; b < Dim - 1; ++b) r.frame[b][i] += h * k.frame[b][i];
    for (int c = 0; c < Cols; ++c) {
      r.a[c][i] += h * k.a[c][i];
      r.ad[c][i] += h * k.ad[c][i];
    }
  }
  return r;
}

template <int Dim, int Cols>
JacobiState<Dim, Cols> jacobi_rhs(const MetricChart<Dim>& chart, double beta, const JacobiState<Dim, Cols>& s) {
  JacobiState<Dim, Cols> ds{};
  const auto& x = s.p.x;
  const auto& v = s.p.v;
  const auto gamma = christoffel_symbols(chart, x);
  ds.p.x = v;
  for (int l = 0; l < Dim; ++l) {
    ds.p.v[l] = -inner(gamma[l], v, v);
    for (int b = 0; b < Dim - 1; ++b) ds.frame[b][l] = -inner(gamma[l], v, s.frame[b]);
  }
  const auto g = chart.metric(x);
  const auto m = curvature_matrix(chart, x, v);
  std::array<std::array<double, Dim - 1>, Dim - 1> k{};
  for (int a = 0; a < Dim - 1; ++a)
    for (int b = 0; b < Dim - 1; ++b) k[a][b] = inner(g, s.frame[a], mul(m, s.frame[b]));
  for (int c = 0; c < Cols; ++c) {
    ds.a[c] = s.ad[c];
    ds.ad[c][0] = 0.0;
    for (int a = 0; a < Dim - 1; ++a) {
      double acc = 0.0;
      for (int b = 0; b < Dim - 1; ++b) acc += k[a][b] * s.a[c][b + 1];
      ds.ad[c][a + 1] = -beta * acc;
    }
  }
  return ds;
}

template <int Dim, int Cols>
void reorthonormalize(const MetricChart<Dim>& chart, JacobiState<Dim, Cols>& s) {
  renormalize(chart, s.p);
  const auto g = chart.metric(s.p.x);
  for (int b = 0; b < Dim - 1; ++b) {
    auto& e = s.frame[b];
    const double cv = inner(g, e, s.p.v);
    for (int i = 0; i < Dim; ++i) e[i] -= cv * s.p.v[i];
    for (int b2 = 0; b2 < b; ++b2) {
      const double c = inner(g, e, s.frame[b2]);
      for (int i = 0; i < Dim; ++i) e[i] -= c * s.frame[b2][i];
    }
    const double n = std::sqrt(inner(g, e, e));
    for (auto& c : e) c /= n;
  }
}

template <int Dim, int Cols>
JacobiState<Dim, Cols> jacobi_step(const MetricChart<Dim>& chart, double beta, const JacobiState<Dim, Cols>& s,
                                   double h) {
  const auto k1 = jacobi_rhs(chart, beta, s);
  const auto k2 = jacobi_rhs(chart, beta, axpy(s, 0.5 * h, k1));
  const auto k3 = jacobi_rhs(chart, beta, axpy(s, 0.5 * h, k2));
  const auto k4 = jacobi_rhs(chart, beta, axpy(s, h, k3));
  auto r = axpy(s, h / 6.0, k1);
  r = axpy(r, h / 3.0, k2);
  r = axpy(r, h / 3.0, k3);
  r = axpy(r, h / 6.0, k4);
  reorthonormalize(chart, r);
  return r;
}

template <int Dim, int Cols>
JacobiState<Dim, Cols> initial_jacobi_state(const MetricChart<Dim>& chart, const PhasePoint<Dim>& p) {
  JacobiState<Dim, Cols> s{};
  s.p = p;
  const auto frame = adapted_frame(chart.metric(p.x), p.v);
  for (int b = 0; b < Dim - 1; ++b)
    for (int i = 0; i < Dim; ++i) s.frame[b][i] = frame[i][b + 1];
  return s;
}

/// Determinant of the transverse block of the Jacobi matrix.
template <int Dim>
double transverse_det(const JacobiState<Dim, Dim - 1>& s) {
  if constexpr (Dim == 2) {
    return s.a[0][1];
  } else {
    return s.a[0][1] * s.a[1][2] - s.a[1][1] * s.a[0][2];
  }
}

}  // namespace detail

template <int Dim>
struct JacobiField {
  std::vector<double> times;
  std::vector<Vec<double, Dim>> values;
  std::vector<double> norms;
};

/// Solves the beta-Jacobi equation along `path` with J(0) = j0, D_t J(0) = j0dot.
template <int Dim>
JacobiField<Dim> beta_jacobi(const MetricChart<Dim>& chart, const GeodesicPath<Dim>& path, double beta,
                             const Vec<double, Dim>& j0, const Vec<double, Dim>& j0dot) {
  if (path.points.size() < 3) throw InputError("beta_jacobi needs a path with at least two steps");
  auto s = detail::initial_jacobi_state<Dim, 1>(chart, path.points.front());
  {
    const auto g = chart.metric(s.p.x);
    s.a[0][0] = inner(g, j0, s.p.v);
    s.ad[0][0] = inner(g, j0dot, s.p.v);
    for (int b = 0; b < Dim - 1; ++b) {
      s.a[0][b + 1] = inner(g, j0, s.frame[b]);
      s.ad[0][b + 1] = inner(g, j0dot, s.frame[b]);
    }
  }
  JacobiField<Dim> out;
  auto record = [&](double t) {
    Vec<double, Dim> j{};
    for (int i = 0; i < Dim; ++i) {
      j[i] = s.a[0][0] * s.p.v[i];
      for (int b = 0; b < Dim - 1; ++b) j[i] += s.a[0][b + 1] * s.frame[b][i];
    }
    out.times.push_back(t);
    out.values.push_back(j);
    out.norms.push_back(std::sqrt(inner(chart.metric(s.p.x), j, j)));
  };
  record(0.0);
  for (std::size_t k = 1; k < path.times.size(); ++k) {
    const double h = path.times[k] - path.times[k - 1];
    if (h <= 0.0) continue;
    s = detail::jacobi_step(chart, beta, s, h);
    record(path.times[k]);
  }
  return out;
}

template <int Dim>
struct ConjugateSearch {
  std::optional<double> conjugate_time;
  double exit_time = 0.0;
  /// min over t of |det A(t)| / t^{d-1}; equals 1 for flat metrics.
  double focusing_margin = std::numeric_limits<double>::infinity();
};

/// Integrates the transverse Jacobi matrix A(t), A(0) = 0, A'(0) = I, along
/// the geodesic from p and reports the first zero of det A before exit.
template <int Dim>
ConjugateSearch<Dim> first_conjugate_time(const MetricChart<Dim>& chart, const PhasePoint<Dim>& p, double beta,
                                          double dt = 0.0, double max_time = 0.0) {
  constexpr int Cols = Dim - 1;
  const double h = resolve_dt(chart.radius(), dt);
  const double t_max = max_time > 0.0 ? max_time : default_max_time(chart);
  auto s = detail::initial_jacobi_state<Dim, Cols>(chart, p);
  for (int c = 0; c < Cols; ++c) s.ad[c][c + 1] = 1.0;
  ConjugateSearch<Dim> result;
  if (detail::leaves_outward(chart, p)) return result;

  auto refine = [&](const detail::JacobiState<Dim, Cols>& from, double t0, double step) {
    const double d0 = detail::transverse_det(from);
    double lo = 0.0, hi = step;
    for (int it = 0; it < 100 && hi - lo > 1e-14; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double dm = detail::transverse_det(detail::jacobi_step(chart, beta, from, mid));
      if ((dm > 0.0) == (d0 > 0.0) && std::abs(dm) >= 1e-10)
        lo = mid;
      else
        hi = mid;
    }
    return t0 + 0.5 * (lo + hi);
  };
  // Sign changes catch odd-order zeros of det A. Even-order zeros (all
  // transverse fields vanishing together, as on constant curvature in d = 3)
  // show up as a local minimum of |det A| whose parabolic fit touches zero.
  double t_prev = -1.0, d_prev = 0.0;
  auto check = [&](const detail::JacobiState<Dim, Cols>& from, const detail::JacobiState<Dim, Cols>& to, double t0,
                   double step) -> bool {
    const double d0 = detail::transverse_det(from);
    const double d1 = detail::transverse_det(to);
    const double t1 = t0 + step;
    result.focusing_margin = std::min(result.focusing_margin, std::abs(d1) / std::pow(t1, Dim - 1));
    const bool started = t0 > 0.0;
    if ((started && d0 * d1 < 0.0) || std::abs(d1) < 1e-10) {
      result.conjugate_time = started ? refine(from, t0, step) : t1;
      return true;
    }
    if (t_prev > 0.0 && std::abs(d0) < std::abs(d_prev) && std::abs(d0) <= std::abs(d1) && d_prev * d0 > 0.0) {
      // Quadratic through (t_prev, d_prev), (t0, d0), (t1, d1).
      const double h0 = t0 - t_prev, h1 = t1 - t0;
      const double s0 = (d0 - d_prev) / h0, s1 = (d1 - d0) / h1;
      const double c2 = (s1 - s0) / (h0 + h1);
      const double c1 = s0 + c2 * h0;  // slope at t0
      if (c2 * d0 > 0.0) {
        const double shift = -c1 / (2.0 * c2);
        const double lowest = d0 - c1 * c1 / (4.0 * c2);
        const double scale = std::abs(c2) * h0 * h1;
        if (lowest * d0 <= 0.0 || std::abs(lowest) <= std::max(1e-10, 1e-2 * scale)) {
          result.conjugate_time = t0 + shift;
          return true;
        }
      }
    }
    t_prev = t0;
    d_prev = d0;
    return false;
  };

  double t = 0.0;
  while (t < t_max) {
    auto next = detail::jacobi_step(chart, beta, s, h);
    if (norm(next.p.x) > chart.radius()) {
      const double rest = detail::bisect_crossing(chart, s.p, h);
      result.exit_time = t + rest;
      if (rest > 0.0) {
        auto last = detail::jacobi_step(chart, beta, s, rest);
        check(s, last, t, rest);
      }
      if (result.conjugate_time && *result.conjugate_time > result.exit_time) result.conjugate_time.reset();
      return result;
    }
    if (check(s, next, t, h)) {
      result.exit_time = exit_time(chart, p, dt, max_time);
      return result;
    }
    s = next;
    t += h;
  }
  throw TrappedGeodesicError("no boundary crossing within the maximal time");
}

/// (beta1, beta2) = (m(d+m)/(d+2m-1), m(d+m-1)/(d+2m-2)).
inline std::pair<double, double> beta_thresholds(int d, int m) {
  if (d < 2) throw InputError("beta thresholds need d >= 2");
  if (m < 1) throw InputError("beta thresholds need m >= 1");
  const double b1 = static_cast<double>(m * (d + m)) / static_cast<double>(d + 2 * m - 1);
  const double b2 = static_cast<double>(m * (d + m - 1)) / static_cast<double>(d + 2 * m - 2);
  return {b1, b2};
}

struct ConjugateReport {
  double beta = 0.0;
  bool free = true;
  /// Ray with the earliest conjugate time, or with the smallest focusing
  /// margin when the fan is conjugate-free.
  std::size_t worst_ray = 0;
  std::optional<double> t_conj;
  std::size_t rays_checked = 0;
  double min_focusing_margin = std::numeric_limits<double>::infinity();
};

/// Runs first_conjugate_time over every ray of the fan.
template <int Dim>
ConjugateReport is_beta_conjugate_free(const MetricChart<Dim>& chart, double beta, const FanSpec& fan = {},
                                       double dt = 0.0) {
  if (!(beta >= 0.0)) throw InputError("beta must be nonnegative");
  const auto rays = influx_fan(chart, fan);
  std::vector<ConjugateSearch<Dim>> results(rays.size());
  parallel_for(rays.size(), [&](std::size_t i) {
    results[i] = first_conjugate_time(chart, make_phase_point(chart, rays[i].x, rays[i].v), beta, dt);
  });
  ConjugateReport report;
  report.beta = beta;
  report.rays_checked = rays.size();
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (r.conjugate_time) {
      if (!report.t_conj || *r.conjugate_time < *report.t_conj) {
        report.t_conj = r.conjugate_time;
        report.worst_ray = i;
      }
      report.free = false;
    } else if (report.free && r.focusing_margin < report.min_focusing_margin) {
      report.worst_ray = i;
    }
    report.min_focusing_margin = std::min(report.min_focusing_margin, r.focusing_margin);
  }
  return report;
}

/// Second fundamental form of the boundary sphere |x| = r in direction w
/// (tangent to the boundary, g-unit), with the outward orientation. Positive
/// values mean strictly convex.
template <int Dim>
double second_fundamental_form(const MetricChart<Dim>& chart, const Vec<double, Dim>& x, const Vec<double, Dim>& w) {
  // rho = |x|^2 - r^2; Hess rho(w, w) = 2|w|^2 - 2 Gamma^l_{jk} w^j w^k x_l.
  const auto gamma = christoffel_symbols(chart, x);
  double hess = 2.0 * dot(w, w);
  for (int l = 0; l < Dim; ++l) hess -= 2.0 * inner(gamma[l], w, w) * x[l];
  const auto ginv = inverse(chart.metric(x));
  const double grad = 2.0 * std::sqrt(inner(ginv, x, x));
  return hess / grad;
}

struct SimplicityReport {
  bool convex = false;
  double min_second_fundamental_form = 0.0;
  bool conjugate_free = false;
  ConjugateReport conjugate;
  bool untrapped = false;
  std::size_t trapped_rays = 0;
  bool pass() const { return convex && conjugate_free && untrapped; }
};

/// Partial simplicity checks: boundary convexity, ordinary conjugate points
/// on the fan, and trapping on the fan. Never throws on a failed check.
template <int Dim>
SimplicityReport simplicity_probe(const MetricChart<Dim>& chart, const FanSpec& fan = {}, double dt = 0.0) {
  SimplicityReport report;
  double worst = std::numeric_limits<double>::infinity();
  for (int i = 0; i < fan.n_boundary; ++i) {
    const auto x = boundary_point(chart, i, fan.n_boundary);
    const auto g = chart.metric(x);
    const auto frame = adapted_frame(g, outward_normal(chart, x));
    std::vector<Vec<double, Dim>> dirs;
    for (int a = 1; a < Dim; ++a) {
      Vec<double, Dim> e{};
      for (int k = 0; k < Dim; ++k) e[k] = frame[k][a];
      dirs.push_back(e);
    }
    if constexpr (Dim == 3) {
      for (double sgn : {1.0, -1.0}) {
        Vec<double, Dim> e{};
        for (int k = 0; k < Dim; ++k) e[k] = (frame[k][1] + sgn * frame[k][2]) / std::sqrt(2.0);
        dirs.push_back(e);
      }
    }
    for (const auto& w : dirs) worst = std::min(worst, second_fundamental_form(chart, x, w));
  }
  report.min_second_fundamental_form = worst;
  report.convex = worst > 1e-8;

  const auto rays = influx_fan(chart, fan);
  std::vector<char> trapped(rays.size(), 0);
  parallel_for(rays.size(), [&](std::size_t i) {
    try {
      exit_time(chart, make_phase_point(chart, rays[i].x, rays[i].v), dt);
    } catch (const TrappedGeodesicError&) {
      trapped[i] = 1;
    }
  });
  for (char t : trapped) report.trapped_rays += t;
  report.untrapped = report.trapped_rays == 0;

  if (report.untrapped) {
    report.conjugate = is_beta_conjugate_free(chart, 1.0, fan, dt);
    report.conjugate_free = report.conjugate.free;
  }
  return report;
}

}  // namespace geotomo
