#pragma once

// Numerical checks of the energy identities on SM: Pestov, the structural
// relation between the three integral identities, the pointwise identity for
// divergence-free tensors, the vertical-gradient eigenvalue sum, Jacobi-type
// positivity, and the scalar minimization behind the beta thresholds.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "geotomo/bundle.hpp"
#include "geotomo/errors.hpp"
#include "geotomo/fan.hpp"
#include "geotomo/geodesics.hpp"
#include "geotomo/quadrature.hpp"
#include "geotomo/tensorfield.hpp"
#include "json.hpp"

namespace geotomo {

struct IdentityReport {
  std::string name;
  std::vector<std::pair<std::string, double>> terms;
  double residual = 0.0;
  double relative_residual = 0.0;
  QuadratureSpec quadrature;
  double threshold = 0.0;
  bool pass = false;

  double term(const std::string& key) const {
    for (const auto& [k, v] : terms)
      if (k == key) return v;
    throw InputError("report has no term " + key);
  }

  /// relative = |residual| / largest |term|, 0 when every term vanishes.
  void finish(double r, double thr) {
    residual = r;
    threshold = thr;
    double scale = 0.0;
    for (const auto& t : terms) scale = std::max(scale, std::abs(t.second));
    relative_residual = scale > 0.0 ? std::abs(r) / scale : std::abs(r);
    pass = relative_residual < threshold;
  }
};

inline void to_json(nlohmann::json& j, const IdentityReport& r) {
  nlohmann::json terms = nlohmann::json::object();
  for (const auto& [k, v] : r.terms) terms[k] = v;
  j = {{"name", r.name},
       {"terms", terms},
       {"residual", r.residual},
       {"relative_residual", r.relative_residual},
       {"quadrature",
        {{"cells_per_radius", r.quadrature.cells_per_radius},
         {"angles", r.quadrature.angles},
         {"polar", r.quadrature.polar},
         {"azimuth", r.quadrature.azimuth}}},
       {"threshold", r.threshold},
       {"pass", r.pass}};
}

/// Quadrature used by the integral identities unless the caller overrides it.
inline QuadratureSpec identity_quadrature() { return {16, 32, 8, 16}; }

// ---------------------------------------------------------------------------
// Test functions.

/// ((r^2 - |x|^2) / r^2)^3: vanishes with its first two derivatives on the
/// boundary sphere.
template <int Dim>
Expression boundary_cutoff(const MetricChart<Dim>& chart) {
  std::string n = "x1^2 + x2^2";
  if (Dim == 3) n += " + x3^2";
  return Expression::parse("(1 - (" + n + ")/" + Expression::format_number(chart.radius() * chart.radius()) + ")^3",
                           Dim);
}

template <int Dim>
SMFunction<Dim> with_cutoff(const SMFunction<Dim>& u) {
  return SMFunction<Dim>::from_expression(u.chart(), boundary_cutoff(u.chart())) * u;
}

template <int Dim>
NSection<Dim> with_cutoff(const NSection<Dim>& z) {
  return SMFunction<Dim>::from_expression(z.chart(), boundary_cutoff(z.chart())) * z;
}

/// Smooth function on SM with random coefficients, built from the expression
/// grammar. Multiplied by the boundary cutoff when `compact`.
template <int Dim>
SMFunction<Dim> random_sm_function(const MetricChart<Dim>& chart, std::mt19937_64& rng, bool compact = true) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto num = [&](double scale = 1.0) { return Expression::format_number(scale * u(rng)); };
  auto linear = [&](const char* var) {
    std::string s = num();
    for (int i = 1; i <= Dim; ++i) s += " + " + num() + "*" + var + std::to_string(i);
    return s;
  };
  const std::string xs = linear("x"), vs = linear("v");
  std::string src = num() + "*sin(" + xs + " + " + vs + ")";
  src += " + " + num() + "*exp(" + linear("x") + ")*(" + linear("v") + ")";
  src += " + " + num() + "*x1*v" + std::to_string(Dim) + "*v1";
  src += " + " + num() + "*cos(" + num(2.0) + "*x2)*v2^2";
  auto fn = SMFunction<Dim>::from_string(chart, src);
  return compact ? with_cutoff(fn) : fn;
}

template <int Dim>
NSection<Dim> random_section(const MetricChart<Dim>& chart, std::mt19937_64& rng, bool compact = true) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto num = [&] { return Expression::format_number(u(rng)); };
  std::vector<Expression> w;
  for (int j = 0; j < Dim; ++j) {
    std::string s = num() + " + " + num() + "*sin(" + num() + "*x1 + " + num() + "*v2) + " + num() + "*x2*v1";
    if (Dim == 3) s += " + " + num() + "*x3*v3";
    w.push_back(Expression::parse(s, Dim, true));
  }
  auto z = NSection<Dim>::tangential_part(chart, std::move(w));
  return compact ? with_cutoff(z) : z;
}

namespace detail {

/// Largest value of |probe| on boundary phase points of a fan (all
/// directions, not only inward ones).
template <int Dim, class Probe>
double boundary_max(const MetricChart<Dim>& chart, Probe&& probe) {
  double worst = 0.0;
  const int nb = Dim == 2 ? 24 : 48;
  for (int i = 0; i < nb; ++i) {
    const auto x = boundary_point(chart, i, nb);
    const auto frame = fiber_frame(chart.metric(x));
    for (int k = 0; k < 12; ++k) {
      Vec<double, Dim> dir{};
      const double t = 2.0 * std::numbers::pi * (k + 0.25) / 12;
      dir[0] = std::cos(t);
      dir[1] = std::sin(t) * (Dim == 3 ? std::sqrt(0.5) : 1.0);
      if constexpr (Dim == 3) dir[2] = std::sin(t) * std::sqrt(0.5);
      worst = std::max(worst, probe(x, mul(frame, dir)));
    }
  }
  return worst;
}

template <int Dim>
void require_compact(const SMFunction<Dim>& u) {
  const auto xu = X(u);
  const auto vu = vgrad(u);
  const double worst = boundary_max(u.chart(), [&](const Vec<double, Dim>& x, const Vec<double, Dim>& v) {
    double m = std::max(std::abs(u(x, v)), std::abs(xu(x, v)));
    for (double c : vu(x, v)) m = std::max(m, std::abs(c));
    return m;
  });
  if (worst > 1e-10)
    throw PreconditionError("function does not vanish on the boundary of SM (max " + std::to_string(worst) +
                            "); multiply by boundary_cutoff");
}

template <int Dim>
void require_compact(const NSection<Dim>& z) {
  const auto xz = X(z);
  const double worst = boundary_max(z.chart(), [&](const Vec<double, Dim>& x, const Vec<double, Dim>& v) {
    double m = 0.0;
    for (double c : z(x, v)) m = std::max(m, std::abs(c));
    for (double c : xz(x, v)) m = std::max(m, std::abs(c));
    return m;
  });
  if (worst > 1e-10)
    throw PreconditionError("section does not vanish on the boundary of SM (max " + std::to_string(worst) + ")");
}

/// The four Pestov terms plus |grad_h u|^2, from one pass over the nodes.
template <int Dim>
std::array<double, 5> pestov_terms(const SMQuadrature<Dim>& quad, const SMFunction<Dim>& u) {
  const auto xu = X(u);
  const auto vxu = vgrad(xu);
  const auto vu = vgrad(u);
  const auto xvu = X(vu);
  const auto hu = hgrad(u);
  const auto& chart = quad.chart();
  return quad.template integrate_many<5>([&](const Vec<double, Dim>& x, const Vec<double, Dim>& v) {
    const auto g = chart.metric(x);
    const auto a = detail::eval_section(vxu, x, v);
    const auto b = detail::eval_section(xvu, x, v);
    const auto w = detail::eval_section(vu, x, v);
    const auto rw = mul(curvature_matrix(chart, x, v), w);
    const double e = detail::eval_fn(xu, x, v);
    const auto h = detail::eval_section(hu, x, v);
    return std::array<double, 5>{inner(g, a, a), inner(g, b, b), inner(g, rw, w), e * e, inner(g, h, h)};
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Integral identities.

/// r4 = |grad_v X u|^2 - |X grad_v u|^2 + (R grad_v u, grad_v u) - (d-1)|Xu|^2
/// for u vanishing to first order on the boundary of SM.
template <int Dim>
IdentityReport pestov_residual(const SMFunction<Dim>& u, const QuadratureSpec& spec = identity_quadrature(),
                               double threshold = 1e-3) {
  detail::require_compact(u);
  const SMQuadrature<Dim> quad(u.chart(), spec);
  const auto t = detail::pestov_terms(quad, u);
  IdentityReport rep;
  rep.name = "pestov";
  rep.quadrature = spec;
  rep.terms = {{"|grad_v X u|^2", t[0]}, {"|X grad_v u|^2", t[1]}, {"(R grad_v u, grad_v u)", t[2]},
               {"|X u|^2", t[3]}};
  rep.finish(t[0] - t[1] + t[2] - (Dim - 1) * t[3], threshold);
  return rep;
}

/// r4 + r7 + r8 assembled from the same five computed terms; vanishes for any
/// u by algebra alone.
template <int Dim>
IdentityReport structural_relation(const SMFunction<Dim>& u, int m, const QuadratureSpec& spec = identity_quadrature(),
                                   double threshold = 1e-12) {
  if (m < 0) throw InputError("tensor order must be nonnegative");
  const SMQuadrature<Dim> quad(u.chart(), spec);
  const auto t = detail::pestov_terms(quad, u);
  const double d = Dim;
  const double r4 = t[0] - t[1] + t[2] - (d - 1) * t[3];
  const double r7 = t[1] - t[0] - t[4] - 2 * m * t[3];
  const double r8 = t[4] + (d - 1 + 2 * m) * t[3] - t[2];
  IdentityReport rep;
  rep.name = "structural";
  rep.quadrature = spec;
  rep.terms = {{"|grad_v X u|^2", t[0]}, {"|X grad_v u|^2", t[1]}, {"(R grad_v u, grad_v u)", t[2]},
               {"|X u|^2", t[3]},        {"|grad_h u|^2", t[4]},   {"r4", r4},
               {"r7", r7},               {"r8", r8}};
  rep.finish(r4 + r7 + r8, threshold);
  return rep;
}

/// |grad_v f|^2 against sum_k (m-2k)(m-2k+d-2) |f_{m-2k}|^2 and the bound
/// m(m+d-2)|f|^2.
template <int Dim>
IdentityReport estf_check(const MetricChart<Dim>& chart, const SymmetricTensorField<Dim>& f,
                          const QuadratureSpec& spec = identity_quadrature(), double threshold = 1e-6) {
  const SMQuadrature<Dim> quad(chart, spec);
  const int m = f.order();
  const auto fn = SMFunction<Dim>::from_tensor(chart, f);
  const double lhs = l2_norm2_sections(quad, vgrad(fn));
  const double norm2 = l2_norm2_sm(quad, fn);
  const auto pieces = degree_decompose(chart, f);
  double sum = 0.0;
  for (const auto& p : pieces) {
    const int n = p.order();
    sum += n * (n + Dim - 2) * l2_norm2_sm(quad, SMFunction<Dim>::from_tensor(chart, p));
  }
  const double bound = m * (m + Dim - 2) * norm2;
  IdentityReport rep;
  rep.name = "estf";
  rep.quadrature = spec;
  rep.terms = {{"|grad_v f|^2", lhs}, {"eigenvalue sum", sum}, {"bound", bound}, {"|f|^2", norm2}};
  rep.finish(lhs - sum, threshold);
  // The bound may be saturated (trace-free f) but never exceeded.
  rep.pass = rep.pass && lhs <= bound * (1.0 + threshold) + 1e-300;
  return rep;
}

/// |XZ|^2 - beta (RZ, Z) >= 0. Needs a conjugate-point certificate for beta.
template <int Dim>
IdentityReport jacobi_positivity(const NSection<Dim>& z, double beta, const std::optional<ConjugateReport>& certificate,
                                 const QuadratureSpec& spec = identity_quadrature(), double tolerance = 1e-8) {
  if (!certificate) throw PreconditionError("run is_beta_conjugate_free before jacobi_positivity");
  if (certificate->beta < beta)
    throw PreconditionError("certificate was computed for a smaller beta than requested");
  if (!certificate->free) throw PreconditionError("chart has beta-conjugate points; positivity is not expected");
  detail::require_compact(z);
  const SMQuadrature<Dim> quad(z.chart(), spec);
  const auto xz = X(z);
  const auto& chart = z.chart();
  const auto t = quad.template integrate_many<3>([&](const Vec<double, Dim>& x, const Vec<double, Dim>& v) {
    const auto g = chart.metric(x);
    const auto a = detail::eval_section(xz, x, v);
    const auto w = detail::eval_section(z, x, v);
    const auto rw = mul(curvature_matrix(chart, x, v), w);
    return std::array<double, 3>{inner(g, a, a), inner(g, rw, w), inner(g, w, w)};
  });
  IdentityReport rep;
  rep.name = "jacobi";
  rep.quadrature = spec;
  const double value = t[0] - beta * t[1];
  rep.terms = {{"|XZ|^2", t[0]}, {"(RZ, Z)", t[1]}, {"|Z|^2", t[2]}, {"value", value}};
  rep.residual = value;
  rep.relative_residual = value;
  rep.threshold = -tolerance;
  // Nonnegative, and strictly positive once Z is nonzero.
  rep.pass = value >= -tolerance && (t[2] == 0.0 || value > 0.0);
  return rep;
}

/// |gamma grad_v Xu + grad_h u|^2 directly and via the bilinear expansion.
template <int Dim>
IdentityReport gamma_split_expansion(const SMFunction<Dim>& u, double gamma,
                                const QuadratureSpec& spec = identity_quadrature(), double threshold = 1e-10) {
  const SMQuadrature<Dim> quad(u.chart(), spec);
  const auto a = vgrad(X(u));
  const auto h = hgrad(u);
  const auto& chart = u.chart();
  const auto t = quad.template integrate_many<4>([&](const Vec<double, Dim>& x, const Vec<double, Dim>& v) {
    const auto g = chart.metric(x);
    const auto av = detail::eval_section(a, x, v);
    const auto hv = detail::eval_section(h, x, v);
    const auto s = gamma * av + hv;
    return std::array<double, 4>{inner(g, s, s), inner(g, av, av), inner(g, hv, hv), inner(g, av, hv)};
  });
  const double expansion = gamma * gamma * t[1] + t[2] + 2 * gamma * t[3];
  IdentityReport rep;
  rep.name = "gamma_split";
  rep.quadrature = spec;
  rep.terms = {{"direct", t[0]},
               {"gamma^2 |grad_v X u|^2", gamma * gamma * t[1]},
               {"|grad_h u|^2", t[2]},
               {"2 gamma (grad_v X u, grad_h u)", 2 * gamma * t[3]}};
  rep.finish(t[0] - expansion, threshold);
  rep.pass = rep.pass && t[0] >= 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Pointwise checks.

struct PointwiseReport {
  std::string name;
  std::vector<std::pair<std::string, double>> residuals;  // max |.| per formula
  int samples = 0;
  double threshold = 0.0;
  bool pass = false;

  double max_residual() const {
    double m = 0.0;
    for (const auto& r : residuals) m = std::max(m, r.second);
    return m;
  }
};

inline void to_json(nlohmann::json& j, const PointwiseReport& r) {
  nlohmann::json res = nlohmann::json::object();
  for (const auto& [k, v] : r.residuals) res[k] = v;
  j = {{"name", r.name}, {"residuals", res}, {"samples", r.samples}, {"threshold", r.threshold}, {"pass", r.pass}};
}

namespace detail {

template <int Dim>
std::pair<Vec<double, Dim>, Vec<double, Dim>> random_phase_point(const MetricChart<Dim>& chart, std::mt19937_64& rng,
                                                                  double shrink = 0.9) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  Vec<double, Dim> x{};
  do {
    for (auto& c : x) c = u(rng);
  } while (dot(x, x) > 1.0);
  x = (shrink * chart.radius()) * x;
  Vec<double, Dim> w{};
  for (auto& c : w) c = n(rng);
  const auto g = chart.metric(x);
  return {x, (1.0 / std::sqrt(inner(g, w, w))) * w};
}

template <int Dim>
double max_abs(const Vec<double, Dim>& a) {
  double m = 0.0;
  for (double c : a) m = std::max(m, std::abs(c));
  return m;
}

}  // namespace detail

/// The five commutator formulas at random interior phase points, for the
/// given test function and section. The last formula is checked with
/// [X, div_h] = div_v R; `printed_sign` flips it to -div_v R.
template <int Dim>
PointwiseReport commutator_residuals(const SMFunction<Dim>& u, const NSection<Dim>& z, int samples,
                                     std::uint64_t seed, double threshold = 1e-7, bool printed_sign = false) {
  const auto c1 = X(vgrad(u)) - vgrad(X(u)) + hgrad(u);
  const auto c2 = X(hgrad(u)) - hgrad(X(u)) - curvature(vgrad(u));
  const auto c3 = hdiv(vgrad(u)) - vdiv(hgrad(u)) - static_cast<double>(Dim - 1) * X(u);
  const auto c4 = X(vdiv(z)) - vdiv(X(z)) + hdiv(z);
  const auto c5 = X(hdiv(z)) - hdiv(X(z)) + (printed_sign ? 1.0 : -1.0) * vdiv(curvature(z));
  std::mt19937_64 rng(seed);
  std::vector<std::pair<Vec<double, Dim>, Vec<double, Dim>>> pts(samples);
  for (auto& p : pts) p = detail::random_phase_point(u.chart(), rng);
  std::vector<std::array<double, 5>> vals(pts.size());
  parallel_for(pts.size(), [&](std::size_t s) {
    const auto& [x, v] = pts[s];
    vals[s] = {detail::max_abs<Dim>(c1(x, v)), detail::max_abs<Dim>(c2(x, v)), std::abs(c3(x, v)),
               std::abs(c4(x, v)), std::abs(c5(x, v))};
  });
  std::array<double, 5> worst{};
  for (const auto& v : vals)
    for (int k = 0; k < 5; ++k) worst[k] = std::max(worst[k], v[k]);
  PointwiseReport rep;
  rep.name = "commutators";
  rep.samples = samples;
  rep.threshold = threshold;
  rep.residuals = {{"[X,grad_v] = -grad_h", worst[0]},
                   {"[X,grad_h] = R grad_v", worst[1]},
                   {"div_h grad_v - div_v grad_h = (d-1) X", worst[2]},
                   {"[X,div_v] = -div_h", worst[3]},
                   {printed_sign ? "[X,div_h] = -div_v R" : "[X,div_h] = div_v R", worst[4]}};
  rep.pass = rep.max_residual() < threshold;
  return rep;
}

/// div_h grad_v f + m X f at random phase points, for delta f = 0. The
/// divergence is checked first at the same points.
template <int Dim>
PointwiseReport divfree_identity_pointwise(const MetricChart<Dim>& chart, const SymmetricTensorField<Dim>& f,
                                           int samples = 200, std::uint64_t seed = 1, double threshold = 1e-7,
                                           double divergence_tolerance = 1e-8) {
  const int m = f.order();
  std::mt19937_64 rng(seed);
  std::vector<std::pair<Vec<double, Dim>, Vec<double, Dim>>> pts(samples);
  for (auto& p : pts) p = detail::random_phase_point(chart, rng);
  double div = 0.0;
  if (m >= 1) {
    const auto df = divergence(chart, f);
    for (const auto& [x, v] : pts)
      for (double c : df.components(x)) div = std::max(div, std::abs(c));
  }
  if (div > divergence_tolerance)
    throw PreconditionError("field is not divergence-free: max |delta f| = " + std::to_string(div));
  const auto fn = SMFunction<Dim>::from_tensor(chart, f);
  const auto lhs = hdiv(vgrad(fn)) + static_cast<double>(m) * X(fn);
  std::vector<double> vals(pts.size());
  parallel_for(pts.size(), [&](std::size_t s) { vals[s] = std::abs(lhs(pts[s].first, pts[s].second)); });
  PointwiseReport rep;
  rep.name = "divfree";
  rep.samples = samples;
  rep.threshold = threshold;
  rep.residuals = {{"div_h grad_v f + m X f", *std::max_element(vals.begin(), vals.end())},
                   {"|delta f|", div}};
  rep.pass = rep.residuals[0].second < threshold;
  return rep;
}

// ---------------------------------------------------------------------------
// Scalar minimization behind the beta thresholds.

struct MinimizerResult {
  double gamma = 0.0;
  double beta = 0.0;
};

/// beta(gamma) = 1 + (m(m+d-2) - d + 1) / (2m gamma - gamma^2 m(m+d-2) + 2m + d - 1).
template <Scalar T>
T threshold_beta(int d, int m, const T& gamma) {
  const double k = m * (m + d - 2);
  return 1.0 + (k - d + 1) / (2.0 * m * gamma - k * (gamma * gamma) + (2.0 * m + d - 1));
}

template <Scalar T>
T threshold_denominator(int d, int m, const T& gamma) {
  const double k = m * (m + d - 2);
  return 2.0 * m * gamma - k * (gamma * gamma) + (2.0 * m + d - 1);
}

/// Minimizes beta over a uniform gamma grid, then polishes with Newton steps
/// on the derivative (dual numbers). When beta is constant (m = 1) the tie
/// is broken by the largest denominator. Default grid: [0, 0.999 g+] where g+
/// is the positive root of the denominator.
inline MinimizerResult threshold_minimizer(int d, int m, std::optional<std::pair<double, double>> range = {},
                                                 int points = 2001) {
  if (d < 2 || m < 1) throw InputError("need d >= 2 and m >= 1");
  if (points < 3) throw InputError("need at least 3 grid points");
  const double k = m * (m + d - 2);
  if (!range) {
    const double c = 2.0 * m + d - 1;
    const double root = (2.0 * m + std::sqrt(4.0 * m * m + 4.0 * k * c)) / (2.0 * k);
    range = std::pair{0.0, 0.999 * root};
  }
  const auto [lo, hi] = *range;
  if (!(hi > lo)) throw InputError("empty gamma range");
  const bool flat = k - d + 1 == 0.0;
  auto objective = [&](const auto& g) {
    if (flat) return -1.0 * threshold_denominator(d, m, g);
    return threshold_beta(d, m, g);
  };
  std::size_t best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  const double step = (hi - lo) / (points - 1);
  for (int i = 0; i < points; ++i) {
    const double g = lo + step * i;
    if (!(threshold_denominator(d, m, g) > 0.0))
      throw DomainError("denominator is not positive at gamma = " + std::to_string(g));
    const double val = objective(g);
    if (val < best_val) {
      best_val = val;
      best = static_cast<std::size_t>(i);
    }
  }
  double g = lo + step * static_cast<double>(best);
  using D1 = Dual<double, 1>;
  using D2 = Dual<D1, 1>;
  for (int it = 0; it < 50; ++it) {
    const D2 gd = make_variable<1>(make_variable<1>(g, 0), 0);
    const D2 val = objective(gd);
    const double d1 = val.d[0].v, d2 = val.d[0].d[0];
    if (!(d2 > 0.0)) break;
    const double next = std::clamp(g - d1 / d2, g - step, g + step);
    if (std::abs(next - g) <= 1e-16 * std::max(1.0, std::abs(g))) {
      g = next;
      break;
    }
    g = next;
  }
  return {g, threshold_beta(d, m, g)};
}

}  // namespace geotomo
