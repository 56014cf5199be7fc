#pragma once

// Geodesic ray transform of symmetric tensor fields, the transport solution
// u(x, v) = int_0^tau f(phi_t(x, v)) dt, ray data sets and their I/O, and the
// sparse discrete ray transform of grid-backed fields.

#include <Eigen/SparseCore>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "geotomo/errors.hpp"
#include "geotomo/fan.hpp"
#include "geotomo/geodesics.hpp"
#include "geotomo/grid.hpp"
#include "geotomo/parallel.hpp"
#include "geotomo/symmetric.hpp"
#include "geotomo/tensorfield.hpp"
#include "json.hpp"

namespace geotomo {

// ---------------------------------------------------------------------------
// Quadrature along a traced geodesic.

namespace detail {

/// Lagrange weights of the interpolant through `nodes`, evaluated at t.
inline std::vector<double> lagrange_weights(const std::vector<double>& nodes, double t) {
  std::vector<double> w(nodes.size(), 1.0);
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (std::size_t j = 0; j < nodes.size(); ++j)
      if (i != j) w[i] *= (t - nodes[j]) / (nodes[i] - nodes[j]);
  return w;
}

}  // namespace detail

/// Weights for samples at times t_0 = 0, t_k = k dt (uniform) followed by the
/// exit sample at tau. Composite Simpson on the longest even-length uniform
/// prefix; the remaining tail gets a 3-point rule whose midpoint value is
/// interpolated (cubic) from the last samples.
inline std::vector<double> path_weights(const std::vector<double>& times, double dt) {
  const std::size_t count = times.size();
  std::vector<double> w(count, 0.0);
  if (count < 2) return w;
  // Indices of the samples in use: uniform ones then the exit sample.
  std::vector<std::size_t> use(count);
  for (std::size_t k = 0; k < count; ++k) use[k] = k;
  if (count >= 3 && times[count - 1] - times[count - 2] < 1e-3 * dt) use.erase(use.end() - 2);
  const std::size_t n = use.size() - 2;  // index (in use) of the last uniform sample
  const std::size_t K = n % 2 == 0 ? n : n - 1;
  for (std::size_t k = 0; k + 2 <= K; k += 2) {
    const double h = times[use[k + 2]] - times[use[k]];
    w[use[k]] += h / 6.0;
    w[use[k + 1]] += 4.0 * h / 6.0;
    w[use[k + 2]] += h / 6.0;
  }
  const double t0 = times[use[K]], t1 = times[use.back()];
  const double len = t1 - t0;
  if (len <= 0.0) return w;
  const std::size_t first = use.size() >= 4 ? use.size() - 4 : 0;
  std::vector<double> nodes;
  std::vector<std::size_t> ids;
  for (std::size_t k = first; k < use.size(); ++k) {
    nodes.push_back(times[use[k]]);
    ids.push_back(use[k]);
  }
  const auto mid = detail::lagrange_weights(nodes, t0 + 0.5 * len);
  w[use[K]] += len / 6.0;
  w[use.back()] += len / 6.0;
  for (std::size_t k = 0; k < ids.size(); ++k) w[ids[k]] += 4.0 * len / 6.0 * mid[k];
  return w;
}

template <int Dim>
struct RaySample {
  PhasePoint<Dim> p;
  double weight = 0.0;
};

/// Trace the geodesic from p to the boundary and return weighted samples;
/// int_0^tau F(phi_t p) dt ~ sum_k weight_k F(p_k).
template <int Dim>
std::vector<RaySample<Dim>> ray_quadrature(const MetricChart<Dim>& chart, const PhasePoint<Dim>& p, double dt = 0.0,
                                           double max_time = 0.0) {
  const auto path = geodesic_path(chart, p, dt, max_time);
  const auto w = path_weights(path.times, path.dt);
  std::vector<RaySample<Dim>> out;
  out.reserve(path.points.size());
  for (std::size_t k = 0; k < path.points.size(); ++k)
    if (w[k] != 0.0) out.push_back({path.points[k], w[k]});
  return out;
}

/// I_m f(x, v) = int_0^tau f(gamma(t), gamma'(t)) dt.
template <int Dim>
double ray_transform(const MetricChart<Dim>& chart, const SymmetricTensorField<Dim>& f, const PhasePoint<Dim>& p,
                     double dt = 0.0) {
  double s = 0.0;
  for (const auto& q : ray_quadrature(chart, p, dt)) s += q.weight * f.on_sphere(q.p.x, q.p.v);
  return s;
}

/// u(x, v) = int_0^tau f(phi_t(x, v)) dt, the solution of X u = -f with
/// u = 0 on the outflow boundary.
template <int Dim>
double transport_solution(const MetricChart<Dim>& chart, const SymmetricTensorField<Dim>& f, const PhasePoint<Dim>& p,
                          double dt = 0.0) {
  return ray_transform(chart, f, p, dt);
}

// ---------------------------------------------------------------------------
// Ray data.

template <int Dim>
struct RayRecord {
  Vec<double, Dim> x{};
  Vec<double, Dim> v{};
  double value = 0.0;
};

struct RayMetadata {
  std::string metric;
  int dim = 2;
  double radius = 1.0;
  std::vector<double> params;
  int order = 0;
  double dt = 0.0;
  FanSpec fan;

  friend bool operator==(const RayMetadata&, const RayMetadata&) = default;
};

inline void to_json(nlohmann::json& j, const RayMetadata& m) {
  j = nlohmann::json{{"metric", m.metric},
                     {"dim", m.dim},
                     {"radius", m.radius},
                     {"params", m.params},
                     {"m", m.order},
                     {"dt", m.dt},
                     {"fan", {{"n_boundary", m.fan.n_boundary}, {"n_directions", m.fan.n_directions}, {"margin", m.fan.margin}}}};
}

inline void from_json(const nlohmann::json& j, RayMetadata& m) {
  try {
    j.at("metric").get_to(m.metric);
    j.at("dim").get_to(m.dim);
    j.at("radius").get_to(m.radius);
    j.at("params").get_to(m.params);
    j.at("m").get_to(m.order);
    j.at("dt").get_to(m.dt);
    const auto& fan = j.at("fan");
    fan.at("n_boundary").get_to(m.fan.n_boundary);
    fan.at("n_directions").get_to(m.fan.n_directions);
    fan.at("margin").get_to(m.fan.margin);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad ray data sidecar: ") + e.what());
  }
}

template <int Dim>
RayMetadata make_metadata(const MetricChart<Dim>& chart, int order, double dt, const FanSpec& fan) {
  return RayMetadata{chart.name(), Dim, chart.radius(), chart.params(), order, resolve_dt(chart.radius(), dt), fan};
}

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double x = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParseError("not a number: '" + std::string(s) + "'", 0);
  return x;
}

template <int Dim>
struct RayDataSet {
  RayMetadata meta;
  std::vector<RayRecord<Dim>> records;

  std::vector<double> values() const {
    std::vector<double> v;
    v.reserve(records.size());
    for (const auto& r : records) v.push_back(r.value);
    return v;
  }

  std::string csv() const {
    std::string out;
    for (int i = 1; i <= Dim; ++i) out += "x" + std::to_string(i) + ",";
    for (int i = 1; i <= Dim; ++i) out += "v" + std::to_string(i) + ",";
    out += "value\n";
    for (const auto& r : records) {
      for (double c : r.x) out += format_double(c) + ",";
      for (double c : r.v) out += format_double(c) + ",";
      out += format_double(r.value) + "\n";
    }
    return out;
  }

  nlohmann::json sidecar() const {
    nlohmann::json j = meta;
    j["rows"] = records.size();
    return j;
  }

  static RayDataSet from_csv(const std::string& text, const RayMetadata& meta) {
    RayDataSet ds;
    ds.meta = meta;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty ray data file", 0);
    std::size_t row = 0;
    while (std::getline(in, line)) {
      ++row;
      if (line.empty()) continue;
      std::vector<std::string_view> cells;
      std::string_view rest(line);
      while (true) {
        const auto comma = rest.find(',');
        cells.push_back(rest.substr(0, comma));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
      if (cells.size() != 2 * Dim + 1)
        throw ParseError("row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " fields", row);
      RayRecord<Dim> r;
      for (int i = 0; i < Dim; ++i) {
        r.x[i] = parse_double(cells[i]);
        r.v[i] = parse_double(cells[Dim + i]);
      }
      r.value = parse_double(cells[2 * Dim]);
      ds.records.push_back(r);
    }
    return ds;
  }

  void write(const std::string& csv_path, const std::string& json_path) const {
    std::ofstream c(csv_path, std::ios::binary);
    std::ofstream j(json_path, std::ios::binary);
    if (!c || !j) throw InputError("cannot write ray data to " + csv_path);
    c << csv();
    j << sidecar().dump(2) << "\n";
  }

  static RayDataSet read(const std::string& csv_path, const std::string& json_path) {
    std::ifstream c(csv_path, std::ios::binary);
    std::ifstream j(json_path, std::ios::binary);
    if (!c) throw InputError("cannot read ray data file " + csv_path);
    if (!j) throw InputError("cannot read ray data sidecar " + json_path);
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(j);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad sidecar JSON: ") + e.what(), 0);
    }
    if (meta.value("dim", 0) != Dim) throw InputError("ray data has the wrong dimension");
    std::stringstream ss;
    ss << c.rdbuf();
    auto ds = from_csv(ss.str(), meta.get<RayMetadata>());
    if (meta.contains("rows") && meta["rows"].get<std::size_t>() != ds.records.size())
      throw InputError("ray data row count does not match its sidecar");
    return ds;
  }
};

/// Check that every record lies on the boundary and points inward.
template <int Dim>
void validate_influx(const MetricChart<Dim>& chart, const RayDataSet<Dim>& data) {
  const double tol = 1e-10 * chart.radius();
  for (const auto& r : data.records) {
    if (std::abs(norm(r.x) - chart.radius()) > tol) throw InputError("ray start point is not on the boundary");
    if (inner(chart.metric(r.x), r.v, outward_normal(chart, r.x)) >= 0.0)
      throw InputError("ray direction does not point into the domain");
  }
}

/// Rays of a fan, with each direction normalized.
template <int Dim>
std::vector<PhasePoint<Dim>> fan_phase_points(const MetricChart<Dim>& chart, const FanSpec& fan) {
  std::vector<PhasePoint<Dim>> out;
  for (const auto& r : influx_fan(chart, fan)) out.push_back(make_phase_point(chart, r.x, r.v));
  return out;
}

/// I_m f on every ray of the fan; rays run in parallel, order is fixed.
template <int Dim>
RayDataSet<Dim> compute_ray_data(const MetricChart<Dim>& chart, const SymmetricTensorField<Dim>& f, const FanSpec& fan,
                                 double dt = 0.0) {
  const auto rays = fan_phase_points(chart, fan);
  RayDataSet<Dim> ds;
  ds.meta = make_metadata(chart, f.order(), dt, fan);
  ds.records.resize(rays.size());
  parallel_for(rays.size(), [&](std::size_t i) {
    ds.records[i] = RayRecord<Dim>{rays[i].x, rays[i].v, ray_transform(chart, f, rays[i], dt)};
  });
  return ds;
}

// ---------------------------------------------------------------------------
// Discrete ray transform of grid fields.

/// Sparse matrix A with (A c)_r = discrete I_m of the grid field with node
/// coefficients c (layout c[component * node_count + node]) along ray r.
/// Backprojection is the exact transpose.
template <int Dim>
class GridRayTransform {
 public:
  using Matrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

  GridRayTransform(const MetricChart<Dim>& chart, const NodeGrid<Dim>& grid, int order,
                   const std::vector<PhasePoint<Dim>>& rays, double dt = 0.0)
      : chart_(chart), grid_(grid), order_(order), dt_(resolve_dt(chart.radius(), dt)) {
    if (order < 0) throw InputError("tensor order must be nonnegative");
    const auto& set = multi_indices(Dim, order);
    const std::size_t nodes = grid.node_count();
    cols_ = nodes * static_cast<std::size_t>(set.size());
    std::vector<std::vector<Eigen::Triplet<double>>> rows(rays.size());
    parallel_for(rays.size(), [&](std::size_t r) {
      std::map<std::size_t, double> acc;
      std::array<std::size_t, (1 << Dim)> idx;
      std::array<double, (1 << Dim)> wts;
      for (const auto& q : ray_quadrature(chart, rays[r], dt_)) {
        grid.stencil(q.p.x, idx, wts);
        for (int k = 0; k < set.size(); ++k) {
          double mono = set.multiplicity(k) * q.weight;
          for (int i : set.index(k)) mono *= q.p.v[i];
          for (int c = 0; c < (1 << Dim); ++c)
            if (wts[c] != 0.0) acc[static_cast<std::size_t>(k) * nodes + idx[c]] += mono * wts[c];
        }
      }
      rows[r].reserve(acc.size());
      for (const auto& [col, val] : acc) rows[r].emplace_back(static_cast<int>(r), static_cast<int>(col), val);
    });
    std::vector<Eigen::Triplet<double>> all;
    for (auto& row : rows) all.insert(all.end(), row.begin(), row.end());
    a_.resize(static_cast<Eigen::Index>(rays.size()), static_cast<Eigen::Index>(cols_));
    a_.setFromTriplets(all.begin(), all.end());
    a_.makeCompressed();
  }

  const Matrix& matrix() const { return a_; }
  const NodeGrid<Dim>& grid() const { return grid_; }
  int order() const { return order_; }
  double dt() const { return dt_; }
  std::size_t rows() const { return static_cast<std::size_t>(a_.rows()); }
  std::size_t cols() const { return cols_; }

  Eigen::VectorXd forward(const Eigen::VectorXd& coefficients) const {
    if (static_cast<std::size_t>(coefficients.size()) != cols_) throw InputError("coefficient vector has the wrong size");
    return a_ * coefficients;
  }

  Eigen::VectorXd backproject(const Eigen::VectorXd& data) const {
    if (static_cast<Eigen::Index>(data.size()) != a_.rows()) throw InputError("data vector has the wrong size");
    return a_.transpose() * data;
  }

  /// Backprojection of a data set as a grid tensor field. Metadata must
  /// describe the same chart and order as the operator.
  SymmetricTensorField<Dim> backproject(const RayDataSet<Dim>& data) const {
    if (data.meta.metric != chart_.name() || data.meta.dim != Dim || data.meta.radius != chart_.radius() ||
        data.meta.params != chart_.params())
      throw InputError("ray data was computed on a different chart");
    if (data.meta.order != order_) throw InputError("ray data has tensor order " + std::to_string(data.meta.order) +
                                                    ", operator has " + std::to_string(order_));
    const auto vals = data.values();
    const auto bp = backproject(Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size())));
    return grid_field(grid_, order_, std::vector<double>(bp.data(), bp.data() + bp.size()));
  }

 private:
  MetricChart<Dim> chart_;
  NodeGrid<Dim> grid_;
  int order_;
  double dt_;
  std::size_t cols_ = 0;
  Matrix a_;
};

}  // namespace geotomo
