#pragma once

// Experiment configuration: one JSON file per run, validated before any
// computation. Unknown keys and wrong types are InputErrors.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "geotomo/errors.hpp"
#include "geotomo/fan.hpp"
#include "geotomo/geometry.hpp"
#include "geotomo/quadrature.hpp"
#include "geotomo/tensorfield.hpp"
#include "json.hpp"

namespace geotomo {

struct MetricSpec {
  std::string family = "euclidean";
  std::vector<double> params;
  double radius = 1.0;
  int dim = 2;
  std::string lambda;  // conformal only
};

struct FieldSpec {
  int order = 0;
  std::vector<std::string> components;
  std::string dsym_of;  // non-empty: this field is d^s of the named field
};

struct QuadratureConfig {
  double dt = 0.0;  // 0: 1e-3 of the radius
  std::optional<int> angles;
  std::optional<int> cells_per_radius;
  std::optional<int> polar;
  std::optional<int> azimuth;
  int grid = 33;  // nodes per axis for grid solves

  /// Quadrature on SM, starting from the given defaults.
  QuadratureSpec spec(QuadratureSpec base) const {
    if (cells_per_radius) base.cells_per_radius = *cells_per_radius;
    if (angles) base.angles = *angles;
    if (polar) base.polar = *polar;
    if (azimuth) base.azimuth = *azimuth;
    return base;
  }
};

struct TransformBlock {
  std::string field = "f";
};

inline const std::vector<std::string>& verify_suites() {
  static const std::vector<std::string> names{"commutators", "pestov", "divfree", "estf",
                                              "structural",  "jacobi", "theorem2"};
  return names;
}

struct VerifyBlock {
  std::vector<std::string> suites;  // empty: all
  int samples = 500;
  int trials = 10;
  std::optional<double> beta;       // jacobi; default beta2(d, m)
  std::optional<std::string> field; // divfree; default built-in families
  std::map<std::string, double> thresholds;
};

struct ConjugateBlock {
  std::vector<double> betas;  // empty: beta1 and beta2 for (d, m)
};

struct InvertBlock {
  std::optional<std::string> data;     // CSV path, relative to the config file
  std::optional<std::string> sidecar;  // default: data path with .json
  std::optional<std::string> field;    // synthesize data from this field instead
  std::optional<std::string> truth;    // expected solenoidal part, for the summary
  double alpha = -1.0;
  double tolerance = 1e-7;
  int max_iterations = 3000;
  double noise = 0.0;
  int trials = 0;  // > 0: run the random round-trip experiment instead
};

struct DecomposeBlock {
  std::string field = "f";
  std::string method = "polynomial";
  int degree = -1;
};

struct TauBlock {
  std::vector<std::pair<std::vector<double>, std::vector<double>>> points;  // empty: the fan
};

struct ExperimentConfig {
  MetricSpec metric;
  int m = 0;
  std::map<std::string, FieldSpec> fields;
  FanSpec fan;
  QuadratureConfig quadrature;
  std::uint64_t seed = 1;
  std::filesystem::path base_dir = ".";
  TransformBlock transform;
  VerifyBlock verify;
  ConjugateBlock conjugate;
  InvertBlock invert;
  DecomposeBlock decompose;
  TauBlock tau;

  const FieldSpec& field(const std::string& name) const {
    const auto it = fields.find(name);
    if (it == fields.end()) throw InputError("config has no field named '" + name + "'");
    return it->second;
  }

  std::filesystem::path resolve(const std::string& path) const {
    const std::filesystem::path p(path);
    return p.is_absolute() ? p : base_dir / p;
  }
};

namespace detail {

inline void require_object(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw InputError(where + " must be an object");
}

inline void check_keys(const nlohmann::json& j, const std::string& where, const std::set<std::string>& allowed) {
  require_object(j, where);
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw InputError("unknown key '" + key + "' in " + where);
}

template <class T>
T read_as(const nlohmann::json& j, const std::string& where) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) throw InputError(where + " must be a boolean");
  } else if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer()) throw InputError(where + " must be an integer");
    if constexpr (std::is_unsigned_v<T>)
      if (j.is_number_integer() && !j.is_number_unsigned()) throw InputError(where + " must be nonnegative");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!j.is_number()) throw InputError(where + " must be a number");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!j.is_string()) throw InputError(where + " must be a string");
  }
  return j.get<T>();
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (j.contains(key)) out = read_as<T>(j.at(key), where + "." + key);
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, std::optional<T>& out, const std::string& where) {
  if (j.contains(key)) out = read_as<T>(j.at(key), where + "." + key);
}

template <class T>
std::vector<T> read_array(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array()) throw InputError(where + " must be an array");
  std::vector<T> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(read_as<T>(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

inline void positive(double v, const std::string& where) {
  if (!(v > 0.0)) throw InputError(where + " must be positive");
}

inline void at_least(long v, long lo, const std::string& where) {
  if (v < lo) throw InputError(where + " must be at least " + std::to_string(lo));
}

}  // namespace detail

/// Validates and reads a parsed config document.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using namespace detail;
  ExperimentConfig c;
  check_keys(j, "config",
             {"metric", "m", "fields", "fan", "quadrature", "seed", "transform", "verify", "conjugate", "invert",
              "decompose", "tau"});
  if (!j.contains("metric")) throw InputError("config needs a metric block");
  {
    const auto& mj = j.at("metric");
    check_keys(mj, "metric", {"family", "params", "radius", "dim", "lambda"});
    if (!mj.contains("family")) throw InputError("metric.family is required");
    c.metric.family = read_as<std::string>(mj.at("family"), "metric.family");
    metric_family_from_string(c.metric.family);
    if (mj.contains("params")) c.metric.params = read_array<double>(mj.at("params"), "metric.params");
    read_opt(mj, "radius", c.metric.radius, "metric");
    positive(c.metric.radius, "metric.radius");
    read_opt(mj, "dim", c.metric.dim, "metric");
    if (c.metric.dim != 2 && c.metric.dim != 3) throw InputError("metric.dim must be 2 or 3");
    read_opt(mj, "lambda", c.metric.lambda, "metric");
    if (c.metric.family == "conformal" && c.metric.lambda.empty())
      throw InputError("conformal metric needs metric.lambda");
    if (c.metric.family != "conformal" && !c.metric.lambda.empty())
      throw InputError("metric.lambda only applies to the conformal family");
  }
  read_opt(j, "m", c.m, "config");
  at_least(c.m, 0, "m");
  read_opt(j, "seed", c.seed, "config");
  if (j.contains("fields")) {
    const auto& fj = j.at("fields");
    require_object(fj, "fields");
    for (const auto& [name, spec] : fj.items()) {
      const std::string where = "fields." + name;
      check_keys(spec, where, {"order", "components", "dsym_of"});
      FieldSpec fs;
      if (spec.contains("dsym_of")) {
        if (spec.contains("components")) throw InputError(where + " takes either components or dsym_of");
        fs.dsym_of = read_as<std::string>(spec.at("dsym_of"), where + ".dsym_of");
        fs.order = -1;
        if (spec.contains("order")) {
          fs.order = read_as<int>(spec.at("order"), where + ".order");
          at_least(fs.order, 1, where + ".order");
        }
      } else {
        if (!spec.contains("order") || !spec.contains("components"))
          throw InputError(where + " needs order and components");
        fs.order = read_as<int>(spec.at("order"), where + ".order");
        at_least(fs.order, 0, where + ".order");
        fs.components = read_array<std::string>(spec.at("components"), where + ".components");
      }
      c.fields[name] = std::move(fs);
    }
  }
  if (j.contains("fan")) {
    const auto& fj = j.at("fan");
    check_keys(fj, "fan", {"n_boundary", "n_directions", "margin"});
    read_opt(fj, "n_boundary", c.fan.n_boundary, "fan");
    read_opt(fj, "n_directions", c.fan.n_directions, "fan");
    read_opt(fj, "margin", c.fan.margin, "fan");
    at_least(c.fan.n_boundary, 1, "fan.n_boundary");
    at_least(c.fan.n_directions, 1, "fan.n_directions");
    if (!(c.fan.margin >= 0.0 && c.fan.margin < 1.0)) throw InputError("fan.margin must lie in [0, 1)");
  }
  if (j.contains("quadrature")) {
    const auto& qj = j.at("quadrature");
    check_keys(qj, "quadrature", {"dt", "angles", "grid", "cells_per_radius", "polar", "azimuth"});
    read_opt(qj, "dt", c.quadrature.dt, "quadrature");
    if (c.quadrature.dt < 0.0) throw InputError("quadrature.dt must be nonnegative");
    read_opt(qj, "angles", c.quadrature.angles, "quadrature");
    read_opt(qj, "cells_per_radius", c.quadrature.cells_per_radius, "quadrature");
    read_opt(qj, "polar", c.quadrature.polar, "quadrature");
    read_opt(qj, "azimuth", c.quadrature.azimuth, "quadrature");
    read_opt(qj, "grid", c.quadrature.grid, "quadrature");
    for (const auto* o : {&c.quadrature.angles, &c.quadrature.cells_per_radius, &c.quadrature.polar,
                          &c.quadrature.azimuth})
      if (*o) at_least(**o, 1, "quadrature counts");
    at_least(c.quadrature.grid, 2, "quadrature.grid");
  }
  if (j.contains("transform")) {
    const auto& tj = j.at("transform");
    check_keys(tj, "transform", {"field"});
    read_opt(tj, "field", c.transform.field, "transform");
  }
  if (j.contains("verify")) {
    const auto& vj = j.at("verify");
    check_keys(vj, "verify", {"suites", "samples", "trials", "beta", "field", "thresholds"});
    if (vj.contains("suites")) c.verify.suites = read_array<std::string>(vj.at("suites"), "verify.suites");
    for (const auto& s : c.verify.suites)
      if (std::find(verify_suites().begin(), verify_suites().end(), s) == verify_suites().end())
        throw InputError("unknown verify suite '" + s + "'");
    read_opt(vj, "samples", c.verify.samples, "verify");
    read_opt(vj, "trials", c.verify.trials, "verify");
    at_least(c.verify.samples, 1, "verify.samples");
    at_least(c.verify.trials, 1, "verify.trials");
    read_opt(vj, "beta", c.verify.beta, "verify");
    read_opt(vj, "field", c.verify.field, "verify");
    if (vj.contains("thresholds")) {
      const auto& th = vj.at("thresholds");
      require_object(th, "verify.thresholds");
      for (const auto& [k, v] : th.items()) {
        if (std::find(verify_suites().begin(), verify_suites().end(), k) == verify_suites().end())
          throw InputError("unknown key '" + k + "' in verify.thresholds");
        c.verify.thresholds[k] = read_as<double>(v, "verify.thresholds." + k);
      }
    }
  }
  if (j.contains("conjugate")) {
    const auto& cj = j.at("conjugate");
    check_keys(cj, "conjugate", {"betas"});
    if (cj.contains("betas")) c.conjugate.betas = read_array<double>(cj.at("betas"), "conjugate.betas");
    for (double b : c.conjugate.betas)
      if (!(b >= 0.0)) throw InputError("conjugate.betas must be nonnegative");
  }
  if (j.contains("invert")) {
    const auto& ij = j.at("invert");
    check_keys(ij, "invert",
               {"data", "sidecar", "field", "truth", "alpha", "tolerance", "max_iterations", "noise", "trials"});
    read_opt(ij, "data", c.invert.data, "invert");
    read_opt(ij, "sidecar", c.invert.sidecar, "invert");
    read_opt(ij, "field", c.invert.field, "invert");
    read_opt(ij, "truth", c.invert.truth, "invert");
    read_opt(ij, "alpha", c.invert.alpha, "invert");
    read_opt(ij, "tolerance", c.invert.tolerance, "invert");
    read_opt(ij, "max_iterations", c.invert.max_iterations, "invert");
    read_opt(ij, "noise", c.invert.noise, "invert");
    read_opt(ij, "trials", c.invert.trials, "invert");
    positive(c.invert.tolerance, "invert.tolerance");
    at_least(c.invert.max_iterations, 1, "invert.max_iterations");
    at_least(c.invert.trials, 0, "invert.trials");
    if (c.invert.noise < 0.0) throw InputError("invert.noise must be nonnegative");
    if (c.invert.data && c.invert.field) throw InputError("invert takes either data or field, not both");
  }
  if (j.contains("decompose")) {
    const auto& dj = j.at("decompose");
    check_keys(dj, "decompose", {"field", "method", "degree"});
    read_opt(dj, "field", c.decompose.field, "decompose");
    read_opt(dj, "method", c.decompose.method, "decompose");
    read_opt(dj, "degree", c.decompose.degree, "decompose");
    if (c.decompose.method != "polynomial" && c.decompose.method != "grid")
      throw InputError("decompose.method must be 'polynomial' or 'grid'");
  }
  if (j.contains("tau")) {
    const auto& tj = j.at("tau");
    check_keys(tj, "tau", {"points"});
    if (tj.contains("points")) {
      const auto& pts = tj.at("points");
      if (!pts.is_array()) throw InputError("tau.points must be an array");
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const std::string where = "tau.points[" + std::to_string(i) + "]";
        check_keys(pts[i], where, {"x", "v"});
        if (!pts[i].contains("x") || !pts[i].contains("v")) throw InputError(where + " needs x and v");
        auto x = read_array<double>(pts[i].at("x"), where + ".x");
        auto v = read_array<double>(pts[i].at("v"), where + ".v");
        if (static_cast<int>(x.size()) != c.metric.dim || static_cast<int>(v.size()) != c.metric.dim)
          throw InputError(where + " has the wrong dimension");
        c.tau.points.emplace_back(std::move(x), std::move(v));
      }
    }
  }
  // d^s chains: the order follows from the root field; cycles are rejected.
  std::map<std::string, int> orders;
  for (const auto& [name, fs] : c.fields) {
    std::string cur = name;
    int depth = 0;
    while (!c.fields.at(cur).dsym_of.empty()) {
      cur = c.fields.at(cur).dsym_of;
      if (!c.fields.count(cur)) throw InputError("fields." + name + " refers to unknown field '" + cur + "'");
      if (++depth > static_cast<int>(c.fields.size())) throw InputError("fields." + name + " has a dsym_of cycle");
    }
    orders[name] = c.fields.at(cur).order + depth;
  }
  for (auto& [name, fs] : c.fields) {
    if (!fs.dsym_of.empty() && fs.order >= 0 && fs.order != orders[name])
      throw InputError("fields." + name + ".order does not match its dsym_of parent");
    fs.order = orders[name];
  }
  for (const auto& [name, fs] : c.fields)
    if (fs.dsym_of.empty() && static_cast<int>(fs.components.size()) != component_count(c.metric.dim, fs.order))
      throw InputError("fields." + name + " needs " + std::to_string(component_count(c.metric.dim, fs.order)) +
                       " components");
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what(), e.byte);
  }
  auto c = parse_config(j);
  c.base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  return c;
}

template <int Dim>
MetricChart<Dim> make_chart(const MetricSpec& spec) {
  if (spec.dim != Dim) throw InputError("metric dimension mismatch");
  const auto family = metric_family_from_string(spec.family);
  std::optional<Expression> lambda;
  if (!spec.lambda.empty()) lambda = Expression::parse(spec.lambda, Dim);
  return MetricChart<Dim>(family, spec.radius, spec.params, lambda);
}

template <int Dim>
SymmetricTensorField<Dim> make_field(const ExperimentConfig& cfg, const std::string& name,
                                     const MetricChart<Dim>& chart) {
  const auto& spec = cfg.field(name);
  if (!spec.dsym_of.empty()) return dsym(chart, make_field(cfg, spec.dsym_of, chart));
  return SymmetricTensorField<Dim>::from_strings(spec.order, spec.components);
}

}  // namespace geotomo
