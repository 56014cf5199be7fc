// Batch experiment runner: one config file in, CSV and JSON reports out.
// Exit codes: 0 success, 1 a check failed, 2 bad input or config, 3 numeric failure.

#include <fmt/core.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "geotomo/config.hpp"
#include "geotomo/geodesics.hpp"
#include "geotomo/helmholtz.hpp"
#include "geotomo/identities.hpp"
#include "geotomo/inversion.hpp"
#include "geotomo/xray.hpp"

namespace fs = std::filesystem;
using namespace geotomo;
using json = nlohmann::json;

namespace {

constexpr int kCheckFailed = 1;
constexpr int kInputError = 2;
constexpr int kNumericError = 3;

/// Everything a command produces; files are only written once the command
/// has finished without throwing.
struct Outcome {
  std::vector<std::pair<std::string, std::string>> files;
  std::vector<std::string> lines;
  bool pass = true;
};

struct Options {
  std::vector<std::string> suites;
  std::vector<double> betas;
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json null_or(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

template <int Dim>
std::string cutoff_string(const MetricChart<Dim>& chart) {
  const std::string r2 = Expression::format_number(chart.radius() * chart.radius());
  return "(1 - (x1^2 + x2^2" + std::string(Dim == 3 ? " + x3^2" : "") + ")/" + r2 + ")";
}

template <int Dim>
SymmetricTensorField<Dim> random_tensor(std::mt19937_64& rng, int order) {
  std::vector<std::string> comps;
  for (int c = 0; c < component_count(Dim, order); ++c) comps.push_back(detail::random_smooth<Dim>(rng));
  return SymmetricTensorField<Dim>::from_strings(order, comps);
}

// ---------------------------------------------------------------------------

template <int Dim>
Outcome cmd_transform(const ExperimentConfig& cfg) {
  const auto chart = make_chart<Dim>(cfg.metric);
  const auto f = make_field(cfg, cfg.transform.field, chart);
  if (f.order() != cfg.m) throw InputError("field order does not match m");
  const auto data = compute_ray_data(chart, f, cfg.fan, cfg.quadrature.dt);
  double worst = 0.0;
  for (const auto& r : data.records) worst = std::max(worst, std::abs(r.value));
  Outcome out;
  out.files = {{"rays.csv", data.csv()}, {"rays.json", dump(data.sidecar())}};
  out.lines.push_back(fmt::format("rays {}  max |I f| {:.6e}", data.records.size(), worst));
  return out;
}

template <int Dim>
Outcome cmd_verify(const ExperimentConfig& cfg, const Options& opt) {
  const auto chart = make_chart<Dim>(cfg.metric);
  const auto& vb = cfg.verify;
  auto suites = !opt.suites.empty() ? opt.suites : vb.suites;
  if (suites.empty()) suites = verify_suites();
  for (const auto& s : suites)
    if (std::find(verify_suites().begin(), verify_suites().end(), s) == verify_suites().end())
      throw InputError("unknown verify suite '" + s + "'");
  auto threshold = [&](const std::string& s, double def) {
    const auto it = vb.thresholds.find(s);
    return it == vb.thresholds.end() ? def : it->second;
  };
  const auto quad = cfg.quadrature.spec(identity_quadrature());
  std::mt19937_64 rng(cfg.seed);
  json reports = json::array();
  Outcome out;
  auto record = [&](const std::string& suite, bool pass, double worst, json report) {
    out.pass = out.pass && pass;
    reports.push_back(std::move(report));
    out.lines.push_back(fmt::format("{:<28} {:<4}  {:.3e}", suite, pass ? "pass" : "FAIL", worst));
  };

  for (const auto& suite : suites) {
    if (suite == "commutators") {
      const auto u = random_sm_function(chart, rng, false);
      const auto z = random_section(chart, rng, false);
      const double thr = threshold(suite, 1e-7);
      const auto rep = commutator_residuals(u, z, vb.samples, cfg.seed, thr);
      record(suite, rep.pass, rep.max_residual(), rep);
      // The printed sign of the last formula, for comparison only.
      auto printed = commutator_residuals(u, z, vb.samples, cfg.seed, thr, true);
      json pj = printed;
      pj["name"] = "commutators (printed sign)";
      pj["informational"] = true;
      reports.push_back(pj);
      out.lines.push_back(fmt::format("{:<28} {:<4}  {:.3e}", "  printed sign, info only",
                                      printed.pass ? "pass" : "off", printed.max_residual()));
    } else if (suite == "pestov") {
      bool pass = true;
      double worst = 0.0;
      json items = json::array();
      for (int t = 0; t < vb.trials; ++t) {
        const auto rep = pestov_residual(random_sm_function(chart, rng), quad, threshold(suite, 1e-3));
        pass = pass && rep.pass;
        worst = std::max(worst, rep.relative_residual);
        items.push_back(rep);
      }
      record(suite, pass, worst, {{"name", suite}, {"trials", items}, {"pass", pass}});
    } else if (suite == "structural") {
      bool pass = true;
      double worst = 0.0;
      json items = json::array();
      for (int t = 0; t < vb.trials; ++t) {
        const auto rep = structural_relation(random_sm_function(chart, rng, false), cfg.m, quad, threshold(suite, 1e-12));
        pass = pass && rep.pass;
        worst = std::max(worst, rep.relative_residual);
        items.push_back(rep);
      }
      record(suite, pass, worst, {{"name", suite}, {"trials", items}, {"pass", pass}});
    } else if (suite == "estf") {
      bool pass = true;
      double worst = 0.0;
      json items = json::array();
      for (int m = 0; m <= 4; ++m) {
        const auto rep = estf_check(chart, random_tensor<Dim>(rng, m), quad, threshold(suite, 1e-6));
        pass = pass && rep.pass;
        worst = std::max(worst, rep.relative_residual);
        json j = rep;
        j["m"] = m;
        items.push_back(j);
      }
      record(suite, pass, worst, {{"name", suite}, {"orders", items}, {"pass", pass}});
    } else if (suite == "divfree") {
      bool pass = true;
      double worst = 0.0;
      json items = json::array();
      auto run = [&](const std::string& label, const SymmetricTensorField<Dim>& f, double thr, double div_tol) {
        auto rep = divfree_identity_pointwise(chart, f, vb.samples, cfg.seed, thr, div_tol);
        pass = pass && rep.pass;
        worst = std::max(worst, rep.max_residual());
        json j = rep;
        j["field"] = label;
        items.push_back(j);
      };
      if (vb.field) {
        run(*vb.field, make_field(cfg, *vb.field, chart), threshold(suite, 1e-7), 1e-8);
      } else {
        if (chart.family() == MetricFamily::euclidean && chart.params()[0] == 1.0) {
          // Curl of a bump and curl-curl of a stream function.
          run("curl m=1",
              SymmetricTensorField<Dim>::from_strings(
                  1, Dim == 2 ? std::vector<std::string>{"-4*x2*(1 - x1^2 - x2^2)", "4*x1*(1 - x1^2 - x2^2)"}
                              : std::vector<std::string>{"-4*x2*(1 - x1^2 - x2^2)", "4*x1*(1 - x1^2 - x2^2)", "0"}),
              threshold(suite, 1e-7), 1e-8);
          if constexpr (Dim == 2)
            run("curl-curl m=2", SymmetricTensorField<2>::from_strings(2, {"0", "-cos(x1)", "-sin(x1)*x2"}),
                threshold(suite, 1e-7), 1e-8);
        }
        // Numerically projected fields: looser threshold.
        for (int m : {1, 2}) {
          const auto fs = helmholtz_decompose(chart, random_tensor<Dim>(rng, m)).solenoidal;
          run("projected m=" + std::to_string(m), fs, 1e-4, 1e-4);
        }
      }
      record(suite, pass, worst, {{"name", suite}, {"fields", items}, {"pass", pass}});
    } else if (suite == "jacobi") {
      const double beta = vb.beta ? *vb.beta : (cfg.m >= 1 ? beta_thresholds(Dim, cfg.m).second : 1.0);
      const auto cert = is_beta_conjugate_free(chart, beta, cfg.fan, cfg.quadrature.dt);
      json cj = {{"beta", cert.beta}, {"free", cert.free}, {"worst_ray", cert.worst_ray}, {"t_conj", null_or(cert.t_conj)}};
      if (!cert.free) {
        record(suite, false, 0.0,
               {{"name", suite}, {"certificate", cj}, {"pass", false}, {"reason", "chart has beta-conjugate points"}});
        continue;
      }
      bool pass = true;
      double lowest = std::numeric_limits<double>::infinity();
      json items = json::array();
      for (int t = 0; t < vb.trials; ++t) {
        const auto rep = jacobi_positivity(random_section(chart, rng), beta, cert, quad, threshold(suite, 1e-8));
        pass = pass && rep.pass;
        lowest = std::min(lowest, rep.term("value"));
        items.push_back(rep);
      }
      record(suite, pass, lowest, {{"name", suite}, {"certificate", cj}, {"trials", items}, {"pass", pass}});
    } else if (suite == "theorem2") {
      const double tol = threshold(suite, 1e-8);
      double gamma_err = 0.0, beta_err = 0.0;
      bool ordered = true;
      for (int d = 2; d <= 10; ++d)
        for (int m = 1; m <= 10; ++m) {
          const auto [b1, b2] = beta_thresholds(d, m);
          ordered = ordered && b1 >= b2 && b2 >= 1.0 && ((m == 1) == (b1 == b2));
          const auto res = threshold_minimizer(d, m);
          gamma_err = std::max(gamma_err, std::abs(res.gamma - 1.0 / (m + d - 2)));
          beta_err = std::max(beta_err, std::abs(res.beta - static_cast<double>(m * (m + d - 1)) / (2 * m + d - 2)));
        }
      const bool pass = ordered && gamma_err < tol && beta_err < tol;
      record(suite, pass, std::max(gamma_err, beta_err),
             {{"name", suite},
              {"cases", 90},
              {"thresholds_ordered", ordered},
              {"max_gamma_error", gamma_err},
              {"max_beta_error", beta_err},
              {"threshold", tol},
              {"pass", pass}});
    }
  }
  out.files = {{"verify.json", dump(reports)}};
  return out;
}

template <int Dim>
Outcome cmd_conjugate(const ExperimentConfig& cfg, const Options& opt) {
  const auto chart = make_chart<Dim>(cfg.metric);
  auto betas = !opt.betas.empty() ? opt.betas : cfg.conjugate.betas;
  if (betas.empty()) {
    if (cfg.m >= 1) {
      const auto [b1, b2] = beta_thresholds(Dim, cfg.m);
      betas = {b1, b2};
    } else {
      betas = {1.0};
    }
  }
  json reports = json::array();
  Outcome out;
  for (double beta : betas) {
    if (!(beta >= 0.0)) throw InputError("beta must be nonnegative");
    const auto rep = is_beta_conjugate_free(chart, beta, cfg.fan, cfg.quadrature.dt);
    reports.push_back({{"beta", rep.beta},
                       {"free", rep.free},
                       {"worst_ray", rep.worst_ray},
                       {"t_conj", null_or(rep.t_conj)},
                       {"rays_checked", rep.rays_checked}});
    out.lines.push_back(fmt::format("beta {:<10.6g} {}", beta,
                                    rep.free ? std::string("free") : fmt::format("conjugate at t = {:.6f}", *rep.t_conj)));
  }
  out.files = {{"conjugate.json", dump(reports)}};
  return out;
}

template <int Dim>
json grid_json(const NodeGrid<Dim>& grid, int order, const std::vector<double>& coefficients,
               const SymmetricTensorField<Dim>& solenoidal) {
  const std::size_t nn = grid.node_count();
  const int nc = component_count(Dim, order);
  json raw = json::array(), sol = json::array();
  std::vector<std::vector<double>> at_nodes(nc, std::vector<double>(nn, 0.0));
  for (std::size_t k = 0; k < nn; ++k) {
    const auto x = grid.node(k);
    if (norm(x) > grid.radius()) continue;
    const auto c = solenoidal.components(x);
    for (int i = 0; i < nc; ++i) at_nodes[i][k] = c[i];
  }
  for (int i = 0; i < nc; ++i) {
    raw.push_back(std::vector<double>(coefficients.begin() + i * nn, coefficients.begin() + (i + 1) * nn));
    sol.push_back(at_nodes[i]);
  }
  return {{"grid", {{"dim", Dim}, {"radius", grid.radius()}, {"nodes_per_axis", grid.nodes_per_axis()}}},
          {"order", order},
          {"layout", "component-major, node index x1 fastest"},
          {"coefficients", raw},
          {"solenoidal_at_nodes", sol}};
}

template <int Dim>
Outcome cmd_invert(const ExperimentConfig& cfg) {
  const auto chart = make_chart<Dim>(cfg.metric);
  const auto& ib = cfg.invert;
  Outcome out;
  if (ib.trials > 0) {
    ExperimentOptions eo;
    eo.fan = cfg.fan;
    eo.nodes_per_axis = cfg.quadrature.grid;
    eo.data_dt = cfg.quadrature.dt;
    const auto rep = sinjectivity_experiment(chart, cfg.m, ib.trials, ib.noise, cfg.seed, eo);
    out.files = {{"experiment.json", dump(json(rep))}};
    out.lines.push_back(fmt::format("trials {}  median solenoidal error {:.4e}  median potential ratio {:.4e}",
                                    rep.trials.size(), rep.median_solenoidal_error, rep.median_potential_ratio));
    return out;
  }
  InversionProblem<Dim> prob{.chart = chart, .data = {}, .order = cfg.m};
  std::optional<SymmetricTensorField<Dim>> truth;
  if (ib.data) {
    const fs::path csv = cfg.resolve(*ib.data);
    const fs::path side = ib.sidecar ? cfg.resolve(*ib.sidecar) : fs::path(csv).replace_extension(".json");
    if (!fs::exists(csv)) throw InputError("ray data file not found: " + csv.string());
    if (!fs::exists(side)) throw InputError("ray data sidecar not found: " + side.string());
    prob.data = RayDataSet<Dim>::read(csv.string(), side.string());
  } else if (ib.field) {
    const auto f = make_field(cfg, *ib.field, chart);
    if (f.order() != cfg.m) throw InputError("field order does not match m");
    prob.data = compute_ray_data(chart, f, cfg.fan, cfg.quadrature.dt);
    std::mt19937_64 rng(cfg.seed);
    detail::add_noise(prob.data, ib.noise, rng);
    if (!ib.truth) truth = cfg.m == 0 ? f : helmholtz_decompose(chart, f).solenoidal;
  } else {
    throw InputError("invert needs either data or field");
  }
  if (ib.truth) truth = make_field(cfg, *ib.truth, chart);
  prob.nodes_per_axis = cfg.quadrature.grid;
  prob.alpha = ib.alpha;
  prob.tolerance = ib.tolerance;
  prob.max_iterations = ib.max_iterations;
  const auto res = reconstruct_solenoidal(prob);

  std::string log = "iter,residual\n";
  for (std::size_t k = 0; k < res.history.size(); ++k) log += std::to_string(k) + "," + format_double(res.history[k]) + "\n";
  const double sol_norm = l2_norm(chart, res.solenoidal);
  json summary = {{"order", cfg.m},
                  {"rays", prob.data.records.size()},
                  {"iterations", res.iterations},
                  {"alpha", res.alpha},
                  {"norm_estimate", res.norm_estimate},
                  {"dot_test", res.dot_test},
                  {"final_residual", res.history.empty() ? 0.0 : res.history.back()},
                  {"solenoidal_norm", sol_norm}};
  out.lines.push_back(fmt::format("iterations {}  |f^s| {:.6e}", res.iterations, sol_norm));
  if (truth) {
    const double tn = l2_norm(chart, *truth);
    const double err = l2_norm(chart, res.solenoidal - *truth);
    summary["truth_norm"] = tn;
    summary["error_norm"] = err;
    summary["relative_error"] = tn > 0.0 ? json(err / tn) : json(nullptr);
    if (tn > 0.0) out.lines.push_back(fmt::format("relative L2 error {:.6e}", err / tn));
  }
  out.files = {{"reconstruction.json", dump(grid_json(res.grid, cfg.m, res.coefficients, res.solenoidal))},
               {"convergence.csv", log},
               {"summary.json", dump(summary)}};
  return out;
}

template <int Dim>
Outcome cmd_decompose(const ExperimentConfig& cfg) {
  const auto chart = make_chart<Dim>(cfg.metric);
  const auto& db = cfg.decompose;
  const auto f = make_field(cfg, db.field, chart);
  const auto res = db.method == "grid" ? helmholtz_decompose_grid(chart, f, cfg.quadrature.grid)
                                       : helmholtz_decompose(chart, f, HelmholtzOptions{db.degree});
  const json report = {{"method", db.method},
                       {"order", f.order()},
                       {"field_norm", res.field_norm},
                       {"solenoidal_norm", res.solenoidal_norm},
                       {"potential_gradient_norm", l2_norm(chart, res.gradient)},
                       {"divergence_norm", res.divergence_norm}};
  Outcome out;
  out.files = {{"decomposition.json", dump(report)}};
  out.lines.push_back(fmt::format("|f| {:.6e}  |f^s| {:.6e}  |delta f^s| {:.3e}", res.field_norm, res.solenoidal_norm,
                                  res.divergence_norm));
  return out;
}

template <int Dim>
Outcome cmd_tau(const ExperimentConfig& cfg) {
  const auto chart = make_chart<Dim>(cfg.metric);
  std::vector<PhasePoint<Dim>> pts;
  if (cfg.tau.points.empty()) {
    pts = fan_phase_points(chart, cfg.fan);
  } else {
    for (const auto& [xs, vs] : cfg.tau.points) {
      Vec<double, Dim> x, v;
      for (int i = 0; i < Dim; ++i) {
        x[i] = xs[i];
        v[i] = vs[i];
      }
      if (norm(x) > chart.radius()) throw InputError("tau point lies outside the chart");
      if (norm(v) == 0.0) throw InputError("tau direction is zero");
      pts.push_back(make_phase_point(chart, x, v));
    }
  }
  std::vector<double> tau(pts.size());
  parallel_for(pts.size(), [&](std::size_t i) { tau[i] = exit_time(chart, pts[i], cfg.quadrature.dt); });
  std::string csv;
  for (int i = 1; i <= Dim; ++i) csv += "x" + std::to_string(i) + ",";
  for (int i = 1; i <= Dim; ++i) csv += "v" + std::to_string(i) + ",";
  csv += "tau\n";
  for (std::size_t k = 0; k < pts.size(); ++k) {
    for (double c : pts[k].x) csv += format_double(c) + ",";
    for (double c : pts[k].v) csv += format_double(c) + ",";
    csv += format_double(tau[k]) + "\n";
  }
  Outcome out;
  out.files = {{"tau.csv", csv}};
  out.lines.push_back(fmt::format("points {}", pts.size()));
  return out;
}

template <int Dim>
Outcome dispatch(const std::string& command, const ExperimentConfig& cfg, const Options& opt) {
  if (command == "transform") return cmd_transform<Dim>(cfg);
  if (command == "verify") return cmd_verify<Dim>(cfg, opt);
  if (command == "conjugate") return cmd_conjugate<Dim>(cfg, opt);
  if (command == "invert") return cmd_invert<Dim>(cfg);
  if (command == "decompose") return cmd_decompose<Dim>(cfg);
  return cmd_tau<Dim>(cfg);
}

void write_outputs(const fs::path& dir, const Outcome& out) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir.string());
  for (const auto& [name, content] : out.files) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw InputError("cannot write " + (dir / name).string());
    f << content;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geodesic ray transform experiments on simple manifolds"};
  std::string config_path, out_dir = ".";
  int threads = 1;
  std::optional<std::uint64_t> seed;
  Options opt;
  app.add_option("--config", config_path, "experiment config (JSON)")->required();
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--seed", seed, "overrides the config seed");
  app.fallthrough();
  app.require_subcommand(1);
  app.add_subcommand("transform", "ray transform over the fan, CSV + JSON sidecar");
  auto* verify = app.add_subcommand("verify", "identity checks; exit 1 if any fails");
  verify->add_option("--suite", opt.suites, "suite names (default: config, else all)");
  auto* conj = app.add_subcommand("conjugate", "beta-conjugate point search on the fan");
  conj->add_option("--beta", opt.betas, "beta values (default: config, else beta1 and beta2)");
  app.add_subcommand("invert", "reconstruct the solenoidal part from ray data");
  app.add_subcommand("decompose", "Helmholtz split of a config field");
  app.add_subcommand("tau", "exit times");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInputError;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    auto cfg = load_config(config_path);
    if (seed) cfg.seed = *seed;
    set_thread_count(threads);
    const Outcome out = cfg.metric.dim == 2 ? dispatch<2>(command, cfg, opt) : dispatch<3>(command, cfg, opt);
    write_outputs(out_dir, out);
    for (const auto& line : out.lines) fmt::print("{}\n", line);
    return out.pass ? 0 : kCheckFailed;
  } catch (const InputError& e) {
    fmt::print(stderr, "input error: {}\n", e.what());
    return kInputError;
  } catch (const PreconditionError& e) {
    fmt::print(stderr, "precondition not met: {}\n", e.what());
    return kInputError;
  } catch (const SolverError& e) {
    fmt::print(stderr, "solver failure after {} iterations: {}\n", e.history().size() - 1, e.what());
    return kNumericError;
  } catch (const std::exception& e) {
    fmt::print(stderr, "numeric failure: {}\n", e.what());
    return kNumericError;
  }
}
