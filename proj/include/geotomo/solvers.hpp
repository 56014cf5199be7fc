#pragma once

// Krylov solvers on Eigen vectors with caller-supplied operators.

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "geotomo/errors.hpp"

namespace geotomo {

using LinearMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct SolveResult {
  Eigen::VectorXd x;
  int iterations = 0;
  /// Residual norm per iteration, entry 0 at the initial guess.
  std::vector<double> history;
};

struct SolveOptions {
  double tolerance = 1e-10;  // relative to the initial residual
  int max_iterations = 1000;
  bool throw_on_failure = true;
};

/// CGLS for min |A x - b|. History holds |A^T (b - A x)|.
inline SolveResult cgls(const LinearMap& a, const LinearMap& at, const Eigen::VectorXd& b, Eigen::Index n,
                        const SolveOptions& opt = {}) {
  SolveResult res;
  res.x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd r = b;
  Eigen::VectorXd s = at(r);
  Eigen::VectorXd p = s;
  double gamma = s.squaredNorm();
  const double start = std::sqrt(gamma);
  res.history.push_back(start);
  if (start == 0.0) return res;
  for (int it = 1; it <= opt.max_iterations; ++it) {
    const Eigen::VectorXd q = a(p);
    const double qq = q.squaredNorm();
    if (qq == 0.0) break;
    const double alpha = gamma / qq;
    res.x += alpha * p;
    r -= alpha * q;
    s = at(r);
    const double next = s.squaredNorm();
    res.iterations = it;
    res.history.push_back(std::sqrt(next));
    if (std::sqrt(next) <= opt.tolerance * start) return res;
    p = s + (next / gamma) * p;
    gamma = next;
  }
  if (opt.throw_on_failure && res.history.back() > opt.tolerance * start)
    throw SolverError("CGLS did not converge in " + std::to_string(opt.max_iterations) + " iterations",
                      res.history);
  return res;
}

/// Conjugate residual for a symmetric positive semidefinite N x = rhs. The
/// residual norm is nonincreasing by construction; history records it.
inline SolveResult conjugate_residual(const LinearMap& op, const Eigen::VectorXd& rhs, const SolveOptions& opt = {}) {
  SolveResult res;
  res.x = Eigen::VectorXd::Zero(rhs.size());
  Eigen::VectorXd r = rhs;
  Eigen::VectorXd p = r;
  Eigen::VectorXd ar = op(r);
  Eigen::VectorXd ap = ar;
  double rar = r.dot(ar);
  const double start = r.norm();
  res.history.push_back(start);
  if (start == 0.0) return res;
  for (int it = 1; it <= opt.max_iterations; ++it) {
    const double apap = ap.squaredNorm();
    if (apap == 0.0 || rar <= 0.0) break;
    const double alpha = rar / apap;
    res.x += alpha * p;
    r -= alpha * ap;
    res.iterations = it;
    res.history.push_back(r.norm());
    if (res.history.back() <= opt.tolerance * start) return res;
    ar = op(r);
    const double next = r.dot(ar);
    const double beta = next / rar;
    rar = next;
    p = r + beta * p;
    ap = ar + beta * ap;
  }
  if (opt.throw_on_failure && res.history.back() > opt.tolerance * start)
    throw SolverError("conjugate residual did not converge in " + std::to_string(opt.max_iterations) +
                          " iterations",
                      res.history);
  return res;
}

/// Estimate of |A|^2 (largest eigenvalue of A^T A) by power iteration.
inline double operator_norm2(const LinearMap& a, const LinearMap& at, Eigen::Index n, int steps = 20,
                             std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd x(n);
  for (auto& c : x) c = normal(rng);
  double lambda = 0.0;
  for (int k = 0; k < steps; ++k) {
    const double nx = x.norm();
    if (nx == 0.0) return 0.0;
    x /= nx;
    const Eigen::VectorXd y = at(a(x));
    lambda = x.dot(y);
    x = y;
  }
  return lambda;
}

}  // namespace geotomo
