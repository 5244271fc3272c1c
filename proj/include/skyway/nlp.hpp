#pragma once

#include "skyway/model.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace skyway::nlp {

using Vector = Eigen::VectorXd;

/// Differentiable scalar term. eval returns the value at x; when grad is
/// non-null it ADDS d(value)/dx into it (the caller zeroes the buffer).
/// Names show up in diagnostics and gradient-check reports.
struct ScalarFunction {
  std::string name;
  std::function<double(const Vector&, Vector*)> eval;

  double operator()(const Vector& x, Vector* grad = nullptr) const {
    return eval(x, grad);
  }
};

/// Smooth program: minimize objective subject to g(x) <= 0, h(x) == 0 and
/// box bounds. Bounds may be +-infinity.
struct Problem {
  int dimension = 0;
  ScalarFunction objective;
  std::vector<ScalarFunction> inequalities;
  std::vector<ScalarFunction> equalities;
  Vector lower;
  Vector upper;

  void validate() const {
    if (dimension <= 0) throw InvalidInput("problem: dimension must be > 0");
    if (!objective.eval) throw InvalidInput("problem: missing objective");
    if (lower.size() != dimension || upper.size() != dimension) {
      throw InvalidInput("problem: bounds must match dimension");
    }
    for (int i = 0; i < dimension; ++i) {
      if (lower[i] > upper[i]) {
        throw InvalidInput("problem: lower bound exceeds upper bound");
      }
    }
  }
};

struct SolverConfig {
  int max_outer_iters = 50;
  int max_inner_iters = 500;
  double constraint_tol = 1e-6;     // absolute feasibility target
  double stationarity_tol = 1e-5;   // projected-gradient target, relative
                                    // to 1 + |objective|
  double initial_penalty = 10.0;
  double penalty_growth = 10.0;
  double finite_diff_step = 1e-6;
  unsigned long long rng_seed = 0;  // consumed by callers that sample

  void validate() const {
    if (max_outer_iters < 1 || max_inner_iters < 1) {
      throw InvalidInput("solver config: iteration limits must be >= 1");
    }
    if (!(constraint_tol > 0.0) || !(stationarity_tol > 0.0)) {
      throw InvalidInput("solver config: tolerances must be positive");
    }
    if (!(initial_penalty > 0.0) || !(penalty_growth > 1.0)) {
      throw InvalidInput("solver config: penalty settings out of range");
    }
    if (!(finite_diff_step > 0.0)) {
      throw InvalidInput("solver config: finite_diff_step must be positive");
    }
  }
};

enum class SolveStatus { converged, max_iters, infeasible_start,
                         numerical_failure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iters: return "max_iters";
    case SolveStatus::infeasible_start: return "infeasible_start";
    case SolveStatus::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

struct TracePoint {
  int outer_iter = 0;
  double objective = 0.0;
  double violation = 0.0;
};

struct SolveResult {
  Vector x_opt;
  double objective_value = 0.0;
  double max_constraint_violation = 0.0;
  SolveStatus status = SolveStatus::numerical_failure;
  std::vector<TracePoint> trace;
  int outer_iterations = 0;
  long long function_evaluations = 0;
  // Multiplier estimates at x_opt; with them the Lagrangian gradient equals
  // the augmented Lagrangian gradient the inner solver drove to tolerance.
  Vector eq_multipliers;
  Vector ineq_multipliers;
};

/// Worst constraint violation of a problem at x: |h| over equalities,
/// max(0, g) over inequalities. Box bounds are not included.
inline double max_violation(const Problem& problem, const Vector& x) {
  double worst = 0.0;
  for (const auto& fn : problem.equalities) {
    worst = std::max(worst, std::abs(fn(x)));
  }
  for (const auto& fn : problem.inequalities) {
    worst = std::max(worst, std::max(0.0, fn(x)));
  }
  return worst;
}

/// Central finite differences of a scalar function; the oracle counterpart
/// of every analytic gradient in the library.
inline Vector finite_diff_gradient(
    const std::function<double(const Vector&)>& f, const Vector& x,
    double h = 1e-6) {
  if (!(h > 0.0)) throw InvalidInput("finite differences: h must be positive");
  Vector g(x.size());
  Vector probe = x;
  for (int i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double hi = f(probe);
    probe[i] = x[i] - h;
    const double lo = f(probe);
    probe[i] = x[i];
    g[i] = (hi - lo) / (2.0 * h);
  }
  return g;
}

struct GradientCheckEntry {
  std::string name;
  double rel_error = 0.0;
};

struct GradientCheckReport {
  std::vector<GradientCheckEntry> entries;
  double tolerance = 0.0;
  double max_rel_error = 0.0;
  bool pass = false;
  std::string worst;
};

/// Compares every analytic gradient in the problem against central
/// differences at x. Relative error is ||ga - gfd||_inf / max(1, ||gfd||_inf)
/// so tiny gradients do not blow up the ratio.
inline GradientCheckReport check_gradient(const Problem& problem,
                                          const Vector& x, double tolerance,
                                          double h = 1e-6) {
  problem.validate();
  if (x.size() != problem.dimension) {
    throw InvalidInput("gradient check: x does not match problem dimension");
  }
  GradientCheckReport report;
  report.tolerance = tolerance;

  auto check_one = [&](const ScalarFunction& fn) {
    Vector ga = Vector::Zero(x.size());
    fn(x, &ga);
    Vector gfd = finite_diff_gradient([&](const Vector& p) { return fn(p); },
                                      x, h);
    const double denom = std::max(1.0, gfd.lpNorm<Eigen::Infinity>());
    const double rel = (ga - gfd).lpNorm<Eigen::Infinity>() / denom;
    report.entries.push_back({fn.name.empty() ? "objective" : fn.name, rel});
    if (rel >= report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst = report.entries.back().name;
    }
  };

  check_one(problem.objective);
  for (const auto& fn : problem.inequalities) check_one(fn);
  for (const auto& fn : problem.equalities) check_one(fn);
  report.pass = report.max_rel_error <= tolerance;
  return report;
}

namespace detail {

inline Vector clamp_to_box(const Problem& p, Vector x) {
  for (int i = 0; i < x.size(); ++i) {
    x[i] = std::min(std::max(x[i], p.lower[i]), p.upper[i]);
  }
  return x;
}

/// Augmented Lagrangian value/gradient for fixed multipliers and penalty.
struct AugmentedLagrangian {
  const Problem* problem;
  Vector lambda;  // equality multipliers
  Vector mu;      // inequality multipliers, kept >= 0
  double rho = 1.0;
  long long* evals = nullptr;
  mutable Vector scratch;

  double operator()(const Vector& x, Vector* grad) const {
    ++*evals;
    if (grad) grad->setZero();
    double value = problem->objective(x, grad);
    for (int m = 0; m < lambda.size(); ++m) {
      const auto& fn = problem->equalities[static_cast<std::size_t>(m)];
      const double hval = fn(x);
      value += lambda[m] * hval + 0.5 * rho * hval * hval;
      if (grad) {
        scratch.setZero();
        fn(x, &scratch);
        *grad += (lambda[m] + rho * hval) * scratch;
      }
    }
    for (int j = 0; j < mu.size(); ++j) {
      const auto& fn = problem->inequalities[static_cast<std::size_t>(j)];
      const double gval = fn(x);
      const double t = mu[j] + rho * gval;
      if (t > 0.0) {
        value += (t * t - mu[j] * mu[j]) / (2.0 * rho);
        if (grad) {
          scratch.setZero();
          fn(x, &scratch);
          *grad += t * scratch;
        }
      } else {
        value -= mu[j] * mu[j] / (2.0 * rho);
      }
    }
    return value;
  }
};

inline double projected_gradient_norm(const Problem& p, const Vector& x,
                                      const Vector& g) {
  double worst = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    const double moved = std::min(std::max(x[i] - g[i], p.lower[i]),
                                  p.upper[i]);
    worst = std::max(worst, std::abs(x[i] - moved));
  }
  return worst;
}

enum class InnerStatus { reached_tol, max_iters, stalled, numeric };

struct InnerResult {
  Vector x;
  double value = 0.0;
  Vector gradient;
  double pg_norm = 0.0;
  InnerStatus status = InnerStatus::numeric;
};

// Inverse-curvature diagonal for the quasi-Newton seed matrix, estimated by
// central-differencing the gradient componentwise. The corridor problems mix
// coordinates whose curvature differs by several orders of magnitude (early
// heading moves swing every later position; radii act locally), and a scalar
// seed makes L-BFGS crawl on them. Non-positive estimates fall back to the
// median positive curvature; the spread is capped at eight decades.
inline Vector inverse_curvature_diag(const AugmentedLagrangian& al,
                                     const Vector& x) {
  const int n = static_cast<int>(x.size());
  Vector curv(n);
  Vector probe = x;
  Vector gp(n), gm(n);
  for (int i = 0; i < n; ++i) {
    const double h = 1e-4 * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + h;
    al(probe, &gp);
    probe[i] = x[i] - h;
    al(probe, &gm);
    probe[i] = x[i];
    curv[i] = (gp[i] - gm[i]) / (2.0 * h);
  }
  if (!curv.allFinite()) return Vector::Ones(n);

  std::vector<double> positive;
  positive.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (curv[i] > 0.0) positive.push_back(curv[i]);
  }
  if (positive.empty()) return Vector::Ones(n);
  std::nth_element(positive.begin(), positive.begin() + positive.size() / 2,
                   positive.end());
  const double ref = positive[positive.size() / 2];

  Vector inv(n);
  for (int i = 0; i < n; ++i) {
    const double b = std::clamp(curv[i] > 0.0 ? curv[i] : ref, 1e-4 * ref,
                                1e4 * ref);
    inv[i] = 1.0 / b;
  }
  return inv;
}

/// Projected L-BFGS with Armijo backtracking. Components pressing against an
/// active bound are masked out of the quasi-Newton direction; a failed line
/// search resets the memory and retries along the projected steepest descent
/// direction before giving up. The two-loop recursion seeds with a diagonal
/// estimated from the augmented Lagrangian's curvature at the start point.
inline InnerResult minimize_augmented(const AugmentedLagrangian& al,
                                      Vector x, double pg_tol,
                                      int max_iters) {
  constexpr double kArmijoC1 = 1e-4;
  constexpr int kMemory = 30;
  const Problem& p = *al.problem;

  InnerResult out;
  Vector g(x.size());
  double f = al(x, &g);
  if (!std::isfinite(f) || !g.allFinite()) {
    out.x = std::move(x);
    out.value = f;
    out.gradient = std::move(g);
    out.status = InnerStatus::numeric;
    return out;
  }
  const Vector h0 = inverse_curvature_diag(al, x);

  std::deque<std::pair<Vector, Vector>> memory;  // (s, y) pairs
  auto masked = [&](Vector v) {
    for (int i = 0; i < v.size(); ++i) {
      const bool at_lower = x[i] - p.lower[i] <= 1e-10 * (1.0 + std::abs(x[i]));
      const bool at_upper = p.upper[i] - x[i] <= 1e-10 * (1.0 + std::abs(x[i]));
      if ((at_lower && g[i] > 0.0) || (at_upper && g[i] < 0.0)) v[i] = 0.0;
    }
    return v;
  };

  auto two_loop = [&](const Vector& grad) {
    Vector q = masked(grad);
    std::vector<double> alpha(memory.size());
    for (std::size_t i = memory.size(); i-- > 0;) {
      const auto& [s, y] = memory[i];
      const double inv = 1.0 / s.dot(y);
      alpha[i] = inv * s.dot(q);
      q -= alpha[i] * y;
    }
    if (memory.empty()) {
      q = q.cwiseProduct(h0);
    } else {
      const auto& [s, y] = memory.back();
      q = q.cwiseProduct(h0) * (s.dot(y) / y.dot(y.cwiseProduct(h0)));
    }
    for (std::size_t i = 0; i < memory.size(); ++i) {
      const auto& [s, y] = memory[i];
      const double beta = y.dot(q) / s.dot(y);
      q += (alpha[i] - beta) * s;
    }
    return masked(-std::move(q));
  };

  // Returns true when a step was accepted; x, f, g advance to the new point.
  // Rejected trial steps shrink by quadratic interpolation of the model
  // along the ray, clamped into [0.1, 0.5] of the previous trial.
  auto line_search = [&](const Vector& d) {
    double step = 1.0;
    for (int trial = 0; trial < 60; ++trial) {
      Vector x_new = clamp_to_box(p, x + step * d);
      Vector dx = x_new - x;
      const double slope = g.dot(dx);
      auto shrink = [&](double f_new) {
        double next = 0.5;
        if (std::isfinite(f_new)) {
          const double denom = 2.0 * (f_new - f - slope);
          if (denom > 0.0) next = -slope / denom;
        }
        step *= std::min(0.5, std::max(0.1, next));
      };
      if (slope >= 0.0 || dx.lpNorm<Eigen::Infinity>() == 0.0) {
        step *= 0.5;
        continue;
      }
      const double f_new = al(x_new, nullptr);
      if (!std::isfinite(f_new) || f_new > f + kArmijoC1 * slope) {
        shrink(f_new);
        continue;
      }
      Vector g_new(x.size());
      const double f_check = al(x_new, &g_new);
      if (!g_new.allFinite()) return false;
      Vector s = x_new - x;
      Vector y = g_new - g;
      const double sy = s.dot(y);
      if (sy > 1e-9 * s.norm() * y.norm()) {
        memory.emplace_back(std::move(s), std::move(y));
        if (memory.size() > kMemory) memory.pop_front();
      }
      x = std::move(x_new);
      f = f_check;
      g = std::move(g_new);
      return true;
    }
    return false;
  };

  out.status = InnerStatus::max_iters;
  for (int it = 0; it < max_iters; ++it) {
    const double pg = projected_gradient_norm(p, x, g);
    if (pg <= pg_tol) {
      out.status = InnerStatus::reached_tol;
      break;
    }
    Vector d = two_loop(g);
    const Vector gm = masked(g);
    if (d.dot(gm) >= -1e-12 * d.norm() * gm.norm()) {
      memory.clear();
      d = -gm.cwiseProduct(h0);
    }
    if (!line_search(d)) {
      if (!memory.empty()) {
        memory.clear();
        if (line_search(-gm.cwiseProduct(h0))) continue;
      }
      out.status = InnerStatus::stalled;
      break;
    }
    if (!g.allFinite() || !std::isfinite(f)) {
      out.status = InnerStatus::numeric;
      break;
    }
  }

  out.pg_norm = projected_gradient_norm(p, x, g);
  if (out.status == InnerStatus::max_iters && out.pg_norm <= pg_tol) {
    out.status = InnerStatus::reached_tol;
  }
  out.x = std::move(x);
  out.value = f;
  out.gradient = std::move(g);
  return out;
}

}  // namespace detail

/// Augmented Lagrangian method over the box-constrained inner solver.
/// Multipliers update when feasibility improves enough; otherwise the
/// penalty grows by penalty_growth (capped at 1e12). Deterministic and
/// single-threaded: identical inputs give bit-identical results.
inline SolveResult solve(const Problem& problem, Vector x0,
                         const SolverConfig& config = {}) {
  problem.validate();
  config.validate();
  if (x0.size() != problem.dimension) {
    throw InvalidInput("solve: x0 does not match problem dimension");
  }

  SolveResult result;
  Vector x = detail::clamp_to_box(problem, std::move(x0));

  // A NaN anywhere at the start point means the model cannot even be
  // evaluated there; that is the caller's bug, not a solver failure.
  const double obj_start = problem.objective(x);
  {
    double probe = obj_start;
    for (const auto& fn : problem.equalities) {
      if (std::isnan(probe)) break;
      probe += fn(x);
    }
    for (const auto& fn : problem.inequalities) {
      if (std::isnan(probe)) break;
      probe += fn(x);
    }
    if (std::isnan(probe)) {
      result.x_opt = std::move(x);
      result.objective_value = std::numeric_limits<double>::quiet_NaN();
      result.max_constraint_violation =
          std::numeric_limits<double>::quiet_NaN();
      result.status = SolveStatus::infeasible_start;
      return result;
    }
  }

  detail::AugmentedLagrangian al;
  al.problem = &problem;
  al.lambda = Vector::Zero(static_cast<int>(problem.equalities.size()));
  al.mu = Vector::Zero(static_cast<int>(problem.inequalities.size()));
  al.rho = config.initial_penalty;
  al.evals = &result.function_evaluations;
  al.scratch = Vector::Zero(problem.dimension);

  bool have_best = false;
  Vector best_x;
  double best_f = 0.0;
  double best_viol = std::numeric_limits<double>::infinity();
  auto consider_best = [&](const Vector& cand, double f, double viol) {
    const bool cand_feasible = viol <= config.constraint_tol;
    const bool best_feasible = best_viol <= config.constraint_tol;
    bool better;
    if (cand_feasible && best_feasible) {
      better = f < best_f;
    } else if (cand_feasible != best_feasible) {
      better = cand_feasible;
    } else {
      better = viol < best_viol;
    }
    if (!have_best || better) {
      have_best = true;
      best_x = cand;
      best_f = f;
      best_viol = viol;
    }
  };

  result.status = SolveStatus::max_iters;
  double viol_prev = std::numeric_limits<double>::infinity();

  // The stationarity target is relative to the objective's magnitude. An
  // absolute projected-gradient threshold is unreachable in double precision
  // once curvature along any direction exceeds tol^2 / ulp(f): the line
  // search cannot resolve the residual descent. Scaling by 1 + |f| keeps the
  // test meaningful across problem sizes; feasibility stays absolute.
  double grad_scale = 1.0 + std::abs(obj_start);

  for (int outer = 1; outer <= config.max_outer_iters; ++outer) {
    result.outer_iterations = outer;
    detail::InnerResult inner = detail::minimize_augmented(
        al, std::move(x), config.stationarity_tol * grad_scale,
        config.max_inner_iters);
    x = std::move(inner.x);

    if (inner.status == detail::InnerStatus::numeric) {
      result.status = SolveStatus::numerical_failure;
      break;
    }

    const double f_true = problem.objective(x);
    const double viol = max_violation(problem, x);
    result.trace.push_back({outer, f_true, viol});
    consider_best(x, f_true, viol);
    grad_scale = 1.0 + std::abs(f_true);

    if (viol <= config.constraint_tol &&
        inner.pg_norm <= config.stationarity_tol * grad_scale) {
      // Converged means THIS iterate meets both tolerances; it wins over any
      // best-so-far bookkeeping.
      have_best = true;
      best_x = x;
      best_f = f_true;
      best_viol = viol;
      result.status = SolveStatus::converged;
      break;
    }

    if (viol <= std::max(0.25 * viol_prev, config.constraint_tol)) {
      for (int m = 0; m < al.lambda.size(); ++m) {
        al.lambda[m] +=
            al.rho * problem.equalities[static_cast<std::size_t>(m)](x);
      }
      for (int j = 0; j < al.mu.size(); ++j) {
        al.mu[j] = std::max(
            0.0, al.mu[j] + al.rho *
                     problem.inequalities[static_cast<std::size_t>(j)](x));
      }
    } else if (inner.status != detail::InnerStatus::max_iters) {
      // Feasibility stalled with the subproblem actually solved: the
      // penalty is too weak. A capped inner solve proves nothing and only
      // continues at the same penalty, so runaway growth cannot be driven
      // by inner iteration limits.
      al.rho = std::min(al.rho * config.penalty_growth, 1e12);
    }
    viol_prev = std::min(viol_prev, viol);
  }

  if (have_best) {
    result.x_opt = std::move(best_x);
    result.objective_value = best_f;
    result.max_constraint_violation = best_viol;
  } else {
    result.x_opt = std::move(x);
    result.objective_value = problem.objective(result.x_opt);
    result.max_constraint_violation = max_violation(problem, result.x_opt);
  }
  result.eq_multipliers = Vector::Zero(al.lambda.size());
  for (int m = 0; m < al.lambda.size(); ++m) {
    result.eq_multipliers[m] =
        al.lambda[m] +
        al.rho * problem.equalities[static_cast<std::size_t>(m)](result.x_opt);
  }
  result.ineq_multipliers = Vector::Zero(al.mu.size());
  for (int j = 0; j < al.mu.size(); ++j) {
    result.ineq_multipliers[j] = std::max(
        0.0, al.mu[j] + al.rho * problem.inequalities[static_cast<std::size_t>(
                                     j)](result.x_opt));
  }
  return result;
}

}  // namespace skyway::nlp
