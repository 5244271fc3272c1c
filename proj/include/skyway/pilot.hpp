#pragma once

#include "skyway/model.hpp"
#include "skyway/nlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

// Trajectory selection: each flight independently picks the cheapest control
// sequence whose wind-blown rollout stays inside its assigned corridor and
// still meets the exit conditions. No flight sees any other flight; the
// corridor geometry alone carries the coordination.
namespace skyway::pilot {

using nlp::Vector;

/// Control effort relative to the available authority. The final move is
/// excluded: it only positions the exit state and is charged nowhere.
inline double j_pilot(std::span<const ControlInput> controls,
                      const Limits& limits) {
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < controls.size(); ++k) {
    const double nu = controls[k].u / limits.u_max;
    const double np = controls[k].psi / limits.psi_max;
    total += nu * nu + np * np;
  }
  return total;
}

inline std::vector<ControlInput> unpack_controls(const Vector& x) {
  std::vector<ControlInput> controls(static_cast<std::size_t>(x.size() / 2));
  for (std::size_t m = 0; m < controls.size(); ++m) {
    controls[m] = {x[2 * static_cast<int>(m)], x[2 * static_cast<int>(m) + 1]};
  }
  return controls;
}

namespace detail {

struct Context {
  Corridor corridor;
  AircraftRecord record;
  Limits limits;
  std::vector<Disturbance> wind;
  int n_moves = 0;

  Vector cache_key;
  bool cache_valid = false;
  std::vector<AircraftState> cache_states;

  std::vector<ControlInput> unpack(const Vector& x) const {
    return unpack_controls(x);
  }

  const std::vector<AircraftState>& states(const Vector& x) {
    if (!cache_valid || cache_key.size() != x.size() || cache_key != x) {
      Trajectory traj = rollout(record.initial_state, unpack(x), wind);
      cache_states = std::move(traj.states);
      cache_key = x;
      cache_valid = true;
    }
    return cache_states;
  }

  void backprop(const Vector& x, std::span<const StateSeed> seeds,
                Vector& grad) {
    const auto& st = states(x);
    std::span<double> slot(grad.data(), static_cast<std::size_t>(2 * n_moves));
    accumulate_control_gradient(st, seeds, slot);
  }
};

inline double smooth_norm(const Vec2& d) {
  return std::sqrt(d.squaredNorm() + kNormSmoothing);
}

}  // namespace detail

/// Assembles one flight's selection program over its interleaved (u, psi)
/// moves. The wind sequence must hold one drift per move; the corridor must
/// cover exactly the flight's horizon.
inline nlp::Problem build_problem(const Corridor& corridor,
                                  const AircraftRecord& record,
                                  const Limits& limits,
                                  const std::vector<Disturbance>& wind) {
  limits.validate();
  record.validate(limits);
  corridor.validate();
  if (corridor.aircraft_id != record.id) {
    throw InvalidInput("selection: corridor belongs to " +
                       corridor.aircraft_id + ", not " + record.id);
  }
  if (corridor.t_start != record.t_start || corridor.t_end() != record.t_end) {
    throw InvalidInput("selection: corridor must span the horizon of " +
                       record.id);
  }
  if (wind.size() != static_cast<std::size_t>(record.horizon())) {
    throw InvalidInput("selection: wind length must equal the move count");
  }

  auto ctx = std::make_shared<detail::Context>();
  ctx->corridor = corridor;
  ctx->record = record;
  ctx->limits = limits;
  ctx->wind = wind;
  ctx->n_moves = record.horizon();

  nlp::Problem problem;
  problem.dimension = 2 * ctx->n_moves;
  problem.lower = Vector::Zero(problem.dimension);
  problem.upper = Vector::Zero(problem.dimension);
  for (int m = 0; m < ctx->n_moves; ++m) {
    problem.lower[2 * m] = -limits.u_max;
    problem.upper[2 * m] = limits.u_max;
    problem.lower[2 * m + 1] = -limits.psi_max;
    problem.upper[2 * m + 1] = limits.psi_max;
  }

  problem.objective = {
      "selection_cost", [ctx](const Vector& x, Vector* grad) {
        double total = 0.0;
        const double U = ctx->limits.u_max;
        const double P = ctx->limits.psi_max;
        for (int m = 0; m + 1 < ctx->n_moves; ++m) {
          const double nu = x[2 * m] / U;
          const double np = x[2 * m + 1] / P;
          total += nu * nu + np * np;
          if (grad) {
            (*grad)[2 * m] += 2.0 * nu / U;
            (*grad)[2 * m + 1] += 2.0 * np / P;
          }
        }
        return total;
      }};

  const int t = record.t_start;
  const int T = record.t_end;
  const std::string& id = record.id;

  // Speed envelope at every reached step (drift never feeds back into v).
  for (int k = t + 1; k <= T; ++k) {
    auto grad_speed = [ctx, t, k](Vector& grad, double w) {
      for (int j = t; j < k; ++j) grad[2 * (j - t)] += w;
    };
    problem.inequalities.push_back(
        {"speed[" + id + ",k=" + std::to_string(k) + ",lo]",
         [ctx, t, k, grad_speed](const Vector& x, Vector* grad) {
           const double v = ctx->states(x)[static_cast<std::size_t>(k - t)].v;
           if (grad) grad_speed(*grad, -1.0);
           return ctx->limits.v_min - v;
         }});
    problem.inequalities.push_back(
        {"speed[" + id + ",k=" + std::to_string(k) + ",hi]",
         [ctx, t, k, grad_speed](const Vector& x, Vector* grad) {
           const double v = ctx->states(x)[static_cast<std::size_t>(k - t)].v;
           if (grad) grad_speed(*grad, 1.0);
           return v - ctx->limits.v_max;
         }});
  }

  // Terminal windows around the flight's exit references.
  {
    const double v_ref = record.terminal_speed_ref(limits);
    const double th_ref = record.terminal_heading_ref(limits);
    auto grad_all = [ctx](Vector& grad, int parity, double w) {
      for (int m = 0; m < ctx->n_moves; ++m) grad[2 * m + parity] += w;
    };
    problem.inequalities.push_back(
        {"terminal_window[" + id + ",v,lo]",
         [ctx, v_ref, grad_all](const Vector& x, Vector* grad) {
           if (grad) grad_all(*grad, 0, -1.0);
           return (v_ref - ctx->limits.delta_v) - ctx->states(x).back().v;
         }});
    problem.inequalities.push_back(
        {"terminal_window[" + id + ",v,hi]",
         [ctx, v_ref, grad_all](const Vector& x, Vector* grad) {
           if (grad) grad_all(*grad, 0, 1.0);
           return ctx->states(x).back().v - (v_ref + ctx->limits.delta_v);
         }});
    problem.inequalities.push_back(
        {"terminal_window[" + id + ",theta,lo]",
         [ctx, th_ref, grad_all](const Vector& x, Vector* grad) {
           if (grad) grad_all(*grad, 1, -1.0);
           return (th_ref - ctx->limits.delta_theta) -
                  ctx->states(x).back().theta;
         }});
    problem.inequalities.push_back(
        {"terminal_window[" + id + ",theta,hi]",
         [ctx, th_ref, grad_all](const Vector& x, Vector* grad) {
           if (grad) grad_all(*grad, 1, 1.0);
           return ctx->states(x).back().theta -
                  (th_ref + ctx->limits.delta_theta);
         }});
  }

  // Stay inside the assigned disk at every interior step.
  for (int k = t + 1; k < T; ++k) {
    problem.inequalities.push_back(
        {"containment[" + id + ",k=" + std::to_string(k) + "]",
         [ctx, t, k](const Vector& x, Vector* grad) {
           const Vec2 pos =
               ctx->states(x)[static_cast<std::size_t>(k - t)].position();
           const Vec2 d = pos - ctx->corridor.center_at(k);
           const double dist = detail::smooth_norm(d);
           if (grad) {
             std::vector<StateSeed> seeds(
                 static_cast<std::size_t>(ctx->n_moves + 1));
             const Vec2 unit = d / dist;
             seeds[static_cast<std::size_t>(k - t)].x += unit.x();
             seeds[static_cast<std::size_t>(k - t)].y += unit.y();
             ctx->backprop(x, seeds, *grad);
           }
           return dist - ctx->corridor.radius_at(k);
         }});
  }

  // Deliver the flight to the corridor's exit point.
  problem.inequalities.push_back(
      {"terminal_position[" + id + "]",
       [ctx](const Vector& x, Vector* grad) {
         const Vec2 pos = ctx->states(x).back().position();
         const Vec2 d = pos - ctx->corridor.centers.back();
         const double dist = detail::smooth_norm(d);
         if (grad) {
           std::vector<StateSeed> seeds(
               static_cast<std::size_t>(ctx->n_moves + 1));
           const Vec2 unit = d / dist;
           seeds.back().x += unit.x();
           seeds.back().y += unit.y();
           ctx->backprop(x, seeds, *grad);
         }
         return dist - ctx->limits.tol_terminal;
       }});

  return problem;
}

/// Center-tracking start: inverse dynamics of the corridor centers with the
/// forecast drift subtracted from each move, clipped into the control box.
inline Vector initial_guess(const Corridor& corridor,
                            const AircraftRecord& record,
                            const Limits& limits,
                            const std::vector<Disturbance>& wind) {
  const int n = record.horizon();
  Vector x = Vector::Zero(2 * n);

  std::vector<double> seg_v(static_cast<std::size_t>(n));
  std::vector<double> seg_th(static_cast<std::size_t>(n));
  double prev_th = record.initial_state.theta;
  for (int m = 0; m < n; ++m) {
    const int k = record.t_start + m;
    Vec2 move = corridor.center_at(k + 1) - corridor.center_at(k);
    move -= Vec2(wind[static_cast<std::size_t>(m)].dx,
                 wind[static_cast<std::size_t>(m)].dy);
    seg_v[static_cast<std::size_t>(m)] = move.norm();
    double th = prev_th;
    if (move.norm() > 1e-9) {
      th = prev_th + wrap_angle(std::atan2(move.y(), move.x()) - prev_th);
    }
    seg_th[static_cast<std::size_t>(m)] = th;
    prev_th = th;
  }

  auto clip = [](double val, double bound) {
    return std::min(std::max(val, -bound), bound);
  };
  for (int m = 0; m < n; ++m) {
    double u, psi;
    if (m + 1 < n) {
      u = seg_v[static_cast<std::size_t>(m + 1)] -
          seg_v[static_cast<std::size_t>(m)];
      psi = seg_th[static_cast<std::size_t>(m + 1)] -
            seg_th[static_cast<std::size_t>(m)];
    } else {
      u = record.terminal_speed_ref(limits) - seg_v[static_cast<std::size_t>(m)];
      psi = record.terminal_heading_ref(limits) -
            seg_th[static_cast<std::size_t>(m)];
    }
    x[2 * m] = clip(u, limits.u_max);
    x[2 * m + 1] = clip(psi, limits.psi_max);
  }
  return x;
}

struct Solution {
  Trajectory trajectory;  // wind-blown rollout over [t_start, t_end]
  std::vector<ControlInput> controls;
  double cost = 0.0;
  nlp::SolveResult result;
  std::vector<double> containment_residuals;  // signed, per interior step
};

/// Runs one flight's selection. The returned controls never cost more than
/// a feasible center-tracking start (the warm start is kept if the solver
/// cannot beat it). warm_start, when given, replaces the center-tracking
/// start entirely.
inline Solution select_trajectory(const Corridor& corridor,
                                  const AircraftRecord& record,
                                  const Limits& limits,
                                  const std::vector<Disturbance>& wind,
                                  const nlp::SolverConfig& config = {},
                                  const Vector* warm_start = nullptr) {
  nlp::Problem problem = build_problem(corridor, record, limits, wind);
  Vector x0 = warm_start ? *warm_start
                         : initial_guess(corridor, record, limits, wind);
  if (x0.size() != problem.dimension) {
    throw InvalidInput("selection: warm start has the wrong size");
  }

  Solution sol;
  sol.result = nlp::solve(problem, x0, config);

  // Keep the start point when it is feasible and the solve came back worse
  // or infeasible; selection must never regress below its warm start.
  {
    const double start_viol = nlp::max_violation(problem, x0);
    if (start_viol <= config.constraint_tol) {
      const bool solved_feasible =
          sol.result.max_constraint_violation <= config.constraint_tol;
      const double start_cost = j_pilot(unpack_controls(x0), limits);
      if (!solved_feasible || sol.result.objective_value > start_cost) {
        sol.result.x_opt = x0;
        sol.result.objective_value = start_cost;
        sol.result.max_constraint_violation = start_viol;
      }
    }
  }

  sol.controls = unpack_controls(sol.result.x_opt);
  sol.trajectory = rollout(record.initial_state, sol.controls, wind,
                           record.id, record.t_start);
  sol.cost = j_pilot(sol.controls, limits);
  for (int k = record.t_start + 1; k < record.t_end; ++k) {
    const Vec2 pos = sol.trajectory.at_time(k).position();
    sol.containment_residuals.push_back(
        -containment_margin(corridor.center_at(k), corridor.radius_at(k),
                            pos));
  }
  return sol;
}

}  // namespace skyway::pilot
