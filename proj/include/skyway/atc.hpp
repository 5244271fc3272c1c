#pragma once

#include "skyway/model.hpp"
#include "skyway/nlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

// Corridor design: one joint program over every aircraft's controls plus the
// per-step disk radii. The objective rewards wide disks and penalizes drift
// from the standard trajectories; constraints keep the disks mutually
// separated, reachable step to step, and anchored to each flight's endpoints.
namespace skyway::atc {

using nlp::Vector;

/// Index map for the joint decision vector. Per aircraft, in scenario order:
/// interleaved (u, psi) for every move, then the interior disk radii.
struct Layout {
  struct Block {
    int t_start = 0;
    int t_end = 0;
    int control_offset = 0;
    int radius_offset = 0;

    int n_moves() const { return t_end - t_start; }
    int n_interior() const { return n_moves() - 1; }
  };

  std::vector<Block> blocks;
  int dimension = 0;

  static Layout build(const Scenario& sc) {
    Layout lay;
    lay.blocks.reserve(sc.aircraft.size());
    for (const AircraftRecord& a : sc.aircraft) {
      Block b;
      b.t_start = a.t_start;
      b.t_end = a.t_end;
      b.control_offset = lay.dimension;
      lay.dimension += 2 * b.n_moves();
      b.radius_offset = lay.dimension;
      lay.dimension += b.n_interior();
      lay.blocks.push_back(b);
    }
    return lay;
  }

  // k is an absolute timestep; controls exist for k in [t_start, t_end).
  int u_index(std::size_t a, int k) const {
    return blocks[a].control_offset + 2 * (k - blocks[a].t_start);
  }
  int psi_index(std::size_t a, int k) const { return u_index(a, k) + 1; }
  // Radii exist for interior steps, k in (t_start, t_end).
  int r_index(std::size_t a, int k) const {
    return blocks[a].radius_offset + (k - blocks[a].t_start - 1);
  }
};

inline std::vector<ControlInput> unpack_controls(const Vector& x,
                                                 const Layout& lay,
                                                 std::size_t a) {
  const Layout::Block& b = lay.blocks[a];
  std::vector<ControlInput> controls(static_cast<std::size_t>(b.n_moves()));
  for (int m = 0; m < b.n_moves(); ++m) {
    controls[static_cast<std::size_t>(m)] = {x[b.control_offset + 2 * m],
                                             x[b.control_offset + 2 * m + 1]};
  }
  return controls;
}

inline std::vector<double> unpack_interior_radii(const Vector& x,
                                                 const Layout& lay,
                                                 std::size_t a) {
  const Layout::Block& b = lay.blocks[a];
  std::vector<double> radii(static_cast<std::size_t>(b.n_interior()));
  for (int m = 0; m < b.n_interior(); ++m) {
    radii[static_cast<std::size_t>(m)] = x[b.radius_offset + m];
  }
  return radii;
}

/// Coverage cost over one aircraft's interior radii: wider disks are
/// cheaper, with eps keeping the log finite at radius zero.
inline double j1(std::span<const double> interior_radii, double eps) {
  if (!(eps > 0.0)) throw InvalidInput("j1: eps must be positive");
  double total = 0.0;
  for (double r : interior_radii) total -= std::log(r + eps);
  return total;
}

/// Deviation cost over one aircraft's interior centers: squared offsets from
/// the reference plus squared differences of consecutive offsets.
inline double j2(std::span<const Vec2> centers,
                 std::span<const Vec2> reference) {
  if (centers.size() != reference.size()) {
    throw InvalidInput("j2: centers and reference must align");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < centers.size(); ++k) {
    total += (centers[k] - reference[k]).squaredNorm();
  }
  for (std::size_t k = 0; k + 1 < centers.size(); ++k) {
    const Vec2 a = centers[k] - reference[k];
    const Vec2 b = centers[k + 1] - reference[k + 1];
    total += (b - a).squaredNorm();
  }
  return total;
}

/// Inputs that change the shape of the corridor-design program. When
/// operation_constraint is set every aircraft must come with a previous
/// selection; redesigned disks are then forced to contain it.
struct BuildOptions {
  // Aligned with scenario.aircraft; may be empty when not re-planning.
  std::vector<Trajectory> prev_selections;
  bool operation_constraint = false;
};

namespace detail {

struct Context {
  Scenario scenario;
  Layout layout;
  BuildOptions options;

  // Rollout of every aircraft under the controls packed in the key vector.
  // All constraint closures share one instance, so each new x triggers
  // exactly one re-simulation. Not safe for concurrent evaluation; each
  // solve owns its problem instance.
  Vector cache_key;
  bool cache_valid = false;
  std::vector<std::vector<AircraftState>> cache_states;

  void refresh(const Vector& x) {
    if (cache_valid && cache_key.size() == x.size() && cache_key == x) return;
    cache_states.resize(scenario.aircraft.size());
    for (std::size_t a = 0; a < scenario.aircraft.size(); ++a) {
      const auto controls = unpack_controls(x, layout, a);
      Trajectory traj =
          rollout(scenario.aircraft[a].initial_state, controls, {});
      cache_states[a] = std::move(traj.states);
    }
    cache_key = x;
    cache_valid = true;
  }

  const std::vector<AircraftState>& states_for(const Vector& x,
                                               std::size_t a) {
    refresh(x);
    return cache_states[a];
  }

  // Pushes d(phi)/d(state) seeds back onto aircraft a's control block.
  void backprop(const Vector& x, std::size_t a,
                std::span<const StateSeed> seeds, Vector& grad) {
    const auto& st = states_for(x, a);
    std::span<double> slot(grad.data() + layout.blocks[a].control_offset,
                           static_cast<std::size_t>(
                               2 * layout.blocks[a].n_moves()));
    accumulate_control_gradient(st, seeds, slot);
  }

  Vec2 position(const Vector& x, std::size_t a, int k) {
    const auto& st = states_for(x, a);
    return st[static_cast<std::size_t>(k - layout.blocks[a].t_start)]
        .position();
  }
};

inline double smooth_norm(const Vec2& d) {
  return std::sqrt(d.squaredNorm() + kNormSmoothing);
}

}  // namespace detail

/// Assembles the corridor-design program. The decision vector follows
/// Layout; control bounds and radius non-negativity live in the box, all
/// coupling (speed envelope, terminal windows, disk separation, step
/// reachability, endpoint match, optional containment of the previous plan)
/// appears as named constraints.
inline nlp::Problem build_problem(const Scenario& scenario,
                                  const BuildOptions& options = {}) {
  scenario.validate();
  if (options.operation_constraint || !options.prev_selections.empty()) {
    if (options.prev_selections.size() != scenario.aircraft.size()) {
      throw InvalidInput(
          "corridor design: previous selections must align with aircraft");
    }
    for (std::size_t a = 0; a < scenario.aircraft.size(); ++a) {
      const AircraftRecord& rec = scenario.aircraft[a];
      if (!options.prev_selections[a].spans(rec.t_start, rec.t_end)) {
        throw InvalidInput("corridor design: previous selection for " +
                           rec.id + " does not span its horizon");
      }
    }
  }

  auto ctx = std::make_shared<detail::Context>();
  ctx->scenario = scenario;
  ctx->layout = Layout::build(scenario);
  ctx->options = options;

  const Limits& lim = scenario.limits;
  const std::size_t n_aircraft = scenario.aircraft.size();

  nlp::Problem problem;
  problem.dimension = ctx->layout.dimension;

  problem.objective = {
      "corridor_cost", [ctx](const Vector& x, Vector* grad) {
        const Limits& L = ctx->scenario.limits;
        double width_cost = 0.0;
        double deviation_cost = 0.0;
        for (std::size_t a = 0; a < ctx->scenario.aircraft.size(); ++a) {
          const Layout::Block& b = ctx->layout.blocks[a];
          for (int k = b.t_start + 1; k < b.t_end; ++k) {
            const double r = x[ctx->layout.r_index(a, k)];
            width_cost -= std::log(r + L.eps);
            if (grad) {
              (*grad)[ctx->layout.r_index(a, k)] += -1.0 / (r + L.eps);
            }
          }

          const auto& st = ctx->states_for(x, a);
          const Trajectory& ref = ctx->scenario.aircraft[a].standard;
          std::vector<StateSeed> seeds(st.size());
          std::vector<Vec2> dev(
              static_cast<std::size_t>(std::max(b.n_interior(), 0)));
          for (int k = b.t_start + 1; k < b.t_end; ++k) {
            const std::size_t i = static_cast<std::size_t>(k - b.t_start);
            dev[i - 1] = st[i].position() - ref.at_time(k).position();
            deviation_cost += dev[i - 1].squaredNorm();
            if (grad) {
              seeds[i].x += 2.0 * L.alpha * dev[i - 1].x();
              seeds[i].y += 2.0 * L.alpha * dev[i - 1].y();
            }
          }
          for (std::size_t i = 0; i + 1 < dev.size(); ++i) {
            const Vec2 e = dev[i + 1] - dev[i];
            deviation_cost += e.squaredNorm();
            if (grad) {
              seeds[i + 2].x += 2.0 * L.alpha * e.x();
              seeds[i + 2].y += 2.0 * L.alpha * e.y();
              seeds[i + 1].x -= 2.0 * L.alpha * e.x();
              seeds[i + 1].y -= 2.0 * L.alpha * e.y();
            }
          }
          if (grad) ctx->backprop(x, a, seeds, *grad);
        }
        return width_cost + L.alpha * deviation_cost;
      }};

  // Box: control magnitudes and non-negative radii.
  problem.lower = Vector::Constant(problem.dimension, 0.0);
  problem.upper = Vector::Constant(problem.dimension, 0.0);
  for (std::size_t a = 0; a < n_aircraft; ++a) {
    const Layout::Block& b = ctx->layout.blocks[a];
    for (int k = b.t_start; k < b.t_end; ++k) {
      problem.lower[ctx->layout.u_index(a, k)] = -lim.u_max;
      problem.upper[ctx->layout.u_index(a, k)] = lim.u_max;
      problem.lower[ctx->layout.psi_index(a, k)] = -lim.psi_max;
      problem.upper[ctx->layout.psi_index(a, k)] = lim.psi_max;
    }
    for (int k = b.t_start + 1; k < b.t_end; ++k) {
      problem.lower[ctx->layout.r_index(a, k)] = 0.0;
      problem.upper[ctx->layout.r_index(a, k)] =
          std::numeric_limits<double>::infinity();
    }
  }

  auto id_of = [&](std::size_t a) { return scenario.aircraft[a].id; };

  // Speed envelope at every reached step.
  for (std::size_t a = 0; a < n_aircraft; ++a) {
    const Layout::Block& b = ctx->layout.blocks[a];
    for (int k = b.t_start + 1; k <= b.t_end; ++k) {
      auto grad_speed = [ctx, a, k](Vector& grad, double w) {
        const Layout::Block& blk = ctx->layout.blocks[a];
        for (int j = blk.t_start; j < k; ++j) {
          grad[ctx->layout.u_index(a, j)] += w;
        }
      };
      problem.inequalities.push_back(
          {"speed[" + id_of(a) + ",k=" + std::to_string(k) + ",lo]",
           [ctx, a, k, grad_speed](const Vector& x, Vector* grad) {
             const auto& st = ctx->states_for(x, a);
             const double v =
                 st[static_cast<std::size_t>(k - ctx->layout.blocks[a].t_start)]
                     .v;
             if (grad) grad_speed(*grad, -1.0);
             return ctx->scenario.limits.v_min - v;
           }});
      problem.inequalities.push_back(
          {"speed[" + id_of(a) + ",k=" + std::to_string(k) + ",hi]",
           [ctx, a, k, grad_speed](const Vector& x, Vector* grad) {
             const auto& st = ctx->states_for(x, a);
             const double v =
                 st[static_cast<std::size_t>(k - ctx->layout.blocks[a].t_start)]
                     .v;
             if (grad) grad_speed(*grad, 1.0);
             return v - ctx->scenario.limits.v_max;
           }});
    }
  }

  // Terminal speed and heading windows.
  for (std::size_t a = 0; a < n_aircraft; ++a) {
    const AircraftRecord& rec = scenario.aircraft[a];
    const double v_ref = rec.terminal_speed_ref(lim);
    const double th_ref = rec.terminal_heading_ref(lim);
    auto grad_all_u = [ctx, a](Vector& grad, double w) {
      const Layout::Block& b = ctx->layout.blocks[a];
      for (int j = b.t_start; j < b.t_end; ++j) {
        grad[ctx->layout.u_index(a, j)] += w;
      }
    };
    auto grad_all_psi = [ctx, a](Vector& grad, double w) {
      const Layout::Block& b = ctx->layout.blocks[a];
      for (int j = b.t_start; j < b.t_end; ++j) {
        grad[ctx->layout.psi_index(a, j)] += w;
      }
    };
    auto terminal = [ctx, a](const Vector& x) -> const AircraftState& {
      const auto& st = ctx->states_for(x, a);
      return st.back();
    };
    problem.inequalities.push_back(
        {"terminal_window[" + id_of(a) + ",v,lo]",
         [terminal, grad_all_u, v_ref, dv = lim.delta_v](const Vector& x,
                                                         Vector* grad) {
           if (grad) grad_all_u(*grad, -1.0);
           return (v_ref - dv) - terminal(x).v;
         }});
    problem.inequalities.push_back(
        {"terminal_window[" + id_of(a) + ",v,hi]",
         [terminal, grad_all_u, v_ref, dv = lim.delta_v](const Vector& x,
                                                         Vector* grad) {
           if (grad) grad_all_u(*grad, 1.0);
           return terminal(x).v - (v_ref + dv);
         }});
    problem.inequalities.push_back(
        {"terminal_window[" + id_of(a) + ",theta,lo]",
         [terminal, grad_all_psi, th_ref,
          dth = lim.delta_theta](const Vector& x, Vector* grad) {
           if (grad) grad_all_psi(*grad, -1.0);
           return (th_ref - dth) - terminal(x).theta;
         }});
    problem.inequalities.push_back(
        {"terminal_window[" + id_of(a) + ",theta,hi]",
         [terminal, grad_all_psi, th_ref,
          dth = lim.delta_theta](const Vector& x, Vector* grad) {
           if (grad) grad_all_psi(*grad, 1.0);
           return terminal(x).theta - (th_ref + dth);
         }});
  }

  // Step reachability between consecutive disks: the shortest possible move
  // must stay above v_min, the longest below v_max. Boundary radii are 0.
  for (std::size_t a = 0; a < n_aircraft; ++a) {
    const Layout::Block& b = ctx->layout.blocks[a];
    for (int k = b.t_start; k < b.t_end; ++k) {
      const bool r0 = k > b.t_start;          // disk k has a radius variable
      const bool r1 = k + 1 < b.t_end;        // disk k+1 has one
      auto eval = [ctx, a, k, r0, r1](const Vector& x, Vector* grad,
                                      double dist_sign) {
        const Layout::Block& blk = ctx->layout.blocks[a];
        const Vec2 c0 = ctx->position(x, a, k);
        const Vec2 c1 = ctx->position(x, a, k + 1);
        const Vec2 d = c1 - c0;
        const double dist = detail::smooth_norm(d);
        double spread = 0.0;
        if (r0) spread += x[ctx->layout.r_index(a, k)];
        if (r1) spread += x[ctx->layout.r_index(a, k + 1)];
        if (grad) {
          std::vector<StateSeed> seeds(
              static_cast<std::size_t>(blk.n_moves() + 1));
          const Vec2 unit = dist_sign * d / dist;
          const std::size_t i0 = static_cast<std::size_t>(k - blk.t_start);
          seeds[i0 + 1].x += unit.x();
          seeds[i0 + 1].y += unit.y();
          seeds[i0].x -= unit.x();
          seeds[i0].y -= unit.y();
          ctx->backprop(x, a, seeds, *grad);
          if (r0) (*grad)[ctx->layout.r_index(a, k)] += 1.0;
          if (r1) (*grad)[ctx->layout.r_index(a, k + 1)] += 1.0;
        }
        return dist_sign * dist + spread;
      };
      problem.inequalities.push_back(
          {"feasibility[" + id_of(a) + ",k=" + std::to_string(k) + ",min]",
           [ctx, eval](const Vector& x, Vector* grad) {
             return ctx->scenario.limits.v_min + eval(x, grad, -1.0);
           }});
      problem.inequalities.push_back(
          {"feasibility[" + id_of(a) + ",k=" + std::to_string(k) + ",max]",
           [ctx, eval](const Vector& x, Vector* grad) {
             return eval(x, grad, 1.0) - ctx->scenario.limits.v_max;
           }});
    }
  }

  // Pairwise disk separation at shared interior steps.
  for (std::size_t a = 0; a < n_aircraft; ++a) {
    for (std::size_t c = a + 1; c < n_aircraft; ++c) {
      const Layout::Block& ba = ctx->layout.blocks[a];
      const Layout::Block& bc = ctx->layout.blocks[c];
      const int k_lo = std::max(ba.t_start, bc.t_start) + 1;
      const int k_hi = std::min(ba.t_end, bc.t_end) - 1;
      for (int k = k_lo; k <= k_hi; ++k) {
        problem.inequalities.push_back(
            {"conflict[" + id_of(a) + "," + id_of(c) +
                 ",k=" + std::to_string(k) + "]",
             [ctx, a, c, k](const Vector& x, Vector* grad) {
               const Vec2 pa = ctx->position(x, a, k);
               const Vec2 pc = ctx->position(x, c, k);
               const Vec2 d = pa - pc;
               const double dist = detail::smooth_norm(d);
               const double ra = x[ctx->layout.r_index(a, k)];
               const double rc = x[ctx->layout.r_index(c, k)];
               if (grad) {
                 const Vec2 unit = d / dist;
                 {
                   std::vector<StateSeed> seeds(static_cast<std::size_t>(
                       ctx->layout.blocks[a].n_moves() + 1));
                   const std::size_t i = static_cast<std::size_t>(
                       k - ctx->layout.blocks[a].t_start);
                   seeds[i].x -= unit.x();
                   seeds[i].y -= unit.y();
                   ctx->backprop(x, a, seeds, *grad);
                 }
                 {
                   std::vector<StateSeed> seeds(static_cast<std::size_t>(
                       ctx->layout.blocks[c].n_moves() + 1));
                   const std::size_t i = static_cast<std::size_t>(
                       k - ctx->layout.blocks[c].t_start);
                   seeds[i].x += unit.x();
                   seeds[i].y += unit.y();
                   ctx->backprop(x, c, seeds, *grad);
                 }
                 (*grad)[ctx->layout.r_index(a, k)] += 1.0;
                 (*grad)[ctx->layout.r_index(c, k)] += 1.0;
               }
               return ctx->scenario.limits.safety_margin + ra + rc - dist;
             }});
      }
    }
  }

  // Containment of the previously selected trajectories (re-planning only):
  // each redesigned interior disk must cover the old selection's position.
  if (options.operation_constraint) {
    for (std::size_t a = 0; a < n_aircraft; ++a) {
      const Layout::Block& b = ctx->layout.blocks[a];
      for (int k = b.t_start + 1; k < b.t_end; ++k) {
        problem.inequalities.push_back(
            {"operation[" + id_of(a) + ",k=" + std::to_string(k) + "]",
             [ctx, a, k](const Vector& x, Vector* grad) {
               const Vec2 prev = ctx->options.prev_selections[a]
                                     .at_time(k)
                                     .position();
               const Vec2 d = ctx->position(x, a, k) - prev;
               const double dist = detail::smooth_norm(d);
               if (grad) {
                 const Vec2 unit = d / dist;
                 std::vector<StateSeed> seeds(static_cast<std::size_t>(
                     ctx->layout.blocks[a].n_moves() + 1));
                 const std::size_t i = static_cast<std::size_t>(
                     k - ctx->layout.blocks[a].t_start);
                 seeds[i].x += unit.x();
                 seeds[i].y += unit.y();
                 ctx->backprop(x, a, seeds, *grad);
                 (*grad)[ctx->layout.r_index(a, k)] += -1.0;
               }
               return dist - x[ctx->layout.r_index(a, k)];
             }});
      }
    }
  }

  // Exact terminal positions.
  for (std::size_t a = 0; a < n_aircraft; ++a) {
    const Vec2 target = scenario.aircraft[a].terminal_state.position();
    problem.equalities.push_back(
        {"terminal_position[" + id_of(a) + ",x]",
         [ctx, a, target](const Vector& x, Vector* grad) {
           const auto& st = ctx->states_for(x, a);
           if (grad) {
             std::vector<StateSeed> seeds(st.size());
             seeds.back().x = 1.0;
             ctx->backprop(x, a, seeds, *grad);
           }
           return st.back().x - target.x();
         }});
    problem.equalities.push_back(
        {"terminal_position[" + id_of(a) + ",y]",
         [ctx, a, target](const Vector& x, Vector* grad) {
           const auto& st = ctx->states_for(x, a);
           if (grad) {
             std::vector<StateSeed> seeds(st.size());
             seeds.back().y = 1.0;
             ctx->backprop(x, a, seeds, *grad);
           }
           return st.back().y - target.y();
         }});
  }

  return problem;
}

/// Full corridor-design cost of a packed decision vector: the coverage term
/// over all interior radii plus alpha times the deviation term.
inline double j_atc(const Vector& decision, const Scenario& scenario) {
  const Layout lay = Layout::build(scenario);
  if (decision.size() != lay.dimension) {
    throw InvalidInput("corridor cost: decision size mismatch");
  }
  double width_cost = 0.0;
  double deviation_cost = 0.0;
  for (std::size_t a = 0; a < scenario.aircraft.size(); ++a) {
    const auto radii = unpack_interior_radii(decision, lay, a);
    width_cost += j1(radii, scenario.limits.eps);

    const auto controls = unpack_controls(decision, lay, a);
    Trajectory traj = rollout(scenario.aircraft[a].initial_state, controls);
    const Layout::Block& b = lay.blocks[a];
    std::vector<Vec2> centers, reference;
    for (int k = b.t_start + 1; k < b.t_end; ++k) {
      centers.push_back(
          traj.states[static_cast<std::size_t>(k - b.t_start)].position());
      reference.push_back(
          scenario.aircraft[a].standard.at_time(k).position());
    }
    deviation_cost += j2(centers, reference);
  }
  return width_cost + scenario.limits.alpha * deviation_cost;
}

/// Warm start from a reference polyline per aircraft: the previous selection
/// when re-planning, the standard trajectory otherwise. Controls come from
/// inverse dynamics of the polyline (clipped into the box), radii start at
/// zero.
inline Vector initial_guess(const Scenario& scenario,
                            const BuildOptions& options = {}) {
  const Layout lay = Layout::build(scenario);
  const Limits& lim = scenario.limits;
  Vector x = Vector::Zero(lay.dimension);

  for (std::size_t a = 0; a < scenario.aircraft.size(); ++a) {
    const AircraftRecord& rec = scenario.aircraft[a];
    const Trajectory& ref = options.prev_selections.empty()
                                ? rec.standard
                                : options.prev_selections[a];
    const Layout::Block& b = lay.blocks[a];
    const int n = b.n_moves();

    // Per-segment speeds and headings of the reference polyline; headings
    // are unwrapped starting from the aircraft's own initial heading.
    std::vector<double> seg_v(static_cast<std::size_t>(n));
    std::vector<double> seg_th(static_cast<std::size_t>(n));
    double prev_th = rec.initial_state.theta;
    for (int m = 0; m < n; ++m) {
      const Vec2 p0 = ref.at_time(b.t_start + m).position();
      const Vec2 p1 = ref.at_time(b.t_start + m + 1).position();
      const Vec2 d = p1 - p0;
      seg_v[static_cast<std::size_t>(m)] = d.norm();
      double th = prev_th;
      if (d.norm() > 1e-9) {
        const double raw = std::atan2(d.y(), d.x());
        th = prev_th + wrap_angle(raw - prev_th);
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
        // Last move: aim the exit state at its terminal references.
        u = rec.terminal_speed_ref(lim) - seg_v[static_cast<std::size_t>(m)];
        psi = rec.terminal_heading_ref(lim) -
              seg_th[static_cast<std::size_t>(m)];
      }
      x[lay.u_index(a, b.t_start + m)] = clip(u, lim.u_max);
      x[lay.psi_index(a, b.t_start + m)] = clip(psi, lim.psi_max);
    }
  }
  return x;
}

struct ResidualFamily {
  std::string name;
  double max_violation = 0.0;
  int count = 0;
};

struct ResidualSummary {
  std::vector<ResidualFamily> families;
  double max_violation = 0.0;

  const ResidualFamily* find(const std::string& name) const {
    for (const auto& f : families) {
      if (f.name == name) return &f;
    }
    return nullptr;
  }
};

/// Per-family worst violations of a problem at x. Family names are the
/// constraint-name prefixes before '['.
inline ResidualSummary summarize_residuals(const nlp::Problem& problem,
                                           const Vector& x) {
  ResidualSummary summary;
  auto record = [&](const std::string& name, double violation) {
    const std::string family = name.substr(0, name.find('['));
    for (auto& f : summary.families) {
      if (f.name == family) {
        f.max_violation = std::max(f.max_violation, violation);
        ++f.count;
        summary.max_violation = std::max(summary.max_violation, violation);
        return;
      }
    }
    summary.families.push_back({family, violation, 1});
    summary.max_violation = std::max(summary.max_violation, violation);
  };
  for (const auto& fn : problem.inequalities) {
    record(fn.name, std::max(0.0, fn(x)));
  }
  for (const auto& fn : problem.equalities) {
    record(fn.name, std::abs(fn(x)));
  }
  return summary;
}

struct Solution {
  std::vector<Corridor> corridors;  // scenario order
  std::vector<std::vector<ControlInput>> controls;
  nlp::SolveResult result;
  ResidualSummary residuals;
};

/// Runs the corridor-design stage end to end. The returned corridors read
/// the centers straight off the rollout of the optimized controls; callers
/// inspect result.status and residuals to decide what to do with
/// non-converged solves.
inline Solution design_sets(const Scenario& scenario,
                            const nlp::SolverConfig& config = {},
                            const BuildOptions& options = {}) {
  nlp::Problem problem = build_problem(scenario, options);
  const Vector x0 = initial_guess(scenario, options);
  Solution sol;
  sol.result = nlp::solve(problem, x0, config);

  const Layout lay = Layout::build(scenario);
  for (std::size_t a = 0; a < scenario.aircraft.size(); ++a) {
    const AircraftRecord& rec = scenario.aircraft[a];
    const auto controls = unpack_controls(sol.result.x_opt, lay, a);
    Trajectory traj = rollout(rec.initial_state, controls, {}, rec.id,
                              rec.t_start);
    Corridor c;
    c.aircraft_id = rec.id;
    c.t_start = rec.t_start;
    c.centers.reserve(traj.states.size());
    for (const AircraftState& s : traj.states) c.centers.push_back(s.position());
    c.radii.assign(traj.states.size(), 0.0);
    const auto radii = unpack_interior_radii(sol.result.x_opt, lay, a);
    for (int m = 0; m < lay.blocks[a].n_interior(); ++m) {
      c.radii[static_cast<std::size_t>(m + 1)] =
          radii[static_cast<std::size_t>(m)];
    }
    sol.corridors.push_back(std::move(c));
    sol.controls.push_back(controls);
  }
  sol.residuals = summarize_residuals(problem, sol.result.x_opt);
  return sol;
}

}  // namespace skyway::atc
