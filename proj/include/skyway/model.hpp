#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace skyway {

inline constexpr double kPi = 3.14159265358979323846;

// Added under square roots wherever a norm can pass through zero during a
// solve, so gradients stay finite. Pure geometric predicates use exact norms.
inline constexpr double kNormSmoothing = 1e-12;

/// Raised when caller-supplied data violates a documented precondition.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised on file system or format failures while reading/writing artifacts.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a planning stage cannot produce a usable result.
class SolveFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Vec2 = Eigen::Vector2d;

/// One aircraft at one timestep: planar position (NM), speed (NM per step)
/// and heading (radians). Headings are unwrapped reals; nothing in the
/// library reduces them modulo 2*pi, so a heading of -3.65 and one of 2.63
/// are different values on purpose.
struct AircraftState {
  double x = 0.0;
  double y = 0.0;
  double v = 0.0;
  double theta = 0.0;

  Vec2 position() const { return {x, y}; }

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(v) &&
           std::isfinite(theta);
  }
};

/// Speed and heading increments applied over one timestep.
struct ControlInput {
  double u = 0.0;
  double psi = 0.0;

  bool finite() const { return std::isfinite(u) && std::isfinite(psi); }
};

/// Position offset added to one move (wind drift per timestep).
struct Disturbance {
  double dx = 0.0;
  double dy = 0.0;

  bool finite() const { return std::isfinite(dx) && std::isfinite(dy); }
};

/// Shared problem parameters: control and speed envelopes, terminal windows,
/// separation margin and cost weights. Units follow AircraftState.
struct Limits {
  double psi_max = kPi / 4.0;  // |heading change| per step
  double u_max = 5.0;          // |speed change| per step
  double v_min = 10.0;
  double v_max = 35.0;
  double delta_v = 1.0;      // half-width of the terminal speed window
  double delta_theta = 0.1;  // half-width of the terminal heading window
  double safety_margin = 3.0;
  double eps = 0.1;    // radius offset inside the coverage cost
  double alpha = 0.01;  // deviation weight in the corridor design cost
  double tol_terminal = 0.5;  // allowed terminal position miss

  // Global terminal references. Unset means each aircraft uses the speed and
  // heading of its own terminal state.
  std::optional<double> v_ter;
  std::optional<double> theta_ter;

  void validate() const {
    auto bad = [](const char* what) {
      throw InvalidInput(std::string("limits: ") + what);
    };
    for (double f : {psi_max, u_max, v_min, v_max, delta_v, delta_theta,
                     safety_margin, eps, alpha, tol_terminal}) {
      if (!std::isfinite(f)) bad("non-finite field");
    }
    if (psi_max <= 0.0) bad("psi_max must be positive");
    if (u_max <= 0.0) bad("u_max must be positive");
    if (v_min <= 0.0) bad("v_min must be positive");
    if (v_max <= v_min) bad("v_max must exceed v_min");
    if (delta_v < 0.0) bad("delta_v must be non-negative");
    if (delta_theta < 0.0) bad("delta_theta must be non-negative");
    if (safety_margin < 0.0) bad("safety_margin must be non-negative");
    if (eps <= 0.0) bad("eps must be positive");
    if (alpha < 0.0) bad("alpha must be non-negative");
    if (tol_terminal < 0.0) bad("tol_terminal must be non-negative");
    if (v_ter && !std::isfinite(*v_ter)) bad("v_ter must be finite");
    if (theta_ter && !std::isfinite(*theta_ter)) bad("theta_ter must be finite");
  }
};

/// State sequence over a contiguous block of timesteps [t_start, t_end()].
struct Trajectory {
  std::string aircraft_id;
  int t_start = 0;
  std::vector<AircraftState> states;

  int t_end() const { return t_start + static_cast<int>(states.size()) - 1; }

  bool spans(int t, int T) const { return t_start <= t && t_end() >= T; }

  const AircraftState& at_time(int k) const {
    if (k < t_start || k > t_end()) {
      throw InvalidInput("trajectory " + aircraft_id + ": timestep " +
                         std::to_string(k) + " outside [" +
                         std::to_string(t_start) + ", " +
                         std::to_string(t_end()) + "]");
    }
    return states[static_cast<std::size_t>(k - t_start)];
  }
};

/// Per-timestep disks (center, radius) over [t_start, t_end()]. The first
/// and last disks pin the endpoints, so their radii are zero.
struct Corridor {
  std::string aircraft_id;
  int t_start = 0;
  std::vector<Vec2> centers;
  std::vector<double> radii;

  int t_end() const { return t_start + static_cast<int>(centers.size()) - 1; }

  const Vec2& center_at(int k) const {
    check_time(k);
    return centers[static_cast<std::size_t>(k - t_start)];
  }

  double radius_at(int k) const {
    check_time(k);
    return radii[static_cast<std::size_t>(k - t_start)];
  }

  void validate() const {
    if (centers.size() != radii.size()) {
      throw InvalidInput("corridor " + aircraft_id +
                         ": centers/radii size mismatch");
    }
    if (centers.size() < 2) {
      throw InvalidInput("corridor " + aircraft_id + ": needs >= 2 steps");
    }
    for (const Vec2& c : centers) {
      if (!std::isfinite(c.x()) || !std::isfinite(c.y())) {
        throw InvalidInput("corridor " + aircraft_id + ": non-finite center");
      }
    }
    for (double r : radii) {
      if (!std::isfinite(r) || r < 0.0) {
        throw InvalidInput("corridor " + aircraft_id + ": negative radius");
      }
    }
    if (radii.front() != 0.0 || radii.back() != 0.0) {
      throw InvalidInput("corridor " + aircraft_id +
                         ": boundary radii must be zero");
    }
  }

 private:
  void check_time(int k) const {
    if (k < t_start || k > t_end()) {
      throw InvalidInput("corridor " + aircraft_id + ": timestep " +
                         std::to_string(k) + " outside span");
    }
  }
};

/// One aircraft in a scenario: entry/exit times and states, the standard
/// (nominal) trajectory it would fly, and per-step wind drift.
struct AircraftRecord {
  std::string id;
  int t_start = 0;  // first planned timestep
  int t_end = 0;    // terminal timestep
  AircraftState initial_state;
  AircraftState terminal_state;
  Trajectory standard;             // spans [t_start, t_end]
  std::vector<Disturbance> wind;   // one entry per move, k = t_start..t_end-1

  int horizon() const { return t_end - t_start; }

  double terminal_speed_ref(const Limits& limits) const {
    return limits.v_ter ? *limits.v_ter : terminal_state.v;
  }

  double terminal_heading_ref(const Limits& limits) const {
    return limits.theta_ter ? *limits.theta_ter : terminal_state.theta;
  }

  void validate(const Limits& limits) const {
    auto bad = [this](const std::string& what) {
      throw InvalidInput("aircraft " + id + ": " + what);
    };
    if (id.empty()) throw InvalidInput("aircraft: empty id");
    if (t_end - t_start < 2) bad("horizon must span at least 2 steps");
    if (!initial_state.finite() || !terminal_state.finite()) {
      bad("non-finite endpoint state");
    }
    if (initial_state.v < limits.v_min || initial_state.v > limits.v_max) {
      bad("initial speed outside [v_min, v_max]");
    }
    if (!standard.spans(t_start, t_end)) {
      bad("standard trajectory does not span the horizon");
    }
    for (const AircraftState& s : standard.states) {
      if (!s.finite()) bad("non-finite standard state");
    }
    if (wind.size() != static_cast<std::size_t>(horizon())) {
      bad("wind length must equal the number of moves");
    }
    for (const Disturbance& d : wind) {
      if (!d.finite()) bad("non-finite wind entry");
    }
  }
};

/// Full planning input: shared limits plus the participating aircraft.
struct Scenario {
  double timestep_seconds = 360.0;  // metadata; dynamics are per-step
  Limits limits;
  std::vector<AircraftRecord> aircraft;

  void validate() const {
    if (!std::isfinite(timestep_seconds) || timestep_seconds <= 0.0) {
      throw InvalidInput("scenario: timestep_seconds must be positive");
    }
    limits.validate();
    if (aircraft.empty()) throw InvalidInput("scenario: no aircraft");
    for (std::size_t i = 0; i < aircraft.size(); ++i) {
      aircraft[i].validate(limits);
      for (std::size_t j = 0; j < i; ++j) {
        if (aircraft[j].id == aircraft[i].id) {
          throw InvalidInput("scenario: duplicate aircraft id " +
                             aircraft[i].id);
        }
      }
    }
  }

  const AircraftRecord* find(const std::string& id) const {
    for (const AircraftRecord& a : aircraft) {
      if (a.id == id) return &a;
    }
    return nullptr;
  }
};

/// One step of the point-mass dynamics: move with the current speed and
/// heading, then apply the speed and heading increments.
inline AircraftState step(const AircraftState& s, const ControlInput& c) {
  if (!s.finite() || !c.finite()) {
    throw InvalidInput("step: non-finite state or control");
  }
  return {s.x + s.v * std::cos(s.theta), s.y + s.v * std::sin(s.theta),
          s.v + c.u, s.theta + c.psi};
}

/// Same step with a position drift added to the move.
inline AircraftState step_disturbed(const AircraftState& s,
                                    const ControlInput& c,
                                    const Disturbance& d) {
  if (!d.finite()) throw InvalidInput("step: non-finite disturbance");
  AircraftState next = step(s, c);
  next.x += d.dx;
  next.y += d.dy;
  return next;
}

/// Forward simulation from x0 under a control sequence. When disturbances
/// are given there must be exactly one per control. The result holds
/// controls.size() + 1 states; empty controls give just [x0].
inline Trajectory rollout(const AircraftState& x0,
                          std::span<const ControlInput> controls,
                          std::span<const Disturbance> disturbances = {},
                          std::string aircraft_id = {}, int t_start = 0) {
  if (!disturbances.empty() && disturbances.size() != controls.size()) {
    throw InvalidInput("rollout: disturbance count must match control count");
  }
  Trajectory traj;
  traj.aircraft_id = std::move(aircraft_id);
  traj.t_start = t_start;
  traj.states.reserve(controls.size() + 1);
  traj.states.push_back(x0);
  for (std::size_t k = 0; k < controls.size(); ++k) {
    const AircraftState& cur = traj.states.back();
    traj.states.push_back(disturbances.empty()
                              ? step(cur, controls[k])
                              : step_disturbed(cur, controls[k],
                                               disturbances[k]));
  }
  return traj;
}

/// Difference angle reduced to [-pi, pi]. Only used when building heading
/// sequences from geometry; planned headings themselves stay unwrapped.
inline double wrap_angle(double a) { return std::remainder(a, 2.0 * kPi); }

/// Signed clearance between two disks: distance between centers minus the
/// radii. Positive means the disks are separated by that much.
inline double conflict_margin(const Vec2& ci, const Vec2& cj, double ri,
                              double rj) {
  return (ci - cj).norm() - (ri + rj);
}

/// Reachability range between consecutive disks k and k+1: the shortest and
/// longest center-to-center move a point may need when it can start anywhere
/// in disk k and must end anywhere in disk k+1.
struct FeasibilityGap {
  double min_gap = 0.0;  // must stay >= v_min
  double max_gap = 0.0;  // must stay <= v_max
};

inline std::vector<FeasibilityGap> feasibility_margins(const Corridor& c) {
  c.validate();
  std::vector<FeasibilityGap> gaps;
  gaps.reserve(c.centers.size() - 1);
  for (std::size_t k = 0; k + 1 < c.centers.size(); ++k) {
    const double dist = (c.centers[k + 1] - c.centers[k]).norm();
    const double spread = c.radii[k] + c.radii[k + 1];
    gaps.push_back({dist - spread, dist + spread});
  }
  return gaps;
}

/// Signed slack of a point inside a disk: radius minus distance to center.
/// Non-negative means the point is contained.
inline double containment_margin(const Vec2& center, double radius,
                                 const Vec2& point) {
  return radius - (point - center).norm();
}

/// Fills v and theta from the positions of a polyline: speeds from segment
/// lengths, headings from segment directions unwrapped along the path. A
/// zero-length segment carries the previous heading; the terminal state
/// repeats the last move's values.
inline void reconstruct_motion(std::vector<AircraftState>& states) {
  if (states.size() < 2) {
    throw InvalidInput("motion reconstruction: need at least 2 states");
  }
  double heading = 0.0;
  bool have_heading = false;
  for (std::size_t k = 0; k + 1 < states.size(); ++k) {
    const Vec2 d = states[k + 1].position() - states[k].position();
    states[k].v = d.norm();
    if (states[k].v > 0.0) {
      const double raw = std::atan2(d.y(), d.x());
      heading = have_heading ? heading + wrap_angle(raw - heading) : raw;
      have_heading = true;
    }
    states[k].theta = heading;
  }
  states.back().v = states[states.size() - 2].v;
  states.back().theta = states[states.size() - 2].theta;
}

/// Seed d(phi)/dX(k) for backpropagation through a rollout.
struct StateSeed {
  double x = 0.0;
  double y = 0.0;
  double v = 0.0;
  double theta = 0.0;
};

/// Reverse pass of the dynamics. states must be a rollout (n+1 states for n
/// moves) and seeds one entry per state. Writes d(phi)/d(control) into grad,
/// laid out (du(0), dpsi(0), du(1), ...), ADDING to what is already there.
/// Position drifts enter the dynamics additively, so the same pass is valid
/// for disturbed rollouts.
inline void accumulate_control_gradient(std::span<const AircraftState> states,
                                        std::span<const StateSeed> seeds,
                                        std::span<double> grad) {
  if (states.size() < 1 || seeds.size() != states.size()) {
    throw InvalidInput("control gradient: seeds must match states");
  }
  const std::size_t n = states.size() - 1;
  if (grad.size() != 2 * n) {
    throw InvalidInput("control gradient: grad must hold 2 entries per move");
  }
  // lam = d(phi)/dX(k) accumulated backwards; u(k) and psi(k) feed v(k+1)
  // and theta(k+1) one-to-one, so their gradients are lam at k+1.
  StateSeed lam = seeds[n];
  for (std::size_t k = n; k-- > 0;) {
    grad[2 * k] += lam.v;
    grad[2 * k + 1] += lam.theta;
    const AircraftState& s = states[k];
    const double c = std::cos(s.theta);
    const double sn = std::sin(s.theta);
    StateSeed prev = seeds[k];
    prev.x += lam.x;
    prev.y += lam.y;
    prev.v += lam.v + c * lam.x + sn * lam.y;
    prev.theta += lam.theta + s.v * (-sn * lam.x + c * lam.y);
    lam = prev;
  }
}

}  // namespace skyway
