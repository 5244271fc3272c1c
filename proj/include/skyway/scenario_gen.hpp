#pragma once

#include "skyway/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

// Scenario synthesis: reference paths from boundary states, the bundled
// three-flight terminal-area preset, and seeded random traffic for
// experiments.
namespace skyway::scenario_gen {

namespace detail {

inline double smoothstep(double s) {
  s = std::clamp(s, 0.0, 1.0);
  return s * s * (3.0 - 2.0 * s);
}

inline double lerp(double a, double b, double w) { return a + (b - a) * w; }

// Per-move speed for a trapezoid between the boundary speeds: climb from v0
// and descend into vT at a fixed per-move slope, cruise in between. The
// slope stays below the control authority so a flight tracking the profile
// keeps acceleration headroom for disturbances.
inline double speed_profile(double v0, double vT, double cruise, double slope,
                            int k, int n) {
  const double climb = v0 + slope * k;
  const double descend = vT + slope * (n - 1 - k);
  return std::min({cruise, climb, descend});
}

}  // namespace detail

/// Builds a smooth reference path between two boundary states: the heading
/// sweeps from x0.theta to xT.theta along a smoothstep (on the unwrapped
/// line, so a sweep larger than pi stays a single turn), the speed follows
/// a trapezoid whose cruise value is searched so the path's chord matches
/// the required displacement, and the path is rotated and scaled about the
/// start until it ends exactly on the terminal position.
inline Trajectory synthesize_standard(const std::string& id, int t_start,
                                      int t_end, const AircraftState& x0,
                                      const AircraftState& xT,
                                      const Limits& limits) {
  const int n = t_end - t_start;
  if (n < 2) throw InvalidInput("standard synthesis: need at least 2 moves");

  std::vector<double> headings(n);
  for (int k = 0; k < n; ++k) {
    const double s = static_cast<double>(k) / (n - 1);
    headings[k] = x0.theta + (xT.theta - x0.theta) * detail::smoothstep(s);
  }

  const double slope = 0.8 * limits.u_max;
  auto polyline = [&](double cruise) {
    std::vector<Vec2> pts;
    pts.reserve(n + 1);
    pts.emplace_back(x0.x, x0.y);
    for (int k = 0; k < n; ++k) {
      const double v =
          detail::speed_profile(x0.v, xT.v, cruise, slope, k, n);
      pts.push_back(pts.back() +
                    v * Vec2{std::cos(headings[k]), std::sin(headings[k])});
    }
    return pts;
  };
  auto chord = [&](double cruise) {
    const auto pts = polyline(cruise);
    return (pts.back() - pts.front()).norm();
  };

  // The chord grows with the cruise speed; bisect for the target length.
  const Vec2 target = Vec2{xT.x, xT.y} - Vec2{x0.x, x0.y};
  double lo = limits.v_min;
  double hi = limits.v_max;
  double cruise = hi;
  if (chord(lo) >= target.norm()) {
    cruise = lo;
  } else if (chord(hi) > target.norm()) {
    for (int i = 0; i < 60; ++i) {
      const double mid = 0.5 * (lo + hi);
      (chord(mid) < target.norm() ? lo : hi) = mid;
    }
    cruise = 0.5 * (lo + hi);
  }

  auto pts = polyline(cruise);
  const Vec2 got = pts.back() - pts.front();
  if (got.norm() > 1e-9 && target.norm() > 1e-9) {
    const double scale = target.norm() / got.norm();
    const double rot = std::atan2(target.y(), target.x()) -
                       std::atan2(got.y(), got.x());
    const double c = std::cos(rot);
    const double s = std::sin(rot);
    for (Vec2& p : pts) {
      const Vec2 d = p - pts.front();
      p = pts.front() + scale * Vec2{c * d.x() - s * d.y(),
                                     s * d.x() + c * d.y()};
    }
  } else if (got.norm() <= 1e-9) {
    for (int k = 0; k <= n; ++k) {
      pts[k] = Vec2{x0.x, x0.y} +
               (static_cast<double>(k) / n) * target;
    }
  }
  pts.back() = {xT.x, xT.y};

  Trajectory traj;
  traj.aircraft_id = id;
  traj.t_start = t_start;
  for (const Vec2& p : pts) {
    AircraftState st;
    st.x = p.x();
    st.y = p.y();
    traj.states.push_back(st);
  }
  reconstruct_motion(traj.states);
  traj.states.front().v = x0.v;
  traj.states.front().theta = x0.theta;
  traj.states.back().v = xT.v;
  traj.states.back().theta = xT.theta;
  return traj;
}

/// Assembles a flight record around a synthesized reference path. The wind
/// drift applies to every move.
inline AircraftRecord make_record(const std::string& id, int t_start,
                                  int t_end, const AircraftState& x0,
                                  const AircraftState& xT,
                                  const Limits& limits,
                                  const Disturbance& wind = {0.0, 0.0}) {
  AircraftRecord rec;
  rec.id = id;
  rec.t_start = t_start;
  rec.t_end = t_end;
  rec.initial_state = x0;
  rec.terminal_state = xT;
  rec.standard = synthesize_standard(id, t_start, t_end, x0, xT, limits);
  rec.wind.assign(static_cast<std::size_t>(t_end - t_start), wind);
  rec.validate(limits);
  return rec;
}

/// Control and speed envelope sized for the bundled terminal-area traffic,
/// which flies 35-45 NM per step.
inline Limits preset_limits() {
  Limits lim;
  lim.u_max = 10.0;
  lim.v_min = 10.0;
  lim.v_max = 70.0;
  return lim;
}

/// Three flights around a terminal area at the origin: two departures
/// climbing out to the southwest and one arrival approaching from there.
/// Distances in NM, one step per move. The departures' exit headings
/// continue their clockwise sweep, so they sit one full turn below the
/// equivalent positive angles.
inline Scenario make_haneda_preset() {
  Scenario sc;
  sc.limits = preset_limits();
  const Disturbance wind{0.236, 0.236};
  sc.aircraft.push_back(make_record(
      "A1", 1, 12, {4.71, -8.42, 16.4, -1.58},
      {-413.0, -97.5, 22.2, 2.63 - 2.0 * kPi}, sc.limits, wind));
  sc.aircraft.push_back(make_record(
      "A2", 2, 13, {4.50, -9.01, 17.7, -1.56},
      {-452.0, -123.0, 31.1, 2.84 - 2.0 * kPi}, sc.limits, wind));
  sc.aircraft.push_back(make_record(
      "A3", 2, 15, {-406.0, -217.0, 31.8, 0.471},
      {5.91, -1.96, 31.2, 0.833}, sc.limits, wind));
  sc.validate();
  return sc;
}

/// Seeded traffic generator: lanes of alternating direction far enough
/// apart to be solvable, with jittered headings, speeds, and winds. Same
/// seed, same scenario.
inline Scenario random_scenario(int n, unsigned long long seed,
                                const Limits& limits = {}) {
  if (n < 1) throw InvalidInput("random scenario: need at least 1 aircraft");
  limits.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Scenario sc;
  sc.limits = limits;
  const double lane_gap = 12.0 * limits.safety_margin + 2.0 * limits.v_max;
  for (int i = 0; i < n; ++i) {
    const int t_start = static_cast<int>(unit(rng) * 3.0);
    const int horizon = 8 + static_cast<int>(unit(rng) * 5.0);
    const double east = (i % 2 == 0) ? 0.0 : kPi;
    const double track = east + 0.2 * (unit(rng) - 0.5);
    const double cruise =
        limits.v_min + (0.35 + 0.3 * unit(rng)) * (limits.v_max - limits.v_min);

    AircraftState x0;
    x0.x = 20.0 * unit(rng);
    x0.y = lane_gap * i + 6.0 * (unit(rng) - 0.5);
    x0.v = std::clamp(cruise * (0.9 + 0.2 * unit(rng)), limits.v_min,
                      limits.v_max);
    x0.theta = track + 0.1 * (unit(rng) - 0.5);

    AircraftState xT;
    const Vec2 along{std::cos(track), std::sin(track)};
    const Vec2 perp{-along.y(), along.x()};
    const Vec2 exit = x0.position() + horizon * cruise * along +
                      10.0 * (unit(rng) - 0.5) * perp;
    xT.x = exit.x();
    xT.y = exit.y();
    xT.v = std::clamp(cruise * (0.9 + 0.2 * unit(rng)), limits.v_min,
                      limits.v_max);
    xT.theta = track + 0.1 * (unit(rng) - 0.5);

    const double w = 0.4 * (unit(rng) - 0.5);
    sc.aircraft.push_back(make_record("AC" + std::to_string(i + 1), t_start,
                                      t_start + horizon, x0, xT, limits,
                                      {w, w}));
  }
  sc.validate();
  return sc;
}

}  // namespace skyway::scenario_gen
