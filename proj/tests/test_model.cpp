#include "skyway/model.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

using namespace skyway;

TEST_CASE("step advances position along the current heading") {
  // Hand-propagated from x=4.71, y=-8.42, v=16.4, theta=-1.58 with zero
  // controls; the expected values are frozen from an independent evaluation.
  AircraftState s{4.71, -8.42, 16.4, -1.58};
  AircraftState next = step(s, {0.0, 0.0});
  CHECK(next.x == Catch::Approx(4.559061890391543).epsilon(1e-14));
  CHECK(next.y == Catch::Approx(-24.81930540257934).epsilon(1e-14));
  CHECK(next.v == 16.4);
  CHECK(next.theta == -1.58);
}

TEST_CASE("step applies control increments after the move") {
  AircraftState s{0.0, 0.0, 10.0, 0.0};
  AircraftState next = step(s, {2.0, 0.25});
  CHECK(next.x == Catch::Approx(10.0));
  CHECK(next.y == Catch::Approx(0.0));
  CHECK(next.v == Catch::Approx(12.0));
  CHECK(next.theta == Catch::Approx(0.25));
}

TEST_CASE("headings stay unwrapped beyond +-pi") {
  AircraftState s{0.0, 0.0, 10.0, 3.0};
  AircraftState next = step(s, {0.0, 0.5});
  CHECK(next.theta == Catch::Approx(3.5));
  next = step(next, {0.0, 0.5});
  CHECK(next.theta == Catch::Approx(4.0));
}

TEST_CASE("step rejects non-finite input") {
  AircraftState nan_state{std::nan(""), 0.0, 10.0, 0.0};
  CHECK_THROWS_AS(step(nan_state, {0.0, 0.0}), InvalidInput);
  AircraftState ok{0.0, 0.0, 10.0, 0.0};
  ControlInput nan_control{std::nan(""), 0.0};
  CHECK_THROWS_AS(step(ok, nan_control), InvalidInput);
  CHECK_THROWS_AS(step_disturbed(ok, {0.0, 0.0}, {std::nan(""), 0.0}),
                  InvalidInput);
}

TEST_CASE("rollout with empty controls returns just the start state") {
  AircraftState x0{1.0, 2.0, 12.0, 0.3};
  Trajectory traj = rollout(x0, {});
  REQUIRE(traj.states.size() == 1);
  CHECK(traj.states[0].x == 1.0);
  CHECK(traj.states[0].theta == 0.3);
}

TEST_CASE("rollout produces one state per control plus the start") {
  AircraftState x0{0.0, 0.0, 10.0, 0.0};
  std::vector<ControlInput> controls{{1.0, 0.1}, {-0.5, 0.0}, {0.0, -0.1}};
  Trajectory traj = rollout(x0, controls, {}, "AC1", 4);
  REQUIRE(traj.states.size() == 4);
  CHECK(traj.aircraft_id == "AC1");
  CHECK(traj.t_start == 4);
  CHECK(traj.t_end() == 7);
  // Each state must equal step() applied to its predecessor.
  for (std::size_t k = 0; k + 1 < traj.states.size(); ++k) {
    AircraftState expect = step(traj.states[k], controls[k]);
    CHECK(traj.states[k + 1].x == expect.x);
    CHECK(traj.states[k + 1].v == expect.v);
  }
}

TEST_CASE("disturbed rollout shifts positions by the accumulated drift") {
  AircraftState x0{3.0, -2.0, 15.0, 1.1};
  std::vector<ControlInput> controls{{0.5, 0.05}, {0.2, -0.1}, {-0.3, 0.2}};
  std::vector<Disturbance> wind{{0.2, -0.1}, {0.3, 0.05}, {-0.1, 0.4}};
  Trajectory clean = rollout(x0, controls);
  Trajectory blown = rollout(x0, controls, wind);
  REQUIRE(blown.states.size() == clean.states.size());
  double cum_dx = 0.0, cum_dy = 0.0;
  for (std::size_t k = 1; k < clean.states.size(); ++k) {
    cum_dx += wind[k - 1].dx;
    cum_dy += wind[k - 1].dy;
    CHECK(blown.states[k].x ==
          Catch::Approx(clean.states[k].x + cum_dx).margin(1e-12));
    CHECK(blown.states[k].y ==
          Catch::Approx(clean.states[k].y + cum_dy).margin(1e-12));
    // Speed and heading never see the drift.
    CHECK(blown.states[k].v == clean.states[k].v);
    CHECK(blown.states[k].theta == clean.states[k].theta);
  }
}

TEST_CASE("rollout rejects mismatched disturbance count") {
  AircraftState x0{0.0, 0.0, 10.0, 0.0};
  std::vector<ControlInput> controls{{0.0, 0.0}, {0.0, 0.0}};
  std::vector<Disturbance> wind{{0.1, 0.1}};
  CHECK_THROWS_AS(rollout(x0, controls, wind), InvalidInput);
}

TEST_CASE("conflict margin is center distance minus radii") {
  CHECK(conflict_margin({0.0, 0.0}, {0.0, 0.0}, 0.0, 0.0) == 0.0);
  CHECK(conflict_margin({0.0, 0.0}, {5.0, 0.0}, 1.0, 1.0) ==
        Catch::Approx(3.0));
  CHECK(conflict_margin({0.0, 0.0}, {3.0, 4.0}, 2.0, 4.0) ==
        Catch::Approx(-1.0));
}

TEST_CASE("feasibility margins bound the move between consecutive disks") {
  Corridor c;
  c.aircraft_id = "AC1";
  c.t_start = 0;
  c.centers = {{0.0, 0.0}, {4.0, 0.0}, {4.0, 3.0}};
  c.radii = {0.0, 1.0, 0.0};
  auto gaps = feasibility_margins(c);
  REQUIRE(gaps.size() == 2);
  CHECK(gaps[0].min_gap == Catch::Approx(3.0));
  CHECK(gaps[0].max_gap == Catch::Approx(5.0));
  CHECK(gaps[1].min_gap == Catch::Approx(2.0));
  CHECK(gaps[1].max_gap == Catch::Approx(4.0));
}

TEST_CASE("containment margin is radius minus offset") {
  CHECK(containment_margin({0.0, 0.0}, 2.0, {1.0, 0.0}) == Catch::Approx(1.0));
  CHECK(containment_margin({0.0, 0.0}, 2.0, {3.0, 0.0}) ==
        Catch::Approx(-1.0));
  CHECK(containment_margin({1.0, 1.0}, 0.0, {1.0, 1.0}) == 0.0);
}

TEST_CASE("corridor validation enforces shape and boundary radii") {
  Corridor c;
  c.aircraft_id = "AC1";
  c.centers = {{0.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}};
  c.radii = {0.0, 1.0, 0.0};
  CHECK_NOTHROW(c.validate());

  Corridor bad = c;
  bad.radii = {0.0, -1.0, 0.0};
  CHECK_THROWS_AS(bad.validate(), InvalidInput);

  bad = c;
  bad.radii = {0.5, 1.0, 0.0};
  CHECK_THROWS_AS(bad.validate(), InvalidInput);

  bad = c;
  bad.radii = {0.0, 1.0};
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
}

TEST_CASE("trajectory time indexing") {
  Trajectory traj;
  traj.aircraft_id = "AC2";
  traj.t_start = 3;
  traj.states = {{0, 0, 10, 0}, {1, 0, 10, 0}, {2, 0, 10, 0}};
  CHECK(traj.t_end() == 5);
  CHECK(traj.spans(3, 5));
  CHECK(traj.spans(4, 5));
  CHECK_FALSE(traj.spans(2, 5));
  CHECK(traj.at_time(4).x == 1.0);
  CHECK_THROWS_AS(traj.at_time(2), InvalidInput);
  CHECK_THROWS_AS(traj.at_time(6), InvalidInput);
}

TEST_CASE("limits validation") {
  Limits ok;
  CHECK_NOTHROW(ok.validate());

  Limits bad = ok;
  bad.v_max = bad.v_min;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);

  bad = ok;
  bad.psi_max = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);

  bad = ok;
  bad.eps = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);

  bad = ok;
  bad.safety_margin = -1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
}

TEST_CASE("terminal references fall back to the aircraft's own exit state") {
  Limits limits;
  AircraftRecord rec;
  rec.terminal_state = {0.0, 0.0, 22.2, 2.63};
  CHECK(rec.terminal_speed_ref(limits) == 22.2);
  CHECK(rec.terminal_heading_ref(limits) == 2.63);
  limits.v_ter = 25.0;
  limits.theta_ter = 0.0;
  CHECK(rec.terminal_speed_ref(limits) == 25.0);
  CHECK(rec.terminal_heading_ref(limits) == 0.0);
}

static AircraftRecord make_record(const std::string& id, int t, int T) {
  AircraftRecord rec;
  rec.id = id;
  rec.t_start = t;
  rec.t_end = T;
  rec.initial_state = {0.0, 0.0, 12.0, 0.0};
  rec.terminal_state = {12.0 * (T - t), 0.0, 12.0, 0.0};
  rec.standard.aircraft_id = id;
  rec.standard.t_start = t;
  for (int k = t; k <= T; ++k) {
    rec.standard.states.push_back({12.0 * (k - t), 0.0, 12.0, 0.0});
  }
  rec.wind.assign(static_cast<std::size_t>(T - t), {0.0, 0.0});
  return rec;
}

TEST_CASE("scenario validation") {
  Scenario sc;
  sc.aircraft.push_back(make_record("AC1", 0, 4));
  sc.aircraft.push_back(make_record("AC2", 1, 5));
  CHECK_NOTHROW(sc.validate());
  CHECK(sc.find("AC2") != nullptr);
  CHECK(sc.find("AC3") == nullptr);

  Scenario dup = sc;
  dup.aircraft.push_back(make_record("AC1", 0, 4));
  CHECK_THROWS_AS(dup.validate(), InvalidInput);

  Scenario short_wind = sc;
  short_wind.aircraft[0].wind.pop_back();
  CHECK_THROWS_AS(short_wind.validate(), InvalidInput);

  Scenario tiny = sc;
  tiny.aircraft[0].t_end = tiny.aircraft[0].t_start + 1;
  CHECK_THROWS_AS(tiny.validate(), InvalidInput);

  Scenario slow = sc;
  slow.aircraft[0].initial_state.v = 1.0;
  CHECK_THROWS_AS(slow.validate(), InvalidInput);
}

TEST_CASE("control gradient matches the hand-derived two-step case") {
  // phi = x-coordinate after two moves:
  //   x(2) = x0 + v0 cos(theta0) + (v0 + u0) cos(theta0 + psi0)
  // so d/du0 = cos(theta(1)), d/dpsi0 = -v(1) sin(theta(1)), d/du1 = 0.
  AircraftState x0{1.0, 2.0, 3.0, 0.5};
  std::vector<ControlInput> controls{{0.3, 0.2}, {-0.2, 0.4}};
  Trajectory traj = rollout(x0, controls);
  std::vector<StateSeed> seeds(3);
  seeds[2].x = 1.0;
  std::vector<double> grad(4, 0.0);
  accumulate_control_gradient(traj.states, seeds, grad);
  CHECK(grad[0] == Catch::Approx(std::cos(0.7)).epsilon(1e-14));
  CHECK(grad[1] == Catch::Approx(-3.3 * std::sin(0.7)).epsilon(1e-14));
  CHECK(grad[2] == 0.0);
  CHECK(grad[3] == 0.0);
}

TEST_CASE("control gradient matches central differences on a random case") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(-0.3, 0.3);
  AircraftState x0{2.0, -1.0, 14.0, 0.8};
  const int n = 6;
  std::vector<ControlInput> controls(n);
  for (auto& c : controls) c = {unif(rng) * 4.0, unif(rng)};
  std::vector<Disturbance> wind(n);
  for (auto& d : wind) d = {unif(rng), unif(rng)};

  // phi mixes every state component so all seed channels are exercised.
  auto phi = [&](const std::vector<ControlInput>& cs) {
    Trajectory traj = rollout(x0, cs, wind);
    double acc = 0.0;
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
      const AircraftState& s = traj.states[k];
      acc += 0.3 * s.x * s.x + 0.2 * s.y + 0.1 * s.v * s.theta;
    }
    return acc;
  };

  Trajectory traj = rollout(x0, controls, wind);
  std::vector<StateSeed> seeds(traj.states.size());
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    const AircraftState& s = traj.states[k];
    seeds[k].x = 0.6 * s.x;
    seeds[k].y = 0.2;
    seeds[k].v = 0.1 * s.theta;
    seeds[k].theta = 0.1 * s.v;
  }
  std::vector<double> grad(2 * n, 0.0);
  accumulate_control_gradient(traj.states, seeds, grad);

  const double h = 1e-6;
  for (int i = 0; i < 2 * n; ++i) {
    auto perturbed = controls;
    double& slot = (i % 2 == 0) ? perturbed[i / 2].u : perturbed[i / 2].psi;
    slot += h;
    const double hi = phi(perturbed);
    slot -= 2.0 * h;
    const double lo = phi(perturbed);
    const double fd = (hi - lo) / (2.0 * h);
    CHECK(grad[i] == Catch::Approx(fd).margin(1e-6));
  }
}

TEST_CASE("control gradient rejects mismatched shapes") {
  AircraftState x0{0.0, 0.0, 10.0, 0.0};
  std::vector<ControlInput> controls{{0.0, 0.0}};
  Trajectory traj = rollout(x0, controls);
  std::vector<StateSeed> seeds(1);
  std::vector<double> grad(2, 0.0);
  CHECK_THROWS_AS(accumulate_control_gradient(traj.states, seeds, grad),
                  InvalidInput);
}
