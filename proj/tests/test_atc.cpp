#include "skyway/atc.hpp"

#include "scenario_fixtures.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

using namespace skyway;
using atc::BuildOptions;
using atc::Layout;
using nlp::Vector;

TEST_CASE("decision layout packs controls then radii per aircraft") {
  Scenario sc = fixtures::staggered_pair();  // horizons 4 and 3
  Layout lay = Layout::build(sc);
  REQUIRE(lay.blocks.size() == 2);
  CHECK(lay.dimension == (8 + 3) + (6 + 2));
  CHECK(lay.blocks[0].control_offset == 0);
  CHECK(lay.blocks[0].radius_offset == 8);
  CHECK(lay.blocks[1].control_offset == 11);
  CHECK(lay.blocks[1].radius_offset == 17);
  CHECK(lay.u_index(0, 0) == 0);
  CHECK(lay.psi_index(0, 3) == 7);
  CHECK(lay.r_index(0, 1) == 8);
  CHECK(lay.r_index(0, 3) == 10);
  CHECK(lay.u_index(1, 1) == 11);   // TRAIL starts at t=1
  CHECK(lay.psi_index(1, 3) == 16);
  CHECK(lay.r_index(1, 2) == 17);
}

TEST_CASE("coverage cost matches the closed form") {
  std::vector<double> radii{1.0, 2.0};
  CHECK(atc::j1(radii, 0.1) ==
        Catch::Approx(-0.8372475245337022).epsilon(1e-14));
  CHECK_THROWS_AS(atc::j1(radii, 0.0), InvalidInput);
}

TEST_CASE("deviation cost counts offsets and their differences") {
  std::vector<Vec2> centers{{1.0, 0.0}, {2.0, 1.0}};
  std::vector<Vec2> reference{{0.0, 0.0}, {0.0, 0.0}};
  CHECK(atc::j2(centers, reference) == Catch::Approx(8.0).epsilon(1e-14));
  std::vector<Vec2> shorter{{0.0, 0.0}};
  CHECK_THROWS_AS(atc::j2(centers, shorter), InvalidInput);
}

TEST_CASE("single-aircraft horizon-3 program has the enumerated shape") {
  Scenario sc = fixtures::straight_single();
  nlp::Problem p = atc::build_problem(sc);
  // 6 controls + 2 interior radii.
  CHECK(p.dimension == 8);
  // Speed bounds at k=1..3 (6), terminal windows (4), reachability per move
  // with both directions (6); no conflicts for a single aircraft.
  CHECK(p.inequalities.size() == 16);
  // Terminal position in x and y.
  CHECK(p.equalities.size() == 2);
}

TEST_CASE("crossing pair gets one separation constraint per shared step") {
  Scenario sc = fixtures::crossing_pair();
  nlp::Problem p = atc::build_problem(sc);
  int conflicts = 0;
  for (const auto& fn : p.inequalities) {
    if (fn.name.rfind("conflict[", 0) == 0) ++conflicts;
  }
  CHECK(conflicts == 3);  // shared interior steps 1, 2, 3
}

TEST_CASE("cost of a packed decision equals its parts") {
  Scenario sc = fixtures::straight_single();
  Vector x0 = atc::initial_guess(sc);
  // The guess follows the standard exactly with zero radii, so the
  // deviation term vanishes and only the coverage floor remains.
  CHECK(atc::j_atc(x0, sc) ==
        Catch::Approx(-2.0 * std::log(0.1)).epsilon(1e-12));
}

TEST_CASE("initial guess inverts a dynamically consistent reference") {
  Scenario sc;
  sc.aircraft.push_back(fixtures::record_from_controls(
      "AC1", 2, {1.0, -2.0, 13.0, 0.4},
      {{1.5, 0.2}, {-0.5, -0.3}, {2.0, 0.1}}));
  Layout lay = Layout::build(sc);
  Vector x0 = atc::initial_guess(sc);
  CHECK(x0[lay.u_index(0, 2)] == Catch::Approx(1.5).margin(1e-9));
  CHECK(x0[lay.psi_index(0, 2)] == Catch::Approx(0.2).margin(1e-9));
  CHECK(x0[lay.u_index(0, 3)] == Catch::Approx(-0.5).margin(1e-9));
  CHECK(x0[lay.psi_index(0, 3)] == Catch::Approx(-0.3).margin(1e-9));
  CHECK(x0[lay.u_index(0, 4)] == Catch::Approx(2.0).margin(1e-9));
  CHECK(x0[lay.psi_index(0, 4)] == Catch::Approx(0.1).margin(1e-9));
  // Radii start at zero.
  CHECK(x0[lay.r_index(0, 3)] == 0.0);

  // Rolling the guess forward reproduces the reference waypoints.
  auto controls = atc::unpack_controls(x0, lay, 0);
  Trajectory traj = rollout(sc.aircraft[0].initial_state, controls);
  for (int k = 2; k <= 5; ++k) {
    const Vec2 got = traj.states[static_cast<std::size_t>(k - 2)].position();
    const Vec2 want = sc.aircraft[0].standard.at_time(k).position();
    CHECK((got - want).norm() == Catch::Approx(0.0).margin(1e-9));
  }
}

TEST_CASE("initial guess tracks headings across the wrap seam") {
  // A reference that turns from heading ~3.0 through the +-pi seam; the
  // unwrapped guess must keep heading increments small instead of jumping
  // by 2*pi.
  Scenario sc;
  sc.aircraft.push_back(fixtures::record_from_controls(
      "AC1", 0, {0.0, 0.0, 12.0, 3.0},
      {{0.0, 0.2}, {0.0, 0.2}, {0.0, 0.2}}));
  Vector x0 = atc::initial_guess(sc);
  Layout lay = Layout::build(sc);
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(x0[lay.psi_index(0, k)]) <= 0.2 + 1e-9);
  }
}

TEST_CASE("analytic gradients of the corridor program match differences") {
  Scenario sc = fixtures::crossing_pair();
  BuildOptions opts;
  // Include the containment constraints in the check as well.
  opts.prev_selections = {sc.aircraft[0].standard, sc.aircraft[1].standard};
  opts.operation_constraint = true;
  nlp::Problem p = atc::build_problem(sc, opts);
  Vector x = atc::initial_guess(sc);
  // Nudge off the guess so no norm sits exactly at zero and radii are
  // interior to their bounds.
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(0.01, 0.05);
  for (int i = 0; i < x.size(); ++i) x[i] += unif(rng);
  auto report = nlp::check_gradient(p, x, 1e-5, 1e-6);
  INFO("worst: " << report.worst << " rel " << report.max_rel_error);
  CHECK(report.pass);
}

TEST_CASE("corridor design on a lone straight flight") {
  Scenario sc = fixtures::straight_single();
  atc::Solution sol = atc::design_sets(sc);
  REQUIRE(sol.result.status == nlp::SolveStatus::converged);
  REQUIRE(sol.corridors.size() == 1);
  const Corridor& c = sol.corridors[0];
  CHECK_NOTHROW(c.validate());

  // Interior disks should have opened up; the reachability budget caps the
  // two radii plus the speed slack at 6 in total.
  CHECK(c.radii[1] > 0.5);
  CHECK(c.radii[2] > 0.5);

  // Centers are exactly the rollout of the returned controls.
  Trajectory traj = rollout(sc.aircraft[0].initial_state, sol.controls[0],
                            {}, "AC1", 0);
  for (std::size_t i = 0; i < c.centers.size(); ++i) {
    CHECK(c.centers[i].x() == traj.states[i].x);
    CHECK(c.centers[i].y() == traj.states[i].y);
  }

  // Terminal position is met and every margin family is feasible.
  CHECK((c.centers.back() -
         sc.aircraft[0].terminal_state.position()).norm() <= 1e-6);
  CHECK(sol.residuals.max_violation <= 1e-6);

  // The solve beats the zero-radius warm start.
  CHECK(sol.result.objective_value < atc::j_atc(atc::initial_guess(sc), sc));
}

TEST_CASE("corridor design separates a crossing pair") {
  Scenario sc = fixtures::crossing_pair();
  atc::Solution sol = atc::design_sets(sc);
  REQUIRE(sol.result.status == nlp::SolveStatus::converged);
  const Limits& lim = sc.limits;

  for (int k = 1; k <= 3; ++k) {
    const double margin = conflict_margin(
        sol.corridors[0].center_at(k), sol.corridors[1].center_at(k),
        sol.corridors[0].radius_at(k), sol.corridors[1].radius_at(k));
    CHECK(margin >= lim.safety_margin - 1e-6);
  }
  for (const Corridor& c : sol.corridors) {
    for (const auto& gap : feasibility_margins(c)) {
      CHECK(gap.min_gap >= lim.v_min - 1e-6);
      CHECK(gap.max_gap <= lim.v_max + 1e-6);
    }
  }
}

TEST_CASE("staggered horizons only couple where both are interior") {
  Scenario sc = fixtures::staggered_pair();
  nlp::Problem p = atc::build_problem(sc);
  int conflicts = 0;
  for (const auto& fn : p.inequalities) {
    if (fn.name.rfind("conflict[", 0) == 0) ++conflicts;
  }
  // LEAD interior {1,2,3}, TRAIL interior {2,3}: shared 2 and 3.
  CHECK(conflicts == 2);
  atc::Solution sol = atc::design_sets(sc);
  CHECK(sol.result.status == nlp::SolveStatus::converged);
}

TEST_CASE("containment of a previous plan requires matching selections") {
  Scenario sc = fixtures::straight_single();
  BuildOptions opts;
  opts.operation_constraint = true;
  CHECK_THROWS_AS(atc::build_problem(sc, opts), InvalidInput);

  opts.prev_selections = {sc.aircraft[0].standard};
  nlp::Problem p = atc::build_problem(sc, opts);
  int ops = 0;
  for (const auto& fn : p.inequalities) {
    if (fn.name.rfind("operation[", 0) == 0) ++ops;
  }
  CHECK(ops == 2);  // interior steps 1 and 2

  // A redesigned corridor must keep covering the old selection.
  atc::Solution sol = atc::design_sets(sc, {}, opts);
  REQUIRE(sol.result.status == nlp::SolveStatus::converged);
  for (int k = 1; k <= 2; ++k) {
    const double margin = containment_margin(
        sol.corridors[0].center_at(k), sol.corridors[0].radius_at(k),
        sc.aircraft[0].standard.at_time(k).position());
    CHECK(margin >= -1e-6);
  }
}

TEST_CASE("previous selection too short to span the horizon is rejected") {
  Scenario sc = fixtures::straight_single();
  BuildOptions opts;
  opts.operation_constraint = true;
  Trajectory stub = sc.aircraft[0].standard;
  stub.states.pop_back();
  opts.prev_selections = {stub};
  CHECK_THROWS_AS(atc::build_problem(sc, opts), InvalidInput);
}

TEST_CASE("corridor design is deterministic") {
  Scenario sc = fixtures::crossing_pair();
  atc::Solution a = atc::design_sets(sc);
  atc::Solution b = atc::design_sets(sc);
  REQUIRE(a.corridors.size() == b.corridors.size());
  for (std::size_t i = 0; i < a.corridors.size(); ++i) {
    REQUIRE(a.corridors[i].centers.size() == b.corridors[i].centers.size());
    for (std::size_t k = 0; k < a.corridors[i].centers.size(); ++k) {
      CHECK(a.corridors[i].centers[k].x() == b.corridors[i].centers[k].x());
      CHECK(a.corridors[i].centers[k].y() == b.corridors[i].centers[k].y());
      CHECK(a.corridors[i].radii[k] == b.corridors[i].radii[k]);
    }
  }
}

TEST_CASE("residual summary groups by family and reports the worst") {
  Scenario sc = fixtures::straight_single();
  nlp::Problem p = atc::build_problem(sc);
  Layout lay = Layout::build(sc);
  // Full braking while turning hard: speeds plunge below v_min and the
  // flight curls away from its exit point.
  Vector x = Vector::Zero(p.dimension);
  for (int k = 0; k < 3; ++k) {
    x[lay.u_index(0, k)] = -5.0;
    x[lay.psi_index(0, k)] = 0.5;
  }
  atc::ResidualSummary sum = atc::summarize_residuals(p, x);
  const auto* terminal = sum.find("terminal_position");
  REQUIRE(terminal != nullptr);
  CHECK(terminal->count == 2);
  CHECK(terminal->max_violation > 1.0);
  const auto* speed = sum.find("speed");
  REQUIRE(speed != nullptr);
  CHECK(speed->count == 6);
  CHECK(speed->max_violation > 1.0);
  const auto* feas = sum.find("feasibility");
  REQUIRE(feas != nullptr);
  CHECK(feas->count == 6);
  CHECK(sum.max_violation >= terminal->max_violation);
}
