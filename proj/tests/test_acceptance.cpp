#include "skyway/atc.hpp"
#include "skyway/io.hpp"
#include "skyway/orchestrator.hpp"
#include "skyway/pilot.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "scenario_fixtures.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <set>
#include <string>
#include <sys/wait.h>
#include <vector>

using namespace skyway;

// End-to-end acceptance gate. Each test case checks one shipping criterion
// and prints a single pass/fail line so the run reads as a checklist.

namespace {

constexpr double kSeparation = 3.0;  // pairwise disk clearance, NM
constexpr double kMarginTol = 1e-6;

std::string data_path(const char* name) {
  return std::string(SKYWAY_DATA_DIR) + "/" + name;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SKYWAY_CLI) + " " + args;
  const int raw = std::system(cmd.c_str());
  REQUIRE(raw != -1);
  REQUIRE(WIFEXITED(raw));
  return WEXITSTATUS(raw);
}

void report(int criterion, const char* label, bool pass,
            const std::string& detail) {
  std::printf("acceptance %d [%s]: %s (%s)\n", criterion, label,
              pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

// The bundled three-flight scenario solved once and shared by the corridor
// criteria. Wall time is kept so the runtime budget can be checked.
struct PlannedPreset {
  Scenario scenario;
  atc::Solution solution;
  double solve_seconds = 0.0;
};

const PlannedPreset& planned_preset() {
  static const PlannedPreset preset = [] {
    PlannedPreset out;
    out.scenario = io::load_scenario(data_path("haneda3.json"));
    const auto start = std::chrono::steady_clock::now();
    out.solution = atc::design_sets(out.scenario);
    out.solve_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    return out;
  }();
  return preset;
}

// Steps where both flights are strictly between entry and exit; boundary
// steps carry zero radius and pinned positions.
template <typename Fn>
void for_shared_interior_steps(const std::vector<Corridor>& corridors,
                               Fn&& fn) {
  for (std::size_t i = 0; i < corridors.size(); ++i) {
    for (std::size_t j = i + 1; j < corridors.size(); ++j) {
      const Corridor& a = corridors[i];
      const Corridor& b = corridors[j];
      const int lo = std::max(a.t_start + 1, b.t_start + 1);
      const int hi = std::min(a.t_end() - 1, b.t_end() - 1);
      for (int k = lo; k <= hi; ++k) fn(a, b, k);
    }
  }
}

}  // namespace

TEST_CASE("acceptance 1: corridor separation margins") {
  const PlannedPreset& preset = planned_preset();
  REQUIRE(preset.solution.result.status == nlp::SolveStatus::converged);

  double worst = std::numeric_limits<double>::infinity();
  int pairs = 0;
  for_shared_interior_steps(
      preset.solution.corridors,
      [&](const Corridor& a, const Corridor& b, int k) {
        worst = std::min(worst, conflict_margin(a.center_at(k), b.center_at(k),
                                                a.radius_at(k),
                                                b.radius_at(k)));
        ++pairs;
      });

  const bool pass = pairs > 0 && worst >= kSeparation - kMarginTol &&
                    preset.solve_seconds < 60.0;
  report(1, "separation margins", pass,
         "worst " + std::to_string(worst) + " NM over " +
             std::to_string(pairs) + " pair-steps, solve " +
             std::to_string(preset.solve_seconds) + " s");
  CHECK(pairs == 28);
  CHECK(worst >= kSeparation - kMarginTol);
  CHECK(preset.solve_seconds < 60.0);
}

TEST_CASE("acceptance 2: sampled points in any two disks stay separated") {
  const PlannedPreset& preset = planned_preset();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto sample_disk = [&](const Vec2& center, double radius) {
    const double r = radius * std::sqrt(unit(rng));
    const double phi = 2.0 * kPi * unit(rng);
    return Vec2(center.x() + r * std::cos(phi),
                center.y() + r * std::sin(phi));
  };

  double worst = std::numeric_limits<double>::infinity();
  long long samples = 0;
  for_shared_interior_steps(
      preset.solution.corridors,
      [&](const Corridor& a, const Corridor& b, int k) {
        for (int s = 0; s < 1000; ++s) {
          const Vec2 p = sample_disk(a.center_at(k), a.radius_at(k));
          const Vec2 q = sample_disk(b.center_at(k), b.radius_at(k));
          worst = std::min(worst, (p - q).norm());
          ++samples;
        }
      });

  const bool pass = samples > 0 && worst >= kSeparation - kMarginTol;
  report(2, "point separation", pass,
         "closest sampled pair " + std::to_string(worst) + " NM over " +
             std::to_string(samples) + " samples");
  CHECK(worst >= kSeparation - kMarginTol);
}

namespace {

// Cost of flying the disk centers themselves: exact inverse dynamics under
// the forecast wind, headings unwrapped move to move, the last move steered
// at the exit references. No clipping; tracking demands whatever it demands.
double center_tracking_cost(const Corridor& corridor,
                            const AircraftRecord& rec, const Limits& limits,
                            const std::vector<Disturbance>& wind) {
  const int n = rec.horizon();
  std::vector<double> seg_v(static_cast<std::size_t>(n));
  std::vector<double> seg_th(static_cast<std::size_t>(n));
  double prev_th = rec.initial_state.theta;
  for (int m = 0; m < n; ++m) {
    Vec2 move = corridor.center_at(rec.t_start + m + 1) -
                corridor.center_at(rec.t_start + m);
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
  std::vector<ControlInput> controls(static_cast<std::size_t>(n));
  for (int m = 0; m < n; ++m) {
    const std::size_t s = static_cast<std::size_t>(m);
    if (m + 1 < n) {
      controls[s] = {seg_v[s + 1] - seg_v[s], seg_th[s + 1] - seg_th[s]};
    } else {
      controls[s] = {rec.terminal_speed_ref(limits) - seg_v[s],
                     rec.terminal_heading_ref(limits) - seg_th[s]};
    }
  }
  return pilot::j_pilot(controls, limits);
}

}  // namespace

TEST_CASE("acceptance 3: selected trajectories beat center tracking") {
  const PlannedPreset& preset = planned_preset();
  Scenario scenario = preset.scenario;
  for (AircraftRecord& rec : scenario.aircraft) {
    for (Disturbance& w : rec.wind) w = {0.236, 0.236};
  }

  double total_selected = 0.0;
  double total_center = 0.0;
  bool each_improves = true;
  for (std::size_t a = 0; a < scenario.aircraft.size(); ++a) {
    const AircraftRecord& rec = scenario.aircraft[a];
    const Corridor& corridor = preset.solution.corridors[a];
    const double center_cost =
        center_tracking_cost(corridor, rec, scenario.limits, rec.wind);
    const pilot::Solution sol = pilot::select_trajectory(
        corridor, rec, scenario.limits, rec.wind);
    REQUIRE(sol.result.status == nlp::SolveStatus::converged);
    REQUIRE(sol.result.max_constraint_violation <= 1e-6);
    if (!(sol.cost < center_cost)) each_improves = false;
    total_selected += sol.cost;
    total_center += center_cost;
  }

  const double reduction = 1.0 - total_selected / total_center;
  const bool pass = each_improves && reduction >= 0.05;
  report(3, "pilot improvement", pass,
         "total " + std::to_string(total_selected) + " vs center " +
             std::to_string(total_center) + ", reduction " +
             std::to_string(100.0 * reduction) + "%");
  CHECK(each_improves);
  CHECK(reduction >= 0.05);
}

TEST_CASE("acceptance 4: re-planned corridors contain committed paths") {
  const std::string run1 = "/tmp/skyway_acc_replan1.json";
  const std::string run2 = "/tmp/skyway_acc_replan2.json";
  REQUIRE(run_cli("plan " + data_path("haneda3.json") + " -o " + run1 +
                  " > /dev/null") == 0);
  REQUIRE(run_cli("replan " + run1 + " --tau 4 -o " + run2 +
                  " > /dev/null") == 0);
  const int verify_exit = run_cli("verify " + run2 + " > /dev/null");

  const auto session = io::load_session(run2);
  REQUIRE(session.history.size() == 2);
  REQUIRE(session.history.back().plan_time == 5);
  const auto report_checks = orchestrator::verify(session);
  const orchestrator::CheckResult* containment =
      report_checks.find("plan_containment");
  REQUIRE(containment != nullptr);

  const bool pass = verify_exit == 0 && containment->count > 0 &&
                    containment->worst >= -kMarginTol;
  report(4, "re-plan containment", pass,
         "worst margin " + std::to_string(containment->worst) + " over " +
             std::to_string(containment->count) +
             " steps, verify exit " + std::to_string(verify_exit));
  CHECK(verify_exit == 0);
  CHECK(containment->worst >= -kMarginTol);
}

TEST_CASE("acceptance 5: interior radii sit in a plausible band") {
  const PlannedPreset& preset = planned_preset();
  bool pass = true;
  std::string detail;
  for (const Corridor& c : preset.solution.corridors) {
    REQUIRE(c.radii.size() >= 3);
    double sum = 0.0;
    for (std::size_t m = 1; m + 1 < c.radii.size(); ++m) sum += c.radii[m];
    const double mean = sum / static_cast<double>(c.radii.size() - 2);
    if (!(mean >= 1.0 && mean <= 100.0)) pass = false;
    detail += c.aircraft_id + " " + std::to_string(mean) + " ";
    CHECK(mean >= 1.0);
    CHECK(mean <= 100.0);
  }
  report(5, "mean interior radius", pass, detail + "NM");
}

TEST_CASE("acceptance 6: analytic gradients match finite differences") {
  const PlannedPreset& preset = planned_preset();
  const Scenario& scenario = preset.scenario;
  const double tol = 1e-4;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  bool all_pass = true;
  double worst_err = 0.0;
  auto family = [](const std::string& name) {
    return name.substr(0, name.find('['));
  };
  auto audit = [&](const nlp::Problem& problem, const nlp::Vector& start,
                   const std::set<std::string>& expected_families) {
    std::set<std::string> seen;
    nlp::Vector x = start;
    for (int trial = 0; trial < 6; ++trial) {
      if (trial > 0) {
        for (int i = 0; i < x.size(); ++i) {
          const double range = problem.upper[i] - problem.lower[i];
          x[i] = std::clamp(start[i] + 0.25 * range * unit(rng),
                            problem.lower[i] + 1e-4 * range,
                            problem.upper[i] - 1e-4 * range);
        }
      }
      const auto rep = nlp::check_gradient(problem, x, tol);
      worst_err = std::max(worst_err, rep.max_rel_error);
      if (!rep.pass) all_pass = false;
      for (const auto& entry : rep.entries) seen.insert(family(entry.name));
    }
    for (const std::string& f : expected_families) {
      INFO("family " << f);
      CHECK(seen.count(f) == 1);
      if (seen.count(f) != 1) all_pass = false;
    }
  };

  atc::BuildOptions options;
  options.operation_constraint = true;
  for (const AircraftRecord& rec : scenario.aircraft) {
    options.prev_selections.push_back(rec.standard);
  }
  audit(atc::build_problem(scenario, options),
        atc::initial_guess(scenario, options),
        {"corridor_cost", "conflict", "feasibility", "speed",
         "terminal_window", "terminal_position", "operation"});

  for (std::size_t a = 0; a < scenario.aircraft.size(); ++a) {
    const AircraftRecord& rec = scenario.aircraft[a];
    const Corridor& corridor = preset.solution.corridors[a];
    audit(pilot::build_problem(corridor, rec, scenario.limits, rec.wind),
          pilot::initial_guess(corridor, rec, scenario.limits, rec.wind),
          {"selection_cost", "speed", "terminal_window", "containment",
           "terminal_position"});
  }

  report(6, "gradient audit", all_pass,
         "max relative error " + std::to_string(worst_err) + " at tol 1e-4");
  CHECK(all_pass);
}

TEST_CASE("acceptance 7: solver matches a brute-force oracle at desk scale") {
  // One flight, four moves, generous disks: small enough that a coarse
  // control grid can enumerate every candidate.
  Limits limits;
  limits.tol_terminal = 2.0;
  AircraftRecord rec = fixtures::record_from_controls(
      "SOLO", 0, {0.0, 0.0, 20.0, 0.0},
      {{2.0, 0.0}, {2.0, 0.0}, {2.0, 0.0}, {0.0, 0.0}});
  rec.wind.assign(4, {0.2, 0.2});

  Corridor corridor;
  corridor.aircraft_id = rec.id;
  corridor.t_start = rec.t_start;
  for (const AircraftState& st : rec.standard.states) {
    corridor.centers.push_back(st.position());
  }
  corridor.radii = {0.0, 5.0, 6.0, 5.0, 0.0};

  const auto start = std::chrono::steady_clock::now();
  const pilot::Solution sol =
      pilot::select_trajectory(corridor, rec, limits, rec.wind);
  REQUIRE(sol.result.status == nlp::SolveStatus::converged);

  nlp::Problem problem = pilot::build_problem(corridor, rec, limits, rec.wind);
  REQUIRE(problem.dimension == 8);
  REQUIRE(problem.equalities.empty());
  const std::array<double, 5> u_grid = {-limits.u_max, -0.5 * limits.u_max,
                                        0.0, 0.5 * limits.u_max,
                                        limits.u_max};
  const std::array<double, 5> psi_grid = {-limits.psi_max,
                                          -0.5 * limits.psi_max, 0.0,
                                          0.5 * limits.psi_max,
                                          limits.psi_max};

  double grid_best = std::numeric_limits<double>::infinity();
  long long feasible_points = 0;
  nlp::Vector x(8);
  for (long long code = 0; code < 390625; ++code) {  // 5^8 combinations
    long long rest = code;
    for (int m = 0; m < 4; ++m) {
      x[2 * m] = u_grid[static_cast<std::size_t>(rest % 5)];
      rest /= 5;
      x[2 * m + 1] = psi_grid[static_cast<std::size_t>(rest % 5)];
      rest /= 5;
    }
    bool feasible = true;
    for (const auto& g : problem.inequalities) {
      if (g(x) > 1e-6) {
        feasible = false;
        break;
      }
    }
    if (!feasible) continue;
    ++feasible_points;
    grid_best = std::min(grid_best, problem.objective(x));
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();

  const bool pass = feasible_points > 0 &&
                    grid_best >= sol.cost - 1e-3 && elapsed < 10.0;
  report(7, "brute-force oracle", pass,
         "solver " + std::to_string(sol.cost) + " vs grid best " +
             std::to_string(grid_best) + " over " +
             std::to_string(feasible_points) + " feasible points, " +
             std::to_string(elapsed) + " s");
  CHECK(feasible_points > 0);
  CHECK(grid_best >= sol.cost - 1e-3);
  CHECK(elapsed < 10.0);
}

TEST_CASE("acceptance 8: identical inputs give byte-identical outputs") {
  const std::string run_a = "/tmp/skyway_acc_det_a.json";
  const std::string run_b = "/tmp/skyway_acc_det_b.json";
  const std::string fig_a = "/tmp/skyway_acc_det_a.svg";
  const std::string fig_b = "/tmp/skyway_acc_det_b.svg";
  const std::string scenario = data_path("haneda3.json");
  REQUIRE(run_cli("plan " + scenario + " -o " + run_a + " --seed 0 > /dev/null") == 0);
  REQUIRE(run_cli("plan " + scenario + " -o " + run_b + " --seed 0 > /dev/null") == 0);
  REQUIRE(run_cli("plot " + run_a + " -o " + fig_a + " > /dev/null") == 0);
  REQUIRE(run_cli("plot " + run_b + " -o " + fig_b + " > /dev/null") == 0);

  const bool runs_equal =
      io::detail::read_file(run_a) == io::detail::read_file(run_b);
  const bool figs_equal =
      io::detail::read_file(fig_a) == io::detail::read_file(fig_b);
  const bool pass = runs_equal && figs_equal;
  report(8, "determinism", pass,
         std::string("run records ") + (runs_equal ? "match" : "differ") +
             ", figures " + (figs_equal ? "match" : "differ"));
  CHECK(runs_equal);
  CHECK(figs_equal);
}
