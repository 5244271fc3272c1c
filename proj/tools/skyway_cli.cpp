#include "skyway/atc.hpp"
#include "skyway/io.hpp"
#include "skyway/orchestrator.hpp"
#include "skyway/pilot.hpp"
#include "skyway/scenario_gen.hpp"
#include "skyway/svg.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace {

using skyway::Corridor;
using skyway::InvalidInput;
using skyway::Scenario;
using skyway::Trajectory;

constexpr int kExitFailure = 1;
constexpr int kExitVerifyFail = 2;
constexpr int kExitUsage = 64;

// One "key=value" override against a limits or solver field. Commands pass
// null for the family they do not accept.
void apply_override(const std::string& entry, skyway::Limits* limits,
                    skyway::nlp::SolverConfig* solver) {
  const auto eq = entry.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw CLI::ValidationError("--config", "expected key=value, got '" +
                                               entry + "'");
  }
  const std::string key = entry.substr(0, eq);
  const std::string value = entry.substr(eq + 1);
  auto number = [&] {
    try {
      return skyway::io::detail::parse_double(value, "--config " + key);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--config", key + " needs a number, got '" +
                                                 value + "'");
    }
  };
  auto count = [&] {
    try {
      return skyway::io::detail::parse_int(value, "--config " + key);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--config", key + " needs an integer, got '" +
                                                 value + "'");
    }
  };

  if (limits) {
    if (key == "psi_max") return void(limits->psi_max = number());
    if (key == "u_max") return void(limits->u_max = number());
    if (key == "v_min") return void(limits->v_min = number());
    if (key == "v_max") return void(limits->v_max = number());
    if (key == "delta_v") return void(limits->delta_v = number());
    if (key == "delta_theta") return void(limits->delta_theta = number());
    if (key == "safety_margin") return void(limits->safety_margin = number());
    if (key == "eps") return void(limits->eps = number());
    if (key == "alpha") return void(limits->alpha = number());
    if (key == "tol_terminal") return void(limits->tol_terminal = number());
  }
  if (solver) {
    if (key == "max_outer_iters") return void(solver->max_outer_iters = count());
    if (key == "max_inner_iters") return void(solver->max_inner_iters = count());
    if (key == "constraint_tol") return void(solver->constraint_tol = number());
    if (key == "stationarity_tol")
      return void(solver->stationarity_tol = number());
    if (key == "initial_penalty")
      return void(solver->initial_penalty = number());
    if (key == "penalty_growth") return void(solver->penalty_growth = number());
    if (key == "finite_diff_step")
      return void(solver->finite_diff_step = number());
    if (key == "rng_seed")
      return void(solver->rng_seed =
                      static_cast<unsigned long long>(count()));
  }
  throw CLI::ValidationError("--config", "unknown field '" + key + "'");
}

void apply_overrides(const std::vector<std::string>& entries,
                     skyway::Limits* limits,
                     skyway::nlp::SolverConfig* solver) {
  for (const std::string& e : entries) apply_override(e, limits, solver);
}

// Controls are exactly recoverable from a trajectory: drift never touches
// speed or heading.
std::vector<skyway::ControlInput> controls_of(const Trajectory& traj) {
  std::vector<skyway::ControlInput> out;
  for (std::size_t k = 0; k + 1 < traj.states.size(); ++k) {
    out.push_back({traj.states[k + 1].v - traj.states[k].v,
                   traj.states[k + 1].theta - traj.states[k].theta});
  }
  return out;
}

void write_trace_csv(const skyway::nlp::SolveResult& result,
                     const std::string& path) {
  std::ostringstream out;
  out << "outer_iter,objective,violation\n";
  for (const auto& p : result.trace) {
    out << p.outer_iter << ',' << skyway::io::detail::fmt(p.objective) << ','
        << skyway::io::detail::fmt(p.violation) << '\n';
  }
  skyway::io::detail::write_file(path, out.str());
}

void print_cycle(const skyway::orchestrator::Session& session) {
  const auto& cycle = session.history.back();
  const auto& res = cycle.corridors.result;
  std::printf("corridors t=%d: %s  objective=%.6f  violation=%.3e  outer=%d  evals=%lld\n",
              cycle.plan_time, to_string(res.status), res.objective_value,
              res.max_constraint_violation, res.outer_iterations,
              res.function_evaluations);
  if (!cycle.pilots_ran) return;
  for (std::size_t a = 0; a < cycle.pilots.size(); ++a) {
    const auto& p = cycle.pilots[a];
    std::printf("  %s: %s  cost=%.6f  violation=%.3e\n",
                cycle.scenario.aircraft[a].id.c_str(),
                to_string(p.result.status), p.cost,
                p.result.max_constraint_violation);
  }
}

// Exports and diagnostics shared by plan and replan.
struct OutputFlags {
  std::string diag;
  std::string corridors_csv;
  std::string corridors_json;
  std::string trajectories_csv;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--diag", diag, "write solver trace CSV");
    cmd.add_option("--export-corridors", corridors_csv,
                   "write the latest corridors as CSV");
    cmd.add_option("--export-corridors-json", corridors_json,
                   "write the latest corridors as JSON");
    cmd.add_option("--export-trajectories", trajectories_csv,
                   "write committed trajectories as CSV");
  }

  void emit(const skyway::orchestrator::Session& session) const {
    const auto& cycle = session.history.back();
    if (!diag.empty()) write_trace_csv(cycle.corridors.result, diag);
    if (!corridors_csv.empty()) {
      skyway::io::export_corridors_csv(cycle.corridors.corridors,
                                       corridors_csv);
    }
    if (!corridors_json.empty()) {
      skyway::io::export_corridors_json(cycle.corridors.corridors,
                                        corridors_json);
    }
    if (!trajectories_csv.empty()) {
      std::vector<Trajectory> committed;
      std::vector<std::vector<skyway::ControlInput>> controls;
      for (const Trajectory& t : session.selections) {
        if (t.states.empty()) continue;
        committed.push_back(t);
        controls.push_back(controls_of(t));
      }
      skyway::io::export_trajectories_csv(committed, controls,
                                          trajectories_csv);
    }
  }
};

// Pilots that ran but did not commit a selection leave the plan unusable
// for later re-planning; surface that as a failure after the record is
// saved.
int report_uncommitted(const skyway::orchestrator::Session& session) {
  const auto& cycle = session.history.back();
  if (!cycle.pilots_ran) return 0;
  int missing = 0;
  for (std::size_t a = 0; a < cycle.pilots.size(); ++a) {
    if (cycle.pilots[a].result.max_constraint_violation >
        session.config.constraint_tol) {
      std::fprintf(stderr, "error: %s selected no feasible trajectory\n",
                   cycle.scenario.aircraft[a].id.c_str());
      ++missing;
    }
  }
  return missing == 0 ? 0 : kExitFailure;
}

int run_plan(const std::string& scenario_path, const std::string& out_path,
             bool pilots, const std::vector<std::string>& overrides,
             unsigned long long seed, bool seed_set,
             const OutputFlags& outputs) {
  Scenario scenario = skyway::io::load_scenario(scenario_path);
  skyway::nlp::SolverConfig config;
  apply_overrides(overrides, &scenario.limits, &config);
  if (seed_set) config.rng_seed = seed;

  auto session = skyway::orchestrator::make_session(scenario, config);
  skyway::orchestrator::plan_cycle(session, pilots);
  skyway::io::save_session(session, out_path);
  print_cycle(session);
  outputs.emit(session);
  std::printf("wrote %s\n", out_path.c_str());
  return report_uncommitted(session);
}

int run_replan(const std::string& run_path, int tau,
               const std::string& out_path, bool pilots,
               const std::vector<std::string>& overrides,
               const OutputFlags& outputs) {
  auto session = skyway::io::load_session(run_path);
  apply_overrides(overrides, &session.scenario.limits, &session.config);
  session.scenario.validate();
  skyway::orchestrator::replan(session, tau, pilots);
  skyway::io::save_session(session, out_path);
  print_cycle(session);
  outputs.emit(session);
  std::printf("wrote %s\n", out_path.c_str());
  return report_uncommitted(session);
}

int run_verify(const std::string& run_path) {
  auto session = skyway::io::load_session(run_path);
  const auto report = skyway::orchestrator::verify(session);
  for (const auto& c : report.checks) {
    std::printf("%-24s worst=%+.4e  threshold=%+.4e  n=%-4d %s%s%s\n",
                c.name.c_str(), c.worst, c.threshold, c.count,
                c.pass ? "ok" : "FAIL", c.where.empty() ? "" : "  ",
                c.where.c_str());
  }
  std::printf("verify: %s\n", report.pass ? "PASS" : "FAIL");
  return report.pass ? 0 : kExitVerifyFail;
}

int run_plot(const std::string& run_path, const std::string& out_path,
             const skyway::svg::RenderOptions& options) {
  auto session = skyway::io::load_session(run_path);
  skyway::svg::save_svg(session, out_path, options);
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

// Gradient audit of both stages: the corridor-design program (with the
// re-plan family enabled so every constraint kind is present) and one
// selection program per aircraft, each checked at its standard start and
// at seeded interior perturbations.
int run_gradcheck(const std::string& scenario_path, double tol,
                  const std::vector<std::string>& overrides,
                  unsigned long long seed, bool seed_set) {
  Scenario scenario = skyway::io::load_scenario(scenario_path);
  skyway::nlp::SolverConfig config;
  apply_overrides(overrides, &scenario.limits, &config);
  if (seed_set) config.rng_seed = seed;
  std::mt19937_64 rng(config.rng_seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  bool all_pass = true;
  auto check_at_points = [&](const char* label,
                             const skyway::nlp::Problem& problem,
                             const skyway::nlp::Vector& start) {
    skyway::nlp::Vector x = start;
    for (int trial = 0; trial < 6; ++trial) {
      if (trial > 0) {
        for (int i = 0; i < x.size(); ++i) {
          const double range = problem.upper[i] - problem.lower[i];
          x[i] = start[i] + 0.25 * range * unit(rng);
          x[i] = std::clamp(x[i], problem.lower[i] + 1e-4 * range,
                            problem.upper[i] - 1e-4 * range);
        }
      }
      const auto report = skyway::nlp::check_gradient(
          problem, x, tol, config.finite_diff_step);
      if (!report.pass) all_pass = false;
      std::printf("%-12s point %d  max_rel_error=%.3e  worst=%s  %s\n", label,
                  trial, report.max_rel_error, report.worst.c_str(),
                  report.pass ? "ok" : "FAIL");
    }
  };

  skyway::atc::BuildOptions atc_options;
  atc_options.operation_constraint = true;
  for (const auto& rec : scenario.aircraft) {
    atc_options.prev_selections.push_back(rec.standard);
  }
  check_at_points("corridors", skyway::atc::build_problem(scenario, atc_options),
                  skyway::atc::initial_guess(scenario, atc_options));

  for (const auto& rec : scenario.aircraft) {
    Corridor corridor;
    corridor.aircraft_id = rec.id;
    corridor.t_start = rec.t_start;
    for (const auto& st : rec.standard.states) {
      corridor.centers.push_back(st.position());
    }
    corridor.radii.assign(corridor.centers.size(),
                          std::max(1.0, scenario.limits.safety_margin));
    corridor.radii.front() = 0.0;
    corridor.radii.back() = 0.0;
    check_at_points(
        rec.id.c_str(),
        skyway::pilot::build_problem(corridor, rec, scenario.limits, rec.wind),
        skyway::pilot::initial_guess(corridor, rec, scenario.limits,
                                     rec.wind));
  }

  std::printf("gradcheck: %s at tol %.1e\n", all_pass ? "PASS" : "FAIL", tol);
  return all_pass ? 0 : kExitFailure;
}

int run_gen(const std::string& out_path, bool preset, int n,
            unsigned long long seed,
            const std::vector<std::string>& overrides) {
  Scenario scenario;
  if (preset) {
    scenario = skyway::scenario_gen::make_haneda_preset();
    apply_overrides(overrides, &scenario.limits, nullptr);
  } else {
    skyway::Limits limits;
    apply_overrides(overrides, &limits, nullptr);
    scenario = skyway::scenario_gen::random_scenario(n, seed, limits);
  }
  scenario.validate();
  skyway::io::save_scenario(scenario, out_path);
  std::printf("wrote %s (%zu aircraft)\n", out_path.c_str(),
              scenario.aircraft.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Two-stage traffic planner: corridor design, per-flight trajectory\n"
      "selection, re-planning, audit, and figures.\n"
      "Exit codes: 0 success, 1 failure, 2 verify fail, 64 usage."};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string run_path;
  std::string out_path;
  std::vector<std::string> overrides;
  unsigned long long seed = 0;
  int tau = 0;
  int n_aircraft = 3;
  bool pilots = true;
  bool preset = false;
  double tol = 1e-4;
  OutputFlags outputs;
  skyway::svg::RenderOptions render;

  auto* plan = app.add_subcommand("plan", "design corridors and run pilots");
  plan->add_option("scenario", scenario_path, "scenario JSON")->required();
  plan->add_option("-o,--output", out_path, "run record path")->required();
  plan->add_flag("--pilots,!--no-pilots", pilots,
                 "run pilot selections (default on)");
  plan->add_option("--config", overrides, "override field: key=value");
  auto* plan_seed = plan->add_option("--seed", seed, "solver sampling seed");
  outputs.add_to(*plan);

  auto* replan = app.add_subcommand("replan", "re-plan a stored run");
  replan->add_option("run", run_path, "run record JSON")->required();
  replan->add_option("--tau", tau, "steps after first planning time")
      ->required()
      ->check(CLI::PositiveNumber);
  replan->add_option("-o,--output", out_path, "run record path")->required();
  replan->add_flag("--pilots,!--no-pilots", pilots,
                   "run pilot selections (default on)");
  replan->add_option("--config", overrides, "override field: key=value");
  outputs.add_to(*replan);

  auto* verify = app.add_subcommand("verify", "audit a stored run");
  verify->add_option("run", run_path, "run record JSON")->required();

  auto* plot = app.add_subcommand("plot", "render a stored run as SVG");
  plot->add_option("run", run_path, "run record JSON")->required();
  plot->add_option("-o,--output", out_path, "SVG path")->required();
  plot->add_flag("!--no-disks", render.disks, "hide corridor disks");
  plot->add_flag("!--no-centers", render.centers, "hide center polylines");
  plot->add_flag("!--no-flights", render.trajectories,
                 "hide selected trajectories");
  plot->add_flag("--standards", render.standards,
                 "show dashed reference paths");

  auto* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference gradient audit");
  gradcheck->add_option("scenario", scenario_path, "scenario JSON")
      ->required();
  gradcheck->add_option("--tol", tol, "max relative error (default 1e-4)");
  gradcheck->add_option("--config", overrides, "override field: key=value");
  auto* grad_seed =
      gradcheck->add_option("--seed", seed, "perturbation seed");

  auto* gen = app.add_subcommand("gen", "emit a scenario file");
  gen->add_option("-o,--output", out_path, "scenario path")->required();
  gen->add_flag("--preset", preset, "bundled three-flight scenario");
  gen->add_option("-n,--aircraft", n_aircraft, "random scenario size");
  gen->add_option("--seed", seed, "random scenario seed");
  gen->add_option("--config", overrides, "override limits: key=value");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (plan->parsed()) {
      return run_plan(scenario_path, out_path, pilots, overrides, seed,
                      plan_seed->count() > 0, outputs);
    }
    if (replan->parsed()) {
      return run_replan(run_path, tau, out_path, pilots, overrides, outputs);
    }
    if (verify->parsed()) return run_verify(run_path);
    if (plot->parsed()) return run_plot(run_path, out_path, render);
    if (gradcheck->parsed()) {
      return run_gradcheck(scenario_path, tol, overrides, seed,
                           grad_seed->count() > 0);
    }
    if (gen->parsed()) {
      return run_gen(out_path, preset, n_aircraft, seed, overrides);
    }
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}
