#pragma once

#include "skyway/atc.hpp"
#include "skyway/model.hpp"
#include "skyway/nlp.hpp"
#include "skyway/pilot.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <future>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

// Planning sessions: first a joint corridor design over the whole scenario,
// then independent per-flight selections, then any number of re-planning
// passes. A re-plan advances every affected flight to the current step and
// forces the redesigned disks to contain the trajectories already promised,
// so flights that ignore the update stay safe.
namespace skyway::orchestrator {

/// One corridor-design pass plus the selections made inside it. scenario is
/// the effective (possibly advanced) scenario this cycle planned over, so a
/// cycle can be audited and replayed on its own.
struct PlanCycle {
  int plan_time = 0;
  Scenario scenario;
  atc::BuildOptions options;
  atc::Solution corridors;
  bool pilots_ran = false;
  std::vector<pilot::Solution> pilots;  // aligned with scenario.aircraft
};

struct Session {
  Scenario scenario;
  nlp::SolverConfig config;
  std::vector<PlanCycle> history;
  // Latest committed trajectory per aircraft, aligned with
  // scenario.aircraft. An entry with empty states means none yet.
  std::vector<Trajectory> selections;

  int start_time() const {
    int t = std::numeric_limits<int>::max();
    for (const AircraftRecord& a : scenario.aircraft) {
      t = std::min(t, a.t_start);
    }
    return t;
  }

  bool has_selection(std::size_t a) const {
    return a < selections.size() && !selections[a].states.empty();
  }
};

inline Session make_session(Scenario scenario,
                            const nlp::SolverConfig& config = {}) {
  scenario.validate();
  config.validate();
  Session s;
  s.scenario = std::move(scenario);
  s.config = config;
  s.selections.resize(s.scenario.aircraft.size());
  return s;
}

namespace detail {

inline std::string describe_failure(const atc::Solution& sol) {
  std::ostringstream msg;
  msg << "corridor design did not converge: status "
      << nlp::to_string(sol.result.status) << ", worst violation "
      << sol.result.max_constraint_violation;
  for (const auto& fam : sol.residuals.families) {
    if (fam.max_violation > 0.0) {
      msg << "; " << fam.name << " " << fam.max_violation;
    }
  }
  return msg.str();
}

// Selections are stored as states; the generating controls are recovered
// exactly because speed and heading evolve undisturbed.
inline nlp::Vector controls_from_states(const Trajectory& traj, int from) {
  const int n = traj.t_end() - from;
  nlp::Vector x(2 * n);
  for (int m = 0; m < n; ++m) {
    const AircraftState& s0 = traj.at_time(from + m);
    const AircraftState& s1 = traj.at_time(from + m + 1);
    x[2 * m] = s1.v - s0.v;
    x[2 * m + 1] = s1.theta - s0.theta;
  }
  return x;
}

inline std::vector<pilot::Solution> run_pilots(
    const Scenario& scenario, const std::vector<Corridor>& corridors,
    const nlp::SolverConfig& config,
    const std::vector<std::optional<nlp::Vector>>& warm_starts) {
  std::vector<std::future<pilot::Solution>> futures;
  futures.reserve(scenario.aircraft.size());
  for (std::size_t a = 0; a < scenario.aircraft.size(); ++a) {
    futures.push_back(std::async(std::launch::async, [&, a] {
      const AircraftRecord& rec = scenario.aircraft[a];
      const nlp::Vector* warm =
          warm_starts[a] ? &*warm_starts[a] : nullptr;
      return pilot::select_trajectory(corridors[a], rec, scenario.limits,
                                      rec.wind, config, warm);
    }));
  }
  std::vector<pilot::Solution> out;
  out.reserve(futures.size());
  for (auto& f : futures) out.push_back(f.get());  // scenario order
  return out;
}

}  // namespace detail

/// First planning pass over the whole scenario. Throws SolveFailure and
/// leaves the session untouched when the corridor design does not converge;
/// individual selection failures are recorded per aircraft instead.
inline void plan_cycle(Session& session, bool run_pilots = true) {
  if (!session.history.empty()) {
    throw InvalidInput("session already planned; use replan");
  }
  PlanCycle cycle;
  cycle.plan_time = session.start_time();
  cycle.scenario = session.scenario;
  cycle.corridors = atc::design_sets(session.scenario, session.config);
  if (cycle.corridors.result.status != nlp::SolveStatus::converged) {
    throw SolveFailure(detail::describe_failure(cycle.corridors));
  }

  if (run_pilots) {
    std::vector<std::optional<nlp::Vector>> warm(
        session.scenario.aircraft.size());
    cycle.pilots = detail::run_pilots(session.scenario,
                                      cycle.corridors.corridors,
                                      session.config, warm);
    cycle.pilots_ran = true;
    for (std::size_t a = 0; a < cycle.pilots.size(); ++a) {
      if (cycle.pilots[a].result.max_constraint_violation <=
          session.config.constraint_tol) {
        session.selections[a] = cycle.pilots[a].trajectory;
      }
    }
  }
  session.history.push_back(std::move(cycle));
}

/// Re-plans at global step start_time() + tau. Flights already past their
/// last interior step keep their plans; everything else is redesigned with
/// the containment constraint tying new disks to the committed
/// trajectories. Requires selections from an earlier cycle.
inline void replan(Session& session, int tau, bool run_pilots = true) {
  if (session.history.empty()) {
    throw InvalidInput("replan requires a planned session");
  }
  if (tau < 1) throw InvalidInput("replan: tau must be >= 1");
  const int now = session.start_time() + tau;
  if (now <= session.history.back().plan_time) {
    throw InvalidInput("replan: planning time must advance");
  }

  // Collect the flights whose plans still extend past `now`.
  std::vector<std::size_t> active;
  for (std::size_t a = 0; a < session.scenario.aircraft.size(); ++a) {
    const AircraftRecord& rec = session.scenario.aircraft[a];
    if (rec.t_end >= now + 2) active.push_back(a);
  }
  if (active.empty()) {
    throw InvalidInput("replan: no flight extends past the re-plan time");
  }
  for (std::size_t a : active) {
    if (!session.has_selection(a)) {
      throw InvalidInput("replan: no committed trajectory for " +
                         session.scenario.aircraft[a].id);
    }
  }

  PlanCycle cycle;
  cycle.plan_time = now;
  cycle.scenario.timestep_seconds = session.scenario.timestep_seconds;
  cycle.scenario.limits = session.scenario.limits;
  cycle.options.operation_constraint = true;

  for (std::size_t a : active) {
    const AircraftRecord& rec = session.scenario.aircraft[a];
    const Trajectory& sel = session.selections[a];
    AircraftRecord adv = rec;
    if (rec.t_start < now) {
      // Mid-flight: hand over at the committed (wind-blown) state.
      adv.t_start = now;
      adv.initial_state = sel.at_time(now);
      adv.standard.t_start = now;
      adv.standard.states.assign(
          rec.standard.states.begin() + (now - rec.t_start),
          rec.standard.states.end());
      adv.wind.assign(rec.wind.begin() + (now - rec.t_start),
                      rec.wind.end());
    }
    // Not-yet-departed flights keep their full horizon but are redesigned
    // together with everyone else so the joint separation stays valid.
    cycle.scenario.aircraft.push_back(std::move(adv));

    Trajectory prev = sel;
    if (prev.t_start < cycle.scenario.aircraft.back().t_start) {
      const int cut = cycle.scenario.aircraft.back().t_start;
      prev.states.erase(prev.states.begin(), prev.states.begin() +
                                                 (cut - prev.t_start));
      prev.t_start = cut;
    }
    cycle.options.prev_selections.push_back(std::move(prev));
  }

  cycle.corridors =
      atc::design_sets(cycle.scenario, session.config, cycle.options);
  if (cycle.corridors.result.status != nlp::SolveStatus::converged) {
    throw SolveFailure(detail::describe_failure(cycle.corridors));
  }

  std::vector<Trajectory> new_selections = session.selections;
  if (run_pilots) {
    std::vector<std::optional<nlp::Vector>> warm;
    for (std::size_t i = 0; i < active.size(); ++i) {
      warm.push_back(detail::controls_from_states(
          cycle.options.prev_selections[i],
          cycle.scenario.aircraft[i].t_start));
    }
    cycle.pilots = detail::run_pilots(cycle.scenario,
                                      cycle.corridors.corridors,
                                      session.config, warm);
    cycle.pilots_ran = true;

    for (std::size_t i = 0; i < active.size(); ++i) {
      if (cycle.pilots[i].result.max_constraint_violation >
          session.config.constraint_tol) {
        continue;  // keep the old committed trajectory for this flight
      }
      const std::size_t a = active[i];
      const Trajectory& fresh = cycle.pilots[i].trajectory;
      Trajectory& committed = new_selections[a];
      // Stitch: flown prefix [t_i, now] from the old plan, the rest new.
      if (fresh.t_start > committed.t_start) {
        Trajectory stitched;
        stitched.aircraft_id = committed.aircraft_id;
        stitched.t_start = committed.t_start;
        stitched.states.assign(
            committed.states.begin(),
            committed.states.begin() + (fresh.t_start - committed.t_start));
        stitched.states.insert(stitched.states.end(), fresh.states.begin(),
                               fresh.states.end());
        committed = std::move(stitched);
      } else {
        committed = fresh;
      }
    }
  }

  session.selections = std::move(new_selections);
  session.history.push_back(std::move(cycle));
}

/// One audited quantity: the worst observed margin against its threshold.
struct CheckResult {
  std::string name;
  double worst = std::numeric_limits<double>::infinity();
  double threshold = 0.0;
  std::string where;  // cycle / aircraft / timestep of the worst margin
  int count = 0;
  bool pass = true;
};

struct SafetyReport {
  std::vector<CheckResult> checks;
  bool pass = true;

  const CheckResult* find(const std::string& name) const {
    for (const auto& c : checks) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }
};

/// Recomputes every safety family from the stored artifacts alone; no
/// solver state is consulted. Corridor-level checks run per cycle; the
/// trajectory-level check runs on the final committed selections.
inline SafetyReport verify(const Session& session) {
  SafetyReport report;
  const Limits& lim = session.scenario.limits;
  const double tol = session.config.constraint_tol;

  auto make_check = [](std::string name, double threshold) {
    CheckResult c;
    c.name = std::move(name);
    c.threshold = threshold;
    return c;
  };
  CheckResult separation =
      make_check("disk_separation", lim.safety_margin - tol);
  CheckResult reach_min = make_check("reachability_min", lim.v_min - tol);
  CheckResult reach_max = make_check("reachability_max", -(lim.v_max + tol));
  CheckResult containment = make_check("containment", -tol);
  CheckResult exit_position =
      make_check("exit_position", -(lim.tol_terminal + tol));
  CheckResult plan_containment = make_check("plan_containment", -tol);
  CheckResult traj_separation =
      make_check("trajectory_separation", lim.safety_margin - 2.0 * tol);

  auto feed = [](CheckResult& c, double margin, std::string where) {
    ++c.count;
    if (margin < c.worst) {
      c.worst = margin;
      c.where = std::move(where);
    }
  };

  for (std::size_t ci = 0; ci < session.history.size(); ++ci) {
    const PlanCycle& cycle = session.history[ci];
    const std::string cycle_tag = "cycle " + std::to_string(ci + 1);
    const auto& corridors = cycle.corridors.corridors;

    // Pairwise disk separation at shared interior steps.
    for (std::size_t a = 0; a < corridors.size(); ++a) {
      for (std::size_t b = a + 1; b < corridors.size(); ++b) {
        const int k_lo =
            std::max(corridors[a].t_start, corridors[b].t_start) + 1;
        const int k_hi = std::min(corridors[a].t_end(), corridors[b].t_end()) - 1;
        for (int k = k_lo; k <= k_hi; ++k) {
          const double margin = conflict_margin(
              corridors[a].center_at(k), corridors[b].center_at(k),
              corridors[a].radius_at(k), corridors[b].radius_at(k));
          feed(separation, margin,
               cycle_tag + ", " + corridors[a].aircraft_id + " vs " +
                   corridors[b].aircraft_id + ", k=" + std::to_string(k));
        }
      }
    }

    // Step reachability of every corridor.
    for (const Corridor& c : corridors) {
      const auto gaps = feasibility_margins(c);
      for (std::size_t m = 0; m < gaps.size(); ++m) {
        const std::string where =
            cycle_tag + ", " + c.aircraft_id +
            ", k=" + std::to_string(c.t_start + static_cast<int>(m));
        feed(reach_min, gaps[m].min_gap, where);
        feed(reach_max, -gaps[m].max_gap, where);
      }
    }

    // Selections of this cycle stay inside their disks and hit the exits.
    if (cycle.pilots_ran) {
      for (std::size_t a = 0; a < cycle.pilots.size(); ++a) {
        const Trajectory& traj = cycle.pilots[a].trajectory;
        const Corridor& c = corridors[a];
        for (int k = c.t_start + 1; k < c.t_end(); ++k) {
          feed(containment,
               containment_margin(c.center_at(k), c.radius_at(k),
                                  traj.at_time(k).position()),
               cycle_tag + ", " + c.aircraft_id + ", k=" + std::to_string(k));
        }
        feed(exit_position,
             -(traj.states.back().position() - c.centers.back()).norm(),
             cycle_tag + ", " + c.aircraft_id + " exit");
      }
    }

    // Re-planned disks must contain the previously committed trajectories.
    if (cycle.options.operation_constraint) {
      for (std::size_t a = 0; a < corridors.size(); ++a) {
        const Trajectory& prev = cycle.options.prev_selections[a];
        const Corridor& c = corridors[a];
        for (int k = c.t_start + 1; k < c.t_end(); ++k) {
          feed(plan_containment,
               containment_margin(c.center_at(k), c.radius_at(k),
                                  prev.at_time(k).position()),
               cycle_tag + ", " + c.aircraft_id + ", k=" + std::to_string(k));
        }
      }
    }
  }

  // Final committed trajectories keep physical separation wherever two
  // flights share an interior step.
  for (std::size_t a = 0; a < session.selections.size(); ++a) {
    for (std::size_t b = a + 1; b < session.selections.size(); ++b) {
      if (!session.has_selection(a) || !session.has_selection(b)) continue;
      const AircraftRecord& ra = session.scenario.aircraft[a];
      const AircraftRecord& rb = session.scenario.aircraft[b];
      const int k_lo = std::max(ra.t_start, rb.t_start) + 1;
      const int k_hi = std::min(ra.t_end, rb.t_end) - 1;
      for (int k = k_lo; k <= k_hi; ++k) {
        const double dist =
            (session.selections[a].at_time(k).position() -
             session.selections[b].at_time(k).position()).norm();
        feed(traj_separation, dist,
             ra.id + " vs " + rb.id + ", k=" + std::to_string(k));
      }
    }
  }

  for (CheckResult* c : {&separation, &reach_min, &reach_max, &containment,
                         &exit_position, &plan_containment,
                         &traj_separation}) {
    c->pass = c->count == 0 || c->worst >= c->threshold;
    report.pass = report.pass && c->pass;
    report.checks.push_back(*c);
  }
  return report;
}

}  // namespace skyway::orchestrator
