#pragma once

#include "skyway/model.hpp"
#include "skyway/nlp.hpp"
#include "skyway/orchestrator.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

// File formats: scenario JSON, track CSV, corridor/trajectory exports, and
// the run record that captures a whole planning session. Every writer is a
// deterministic byte stream for identical inputs. Schema errors carry the
// offending field path ("aircraft[2].xT: missing").
namespace skyway::io {

namespace detail {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] inline void fail(const std::string& path,
                              const std::string& what) {
  throw InvalidInput(path + ": " + what);
}

inline void expect_object(const json& v, const std::string& path) {
  if (!v.is_object()) fail(path, "expected an object");
}

inline void expect_array(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array");
}

inline void reject_unknown(const json& obj,
                           std::initializer_list<const char*> allowed,
                           const std::string& path) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) fail(path + "." + item.key(), "unknown field");
  }
}

inline const json& require(const json& obj, const char* key,
                           const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(path + "." + key, "missing");
  return *it;
}

inline const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

inline double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  return v.get<double>();
}

inline int as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "expected an integer");
  return v.get<int>();
}

inline bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) fail(path, "expected a boolean");
  return v.get<bool>();
}

inline std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

inline Vec2 as_pair(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) fail(path, "expected [x, y]");
  return {as_number(v[0], path + "[0]"), as_number(v[1], path + "[1]")};
}

inline AircraftState as_state(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 4) fail(path, "expected [x, y, v, theta]");
  AircraftState s;
  s.x = as_number(v[0], path + "[0]");
  s.y = as_number(v[1], path + "[1]");
  s.v = as_number(v[2], path + "[2]");
  s.theta = as_number(v[3], path + "[3]");
  return s;
}

// Fixed 9 fractional digits: exports stay within 5e-10 of the computed
// values at the magnitudes flown here.
inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9f", v);
  return buf;
}

inline double round9(double v) { return std::nearbyint(v * 1e9) / 1e9; }

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (!in.good() && !in.eof()) throw IoError("cannot read " + path);
  return buf.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << bytes;
  if (!out.good()) throw IoError("cannot write " + path);
}

inline json parse_json_text(const std::string& text, const std::string& label) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) fail(label, "invalid JSON");
  return doc;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

inline double parse_double(const std::string& s, const std::string& path) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::invalid_argument&) {
    fail(path, "expected a number, got \"" + s + "\"");
  } catch (const std::out_of_range&) {
    fail(path, "number out of range");
  }
  if (used != s.size()) fail(path, "trailing characters in number");
  return v;
}

inline int parse_int(const std::string& s, const std::string& path) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(s, &used);
  } catch (const std::invalid_argument&) {
    fail(path, "expected an integer, got \"" + s + "\"");
  } catch (const std::out_of_range&) {
    fail(path, "integer out of range");
  }
  if (used != s.size()) fail(path, "trailing characters in integer");
  return static_cast<int>(v);
}

}  // namespace detail

// --- Scenario files ---------------------------------------------------------

inline Scenario parse_scenario(const nlohmann::json& doc) {
  using namespace detail;
  expect_object(doc, "scenario");
  reject_unknown(doc, {"timestep_seconds", "limits", "aircraft"}, "scenario");

  Scenario sc;
  if (const json* ts = find(doc, "timestep_seconds")) {
    sc.timestep_seconds = as_number(*ts, "scenario.timestep_seconds");
  }
  if (const json* lim = find(doc, "limits")) {
    expect_object(*lim, "limits");
    reject_unknown(*lim,
                   {"psi_max", "u_max", "v_min", "v_max", "delta_v",
                    "delta_theta", "safety_margin", "eps", "alpha",
                    "tol_terminal"},
                   "limits");
    auto read = [&](const char* key, double& out) {
      if (const json* v = find(*lim, key)) {
        out = as_number(*v, std::string("limits.") + key);
      }
    };
    read("psi_max", sc.limits.psi_max);
    read("u_max", sc.limits.u_max);
    read("v_min", sc.limits.v_min);
    read("v_max", sc.limits.v_max);
    read("delta_v", sc.limits.delta_v);
    read("delta_theta", sc.limits.delta_theta);
    read("safety_margin", sc.limits.safety_margin);
    read("eps", sc.limits.eps);
    read("alpha", sc.limits.alpha);
    read("tol_terminal", sc.limits.tol_terminal);
  }

  const json& fleet = require(doc, "aircraft", "scenario");
  expect_array(fleet, "aircraft");
  for (std::size_t i = 0; i < fleet.size(); ++i) {
    const std::string path = "aircraft[" + std::to_string(i) + "]";
    const json& entry = fleet[i];
    expect_object(entry, path);
    reject_unknown(entry, {"id", "t", "T", "x0", "xT", "standard", "wind"},
                   path);

    AircraftRecord rec;
    rec.id = as_string(require(entry, "id", path), path + ".id");
    rec.t_start = as_int(require(entry, "t", path), path + ".t");
    rec.t_end = as_int(require(entry, "T", path), path + ".T");
    rec.initial_state = as_state(require(entry, "x0", path), path + ".x0");
    rec.terminal_state = as_state(require(entry, "xT", path), path + ".xT");

    const json& std_pts = require(entry, "standard", path);
    expect_array(std_pts, path + ".standard");
    const int horizon = rec.t_end - rec.t_start;
    if (static_cast<int>(std_pts.size()) != horizon + 1) {
      fail(path + ".standard",
           "expected " + std::to_string(horizon + 1) + " points, got " +
               std::to_string(std_pts.size()));
    }
    rec.standard.aircraft_id = rec.id;
    rec.standard.t_start = rec.t_start;
    for (std::size_t k = 0; k < std_pts.size(); ++k) {
      const Vec2 p = as_pair(std_pts[k],
                             path + ".standard[" + std::to_string(k) + "]");
      AircraftState s;
      s.x = p.x();
      s.y = p.y();
      rec.standard.states.push_back(s);
    }
    if (rec.standard.states.size() >= 2) {
      reconstruct_motion(rec.standard.states);
      rec.standard.states.back().v = rec.terminal_state.v;
      rec.standard.states.back().theta = rec.terminal_state.theta;
    }

    if (const json* wind = find(entry, "wind")) {
      expect_array(*wind, path + ".wind");
      if (wind->size() == 2 && (*wind)[0].is_number()) {
        const Vec2 w = as_pair(*wind, path + ".wind");
        rec.wind.assign(static_cast<std::size_t>(std::max(horizon, 0)),
                        {w.x(), w.y()});
      } else {
        for (std::size_t k = 0; k < wind->size(); ++k) {
          const Vec2 w = as_pair((*wind)[k],
                                 path + ".wind[" + std::to_string(k) + "]");
          rec.wind.push_back({w.x(), w.y()});
        }
        if (static_cast<int>(rec.wind.size()) != horizon) {
          fail(path + ".wind",
               "expected " + std::to_string(horizon) + " entries, got " +
                   std::to_string(rec.wind.size()));
        }
      }
    } else {
      rec.wind.assign(static_cast<std::size_t>(std::max(horizon, 0)),
                      {0.0, 0.0});
    }
    sc.aircraft.push_back(std::move(rec));
  }

  sc.validate();
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  return parse_scenario(
      detail::parse_json_text(detail::read_file(path), path));
}

inline nlohmann::ordered_json scenario_to_json(const Scenario& sc) {
  using detail::ordered_json;
  ordered_json doc;
  doc["timestep_seconds"] = sc.timestep_seconds;
  ordered_json lim;
  lim["psi_max"] = sc.limits.psi_max;
  lim["u_max"] = sc.limits.u_max;
  lim["v_min"] = sc.limits.v_min;
  lim["v_max"] = sc.limits.v_max;
  lim["delta_v"] = sc.limits.delta_v;
  lim["delta_theta"] = sc.limits.delta_theta;
  lim["safety_margin"] = sc.limits.safety_margin;
  lim["eps"] = sc.limits.eps;
  lim["alpha"] = sc.limits.alpha;
  lim["tol_terminal"] = sc.limits.tol_terminal;
  doc["limits"] = std::move(lim);
  doc["aircraft"] = ordered_json::array();
  for (const AircraftRecord& rec : sc.aircraft) {
    ordered_json entry;
    entry["id"] = rec.id;
    entry["t"] = rec.t_start;
    entry["T"] = rec.t_end;
    entry["x0"] = {rec.initial_state.x, rec.initial_state.y,
                   rec.initial_state.v, rec.initial_state.theta};
    entry["xT"] = {rec.terminal_state.x, rec.terminal_state.y,
                   rec.terminal_state.v, rec.terminal_state.theta};
    entry["standard"] = ordered_json::array();
    for (const AircraftState& s : rec.standard.states) {
      entry["standard"].push_back({s.x, s.y});
    }
    entry["wind"] = ordered_json::array();
    for (const Disturbance& w : rec.wind) {
      entry["wind"].push_back({w.dx, w.dy});
    }
    doc["aircraft"].push_back(std::move(entry));
  }
  return doc;
}

inline void save_scenario(const Scenario& sc, const std::string& path) {
  detail::write_file(path, scenario_to_json(sc).dump(2) + "\n");
}

// --- Track CSV ---------------------------------------------------------------

/// Parses "id,k,x,y[,v,theta]" rows into time-sorted standard trajectories,
/// one per id, ordered by id. Missing motion columns are reconstructed from
/// the positions.
inline std::vector<Trajectory> parse_tracks(std::istream& in) {
  using namespace detail;
  std::string line;
  if (!std::getline(in, line)) fail("tracks", "empty file");
  const auto header = split_csv_line(line);
  bool with_motion = false;
  if (header == std::vector<std::string>{"id", "k", "x", "y"}) {
    with_motion = false;
  } else if (header ==
             std::vector<std::string>{"id", "k", "x", "y", "v", "theta"}) {
    with_motion = true;
  } else {
    fail("tracks", "header must be id,k,x,y or id,k,x,y,v,theta");
  }

  struct Row {
    int k;
    AircraftState state;
  };
  std::map<std::string, std::vector<Row>> groups;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::string where = "tracks line " + std::to_string(line_no);
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      fail(where, "expected " + std::to_string(header.size()) + " fields");
    }
    Row row;
    row.k = parse_int(fields[1], where + ".k");
    row.state.x = parse_double(fields[2], where + ".x");
    row.state.y = parse_double(fields[3], where + ".y");
    if (with_motion) {
      row.state.v = parse_double(fields[4], where + ".v");
      row.state.theta = parse_double(fields[5], where + ".theta");
    }
    if (fields[0].empty()) fail(where + ".id", "empty id");
    groups[fields[0]].push_back(row);
  }

  std::vector<Trajectory> out;
  for (auto& [id, rows] : groups) {
    std::sort(rows.begin(), rows.end(),
              [](const Row& a, const Row& b) { return a.k < b.k; });
    if (rows.size() < 2) fail("track " + id, "needs at least 2 points");
    for (std::size_t j = 1; j < rows.size(); ++j) {
      if (rows[j].k != rows[0].k + static_cast<int>(j)) {
        fail("track " + id,
             "non-contiguous step " + std::to_string(rows[j].k) + " after " +
                 std::to_string(rows[j - 1].k));
      }
    }
    Trajectory traj;
    traj.aircraft_id = id;
    traj.t_start = rows.front().k;
    for (const Row& r : rows) traj.states.push_back(r.state);
    if (!with_motion) reconstruct_motion(traj.states);
    out.push_back(std::move(traj));
  }
  return out;
}

inline std::vector<Trajectory> import_tracks(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return parse_tracks(in);
}

// --- Corridor and trajectory exports ----------------------------------------

namespace detail {

template <typename T, typename Key>
std::vector<const T*> sorted_by(std::span<const T> items, Key key) {
  std::vector<const T*> out;
  out.reserve(items.size());
  for (const T& item : items) out.push_back(&item);
  std::sort(out.begin(), out.end(),
            [&](const T* a, const T* b) { return key(*a) < key(*b); });
  return out;
}

}  // namespace detail

inline void export_corridors_csv(std::span<const Corridor> corridors,
                                 const std::string& path) {
  std::ostringstream out;
  out << "aircraft_id,k,cx,cy,r\n";
  for (const Corridor* c : detail::sorted_by(
           corridors, [](const Corridor& c) { return c.aircraft_id; })) {
    for (std::size_t m = 0; m < c->centers.size(); ++m) {
      out << c->aircraft_id << ',' << c->t_start + static_cast<int>(m) << ','
          << detail::fmt(c->centers[m].x()) << ','
          << detail::fmt(c->centers[m].y()) << ','
          << detail::fmt(c->radii[m]) << '\n';
    }
  }
  detail::write_file(path, out.str());
}

inline std::vector<Corridor> import_corridors_csv(const std::string& path) {
  using namespace detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) ||
      split_csv_line(line) !=
          std::vector<std::string>{"aircraft_id", "k", "cx", "cy", "r"}) {
    fail(path, "header must be aircraft_id,k,cx,cy,r");
  }
  struct Row {
    int k;
    Vec2 center;
    double radius;
  };
  std::map<std::string, std::vector<Row>> groups;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::string where = path + " line " + std::to_string(line_no);
    const auto fields = split_csv_line(line);
    if (fields.size() != 5) fail(where, "expected 5 fields");
    Row row;
    row.k = parse_int(fields[1], where + ".k");
    row.center = {parse_double(fields[2], where + ".cx"),
                  parse_double(fields[3], where + ".cy")};
    row.radius = parse_double(fields[4], where + ".r");
    groups[fields[0]].push_back(row);
  }
  std::vector<Corridor> out;
  for (auto& [id, rows] : groups) {
    std::sort(rows.begin(), rows.end(),
              [](const Row& a, const Row& b) { return a.k < b.k; });
    for (std::size_t j = 1; j < rows.size(); ++j) {
      if (rows[j].k != rows[0].k + static_cast<int>(j)) {
        fail("corridor " + id,
             "non-contiguous step " + std::to_string(rows[j].k));
      }
    }
    Corridor c;
    c.aircraft_id = id;
    c.t_start = rows.front().k;
    for (const Row& r : rows) {
      c.centers.push_back(r.center);
      c.radii.push_back(r.radius);
    }
    c.validate();
    out.push_back(std::move(c));
  }
  return out;
}

inline void export_corridors_json(std::span<const Corridor> corridors,
                                  const std::string& path) {
  using detail::ordered_json;
  ordered_json doc = ordered_json::array();
  for (const Corridor* c : detail::sorted_by(
           corridors, [](const Corridor& c) { return c.aircraft_id; })) {
    ordered_json entry;
    entry["aircraft_id"] = c->aircraft_id;
    entry["t_start"] = c->t_start;
    entry["disks"] = ordered_json::array();
    for (std::size_t m = 0; m < c->centers.size(); ++m) {
      entry["disks"].push_back({detail::round9(c->centers[m].x()),
                                detail::round9(c->centers[m].y()),
                                detail::round9(c->radii[m])});
    }
    doc.push_back(std::move(entry));
  }
  detail::write_file(path, doc.dump(2) + "\n");
}

inline std::vector<Corridor> import_corridors_json(const std::string& path) {
  using namespace detail;
  const json doc = parse_json_text(read_file(path), path);
  expect_array(doc, path);
  std::vector<Corridor> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string where = "corridors[" + std::to_string(i) + "]";
    const json& entry = doc[i];
    expect_object(entry, where);
    reject_unknown(entry, {"aircraft_id", "t_start", "disks"}, where);
    Corridor c;
    c.aircraft_id =
        as_string(require(entry, "aircraft_id", where), where + ".aircraft_id");
    c.t_start = as_int(require(entry, "t_start", where), where + ".t_start");
    const json& disks = require(entry, "disks", where);
    expect_array(disks, where + ".disks");
    for (std::size_t m = 0; m < disks.size(); ++m) {
      const std::string dp = where + ".disks[" + std::to_string(m) + "]";
      if (!disks[m].is_array() || disks[m].size() != 3) {
        fail(dp, "expected [cx, cy, r]");
      }
      c.centers.push_back({as_number(disks[m][0], dp + "[0]"),
                           as_number(disks[m][1], dp + "[1]")});
      c.radii.push_back(as_number(disks[m][2], dp + "[2]"));
    }
    c.validate();
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(), [](const Corridor& a, const Corridor& b) {
    return a.aircraft_id < b.aircraft_id;
  });
  return out;
}

/// Writes "aircraft_id,k,x,y,v,theta,u,psi" rows sorted by (aircraft_id, k).
/// The terminal row of each flight has no controls and leaves those fields
/// empty. controls[i] must hold exactly one entry per move of
/// trajectories[i].
inline void export_trajectories_csv(
    std::span<const Trajectory> trajectories,
    std::span<const std::vector<ControlInput>> controls,
    const std::string& path) {
  if (trajectories.size() != controls.size()) {
    throw InvalidInput("trajectory export: controls must match trajectories");
  }
  std::vector<std::size_t> order(trajectories.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return trajectories[a].aircraft_id < trajectories[b].aircraft_id;
  });

  std::ostringstream out;
  out << "aircraft_id,k,x,y,v,theta,u,psi\n";
  for (std::size_t i : order) {
    const Trajectory& traj = trajectories[i];
    if (controls[i].size() + 1 != traj.states.size()) {
      throw InvalidInput("trajectory export: " + traj.aircraft_id +
                         " needs one control per move");
    }
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
      const AircraftState& s = traj.states[k];
      out << traj.aircraft_id << ',' << traj.t_start + static_cast<int>(k)
          << ',' << detail::fmt(s.x) << ',' << detail::fmt(s.y) << ','
          << detail::fmt(s.v) << ',' << detail::fmt(s.theta) << ',';
      if (k < controls[i].size()) {
        out << detail::fmt(controls[i][k].u) << ','
            << detail::fmt(controls[i][k].psi);
      } else {
        out << ',';
      }
      out << '\n';
    }
  }
  detail::write_file(path, out.str());
}

// --- Run records -------------------------------------------------------------

namespace detail {

inline ordered_json trajectory_to_json(const Trajectory& traj) {
  ordered_json doc;
  doc["aircraft_id"] = traj.aircraft_id;
  doc["t_start"] = traj.t_start;
  doc["states"] = ordered_json::array();
  for (const AircraftState& s : traj.states) {
    doc["states"].push_back({s.x, s.y, s.v, s.theta});
  }
  return doc;
}

inline Trajectory trajectory_from_json(const json& doc,
                                       const std::string& path) {
  expect_object(doc, path);
  reject_unknown(doc, {"aircraft_id", "t_start", "states"}, path);
  Trajectory traj;
  traj.aircraft_id =
      as_string(require(doc, "aircraft_id", path), path + ".aircraft_id");
  traj.t_start = as_int(require(doc, "t_start", path), path + ".t_start");
  const json& states = require(doc, "states", path);
  expect_array(states, path + ".states");
  for (std::size_t k = 0; k < states.size(); ++k) {
    traj.states.push_back(
        as_state(states[k], path + ".states[" + std::to_string(k) + "]"));
  }
  return traj;
}

inline ordered_json corridor_to_json(const Corridor& c) {
  ordered_json doc;
  doc["aircraft_id"] = c.aircraft_id;
  doc["t_start"] = c.t_start;
  doc["centers"] = ordered_json::array();
  for (const Vec2& p : c.centers) doc["centers"].push_back({p.x(), p.y()});
  doc["radii"] = c.radii;
  return doc;
}

inline Corridor corridor_from_json(const json& doc, const std::string& path) {
  expect_object(doc, path);
  reject_unknown(doc, {"aircraft_id", "t_start", "centers", "radii"}, path);
  Corridor c;
  c.aircraft_id =
      as_string(require(doc, "aircraft_id", path), path + ".aircraft_id");
  c.t_start = as_int(require(doc, "t_start", path), path + ".t_start");
  const json& centers = require(doc, "centers", path);
  expect_array(centers, path + ".centers");
  for (std::size_t k = 0; k < centers.size(); ++k) {
    c.centers.push_back(
        as_pair(centers[k], path + ".centers[" + std::to_string(k) + "]"));
  }
  const json& radii = require(doc, "radii", path);
  expect_array(radii, path + ".radii");
  for (std::size_t k = 0; k < radii.size(); ++k) {
    c.radii.push_back(
        as_number(radii[k], path + ".radii[" + std::to_string(k) + "]"));
  }
  c.validate();
  return c;
}

inline ordered_json controls_to_json(std::span<const ControlInput> controls) {
  ordered_json arr = ordered_json::array();
  for (const ControlInput& c : controls) arr.push_back({c.u, c.psi});
  return arr;
}

inline std::vector<ControlInput> controls_from_json(const json& doc,
                                                    const std::string& path) {
  expect_array(doc, path);
  std::vector<ControlInput> out;
  for (std::size_t k = 0; k < doc.size(); ++k) {
    const std::string where = path + "[" + std::to_string(k) + "]";
    if (!doc[k].is_array() || doc[k].size() != 2) fail(where, "expected [u, psi]");
    out.push_back({as_number(doc[k][0], where + "[0]"),
                   as_number(doc[k][1], where + "[1]")});
  }
  return out;
}

// Solver summary only: decision vectors and multipliers are internals that
// nothing downstream of a run record consumes.
inline ordered_json result_to_json(const nlp::SolveResult& r) {
  ordered_json doc;
  doc["status"] = nlp::to_string(r.status);
  doc["objective"] = r.objective_value;
  doc["violation"] = r.max_constraint_violation;
  doc["outer_iterations"] = r.outer_iterations;
  doc["function_evaluations"] = r.function_evaluations;
  doc["trace"] = ordered_json::array();
  for (const nlp::TracePoint& p : r.trace) {
    doc["trace"].push_back({p.outer_iter, p.objective, p.violation});
  }
  return doc;
}

inline nlp::SolveResult result_from_json(const json& doc,
                                         const std::string& path) {
  expect_object(doc, path);
  reject_unknown(doc,
                 {"status", "objective", "violation", "outer_iterations",
                  "function_evaluations", "trace"},
                 path);
  nlp::SolveResult r;
  const std::string status =
      as_string(require(doc, "status", path), path + ".status");
  if (status == "converged") {
    r.status = nlp::SolveStatus::converged;
  } else if (status == "max_iters") {
    r.status = nlp::SolveStatus::max_iters;
  } else if (status == "infeasible_start") {
    r.status = nlp::SolveStatus::infeasible_start;
  } else if (status == "numerical_failure") {
    r.status = nlp::SolveStatus::numerical_failure;
  } else {
    fail(path + ".status", "unknown status \"" + status + "\"");
  }
  r.objective_value =
      as_number(require(doc, "objective", path), path + ".objective");
  r.max_constraint_violation =
      as_number(require(doc, "violation", path), path + ".violation");
  r.outer_iterations = as_int(require(doc, "outer_iterations", path),
                              path + ".outer_iterations");
  const json& evals = require(doc, "function_evaluations", path);
  if (!evals.is_number_integer()) {
    fail(path + ".function_evaluations", "expected an integer");
  }
  r.function_evaluations = evals.get<long long>();
  const json& trace = require(doc, "trace", path);
  expect_array(trace, path + ".trace");
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const std::string where = path + ".trace[" + std::to_string(i) + "]";
    if (!trace[i].is_array() || trace[i].size() != 3) {
      fail(where, "expected [outer_iter, objective, violation]");
    }
    r.trace.push_back({as_int(trace[i][0], where + "[0]"),
                       as_number(trace[i][1], where + "[1]"),
                       as_number(trace[i][2], where + "[2]")});
  }
  return r;
}

inline ordered_json config_to_json(const nlp::SolverConfig& c) {
  ordered_json doc;
  doc["max_outer_iters"] = c.max_outer_iters;
  doc["max_inner_iters"] = c.max_inner_iters;
  doc["constraint_tol"] = c.constraint_tol;
  doc["stationarity_tol"] = c.stationarity_tol;
  doc["initial_penalty"] = c.initial_penalty;
  doc["penalty_growth"] = c.penalty_growth;
  doc["finite_diff_step"] = c.finite_diff_step;
  doc["rng_seed"] = c.rng_seed;
  return doc;
}

inline nlp::SolverConfig config_from_json(const json& doc,
                                          const std::string& path) {
  expect_object(doc, path);
  reject_unknown(doc,
                 {"max_outer_iters", "max_inner_iters", "constraint_tol",
                  "stationarity_tol", "initial_penalty", "penalty_growth",
                  "finite_diff_step", "rng_seed"},
                 path);
  nlp::SolverConfig c;
  c.max_outer_iters = as_int(require(doc, "max_outer_iters", path),
                             path + ".max_outer_iters");
  c.max_inner_iters = as_int(require(doc, "max_inner_iters", path),
                             path + ".max_inner_iters");
  c.constraint_tol =
      as_number(require(doc, "constraint_tol", path), path + ".constraint_tol");
  c.stationarity_tol = as_number(require(doc, "stationarity_tol", path),
                                 path + ".stationarity_tol");
  c.initial_penalty = as_number(require(doc, "initial_penalty", path),
                                path + ".initial_penalty");
  c.penalty_growth = as_number(require(doc, "penalty_growth", path),
                               path + ".penalty_growth");
  c.finite_diff_step = as_number(require(doc, "finite_diff_step", path),
                                 path + ".finite_diff_step");
  const json& seed = require(doc, "rng_seed", path);
  if (!seed.is_number_integer()) fail(path + ".rng_seed", "expected an integer");
  c.rng_seed = seed.get<unsigned long long>();
  c.validate();
  return c;
}

}  // namespace detail

inline nlohmann::ordered_json session_to_json(
    const orchestrator::Session& session) {
  using detail::ordered_json;
  ordered_json doc;
  doc["format"] = "skyway-run/1";
  doc["scenario"] = scenario_to_json(session.scenario);
  doc["config"] = detail::config_to_json(session.config);

  doc["selections"] = ordered_json::array();
  for (const Trajectory& sel : session.selections) {
    if (sel.states.empty()) {
      doc["selections"].push_back(nullptr);
    } else {
      doc["selections"].push_back(detail::trajectory_to_json(sel));
    }
  }

  doc["cycles"] = ordered_json::array();
  for (const orchestrator::PlanCycle& cycle : session.history) {
    ordered_json c;
    c["plan_time"] = cycle.plan_time;
    c["scenario"] = scenario_to_json(cycle.scenario);
    c["operation_constraint"] = cycle.options.operation_constraint;
    c["prev_selections"] = ordered_json::array();
    for (const Trajectory& prev : cycle.options.prev_selections) {
      c["prev_selections"].push_back(detail::trajectory_to_json(prev));
    }
    c["corridors"] = ordered_json::array();
    for (const Corridor& corr : cycle.corridors.corridors) {
      c["corridors"].push_back(detail::corridor_to_json(corr));
    }
    c["controls"] = ordered_json::array();
    for (const auto& controls : cycle.corridors.controls) {
      c["controls"].push_back(detail::controls_to_json(controls));
    }
    c["result"] = detail::result_to_json(cycle.corridors.result);
    c["pilots_ran"] = cycle.pilots_ran;
    c["pilots"] = ordered_json::array();
    for (const pilot::Solution& p : cycle.pilots) {
      ordered_json pj;
      pj["trajectory"] = detail::trajectory_to_json(p.trajectory);
      pj["controls"] = detail::controls_to_json(p.controls);
      pj["cost"] = p.cost;
      pj["containment_residuals"] = p.containment_residuals;
      pj["result"] = detail::result_to_json(p.result);
      c["pilots"].push_back(std::move(pj));
    }
    doc["cycles"].push_back(std::move(c));
  }
  return doc;
}

inline orchestrator::Session session_from_json(const nlohmann::json& doc) {
  using namespace detail;
  expect_object(doc, "run");
  reject_unknown(doc,
                 {"format", "scenario", "config", "selections", "cycles"},
                 "run");
  const std::string format =
      as_string(require(doc, "format", "run"), "run.format");
  if (format != "skyway-run/1") {
    fail("run.format", "unsupported format \"" + format + "\"");
  }

  orchestrator::Session session;
  session.scenario = parse_scenario(require(doc, "scenario", "run"));
  session.config = config_from_json(require(doc, "config", "run"), "run.config");

  const json& selections = require(doc, "selections", "run");
  expect_array(selections, "run.selections");
  if (selections.size() != session.scenario.aircraft.size()) {
    fail("run.selections", "expected one entry per aircraft");
  }
  for (std::size_t i = 0; i < selections.size(); ++i) {
    const std::string path = "run.selections[" + std::to_string(i) + "]";
    if (selections[i].is_null()) {
      Trajectory empty;
      empty.aircraft_id = session.scenario.aircraft[i].id;
      session.selections.push_back(std::move(empty));
    } else {
      session.selections.push_back(trajectory_from_json(selections[i], path));
    }
  }

  const json& cycles = require(doc, "cycles", "run");
  expect_array(cycles, "run.cycles");
  for (std::size_t i = 0; i < cycles.size(); ++i) {
    const std::string path = "run.cycles[" + std::to_string(i) + "]";
    const json& cj = cycles[i];
    expect_object(cj, path);
    reject_unknown(cj,
                   {"plan_time", "scenario", "operation_constraint",
                    "prev_selections", "corridors", "controls", "result",
                    "pilots_ran", "pilots"},
                   path);
    orchestrator::PlanCycle cycle;
    cycle.plan_time =
        as_int(require(cj, "plan_time", path), path + ".plan_time");
    cycle.scenario = parse_scenario(require(cj, "scenario", path));
    cycle.options.operation_constraint = as_bool(
        require(cj, "operation_constraint", path),
        path + ".operation_constraint");
    const json& prev = require(cj, "prev_selections", path);
    expect_array(prev, path + ".prev_selections");
    for (std::size_t a = 0; a < prev.size(); ++a) {
      cycle.options.prev_selections.push_back(trajectory_from_json(
          prev[a], path + ".prev_selections[" + std::to_string(a) + "]"));
    }
    const json& corrs = require(cj, "corridors", path);
    expect_array(corrs, path + ".corridors");
    for (std::size_t a = 0; a < corrs.size(); ++a) {
      cycle.corridors.corridors.push_back(corridor_from_json(
          corrs[a], path + ".corridors[" + std::to_string(a) + "]"));
    }
    const json& controls = require(cj, "controls", path);
    expect_array(controls, path + ".controls");
    for (std::size_t a = 0; a < controls.size(); ++a) {
      cycle.corridors.controls.push_back(controls_from_json(
          controls[a], path + ".controls[" + std::to_string(a) + "]"));
    }
    cycle.corridors.result =
        result_from_json(require(cj, "result", path), path + ".result");
    cycle.pilots_ran =
        as_bool(require(cj, "pilots_ran", path), path + ".pilots_ran");
    const json& pilots = require(cj, "pilots", path);
    expect_array(pilots, path + ".pilots");
    for (std::size_t a = 0; a < pilots.size(); ++a) {
      const std::string pp = path + ".pilots[" + std::to_string(a) + "]";
      const json& pj = pilots[a];
      expect_object(pj, pp);
      reject_unknown(pj,
                     {"trajectory", "controls", "cost",
                      "containment_residuals", "result"},
                     pp);
      pilot::Solution sol;
      sol.trajectory =
          trajectory_from_json(require(pj, "trajectory", pp), pp + ".trajectory");
      sol.controls =
          controls_from_json(require(pj, "controls", pp), pp + ".controls");
      sol.cost = as_number(require(pj, "cost", pp), pp + ".cost");
      const json& res = require(pj, "containment_residuals", pp);
      expect_array(res, pp + ".containment_residuals");
      for (std::size_t k = 0; k < res.size(); ++k) {
        sol.containment_residuals.push_back(as_number(
            res[k],
            pp + ".containment_residuals[" + std::to_string(k) + "]"));
      }
      sol.result = result_from_json(require(pj, "result", pp), pp + ".result");
      cycle.pilots.push_back(std::move(sol));
    }
    session.history.push_back(std::move(cycle));
  }
  return session;
}

inline void save_session(const orchestrator::Session& session,
                         const std::string& path) {
  detail::write_file(path, session_to_json(session).dump(2) + "\n");
}

inline orchestrator::Session load_session(const std::string& path) {
  return session_from_json(
      detail::parse_json_text(detail::read_file(path), path));
}

}  // namespace skyway::io
