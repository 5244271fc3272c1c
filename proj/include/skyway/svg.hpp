#pragma once

#include "skyway/model.hpp"
#include "skyway/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

// Deterministic SVG rendering of a planning session: translucent disks for
// the designed corridors (one color per aircraft, later cycles darker),
// center polylines with vertex markers, and the selected trajectories.
// Identical sessions render to identical bytes.
namespace skyway::svg {

struct RenderOptions {
  bool disks = true;
  bool centers = true;
  bool trajectories = true;
  bool standards = false;  // dashed reference paths from the scenario
};

namespace detail {

struct Rgb {
  int r, g, b;
};

inline constexpr Rgb kPalette[] = {
    {214, 39, 40},    // red
    {31, 119, 180},   // blue
    {44, 160, 44},    // green
    {148, 103, 189},  // purple
    {255, 127, 14},   // orange
    {140, 86, 75},    // brown
};

inline std::string hex(const Rgb& c) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

// Later planning cycles draw in progressively darker shades.
inline Rgb shade(const Rgb& c, int cycle_index) {
  const double f = std::pow(0.65, cycle_index);
  auto scale = [&](int v) {
    return static_cast<int>(std::lround(v * f));
  };
  return {scale(c.r), scale(c.g), scale(c.b)};
}

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

struct Bounds {
  double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;
  bool any = false;

  void add(double x, double y, double pad = 0.0) {
    if (!any) {
      min_x = x - pad;
      max_x = x + pad;
      min_y = y - pad;
      max_y = y + pad;
      any = true;
      return;
    }
    min_x = std::min(min_x, x - pad);
    max_x = std::max(max_x, x + pad);
    min_y = std::min(min_y, y - pad);
    max_y = std::max(max_y, y + pad);
  }
};

}  // namespace detail

/// Renders the whole session. Throws InvalidInput when there is nothing to
/// draw. North is up: world y increases toward the top of the figure.
inline std::string render_svg(const orchestrator::Session& session,
                              const RenderOptions& options = {}) {
  if (session.history.empty()) {
    throw InvalidInput("render: session has no planning cycles");
  }

  std::map<std::string, detail::Rgb> colors;
  for (std::size_t a = 0; a < session.scenario.aircraft.size(); ++a) {
    colors[session.scenario.aircraft[a].id] =
        detail::kPalette[a % std::size(detail::kPalette)];
  }
  auto color_of = [&](const std::string& id) {
    auto it = colors.find(id);
    if (it == colors.end()) {
      it = colors.emplace(id, detail::kPalette[colors.size() %
                                               std::size(detail::kPalette)])
               .first;
    }
    return it->second;
  };

  // World bounds over everything that will be drawn; y flips at emit time.
  detail::Bounds box;
  for (const auto& cycle : session.history) {
    for (const Corridor& c : cycle.corridors.corridors) {
      for (std::size_t m = 0; m < c.centers.size(); ++m) {
        box.add(c.centers[m].x(), c.centers[m].y(), c.radii[m]);
      }
    }
    if (cycle.pilots_ran) {
      for (const auto& p : cycle.pilots) {
        for (const AircraftState& s : p.trajectory.states) box.add(s.x, s.y);
      }
    }
  }
  if (options.standards) {
    for (const AircraftRecord& rec : session.scenario.aircraft) {
      for (const AircraftState& s : rec.standard.states) box.add(s.x, s.y);
    }
  }
  if (!box.any) throw InvalidInput("render: session has no geometry");

  const double extent =
      std::max(box.max_x - box.min_x, box.max_y - box.min_y);
  const double pad = extent > 0.0 ? 0.05 * extent : 1.0;
  const double min_x = box.min_x - pad;
  const double width = (box.max_x - box.min_x) + 2.0 * pad;
  const double min_y = -(box.max_y + pad);  // y flip
  const double height = (box.max_y - box.min_y) + 2.0 * pad;
  const double stroke = std::max(width, height) * 0.002;
  const double marker = std::max(width, height) * 0.004;

  using detail::fmt;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\""
      << fmt(min_x) << ' ' << fmt(min_y) << ' ' << fmt(width) << ' '
      << fmt(height) << "\" width=\"900\" height=\""
      << fmt(900.0 * height / width) << "\">\n";
  out << "<rect x=\"" << fmt(min_x) << "\" y=\"" << fmt(min_y)
      << "\" width=\"" << fmt(width) << "\" height=\"" << fmt(height)
      << "\" fill=\"#ffffff\"/>\n";

  if (options.standards) {
    for (const AircraftRecord& rec : session.scenario.aircraft) {
      out << "<polyline class=\"standard\" fill=\"none\" stroke=\"#999999\""
          << " stroke-width=\"" << fmt(stroke) << "\" stroke-dasharray=\""
          << fmt(4.0 * stroke) << ' ' << fmt(3.0 * stroke) << "\" points=\"";
      for (std::size_t k = 0; k < rec.standard.states.size(); ++k) {
        if (k) out << ' ';
        out << fmt(rec.standard.states[k].x) << ','
            << fmt(-rec.standard.states[k].y);
      }
      out << "\"/>\n";
    }
  }

  for (std::size_t ci = 0; ci < session.history.size(); ++ci) {
    const auto& cycle = session.history[ci];
    out << "<g class=\"cycle\" data-plan-time=\"" << cycle.plan_time
        << "\">\n";

    if (options.disks) {
      for (const Corridor& c : cycle.corridors.corridors) {
        const std::string fill = detail::hex(
            detail::shade(color_of(c.aircraft_id), static_cast<int>(ci)));
        for (int k = c.t_start + 1; k < c.t_end(); ++k) {
          out << "<circle class=\"disk\" cx=\"" << fmt(c.center_at(k).x())
              << "\" cy=\"" << fmt(-c.center_at(k).y()) << "\" r=\""
              << fmt(c.radius_at(k)) << "\" fill=\"" << fill
              << "\" fill-opacity=\"0.25\" stroke=\"" << fill
              << "\" stroke-opacity=\"0.6\" stroke-width=\"" << fmt(stroke)
              << "\"/>\n";
        }
      }
    }

    if (options.centers) {
      for (const Corridor& c : cycle.corridors.corridors) {
        const std::string tone = detail::hex(
            detail::shade(color_of(c.aircraft_id), static_cast<int>(ci)));
        out << "<polyline class=\"centers\" fill=\"none\" stroke=\"" << tone
            << "\" stroke-width=\"" << fmt(stroke) << "\" points=\"";
        for (std::size_t m = 0; m < c.centers.size(); ++m) {
          if (m) out << ' ';
          out << fmt(c.centers[m].x()) << ',' << fmt(-c.centers[m].y());
        }
        out << "\"/>\n";
        for (const Vec2& p : c.centers) {
          out << "<circle class=\"center-mark\" cx=\"" << fmt(p.x())
              << "\" cy=\"" << fmt(-p.y()) << "\" r=\"" << fmt(marker)
              << "\" fill=\"" << tone << "\"/>\n";
        }
      }
    }

    if (options.trajectories && cycle.pilots_ran) {
      for (const auto& p : cycle.pilots) {
        const std::string tone = detail::hex(detail::shade(
            color_of(p.trajectory.aircraft_id), static_cast<int>(ci)));
        out << "<polyline class=\"flight\" fill=\"none\" stroke=\"" << tone
            << "\" stroke-width=\"" << fmt(2.0 * stroke) << "\" points=\"";
        for (std::size_t k = 0; k < p.trajectory.states.size(); ++k) {
          if (k) out << ' ';
          out << fmt(p.trajectory.states[k].x) << ','
              << fmt(-p.trajectory.states[k].y);
        }
        out << "\"/>\n";
      }
    }
    out << "</g>\n";
  }
  out << "</svg>\n";
  return out.str();
}

inline void save_svg(const orchestrator::Session& session,
                     const std::string& path,
                     const RenderOptions& options = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << render_svg(session, options);
  if (!out.good()) throw IoError("cannot write " + path);
}

}  // namespace skyway::svg
