#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "rpf/eval.hpp"
#include "rpf/trace_io.hpp"

// Static SVG emission for trajectory and comparison figures. Output is
// byte-deterministic for a fixed input: fixed element order, fixed 4-digit
// coordinate formatting.
namespace rpf {

namespace detail {

constexpr std::array<const char*, 10> kPalette = {
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace detail

inline std::string trace_to_svg(const EpisodeTrace& trace) {
  using detail::svg_num;
  // Data bounds: arena rectangle extended by everything drawn.
  double min_x = trace.scenario.arena_min.x, max_x = trace.scenario.arena_max.x;
  double min_y = trace.scenario.arena_min.y, max_y = trace.scenario.arena_max.y;
  auto grow = [&](Vec2 p, double pad) {
    min_x = std::min(min_x, p.x - pad);
    max_x = std::max(max_x, p.x + pad);
    min_y = std::min(min_y, p.y - pad);
    max_y = std::max(max_y, p.y + pad);
  };
  for (const Obstacle& o : trace.scenario.obstacles) grow(o.center, o.radius);
  for (const RobotTrace& r : trace.robots)
    for (Vec2 p : r.positions) grow(p, 0.0);
  const double margin = 0.05 * std::max(max_x - min_x, max_y - min_y) + 0.2;
  min_x -= margin; max_x += margin; min_y -= margin; max_y += margin;

  const double width = 640.0;
  const double scale = width / (max_x - min_x);
  const double height = (max_y - min_y) * scale;
  auto X = [&](double x) { return (x - min_x) * scale; };
  auto Y = [&](double y) { return height - (y - min_y) * scale; };  // y up

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << svg_num(width) << "\" height=\""
     << svg_num(height) << "\" viewBox=\"0 0 " << svg_num(width) << ' ' << svg_num(height)
     << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<rect x=\"" << svg_num(X(trace.scenario.arena_min.x)) << "\" y=\""
     << svg_num(Y(trace.scenario.arena_max.y)) << "\" width=\""
     << svg_num((trace.scenario.arena_max.x - trace.scenario.arena_min.x) * scale)
     << "\" height=\""
     << svg_num((trace.scenario.arena_max.y - trace.scenario.arena_min.y) * scale)
     << "\" fill=\"none\" stroke=\"#dddddd\"/>\n";

  for (const Obstacle& o : trace.scenario.obstacles) {
    os << "<circle class=\"obstacle\" cx=\"" << svg_num(X(o.center.x)) << "\" cy=\""
       << svg_num(Y(o.center.y)) << "\" r=\"" << svg_num(o.radius * scale)
       << "\" fill=\"#b0b0b0\" stroke=\"#808080\"/>\n";
  }

  for (std::size_t i = 0; i < trace.robots.size(); ++i) {
    const RobotTrace& r = trace.robots[i];
    const char* color = detail::kPalette[i % detail::kPalette.size()];
    os << "<polyline class=\"trajectory\" points=\"";
    for (std::size_t t = 0; t < r.positions.size(); ++t) {
      if (t) os << ' ';
      os << svg_num(X(r.positions[t].x)) << ',' << svg_num(Y(r.positions[t].y));
    }
    os << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";

    const Vec2 start = r.positions.front();
    os << "<circle class=\"start\" cx=\"" << svg_num(X(start.x)) << "\" cy=\""
       << svg_num(Y(start.y)) << "\" r=\"4\" fill=\"" << color << "\"/>\n";
    const Vec2 goal = trace.scenario.robots[i].second;
    const double gx = X(goal.x), gy = Y(goal.y);
    os << "<path class=\"goal\" d=\"M" << svg_num(gx - 4) << ' ' << svg_num(gy - 4) << " L"
       << svg_num(gx + 4) << ' ' << svg_num(gy + 4) << " M" << svg_num(gx - 4) << ' '
       << svg_num(gy + 4) << " L" << svg_num(gx + 4) << ' ' << svg_num(gy - 4)
       << "\" stroke=\"" << color << "\" stroke-width=\"2\" fill=\"none\"/>\n";
    if (r.final_status == RobotStatus::collided) {
      const Vec2 end = r.positions.back();
      os << "<circle class=\"collision\" cx=\"" << svg_num(X(end.x)) << "\" cy=\""
         << svg_num(Y(end.y)) << "\" r=\"5\" fill=\"none\" stroke=\"red\" stroke-width=\"2\"/>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

// Grouped bars of mean traveling distance, smoothness, and success rate.
inline std::string comparison_to_svg(std::span<const ComparisonRow> rows) {
  using detail::svg_num;
  const std::vector<PlannerSummary> summary = summarize(rows);
  const double width = 640.0, height = 360.0, base = 310.0, top = 40.0;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << svg_num(width) << "\" height=\""
     << svg_num(height) << "\" viewBox=\"0 0 " << svg_num(width) << ' ' << svg_num(height)
     << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!summary.empty()) {
    double max_d = 1e-9, max_s = 1e-9;
    for (const auto& s : summary) {
      max_d = std::max(max_d, s.distance_mean);
      max_s = std::max(max_s, s.smoothness_mean);
    }
    const double group = width / summary.size();
    for (std::size_t i = 0; i < summary.size(); ++i) {
      const PlannerSummary& s = summary[i];
      const double x0 = i * group + 20.0;
      const double bw = (group - 40.0) / 3.0;
      const std::array<std::pair<double, const char*>, 3> bars = {
          std::pair{s.distance_mean / max_d, "#1f77b4"},
          std::pair{s.smoothness_mean / max_s, "#ff7f0e"},
          std::pair{s.success_mean, "#2ca02c"}};
      for (std::size_t k = 0; k < bars.size(); ++k) {
        const double h = bars[k].first * (base - top);
        os << "<rect x=\"" << svg_num(x0 + k * bw) << "\" y=\"" << svg_num(base - h)
           << "\" width=\"" << svg_num(bw - 4.0) << "\" height=\"" << svg_num(h) << "\" fill=\""
           << bars[k].second << "\"/>\n";
      }
      os << "<text x=\"" << svg_num(x0) << "\" y=\"" << svg_num(base + 20.0)
         << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.planner << "</text>\n";
      os << "<text x=\"" << svg_num(x0) << "\" y=\"" << svg_num(base + 36.0)
         << "\" font-family=\"sans-serif\" font-size=\"10\">l=" << format_double(s.distance_mean)
         << " xi=" << format_double(s.smoothness_mean)
         << " ok=" << format_double(s.success_mean) << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

inline void save_svg(const std::string& svg, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write svg file: " + path);
  f << svg;
}

}  // namespace rpf
