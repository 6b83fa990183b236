#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "rpf/rng.hpp"
#include "rpf/world.hpp"

namespace rpf {

struct SampleOptions {
  // circle_swap
  double circle_radius = 2.0;
  // cluttered
  Vec2 arena_min{-4.0, -4.0};
  Vec2 arena_max{4.0, 4.0};
  int obstacle_count = 12;
  double obstacle_radius_lo = 0.5;
  double obstacle_radius_hi = 0.5;
  double min_start_goal_dist = 2.0;
  int max_attempts = 10000;
};

// Deterministic scenario generator. circle_swap places robots evenly on a
// circle at a random phase with antipodal goals; cluttered scatters
// obstacles then rejection-samples starts and goals that keep 2r mutual
// separation and stay off the inflated obstacles.
inline Scenario sample_scenario(ScenarioKind kind, int n_robots, std::uint64_t seed,
                                double safe_radius, const SampleOptions& opt = {}) {
  if (n_robots < 1) throw std::invalid_argument("sample_scenario: need at least one robot");
  Rng rng(seed);
  Scenario s;
  s.kind = kind;

  if (kind == ScenarioKind::circle_swap) {
    s.circle_radius = opt.circle_radius;
    const double margin = opt.circle_radius + 0.5;
    s.arena_min = {-margin, -margin};
    s.arena_max = {margin, margin};
    // Adjacent-start chord must exceed 2r.
    if (n_robots > 1 &&
        2.0 * opt.circle_radius * std::sin(kPi / n_robots) <= 2.0 * safe_radius)
      throw std::runtime_error("sample_scenario: circle too small for robot count");
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    for (int i = 0; i < n_robots; ++i) {
      const double a = phase + 2.0 * kPi * i / n_robots;
      const Vec2 start = opt.circle_radius * unit_from_angle(a);
      s.robots.emplace_back(start, -start);  // goal is the antipodal point
    }
    return s;
  }

  s.arena_min = opt.arena_min;
  s.arena_max = opt.arena_max;
  auto sample_point = [&](double inset) {
    return Vec2{rng.uniform(opt.arena_min.x + inset, opt.arena_max.x - inset),
                rng.uniform(opt.arena_min.y + inset, opt.arena_max.y - inset)};
  };

  for (int k = 0; k < opt.obstacle_count; ++k) {
    const double radius = rng.uniform(opt.obstacle_radius_lo, opt.obstacle_radius_hi);
    s.obstacles.push_back({sample_point(radius), radius});
  }

  auto clear_of_obstacles = [&](Vec2 p) {
    for (const Obstacle& o : s.obstacles)
      if (surface_distance(p, o) <= safe_radius) return false;
    return true;
  };

  int attempts = 0;
  auto next_point = [&](double inset) {
    if (++attempts > opt.max_attempts)
      throw std::runtime_error("sample_scenario: overcrowded arena, rejection limit hit");
    return sample_point(inset);
  };

  std::vector<Vec2> starts, goals;
  for (int i = 0; i < n_robots; ++i) {
    for (;;) {
      const Vec2 p = next_point(safe_radius);
      if (!clear_of_obstacles(p)) continue;
      bool separated = true;
      for (const Vec2& q : starts)
        if ((p - q).norm() <= 2.0 * safe_radius) { separated = false; break; }
      if (!separated) continue;
      starts.push_back(p);
      break;
    }
  }
  for (int i = 0; i < n_robots; ++i) {
    for (;;) {
      const Vec2 p = next_point(safe_radius);
      if (!clear_of_obstacles(p)) continue;
      if ((p - starts[i]).norm() < opt.min_start_goal_dist) continue;
      bool separated = true;
      for (const Vec2& q : goals)
        if ((p - q).norm() <= 2.0 * safe_radius) { separated = false; break; }
      if (!separated) continue;
      goals.push_back(p);
      break;
    }
  }
  for (int i = 0; i < n_robots; ++i) s.robots.emplace_back(starts[i], goals[i]);
  return s;
}

// --- scenario file format (JSON, lossless double round-trip) ---
//
// { "kind": "circle_swap" | "cluttered",
//   "circle_radius": 2.0,
//   "arena": {"min": [x, y], "max": [x, y]},
//   "robots": [{"start": [x, y], "goal": [x, y]}, ...],
//   "obstacles": [{"center": [x, y], "radius": r}, ...] }

inline nlohmann::json scenario_to_json(const Scenario& s) {
  nlohmann::json j;
  j["kind"] = to_string(s.kind);
  if (s.kind == ScenarioKind::circle_swap) j["circle_radius"] = s.circle_radius;
  j["arena"] = {{"min", {s.arena_min.x, s.arena_min.y}},
                {"max", {s.arena_max.x, s.arena_max.y}}};
  j["robots"] = nlohmann::json::array();
  for (const auto& [start, goal] : s.robots)
    j["robots"].push_back({{"start", {start.x, start.y}}, {"goal", {goal.x, goal.y}}});
  j["obstacles"] = nlohmann::json::array();
  for (const Obstacle& o : s.obstacles)
    j["obstacles"].push_back({{"center", {o.center.x, o.center.y}}, {"radius", o.radius}});
  return j;
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario s;
  s.kind = scenario_kind_from_string(j.at("kind").get<std::string>());
  s.circle_radius = j.value("circle_radius", 0.0);
  if (j.contains("arena")) {
    const auto& a = j.at("arena");
    s.arena_min = {a.at("min").at(0).get<double>(), a.at("min").at(1).get<double>()};
    s.arena_max = {a.at("max").at(0).get<double>(), a.at("max").at(1).get<double>()};
  }
  for (const auto& r : j.at("robots")) {
    const Vec2 start{r.at("start").at(0).get<double>(), r.at("start").at(1).get<double>()};
    const Vec2 goal{r.at("goal").at(0).get<double>(), r.at("goal").at(1).get<double>()};
    s.robots.emplace_back(start, goal);
  }
  if (j.contains("obstacles")) {
    for (const auto& o : j.at("obstacles")) {
      s.obstacles.push_back({{o.at("center").at(0).get<double>(), o.at("center").at(1).get<double>()},
                             o.at("radius").get<double>()});
    }
  }
  return s;
}

inline void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write scenario file: " + path);
  f << scenario_to_json(s).dump(2) << "\n";
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read scenario file: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed scenario file " + path + ": " + e.what());
  }
  return scenario_from_json(j);
}

}  // namespace rpf
