#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>

#include <json.hpp>

#include "rpf/eval.hpp"
#include "rpf/ppo.hpp"
#include "rpf/scenario.hpp"

namespace rpf {

// Shortest round-trip decimal formatting; keeps CSV/SVG output
// byte-deterministic and lossless.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

// --- episode trace files (JSON) ---
//
// { "config": {...}, "scenario": {...}, "steps": T,
//   "robots": [{"status": ..., "start_goal_dist": ...,
//               "positions": [[x,y],...], "headings": [...],
//               "actions": [[...],...], "rewards": [...]}] }

inline nlohmann::json world_config_to_json(const WorldConfig& c) {
  return {{"desired_speed", c.desired_speed}, {"safe_radius", c.safe_radius},
          {"detection_range", c.detection_range}, {"timestep", c.timestep},
          {"max_steps", c.max_steps}, {"reward_range", c.reward_range}};
}

inline WorldConfig world_config_from_json(const nlohmann::json& j) {
  WorldConfig c;
  c.desired_speed = j.value("desired_speed", c.desired_speed);
  c.safe_radius = j.value("safe_radius", c.safe_radius);
  c.detection_range = j.value("detection_range", c.detection_range);
  c.timestep = j.value("timestep", c.timestep);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.reward_range = j.value("reward_range", c.reward_range);
  return c;
}

inline nlohmann::json trace_to_json(const EpisodeTrace& trace) {
  nlohmann::json j;
  j["config"] = world_config_to_json(trace.config);
  j["scenario"] = scenario_to_json(trace.scenario);
  j["steps"] = trace.steps;
  j["robots"] = nlohmann::json::array();
  for (const RobotTrace& r : trace.robots) {
    nlohmann::json jr;
    jr["status"] = to_string(r.final_status);
    jr["start_goal_dist"] = r.start_goal_dist;
    jr["positions"] = nlohmann::json::array();
    for (Vec2 p : r.positions) jr["positions"].push_back({p.x, p.y});
    jr["headings"] = r.headings;
    jr["actions"] = nlohmann::json::array();
    for (const Vec& a : r.actions) {
      nlohmann::json ja = nlohmann::json::array();
      for (Eigen::Index d = 0; d < a.size(); ++d) ja.push_back(a[d]);
      jr["actions"].push_back(ja);
    }
    jr["rewards"] = r.rewards;
    j["robots"].push_back(std::move(jr));
  }
  return j;
}

inline EpisodeTrace trace_from_json(const nlohmann::json& j) {
  EpisodeTrace trace;
  trace.config = world_config_from_json(j.at("config"));
  trace.scenario = scenario_from_json(j.at("scenario"));
  trace.steps = j.at("steps").get<int>();
  for (const auto& jr : j.at("robots")) {
    RobotTrace r;
    const std::string status = jr.at("status").get<std::string>();
    r.final_status = status == "reached"    ? RobotStatus::reached
                     : status == "collided" ? RobotStatus::collided
                                            : RobotStatus::active;
    r.start_goal_dist = jr.at("start_goal_dist").get<double>();
    for (const auto& p : jr.at("positions"))
      r.positions.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    r.headings = jr.at("headings").get<std::vector<double>>();
    for (const auto& ja : jr.at("actions")) {
      Vec a(ja.size());
      for (std::size_t d = 0; d < ja.size(); ++d) a[d] = ja.at(d).get<double>();
      r.actions.push_back(std::move(a));
    }
    r.rewards = jr.at("rewards").get<std::vector<double>>();
    trace.robots.push_back(std::move(r));
  }
  return trace;
}

inline void save_trace(const EpisodeTrace& trace, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write trace file: " + path);
  f << trace_to_json(trace).dump() << "\n";
}

inline EpisodeTrace load_trace(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read trace file: " + path);
  nlohmann::json j;
  try {
    f >> j;
    return trace_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed trace file " + path + ": " + e.what());
  }
}

// Flat per-step export: one row per (t, robot) on the full step grid,
// finished robots padded at their final state.
inline std::string trace_to_replay_csv(const EpisodeTrace& trace) {
  std::ostringstream os;
  os << "t,robot,x,y,heading,status\n";
  for (int t = 1; t <= trace.steps; ++t) {
    for (std::size_t i = 0; i < trace.robots.size(); ++i) {
      const RobotTrace& r = trace.robots[i];
      const int k = std::min<int>(t, r.steps_taken());
      const bool terminal = t >= r.steps_taken() && r.final_status != RobotStatus::active;
      os << t << ',' << i << ',' << format_double(r.positions[k].x) << ','
         << format_double(r.positions[k].y) << ',' << format_double(r.headings[k]) << ','
         << (terminal ? to_string(r.final_status) : "active") << "\n";
    }
  }
  return os.str();
}

// --- training log / comparison CSVs ---

inline std::string training_log_header() {
  return "episode,return_mean,success_rate,collision_rate,lr,"
         "loss_surrogate,loss_value,entropy,grad_norm,steps,updates\n";
}

inline std::string training_log_row(const EpisodeLog& log) {
  std::ostringstream os;
  os << log.episode << ',' << format_double(log.return_mean) << ','
     << format_double(log.success_rate) << ',' << format_double(log.collision_rate) << ','
     << format_double(log.lr) << ',' << format_double(log.loss_surrogate) << ','
     << format_double(log.loss_value) << ',' << format_double(log.entropy) << ','
     << format_double(log.grad_norm) << ',' << log.steps << ',' << log.updates << "\n";
  return os.str();
}

inline std::string comparison_csv_header() {
  return "planner,scenario,seed,l,xi,success_rate,collisions,steps,status\n";
}

inline std::string comparison_csv_row(const ComparisonRow& row) {
  std::ostringstream os;
  std::string status = row.status;
  for (char& c : status)
    if (c == ',' || c == '\n') c = ';';
  os << row.planner << ',' << row.scenario << ',' << row.seed << ','
     << format_double(row.distance) << ',' << format_double(row.smoothness) << ','
     << format_double(row.success_rate) << ',' << row.collisions << ',' << row.steps << ','
     << status << "\n";
  return os.str();
}

inline std::string comparison_to_csv(std::span<const ComparisonRow> rows) {
  std::string out = comparison_csv_header();
  for (const ComparisonRow& row : rows) out += comparison_csv_row(row);
  return out;
}

}  // namespace rpf
