#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rpf/apf.hpp"
#include "rpf/policy.hpp"
#include "rpf/ppo.hpp"
#include "rpf/scenario.hpp"
#include "rpf/steering.hpp"
#include "rpf/world.hpp"

namespace rpf {

enum class PlannerKind { rpf_attention, rpf_mean_embed, vanilla_apf, ppo_steer };

inline std::string to_string(PlannerKind k) {
  switch (k) {
    case PlannerKind::rpf_attention: return "rpf_attention";
    case PlannerKind::rpf_mean_embed: return "rpf_mean_embed";
    case PlannerKind::vanilla_apf: return "vanilla_apf";
    case PlannerKind::ppo_steer: return "ppo_steer";
  }
  return "?";
}

inline PlannerKind planner_kind_from_string(const std::string& s) {
  if (s == "rpf_attention") return PlannerKind::rpf_attention;
  if (s == "rpf_mean_embed") return PlannerKind::rpf_mean_embed;
  if (s == "vanilla_apf") return PlannerKind::vanilla_apf;
  if (s == "ppo_steer") return PlannerKind::ppo_steer;
  throw std::invalid_argument("unknown planner kind: " + s);
}

// A planner is either the fixed-gain APF or a trained policy driving the
// APF gains (rpf_*) / the steering angle (ppo_steer). Learned planners
// run in deterministic evaluation mode (distribution mean).
struct Planner {
  PlannerKind kind = PlannerKind::vanilla_apf;
  apf::Params fixed_gains{0.05, 2.0};
  apf::Config apf_config;
  std::optional<PolicyParams> policy;
  EmbedMode embed_mode = EmbedMode::attention;

  static Planner vanilla_apf(apf::Config config = {}) {
    Planner p;
    p.kind = PlannerKind::vanilla_apf;
    p.apf_config = config;
    return p;
  }

  static Planner from_checkpoint(const Checkpoint& cp, apf::Config config = {}) {
    Planner p;
    p.apf_config = config;
    p.policy = cp.params;
    p.embed_mode = cp.embed_mode;
    if (cp.control_mode == ControlMode::steer)
      p.kind = PlannerKind::ppo_steer;
    else
      p.kind = cp.embed_mode == EmbedMode::attention ? PlannerKind::rpf_attention
                                                     : PlannerKind::rpf_mean_embed;
    return p;
  }

  void validate() const {
    if (kind != PlannerKind::vanilla_apf && !policy)
      throw std::invalid_argument("planner " + to_string(kind) + " requires a policy checkpoint");
    if (kind == PlannerKind::ppo_steer && policy && policy->arch.action_dim != 1)
      throw std::invalid_argument("ppo_steer checkpoint must have a 1-d action space");
  }
};

struct RobotTrace {
  std::vector<Vec2> positions;   // step count + 1 entries, including the start
  std::vector<double> headings;  // aligned with positions
  std::vector<Vec> actions;      // one per step taken
  std::vector<double> rewards;   // one per step taken
  RobotStatus final_status = RobotStatus::active;
  double start_goal_dist = 0.0;

  int steps_taken() const { return static_cast<int>(positions.size()) - 1; }
  double path_length() const {
    double d = 0.0;
    for (std::size_t t = 0; t + 1 < positions.size(); ++t)
      d += (positions[t + 1] - positions[t]).norm();
    return d;
  }
};

struct EpisodeTrace {
  Scenario scenario;
  WorldConfig config;
  std::vector<RobotTrace> robots;
  int steps = 0;
};

// Rolls the full decision pipeline (observe -> planner -> resolve heading
// -> step) to termination or T_max. Deterministic in its inputs.
inline EpisodeTrace run_episode(const Scenario& scenario, const Planner& planner,
                                const WorldConfig& config) {
  planner.validate();
  World world(config, scenario);

  EpisodeTrace trace;
  trace.scenario = scenario;
  trace.config = config;
  trace.robots.resize(world.robot_count());
  for (int i = 0; i < world.robot_count(); ++i) {
    trace.robots[i].positions.push_back(world.robot(i).position);
    trace.robots[i].headings.push_back(world.robot(i).heading);
    trace.robots[i].start_goal_dist = world.robot(i).start_goal_dist;
  }

  for (int t = 0; t < config.max_steps && !world.all_done(); ++t) {
    std::vector<std::pair<int, Vec2>> commands;
    std::vector<std::pair<int, Vec>> actions;
    for (int i = 0; i < world.robot_count(); ++i) {
      if (world.robot(i).status != RobotStatus::active) continue;
      Vec action;
      Vec2 heading;
      if (planner.kind == PlannerKind::vanilla_apf) {
        action = Vec(2);
        action << planner.fixed_gains.eta, planner.fixed_gains.lambda;
        heading = action_to_heading(world, i, action, ControlMode::apf_gains, planner.apf_config);
      } else {
        const PolicyInput input = normalize_observation(
            world.observe(i), config.detection_range, config.reward_range);
        action = mean_action(actor_forward(input, *planner.policy, planner.embed_mode)).action;
        const ControlMode mode = planner.kind == PlannerKind::ppo_steer ? ControlMode::steer
                                                                        : ControlMode::apf_gains;
        heading = action_to_heading(world, i, action, mode, planner.apf_config);
      }
      commands.emplace_back(i, heading);
      actions.emplace_back(i, std::move(action));
    }

    World before = world;
    world.step(commands);
    for (auto& [i, action] : actions) {
      RobotTrace& rt = trace.robots[i];
      rt.positions.push_back(world.robot(i).position);
      rt.headings.push_back(world.robot(i).heading);
      rt.actions.push_back(std::move(action));
      rt.rewards.push_back(compute_reward(before, world, i).total());
    }
  }

  trace.steps = world.step_count();
  for (int i = 0; i < world.robot_count(); ++i)
    trace.robots[i].final_status = world.robot(i).status;
  return trace;
}

// Mean over robots of the accumulated per-step displacement.
inline double traveling_distance(const EpisodeTrace& trace) {
  if (trace.robots.empty()) throw std::invalid_argument("traveling_distance: empty trace");
  double total = 0.0;
  for (const RobotTrace& r : trace.robots) total += r.path_length();
  return total / static_cast<double>(trace.robots.size());
}

// (sum over robots and steps of |dv|/|v|) / T; the velocity difference at
// each robot's terminal step has no successor and is omitted.
inline double motion_smoothness(const EpisodeTrace& trace) {
  if (trace.steps < 2) throw std::invalid_argument("motion_smoothness: need at least two steps");
  double total = 0.0;
  for (const RobotTrace& r : trace.robots) {
    for (std::size_t t = 0; t + 2 < r.positions.size(); ++t) {
      const Vec2 v0 = (r.positions[t + 1] - r.positions[t]) / trace.config.timestep;
      const Vec2 v1 = (r.positions[t + 2] - r.positions[t + 1]) / trace.config.timestep;
      const double speed = v0.norm();
      if (speed > 1e-12) total += (v1 - v0).norm() / speed;
    }
  }
  return total / static_cast<double>(trace.steps);
}

struct MetricsReport {
  double distance_mean = 0.0;  // l, per-robot mean
  double smoothness = 0.0;     // xi, formula-literal
  double success_rate = 0.0;
  double collision_rate = 0.0;
  std::vector<double> per_robot_distance;
  std::vector<RobotStatus> statuses;
  bool partial = false;  // some robot never reached its goal
};

inline MetricsReport compute_metrics(const EpisodeTrace& trace) {
  MetricsReport m;
  m.distance_mean = traveling_distance(trace);
  m.smoothness = trace.steps >= 2 ? motion_smoothness(trace) : 0.0;
  for (const RobotTrace& r : trace.robots) {
    m.per_robot_distance.push_back(r.path_length());
    m.statuses.push_back(r.final_status);
    if (r.final_status == RobotStatus::reached)
      m.success_rate += 1.0;
    else
      m.partial = true;
    if (r.final_status == RobotStatus::collided) m.collision_rate += 1.0;
  }
  m.success_rate /= static_cast<double>(trace.robots.size());
  m.collision_rate /= static_cast<double>(trace.robots.size());
  return m;
}

struct ComparisonRow {
  std::string planner;
  std::string scenario;
  std::uint64_t seed = 0;
  double distance = 0.0;
  double smoothness = 0.0;
  double success_rate = 0.0;
  int collisions = 0;
  int steps = 0;
  std::string status;  // ok | partial | error:<what>
};

// Paired comparison: each seed's scenario instance is sampled once and
// evaluated by every planner. Failed cells are marked, not fatal.
inline std::vector<ComparisonRow> compare(std::span<const Planner> planners, ScenarioKind kind,
                                          int n_robots, int n_seeds, std::uint64_t seed_base,
                                          const WorldConfig& config,
                                          const SampleOptions& options = {}) {
  if (planners.empty()) throw std::invalid_argument("compare: no planners");
  if (n_seeds < 1) throw std::invalid_argument("compare: need at least one seed");

  std::vector<std::pair<std::uint64_t, Scenario>> instances;
  for (int s = 0; s < n_seeds; ++s) {
    const std::uint64_t seed = Rng::derive(seed_base, s);
    instances.emplace_back(seed, sample_scenario(kind, n_robots, seed, config.safe_radius, options));
  }

  std::vector<ComparisonRow> rows;
  for (const Planner& planner : planners) {
    for (const auto& [seed, scenario] : instances) {
      ComparisonRow row;
      row.planner = to_string(planner.kind);
      row.scenario = to_string(kind);
      row.seed = seed;
      try {
        const EpisodeTrace trace = run_episode(scenario, planner, config);
        const MetricsReport m = compute_metrics(trace);
        row.distance = m.distance_mean;
        row.smoothness = m.smoothness;
        row.success_rate = m.success_rate;
        row.collisions = static_cast<int>(std::lround(m.collision_rate * trace.robots.size()));
        row.steps = trace.steps;
        row.status = m.partial ? "partial" : "ok";
      } catch (const std::exception& e) {
        row.status = std::string("error:") + e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

struct PlannerSummary {
  std::string planner;
  int episodes = 0;
  double distance_mean = 0.0, distance_std = 0.0;
  double smoothness_mean = 0.0, smoothness_std = 0.0;
  double success_mean = 0.0;
};

inline std::vector<PlannerSummary> summarize(std::span<const ComparisonRow> rows) {
  std::vector<PlannerSummary> out;
  for (const ComparisonRow& row : rows) {
    if (row.status.starts_with("error")) continue;
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const PlannerSummary& s) { return s.planner == row.planner; });
    if (it == out.end()) {
      out.push_back({row.planner});
      it = out.end() - 1;
    }
    it->episodes += 1;
    it->distance_mean += row.distance;
    it->smoothness_mean += row.smoothness;
    it->success_mean += row.success_rate;
  }
  for (PlannerSummary& s : out) {
    if (s.episodes == 0) continue;
    s.distance_mean /= s.episodes;
    s.smoothness_mean /= s.episodes;
    s.success_mean /= s.episodes;
  }
  for (const ComparisonRow& row : rows) {
    if (row.status.starts_with("error")) continue;
    for (PlannerSummary& s : out) {
      if (s.planner != row.planner) continue;
      s.distance_std += (row.distance - s.distance_mean) * (row.distance - s.distance_mean);
      s.smoothness_std +=
          (row.smoothness - s.smoothness_mean) * (row.smoothness - s.smoothness_mean);
    }
  }
  for (PlannerSummary& s : out) {
    if (s.episodes > 1) {
      s.distance_std = std::sqrt(s.distance_std / (s.episodes - 1));
      s.smoothness_std = std::sqrt(s.smoothness_std / (s.episodes - 1));
    } else {
      s.distance_std = s.smoothness_std = 0.0;
    }
  }
  return out;
}

}  // namespace rpf
