#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rpf/vec2.hpp"

namespace rpf {

struct WorldConfig {
  double desired_speed = 0.5;   // v (m/s)
  double safe_radius = 0.1;     // r (m)
  double detection_range = 6.0; // d_r (m)
  double timestep = 0.1;        // dt (s)
  int max_steps = 1000;         // T_max
  double reward_range = 10.0;   // d_m (m), dense-reward cutoff

  void validate() const {
    if (desired_speed <= 0 || safe_radius <= 0 || detection_range <= 0 || timestep <= 0 ||
        reward_range <= 0)
      throw std::invalid_argument("WorldConfig: all parameters must be positive");
    if (detection_range <= 2.0 * safe_radius)
      throw std::invalid_argument("WorldConfig: detection_range must exceed 2*safe_radius");
    if (max_steps < 1) throw std::invalid_argument("WorldConfig: max_steps must be >= 1");
  }
};

enum class RobotStatus { active, reached, collided };

struct RobotState {
  Vec2 position;
  double heading = 0.0;  // psi, in (-pi, pi]
  Vec2 goal;
  RobotStatus status = RobotStatus::active;
  int moved_steps = 0;
  double path_length = 0.0;     // d_a = moved_steps * v * dt
  double start_goal_dist = 0.0; // d_s

  double goal_distance() const { return (goal - position).norm(); }
};

struct NeighborFeature {
  double distance = 0.0;          // d_{j,i}, in (0, d_r)
  double azimuth = 0.0;           // phi_{j,i}, local frame, (-pi, pi]
  double relative_heading = 0.0;  // psi_{j,i}, (-pi, pi]
};

struct Observation {
  double obstacle_dist = 0.0;     // d_o, clamped to [0, d_r]
  double obstacle_azimuth = 0.0;  // phi_o, local frame; 0 when nothing in range
  double goal_dist = 0.0;         // d_g
  double goal_azimuth = 0.0;      // phi_g, local frame
  std::vector<NeighborFeature> neighbors;  // ascending distance
};

struct RewardBreakdown {
  double mission = 0.0;     // R_m, terminal shortest-path bonus
  double smoothness = 0.0;  // R_s, sharp-turn penalty
  double obstacle = 0.0;    // R_o, proximity penalty
  double progress = 0.0;    // R_p, dense goal-distance shaping
  double total() const { return mission + smoothness + obstacle + progress; }
};

enum class ScenarioKind { cluttered, circle_swap };

struct Scenario {
  ScenarioKind kind = ScenarioKind::cluttered;
  std::vector<std::pair<Vec2, Vec2>> robots;  // (start, goal)
  std::vector<Obstacle> obstacles;
  double circle_radius = 0.0;  // circle_swap only
  // Arena rectangle, recorded for plotting; leaving it is not a failure.
  Vec2 arena_min{-4.0, -4.0};
  Vec2 arena_max{4.0, 4.0};
};

enum class StatusChange { none, reached, collided };

struct StepOutcome {
  std::vector<StatusChange> transitions;  // per robot
  int step = 0;                         // counter after this step
  bool all_done = false;
};

// Deterministic 2D environment: first-order point-mass robots moving at
// constant speed, range-limited sensing against ground-truth geometry,
// collision and goal bookkeeping. Copyable value type; reward computation
// works on before/after snapshots.
class World {
 public:
  World(WorldConfig config, Scenario scenario)
      : config_(config), scenario_(std::move(scenario)) {
    config_.validate();
    validate_scenario(scenario_, config_.safe_radius);
    robots_.reserve(scenario_.robots.size());
    for (const auto& [start, goal] : scenario_.robots) {
      RobotState r;
      r.position = start;
      r.goal = goal;
      r.start_goal_dist = (goal - start).norm();
      r.heading = angle_of(goal - start);  // initial bearing toward goal
      robots_.push_back(r);
    }
  }

  const WorldConfig& config() const { return config_; }
  const Scenario& scenario() const { return scenario_; }
  const std::vector<RobotState>& robots() const { return robots_; }
  const RobotState& robot(int i) const { return robots_.at(i); }
  int robot_count() const { return static_cast<int>(robots_.size()); }
  int step_count() const { return step_count_; }

  bool all_done() const {
    return std::none_of(robots_.begin(), robots_.end(),
                        [](const RobotState& r) { return r.status == RobotStatus::active; });
  }

  // Nearest obstacle by surface distance within the detection range.
  // Ties resolve to the lowest obstacle index.
  std::optional<Obstacle> nearest_obstacle(int robot_id) const {
    const RobotState& r = robots_.at(robot_id);
    std::optional<Obstacle> best;
    double best_d = config_.detection_range;
    for (const Obstacle& obs : scenario_.obstacles) {
      const double d = surface_distance(r.position, obs);
      if (d < best_d) {
        best_d = d;
        best = obs;
      }
    }
    return best;
  }

  // Positions of other active robots within the detection range (the set
  // Eq. 7 sums over), ascending by distance.
  std::vector<Vec2> sensed_neighbor_positions(int robot_id) const {
    std::vector<std::pair<double, int>> order = sensed_neighbors(robot_id);
    std::vector<Vec2> out;
    out.reserve(order.size());
    for (const auto& [d, j] : order) out.push_back(robots_[j].position);
    return out;
  }

  Observation observe(int robot_id) const {
    const RobotState& r = robots_.at(robot_id);
    if (r.status != RobotStatus::active)
      throw std::logic_error("observe: robot is not active");

    Observation obs;
    // Nearest obstacle, saturating encoding when nothing is in range.
    double d_o = config_.detection_range;
    double phi_o = 0.0;
    double best = config_.detection_range;
    for (const Obstacle& o : scenario_.obstacles) {
      const double d = surface_distance(r.position, o);
      if (d < best) {
        best = d;
        d_o = std::clamp(d, 0.0, config_.detection_range);
        phi_o = wrap_angle(angle_of(o.center - r.position) - r.heading);
      }
    }
    obs.obstacle_dist = d_o;
    obs.obstacle_azimuth = phi_o;
    obs.goal_dist = r.goal_distance();
    obs.goal_azimuth = wrap_angle(angle_of(r.goal - r.position) - r.heading);

    for (const auto& [d, j] : sensed_neighbors(robot_id)) {
      NeighborFeature f;
      f.distance = d;
      f.azimuth = wrap_angle(angle_of(robots_[j].position - r.position) - r.heading);
      f.relative_heading = wrap_angle(robots_[j].heading - r.heading);
      obs.neighbors.push_back(f);
    }
    return obs;
  }

  // Advances every active robot by v*dt along its commanded unit heading,
  // then applies goal/collision transitions. Commands must cover exactly
  // the active robots.
  StepOutcome step(std::span<const std::pair<int, Vec2>> commands) {
    std::vector<bool> commanded(robots_.size(), false);
    for (const auto& [id, u] : commands) {
      if (id < 0 || id >= robot_count())
        throw std::invalid_argument("step: unknown robot id");
      if (robots_[id].status != RobotStatus::active)
        throw std::invalid_argument("step: command for a non-active robot");
      if (commanded[id]) throw std::invalid_argument("step: duplicate command");
      if (std::abs(u.norm() - 1.0) > 1e-9)
        throw std::invalid_argument("step: command is not a unit vector");
      commanded[id] = true;
    }
    for (std::size_t i = 0; i < robots_.size(); ++i) {
      if (robots_[i].status == RobotStatus::active && !commanded[i])
        throw std::invalid_argument("step: missing command for active robot");
    }

    const double ds = config_.desired_speed * config_.timestep;
    for (const auto& [id, u] : commands) {
      RobotState& r = robots_[id];
      r.position += u * ds;
      r.heading = wrap_angle(angle_of(u));
      r.moved_steps += 1;
      r.path_length = r.moved_steps * config_.desired_speed * config_.timestep;
    }

    StepOutcome outcome;
    outcome.transitions.assign(robots_.size(), StatusChange::none);

    // Goal arrivals take precedence over same-step collisions.
    std::vector<int> moving;
    for (const auto& [id, u] : commands) {
      RobotState& r = robots_[id];
      if (r.goal_distance() < config_.safe_radius) {
        r.status = RobotStatus::reached;
        outcome.transitions[id] = StatusChange::reached;
      } else {
        moving.push_back(id);
      }
    }

    // Collisions are evaluated simultaneously on post-move positions:
    // obstacle surface within r, or another live robot within 2r.
    std::vector<int> collided;
    for (int id : moving) {
      const RobotState& r = robots_[id];
      bool hit = false;
      for (const Obstacle& o : scenario_.obstacles) {
        if (surface_distance(r.position, o) < config_.safe_radius) {
          hit = true;
          break;
        }
      }
      if (!hit) {
        for (int other : moving) {
          if (other == id) continue;
          if ((robots_[other].position - r.position).norm() < 2.0 * config_.safe_radius) {
            hit = true;
            break;
          }
        }
      }
      if (hit) collided.push_back(id);
    }
    for (int id : collided) {
      robots_[id].status = RobotStatus::collided;
      outcome.transitions[id] = StatusChange::collided;
    }

    step_count_ += 1;
    outcome.step = step_count_;
    outcome.all_done = all_done();
    return outcome;
  }

  static void validate_scenario(const Scenario& s, double safe_radius) {
    if (s.robots.empty()) throw std::invalid_argument("scenario: no robots");
    const double min_sep = 2.0 * safe_radius;
    for (std::size_t i = 0; i < s.robots.size(); ++i) {
      const auto& [start_i, goal_i] = s.robots[i];
      if ((goal_i - start_i).norm() <= 0.0)
        throw std::invalid_argument("scenario: start coincides with goal");
      for (std::size_t j = i + 1; j < s.robots.size(); ++j) {
        if ((s.robots[j].first - start_i).norm() <= min_sep)
          throw std::invalid_argument("scenario: starts closer than 2r");
        if ((s.robots[j].second - goal_i).norm() <= min_sep)
          throw std::invalid_argument("scenario: goals closer than 2r");
      }
      for (const Obstacle& o : s.obstacles) {
        if (o.radius <= 0.0) throw std::invalid_argument("scenario: non-positive obstacle radius");
        if (surface_distance(start_i, o) <= safe_radius)
          throw std::invalid_argument("scenario: start inside inflated obstacle");
        if (surface_distance(goal_i, o) <= safe_radius)
          throw std::invalid_argument("scenario: goal inside inflated obstacle");
      }
    }
  }

 private:
  // (distance, id) of other active robots with d < d_r, ascending; ties by id.
  std::vector<std::pair<double, int>> sensed_neighbors(int robot_id) const {
    const RobotState& r = robots_.at(robot_id);
    std::vector<std::pair<double, int>> order;
    for (int j = 0; j < robot_count(); ++j) {
      if (j == robot_id || robots_[j].status != RobotStatus::active) continue;
      const double d = (robots_[j].position - r.position).norm();
      if (d < config_.detection_range) order.emplace_back(d, j);
    }
    std::sort(order.begin(), order.end());
    return order;
  }

  WorldConfig config_;
  Scenario scenario_;
  std::vector<RobotState> robots_;
  int step_count_ = 0;
};

// Per-step reward for one robot, evaluated across a step boundary.
// R_m rewards terminal arrival scaled by path efficiency, R_s penalizes
// heading changes above 45 degrees, R_o penalizes obstacle proximity,
// R_p is the dense goal-distance shaping term.
inline RewardBreakdown compute_reward(const World& before, const World& after, int robot_id) {
  const RobotState& prev = before.robot(robot_id);
  const RobotState& curr = after.robot(robot_id);
  if (prev.status != RobotStatus::active)
    throw std::logic_error("compute_reward: robot was not active before the step");
  const WorldConfig& cfg = after.config();

  RewardBreakdown rw;
  if (curr.status == RobotStatus::reached)
    rw.mission = 300.0 - 100.0 * curr.path_length / curr.start_goal_dist;

  const double turn = std::abs(wrap_angle(curr.heading - prev.heading));
  if (turn > kPi / 4.0) rw.smoothness = -5.0;

  double d_o = std::numeric_limits<double>::infinity();
  for (const Obstacle& o : after.scenario().obstacles)
    d_o = std::min(d_o, surface_distance(curr.position, o));
  if (d_o < cfg.safe_radius)
    rw.obstacle = -100.0;
  else if (d_o < 2.0 * cfg.safe_radius)
    rw.obstacle = -20.0;

  const double d_g = curr.goal_distance();
  if (d_g < cfg.reward_range) rw.progress = 1.0 - d_g / cfg.reward_range;
  return rw;
}

inline std::string to_string(ScenarioKind k) {
  return k == ScenarioKind::circle_swap ? "circle_swap" : "cluttered";
}

inline ScenarioKind scenario_kind_from_string(const std::string& s) {
  if (s == "circle_swap") return ScenarioKind::circle_swap;
  if (s == "cluttered") return ScenarioKind::cluttered;
  throw std::invalid_argument("unknown scenario kind: " + s);
}

inline std::string to_string(RobotStatus s) {
  switch (s) {
    case RobotStatus::active: return "active";
    case RobotStatus::reached: return "reached";
    case RobotStatus::collided: return "collided";
  }
  return "?";
}

}  // namespace rpf
