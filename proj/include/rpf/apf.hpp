#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <utility>

#include "rpf/vec2.hpp"

// Artificial potential field: attractive / repulsive / inter-robot forces,
// wall-following tangent selection, and the soft blend that removes the
// sharp turn at the wall-following activation boundary. Everything here is
// a pure function of its arguments.
namespace rpf::apf {

// The two gains modulated online by the policy.
struct Params {
  double eta = 0.05;    // repulsive scale, in [0, 0.1]
  double lambda = 2.0;  // inter-robot compactness, in [0, 5] (meters)
};

struct Config {
  double rho = 10.0;            // obstacle influence range (m)
  double f_in_threshold = 1.0;  // inter-robot force magnitude gating tangent choice
  bool wall_following = true;
  bool soft_rule = true;
};

enum class Regime { free_motion, wall_follow, soft };

struct ForceBreakdown {
  Vec2 attractive;   // F_a, unit toward goal
  Vec2 repulsive;    // F_r, from the nearest obstacle
  Vec2 inter_robot;  // F_in, summed over detected neighbors
  Vec2 combined;     // F_ar = F_a + F_r
  std::optional<Vec2> tangent_ccw;  // n_1, present when an obstacle is in range
  std::optional<Vec2> tangent_cw;   // n_2
  std::optional<Vec2> soft;         // blended direction, soft regime only
  Vec2 resolved;                    // unit commanded direction
  Regime regime = Regime::free_motion;
};

// Unit vector toward the goal. Throws if the robot sits on its goal.
inline Vec2 attractive_force(Vec2 position, Vec2 goal) {
  const Vec2 d = goal - position;
  const double dist = d.norm();
  if (dist < 1e-12) throw std::domain_error("attractive_force: position coincides with goal");
  return d / dist;
}

// Repulsion from the nearest obstacle surface point. Zero beyond the
// influence range rho; magnitude eta*(1/d - 1/rho)/d^2 inside it.
inline Vec2 repulsive_force(Vec2 position, Vec2 obstacle_surface, double eta, double rho) {
  const Vec2 away = position - obstacle_surface;
  const double d = away.norm();
  if (d < 1e-12) throw std::domain_error("repulsive_force: contact with obstacle surface");
  if (d > rho) return {0.0, 0.0};
  return eta * (1.0 / d - 1.0 / rho) * away / (d * d * d);
}

// Sum over detected neighbors of (0.5 - lambda/d) * unit(p_j - p_i).
// Repulsive below d = 2*lambda, mildly attractive beyond it.
inline Vec2 inter_robot_force(Vec2 position, std::span<const Vec2> neighbors, double lambda) {
  Vec2 total{0.0, 0.0};
  for (const Vec2& pj : neighbors) {
    const Vec2 towards = pj - position;
    const double d = towards.norm();
    if (d < 1e-12) throw std::domain_error("inter_robot_force: coincident neighbor");
    total += (0.5 - lambda / d) * towards / d;
  }
  return total;
}

// The two unit tangents of the circle through the robot, centered on the
// obstacle. First element is the counterclockwise tangent (the +90 degree
// rotation of the outward radial), second the clockwise one.
inline std::pair<Vec2, Vec2> tangent_directions(Vec2 position, const Obstacle& obstacle) {
  const Vec2 radial = position - obstacle.center;
  if (radial.norm() < 1e-12) throw std::domain_error("tangent_directions: robot at obstacle center");
  const Vec2 n1 = normalized(radial).perp();
  return {n1, -n1};
}

// Picks the wall-following tangent: align with F_in when its magnitude
// exceeds the threshold, otherwise with the current motion direction.
// Exact ties resolve to n1.
inline Vec2 select_wall_direction(Vec2 n1, Vec2 n2, Vec2 f_in, Vec2 current_heading,
                                  double f_in_threshold) {
  const Vec2 reference = f_in.norm() > f_in_threshold ? f_in : current_heading;
  return reference.dot(n2) > reference.dot(n1) ? n2 : n1;
}

// Blend between the resultant F_ar and the chosen tangent, weighted by the
// repulsive magnitude: normalize(F_ar + 2*|F_r|*n).
inline Vec2 soft_force(Vec2 f_ar, Vec2 f_r, Vec2 n) {
  const Vec2 blend = f_ar + 2.0 * f_r.norm() * n;
  if (blend.norm() < 1e-12) throw std::domain_error("soft_force: degenerate blend");
  return normalized(blend);
}

// Full directional decision for one robot.
//
// Sub-area A (F_ar^T F_a < 0, or F_ar = 0 exactly): wall following, the
// resolved direction is the selected tangent. Sub-area B (F_r^T F_a < 0
// with F_ar^T F_a >= 0): soft blend toward that tangent. Otherwise the
// free-space resultant F_a + F_r + F_in. F_in contributes to the resolved
// direction only in the free regime; in the other two it only steers
// tangent selection.
inline ForceBreakdown resolve_direction(Vec2 position, Vec2 goal,
                                        const std::optional<Obstacle>& nearest_obstacle,
                                        std::span<const Vec2> neighbors, Vec2 current_heading,
                                        const Params& params, const Config& config) {
  ForceBreakdown out;
  out.attractive = attractive_force(position, goal);
  out.repulsive = {0.0, 0.0};

  bool obstacle_in_range = false;
  if (nearest_obstacle) {
    const double d_o = surface_distance(position, *nearest_obstacle);
    if (d_o <= 0.0) throw std::domain_error("resolve_direction: robot inside obstacle");
    if (d_o <= config.rho) {
      obstacle_in_range = true;
      const Vec2 surface = nearest_obstacle->center +
                           nearest_obstacle->radius * normalized(position - nearest_obstacle->center);
      out.repulsive = repulsive_force(position, surface, params.eta, config.rho);
    }
  }

  out.inter_robot = inter_robot_force(position, neighbors, params.lambda);
  out.combined = out.attractive + out.repulsive;

  if (config.wall_following && obstacle_in_range) {
    auto [n1, n2] = tangent_directions(position, *nearest_obstacle);
    out.tangent_ccw = n1;
    out.tangent_cw = n2;
    const double ar_dot_a = out.combined.dot(out.attractive);
    if (ar_dot_a < 0.0 || out.combined.norm() < 1e-12) {
      out.regime = Regime::wall_follow;
      out.resolved = select_wall_direction(n1, n2, out.inter_robot, current_heading,
                                           config.f_in_threshold);
      return out;
    }
    if (config.soft_rule && out.repulsive.dot(out.attractive) < 0.0) {
      out.regime = Regime::soft;
      const Vec2 n = select_wall_direction(n1, n2, out.inter_robot, current_heading,
                                           config.f_in_threshold);
      const Vec2 blend = out.combined + 2.0 * out.repulsive.norm() * n;
      out.soft = blend.norm() < 1e-12 ? n : normalized(blend);
      out.resolved = *out.soft;
      return out;
    }
  }

  out.regime = Regime::free_motion;
  const Vec2 total = out.attractive + out.repulsive + out.inter_robot;
  // A fully cancelled resultant leaves the heading unchanged.
  out.resolved = total.norm() < 1e-12 ? current_heading : normalized(total);
  return out;
}

}  // namespace rpf::apf
