#pragma once

#include <stdexcept>

#include "rpf/vec2.hpp"

namespace rpf {

// Heading law of the PPO steering baseline: blend the current velocity
// with its +90 degree rotation scaled by the policy output, then
// normalize. Keeps a positive component along the current velocity for
// any bounded steer value.
inline Vec2 ppo_steer_direction(Vec2 velocity, double steer) {
  if (velocity.norm() < 1e-12)
    throw std::domain_error("ppo_steer_direction: zero velocity");
  return normalized(velocity + steer * velocity.perp());
}

}  // namespace rpf
