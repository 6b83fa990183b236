#pragma once

#include <cmath>
#include <stdexcept>

namespace rpf {

constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator-() const { return {-x, -y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator/(double s) const { return {x / s, y / s}; }
  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }

  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double squared_norm() const { return x * x + y * y; }
  double norm() const { return std::hypot(x, y); }

  // +90 degree (counterclockwise) rotation.
  Vec2 perp() const { return {-y, x}; }

  Vec2 rotated(double angle) const {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    return {c * x - s * y, s * x + c * y};
  }
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

inline bool operator==(Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }

// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

inline double angle_of(Vec2 v) { return std::atan2(v.y, v.x); }

inline Vec2 unit_from_angle(double a) { return {std::cos(a), std::sin(a)}; }

// Unit vector in the direction of v; throws on (near-)zero input.
inline Vec2 normalized(Vec2 v) {
  const double n = v.norm();
  if (n < 1e-12) throw std::domain_error("normalized: zero-length vector");
  return v / n;
}

struct Obstacle {
  Vec2 center;
  double radius = 0.0;
};

// Signed distance from a point to the obstacle surface (negative inside).
inline double surface_distance(Vec2 p, const Obstacle& obs) {
  return (p - obs.center).norm() - obs.radius;
}

}  // namespace rpf
