#pragma once

#include <cmath>
#include <stdexcept>

namespace navistar::sim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator/(double s) const { return {x / s, y / s}; }
  bool operator==(const Vec2&) const = default;
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double det(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double abs_sq(Vec2 v) { return dot(v, v); }
inline double abs(Vec2 v) { return std::sqrt(abs_sq(v)); }
inline Vec2 normalized(Vec2 v) {
  const double n = abs(v);
  return n > 0.0 ? v / n : Vec2{};
}

// Observable part (position, velocity, radius) plus hidden goal, preferred
// speed and heading.
struct AgentState {
  double px = 0.0, py = 0.0;
  double vx = 0.0, vy = 0.0;
  double radius = 0.3;
  double gx = 0.0, gy = 0.0;
  double v_pref = 1.0;
  double theta = 0.0;

  Vec2 position() const { return {px, py}; }
  Vec2 velocity() const { return {vx, vy}; }
  Vec2 goal() const { return {gx, gy}; }

  void validate() const {
    if (!(radius > 0.0)) throw std::invalid_argument("agent radius must be positive");
    if (!(v_pref > 0.0)) throw std::invalid_argument("agent v_pref must be positive");
  }

  bool operator==(const AgentState&) const = default;
};

}  // namespace navistar::sim
