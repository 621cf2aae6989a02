#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "navistar/sim/agent.hpp"

namespace navistar::sim {

inline constexpr double kOrcaEpsilon = 1e-9;

// Directed line; the feasible half-plane lies to its left.
struct OrcaLine {
  Vec2 point;
  Vec2 direction;
};

struct OrcaParams {
  double time_horizon = 5.0;     // tau, seconds
  double neighbor_dist = 10.0;   // meters
  std::size_t max_neighbors = 10;
  double safety_margin = 0.1;    // added to each agent radius in the constraints
};

namespace orca_detail {

inline bool linear_program1(const std::vector<OrcaLine>& lines, std::size_t line_no, double radius, Vec2 opt,
                            bool direction_opt, Vec2& result) {
  const OrcaLine& line = lines[line_no];
  const double dot_product = dot(line.point, line.direction);
  const double discriminant = dot_product * dot_product + radius * radius - abs_sq(line.point);
  if (discriminant < 0.0) return false;  // speed circle fully invalidates this line

  const double sqrt_disc = std::sqrt(discriminant);
  double t_left = -dot_product - sqrt_disc;
  double t_right = -dot_product + sqrt_disc;

  for (std::size_t i = 0; i < line_no; ++i) {
    const double denominator = det(line.direction, lines[i].direction);
    const double numerator = det(lines[i].direction, line.point - lines[i].point);
    if (std::abs(denominator) <= kOrcaEpsilon) {
      if (numerator < 0.0) return false;
      continue;
    }
    const double t = numerator / denominator;
    if (denominator >= 0.0)
      t_right = std::min(t_right, t);
    else
      t_left = std::max(t_left, t);
    if (t_left > t_right) return false;
  }

  if (direction_opt) {
    result = dot(opt, line.direction) > 0.0 ? line.point + t_right * line.direction : line.point + t_left * line.direction;
  } else {
    const double t = dot(line.direction, opt - line.point);
    if (t < t_left)
      result = line.point + t_left * line.direction;
    else if (t > t_right)
      result = line.point + t_right * line.direction;
    else
      result = line.point + t * line.direction;
  }
  return true;
}

inline std::size_t linear_program2(const std::vector<OrcaLine>& lines, double radius, Vec2 opt, bool direction_opt,
                                   Vec2& result) {
  if (direction_opt)
    result = opt * radius;
  else if (abs_sq(opt) > radius * radius)
    result = normalized(opt) * radius;
  else
    result = opt;

  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (det(lines[i].direction, lines[i].point - result) > 0.0) {
      const Vec2 previous = result;
      if (!linear_program1(lines, i, radius, opt, direction_opt, result)) {
        result = previous;
        return i;
      }
    }
  }
  return lines.size();
}

// Infeasible case: minimizes the maximum constraint violation.
inline void linear_program3(const std::vector<OrcaLine>& lines, std::size_t begin_line, double radius, Vec2& result) {
  double distance = 0.0;
  for (std::size_t i = begin_line; i < lines.size(); ++i) {
    if (det(lines[i].direction, lines[i].point - result) <= distance) continue;
    std::vector<OrcaLine> projected;
    for (std::size_t j = 0; j < i; ++j) {
      OrcaLine line;
      const double determinant = det(lines[i].direction, lines[j].direction);
      if (std::abs(determinant) <= kOrcaEpsilon) {
        if (dot(lines[i].direction, lines[j].direction) > 0.0) continue;  // same direction
        line.point = 0.5 * (lines[i].point + lines[j].point);
      } else {
        line.point = lines[i].point +
                     (det(lines[j].direction, lines[i].point - lines[j].point) / determinant) * lines[i].direction;
      }
      line.direction = normalized(lines[j].direction - lines[i].direction);
      projected.push_back(line);
    }
    const Vec2 previous = result;
    if (linear_program2(projected, radius, Vec2{-lines[i].direction.y, lines[i].direction.x}, true, result) <
        projected.size())
      result = previous;  // floating point trouble; keep the last feasible answer
    distance = det(lines[i].direction, lines[i].point - result);
  }
}

}  // namespace orca_detail

// Goal-directed preferred velocity with magnitude min(v_pref, dist / dt).
inline Vec2 preferred_velocity(const AgentState& a, double dt) {
  const Vec2 to_goal = a.goal() - a.position();
  const double dist = abs(to_goal);
  if (dist <= 0.0) return {};
  return to_goal * (std::min(a.v_pref, dist / dt) / dist);
}

// Half-plane constraint induced on `self` by `other` (reciprocity factor 1/2).
inline OrcaLine orca_line(const AgentState& self, const AgentState& other, double dt, const OrcaParams& params) {
  const double inv_tau = 1.0 / params.time_horizon;
  const Vec2 rel_pos = other.position() - self.position();
  const Vec2 rel_vel = self.velocity() - other.velocity();
  const double dist_sq = abs_sq(rel_pos);
  const double combined = self.radius + other.radius + 2.0 * params.safety_margin;
  const double combined_sq = combined * combined;

  OrcaLine line;
  Vec2 u;
  if (dist_sq > combined_sq) {
    const Vec2 w = rel_vel - inv_tau * rel_pos;
    const double w_len_sq = abs_sq(w);
    const double dot1 = dot(w, rel_pos);
    if (dot1 < 0.0 && dot1 * dot1 > combined_sq * w_len_sq) {
      // project on the cut-off circle
      const double w_len = std::sqrt(w_len_sq);
      const Vec2 unit_w = w / w_len;
      line.direction = {unit_w.y, -unit_w.x};
      u = (combined * inv_tau - w_len) * unit_w;
    } else {
      // project on the legs
      const double leg = std::sqrt(dist_sq - combined_sq);
      if (det(rel_pos, w) > 0.0)
        line.direction = Vec2{rel_pos.x * leg - rel_pos.y * combined, rel_pos.x * combined + rel_pos.y * leg} / dist_sq;
      else
        line.direction =
            -1.0 * Vec2{rel_pos.x * leg + rel_pos.y * combined, -rel_pos.x * combined + rel_pos.y * leg} / dist_sq;
      u = dot(rel_vel, line.direction) * line.direction - rel_vel;
    }
  } else {
    // already overlapping: resolve within one time step
    const double inv_dt = 1.0 / dt;
    const Vec2 w = rel_vel - inv_dt * rel_pos;
    const double w_len = abs(w);
    const Vec2 unit_w = w_len > 0.0 ? w / w_len : Vec2{1.0, 0.0};
    line.direction = {unit_w.y, -unit_w.x};
    u = (combined * inv_dt - w_len) * unit_w;
  }
  line.point = self.velocity() + 0.5 * u;
  return line;
}

// Velocity closest to the preferred velocity that satisfies every ORCA
// constraint from the nearest neighbors, capped at v_pref.
inline Vec2 orca_velocity(const AgentState& self, std::span<const AgentState> neighbors, double dt,
                          const OrcaParams& params = {}) {
  if (!(params.time_horizon > 0.0)) throw std::invalid_argument("orca: time horizon must be positive");
  std::vector<std::pair<double, std::size_t>> near;
  const double range_sq = params.neighbor_dist * params.neighbor_dist;
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    const double d = abs_sq(neighbors[i].position() - self.position());
    if (d < range_sq) near.emplace_back(d, i);
  }
  std::stable_sort(near.begin(), near.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  if (near.size() > params.max_neighbors) near.resize(params.max_neighbors);

  std::vector<OrcaLine> lines;
  lines.reserve(near.size());
  for (const auto& [d, i] : near) lines.push_back(orca_line(self, neighbors[i], dt, params));

  const Vec2 pref = preferred_velocity(self, dt);
  Vec2 result;
  const std::size_t fail = orca_detail::linear_program2(lines, self.v_pref, pref, false, result);
  if (fail < lines.size()) orca_detail::linear_program3(lines, fail, self.v_pref, result);
  // guard against round-off pushing the speed past v_pref
  const double speed = abs(result);
  if (speed > self.v_pref) result = result * (self.v_pref / speed);
  return result;
}

}  // namespace navistar::sim
