#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

// Planar geometry for anchors, walls and mirror images. Angles are global
// (no agent heading enters here beyond the orientation offset) and every
// angle leaving this header is wrapped to [-pi, pi).

namespace mpslam {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  Point2 operator+(Point2 o) const { return {x + o.x, y + o.y}; }
  Point2 operator-(Point2 o) const { return {x - o.x, y - o.y}; }
  Point2 operator*(double s) const { return {x * s, y * s}; }
};

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }

inline double wrap_angle(double a) {
  const double two_pi = 2.0 * std::numbers::pi;
  return a - two_pi * std::floor((a + std::numbers::pi) / two_pi);
}

struct WallSegment {
  Point2 a;
  Point2 b;
};

struct Floorplan {
  std::vector<WallSegment> walls;
};

struct Anchor {
  int id = 0;
  Point2 position;
};

struct VirtualAnchor {
  int parent_anchor = 0;
  std::size_t wall = 0;  // generating wall (last mirror in the chain)
  Point2 position;
  int order = 1;
};

// Reflect p across the supporting line of the wall.
inline Point2 mirror_point(Point2 p, const WallSegment& wall) {
  const Point2 d = wall.b - wall.a;
  const double len2 = dot(d, d);
  if (len2 <= 0.0) {
    throw std::invalid_argument("mirror_point: degenerate wall segment");
  }
  const Point2 r = p - wall.a;
  const double t = dot(r, d) / len2;
  const Point2 foot = wall.a + d * t;
  return foot + (foot - p);
}

// Mirror images of the anchor up to max_order reflections. First order gives
// one image per wall, ordered by wall index; deeper orders chain mirrors of
// the previous order across every wall except the one that generated them.
inline std::vector<VirtualAnchor> enumerate_vas(const Floorplan& plan,
                                                const Anchor& anchor,
                                                int max_order = 1) {
  if (plan.walls.empty()) {
    throw std::invalid_argument("enumerate_vas: floorplan has no walls");
  }
  if (max_order < 1) {
    throw std::invalid_argument("enumerate_vas: max_order must be >= 1");
  }
  std::vector<VirtualAnchor> out;
  std::vector<VirtualAnchor> prev;
  for (std::size_t w = 0; w < plan.walls.size(); ++w) {
    prev.push_back({anchor.id, w, mirror_point(anchor.position, plan.walls[w]), 1});
  }
  out = prev;
  for (int order = 2; order <= max_order; ++order) {
    std::vector<VirtualAnchor> next;
    for (std::size_t w = 0; w < plan.walls.size(); ++w) {
      for (const auto& va : prev) {
        if (va.wall == w) continue;
        next.push_back({anchor.id, w, mirror_point(va.position, plan.walls[w]), order});
      }
    }
    out.insert(out.end(), next.begin(), next.end());
    prev = std::move(next);
  }
  return out;
}

struct RangeAoa {
  double range = 0.0;
  double aoa = 0.0;  // [-pi, pi)
};

// Range and global angle from an observer to a target, minus the observer
// orientation. Coincident points leave the angle undefined.
inline RangeAoa range_aoa(Point2 from, Point2 to, double orientation = 0.0) {
  const Point2 d = to - from;
  const double r = norm(d);
  if (r <= 0.0) {
    throw std::domain_error("range_aoa: coincident points, angle undefined");
  }
  return {r, wrap_angle(std::atan2(d.y, d.x) - orientation)};
}

// Free-space style amplitude decay, pinned to u_ref at d_ref.
inline double amplitude_from_distance(double d, double u_ref, double d_ref) {
  if (d <= 0.0) throw std::domain_error("amplitude_from_distance: d <= 0");
  return u_ref * d_ref / d;
}

// True when the specular path agent -> wall -> anchor exists: the segment
// from the agent to the mirror image must cross the generating wall within
// its extent. Endpoint grazes count as visible (closed segments); a segment
// running parallel to the wall never does.
inline bool reflection_visible(Point2 agent, Point2 va, const WallSegment& wall) {
  const Point2 r = va - agent;
  const Point2 s = wall.b - wall.a;
  const double denom = cross(r, s);
  if (denom == 0.0) return false;
  const Point2 qp = wall.a - agent;
  const double t = cross(qp, s) / denom;  // along agent -> va
  const double u = cross(qp, r) / denom;  // along wall.a -> wall.b
  return t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0;
}

inline bool reflection_visible(Point2 agent, const VirtualAnchor& va,
                               const Floorplan& plan) {
  return reflection_visible(agent, va.position, plan.walls.at(va.wall));
}

// Intersection parameter helper for the point itself (valid when visible).
inline Point2 reflection_point(Point2 agent, Point2 va, const WallSegment& wall) {
  const Point2 r = va - agent;
  const Point2 s = wall.b - wall.a;
  const double denom = cross(r, s);
  if (denom == 0.0) {
    throw std::domain_error("reflection_point: path parallel to wall");
  }
  const double t = cross(wall.a - agent, s) / denom;
  return agent + r * t;
}

}  // namespace mpslam
