#include "uavtrack/world.hpp"

#include <algorithm>
#include <cmath>

namespace uavtrack {

double TargetScript::total_duration() const {
  double t = 0.0;
  for (const auto& seg : segments) t += seg.duration;
  return t;
}

ScriptSegment TargetScript::at(double t) const {
  double t0 = 0.0;
  for (const auto& seg : segments) {
    if (t < t0 + seg.duration) return seg;
    t0 += seg.duration;
  }
  ScriptSegment held = segments.empty() ? ScriptSegment{} : segments.back();
  held.lateral_accel = 0.0;
  return held;
}

AgentState step_agent(const AgentState& a, const ControlInputGlobal& u, double dt) {
  AgentState next = a;
  next.p += u.v * dt;
  next.p.z() = std::max(next.p.z(), 0.0);
  next.yaw = wrap_angle(a.yaw + u.omega.z() * dt);
  next.r_cg = camera_rotation_from_yaw(next.yaw);
  return next;
}

TargetState step_target(const TargetState& t, double time, double dt, const TargetScript& script) {
  const ScriptSegment seg = script.at(time);
  TargetState next = t;
  next.velocity = seg.speed * Vec3(std::cos(t.heading), std::sin(t.heading), 0.0);
  next.position = t.position + next.velocity * dt;
  if (seg.speed > kHeadingSpeedEps && seg.lateral_accel != 0.0) {
    next.heading = wrap_angle(t.heading + (seg.lateral_accel / seg.speed) * dt);
  }
  return next;
}

bool segment_box_intersects(const Vec3& p0, const Vec3& p1, const Obstacle& box) {
  const Vec3 d = p1 - p0;
  double t_min = 0.0;
  double t_max = 1.0;
  for (int k = 0; k < 3; ++k) {
    const double lo = box.center[k] - box.half_extents[k];
    const double hi = box.center[k] + box.half_extents[k];
    if (std::abs(d[k]) < 1e-300) {
      if (p0[k] < lo || p0[k] > hi) return false;
      continue;
    }
    double t0 = (lo - p0[k]) / d[k];
    double t1 = (hi - p0[k]) / d[k];
    if (t0 > t1) std::swap(t0, t1);
    t_min = std::max(t_min, t0);
    t_max = std::min(t_max, t1);
    if (t_min > t_max) return false;
  }
  return true;
}

}  // namespace uavtrack
