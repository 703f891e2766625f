#pragma once

#include <vector>

#include "uavtrack/control.hpp"
#include "uavtrack/geometry.hpp"

namespace uavtrack {

/// One UAV with a rigidly mounted, level camera. r_cg is rebuilt from yaw on
/// every step so it stays orthonormal.
struct AgentState {
  Vec3 p = Vec3::Zero();  // global frame, meters
  double yaw = 0.0;       // heading of the optical axis, radians
  Mat3 r_cg = Mat3::Identity();

  static AgentState at(const Vec3& position, double yaw_angle) {
    return {position, yaw_angle, camera_rotation_from_yaw(yaw_angle)};
  }
};

struct TargetState {
  Vec3 position = Vec3::Zero();  // global frame
  Vec3 velocity = Vec3::Zero();  // global frame
  double heading = 0.0;          // radians; kept well-defined even at rest
};

/// Axis-aligned box obstacle.
struct Obstacle {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Ones() * 0.5;

  double circumradius() const { return half_extents.norm(); }
};

/// Piecewise target motion: constant speed along the heading; a nonzero
/// lateral acceleration bends the path at heading rate a_lat / speed.
struct ScriptSegment {
  double duration = 0.0;   // seconds
  double speed = 0.0;      // m/s
  double lateral_accel = 0.0;  // m/s^2
};

struct TargetScript {
  double initial_heading = 0.0;
  std::vector<ScriptSegment> segments;

  double total_duration() const;
  /// Segment active at time t; past the end the last segment is held with
  /// zero lateral acceleration (the target keeps its last velocity).
  ScriptSegment at(double t) const;
};

struct WorldState {
  double time = 0.0;
  std::vector<AgentState> agents;
  TargetState target;
  std::vector<Obstacle> obstacles;
};

/// Forward-Euler step of the single-integrator agent; yaw integrates the
/// global z angular rate and the camera mount stays level. Altitude is
/// clamped at ground level.
AgentState step_agent(const AgentState& a, const ControlInputGlobal& u, double dt);

/// Forward-Euler step of the scripted target at time t.
TargetState step_target(const TargetState& t, double time, double dt, const TargetScript& script);

/// True iff the closed segment p0->p1 intersects the closed box (slab method).
bool segment_box_intersects(const Vec3& p0, const Vec3& p1, const Obstacle& box);

}  // namespace uavtrack
