#pragma once

#include <vector>

#include "uavtrack/geometry.hpp"
#include "uavtrack/world.hpp"

namespace uavtrack {

struct CbfParams {
  double r_s = 2.0;         // collision radius, m
  double r_c = 20.0;        // connectivity range, m
  double d_s = 20.0;        // distance at which collision rows activate, r_s < d_s <= r_c
  double theta_star = M_PI / 6.0;  // occlusion margin, rad
  double gamma_s = 3.0;
  double gamma_c = 1.0;
  double gamma_o = 0.1;
  double alpha_v = 10.0;    // velocity norm bound, m/s
  double alpha_omega = 0.6; // angular rate norm bound, rad/s
  double z_floor = 0.0;     // minimum altitude enforced by the ground row, m
  // occlusion rows: false = frozen-sight form (exact under target co-motion),
  // true = full differential with the target-velocity feed
  bool occlusion_sight_motion = false;
};

enum class ConstraintKind { safety, connectivity, occlusion };

const char* to_string(ConstraintKind k);

/// One admissible-control halfspace a . u_global <= b over the stacked
/// command [V; omega]. All builders leave the angular block at zero.
struct HalfspaceConstraint {
  Vec6 a = Vec6::Zero();
  double b = 0.0;
  ConstraintKind kind = ConstraintKind::safety;
  double h = 0.0;   // barrier value at build time
  int partner = -1; // agent or obstacle index
};

struct NeighborSets {
  std::vector<int> collision;     // agents within d_s
  std::vector<int> connectivity;  // agents within r_c
  std::vector<int> obstacles;     // obstacles within the camera-target range
};

/// Index sets computed from positions only; agent i needs nothing beyond
/// neighbor positions and the known obstacle map.
NeighborSets neighbor_sets(const std::vector<Vec3>& agent_positions, int agent_index,
                           const std::vector<Vec3>& obstacle_centers, double target_range,
                           const CbfParams& params);

/// Feasibility gate on gamma_s: 4 alpha_v r_s / (d_s^2 - r_s^2).
/// Throws DegenerateRange if d_s <= r_s.
double gamma_s_lower_bound(const CbfParams& params);

/// Pairwise collision row for agent i against agent j. The budget is split in
/// half so that each agent can enforce its side independently; summing both
/// agents' rows recovers the pairwise barrier condition.
HalfspaceConstraint collision_constraint(const Vec3& p_i, const Vec3& p_j,
                                         const CbfParams& params);

/// Collision row against a static obstacle: full budget (the obstacle
/// contributes zero velocity) and the box circumradius added to r_s.
HalfspaceConstraint obstacle_collision_constraint(const Vec3& p_i, const Obstacle& box,
                                                  int obstacle_index, const CbfParams& params);

/// Pairwise connectivity row, same half-budget split as the collision row.
HalfspaceConstraint connectivity_constraint(const Vec3& p_i, const Vec3& p_j,
                                            const CbfParams& params);

/// Angle between the agent-to-obstacle ray and the sight vector, in [0, pi].
/// Throws DegenerateGeometry when either vector is near zero.
double occlusion_angle(const Vec3& p_i, const Vec3& p_o, const Vec3& sight);

/// Occlusion row keeping the obstacle at least theta_star away from the sight
/// line, with the sight vector treated as frozen (the co-moving
/// approximation). Near zero angle the gradient is undefined and the row
/// degrades to a pure radial-escape constraint (reported through the escaped
/// flag).
struct OcclusionRow {
  HalfspaceConstraint row;
  bool escape = false;
};
OcclusionRow occlusion_constraint(const Vec3& p_i, const Vec3& p_o, const Vec3& sight,
                                  int obstacle_index, const CbfParams& params);

/// Occlusion row with the full angle differential: accounts for the sight
/// line rotating as the agent moves and for the target velocity feeding
/// through (static obstacle). This is the row the closed loop runs on; the
/// frozen-sight variant above under-constrains whenever the agent does not
/// translate exactly with the target.
OcclusionRow occlusion_tracking_constraint(const Vec3& p_i, const Vec3& p_o, const Vec3& sight,
                                           const Vec3& target_velocity, int obstacle_index,
                                           const CbfParams& params);

/// Altitude barrier h = z - z_floor; keeps descent commands consistent with
/// the ground so the collision rows can trust their vertical escape budget.
HalfspaceConstraint ground_constraint(const Vec3& p_i, const CbfParams& params);

/// Everything one agent contributes to its own admissible set: pairwise
/// collision + connectivity rows, obstacle collision rows, occlusion rows
/// (full-differential form), and the ground row.
std::vector<HalfspaceConstraint> build_constraints(const std::vector<Vec3>& agent_positions,
                                                   int agent_index,
                                                   const std::vector<Obstacle>& obstacles,
                                                   const Vec3& sight, const Vec3& target_velocity,
                                                   double target_range, const CbfParams& params);

}  // namespace uavtrack
