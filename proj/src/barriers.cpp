#include "uavtrack/barriers.hpp"

#include <algorithm>
#include <cmath>

namespace uavtrack {

const char* to_string(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::safety: return "safety";
    case ConstraintKind::connectivity: return "connectivity";
    case ConstraintKind::occlusion: return "occlusion";
  }
  return "?";
}

NeighborSets neighbor_sets(const std::vector<Vec3>& agent_positions, int agent_index,
                           const std::vector<Vec3>& obstacle_centers, double target_range,
                           const CbfParams& params) {
  NeighborSets sets;
  const Vec3& p_i = agent_positions.at(static_cast<std::size_t>(agent_index));
  for (int j = 0; j < static_cast<int>(agent_positions.size()); ++j) {
    if (j == agent_index) continue;
    const double dist = (p_i - agent_positions[static_cast<std::size_t>(j)]).norm();
    if (dist <= params.d_s) sets.collision.push_back(j);
    if (dist <= params.r_c) sets.connectivity.push_back(j);
  }
  for (int j = 0; j < static_cast<int>(obstacle_centers.size()); ++j) {
    if ((obstacle_centers[static_cast<std::size_t>(j)] - p_i).norm() <= target_range) {
      sets.obstacles.push_back(j);
    }
  }
  return sets;
}

double gamma_s_lower_bound(const CbfParams& params) {
  if (params.d_s <= params.r_s) throw DegenerateRange();
  return 4.0 * params.alpha_v * params.r_s / (params.d_s * params.d_s - params.r_s * params.r_s);
}

namespace {

HalfspaceConstraint separation_row(const Vec3& p_i, const Vec3& p_j, double radius, double gamma,
                                   double budget_share, int partner) {
  const Vec3 delta = p_i - p_j;
  HalfspaceConstraint c;
  c.kind = ConstraintKind::safety;
  c.partner = partner;
  c.h = delta.squaredNorm() - radius * radius;
  c.a.head<3>() = -2.0 * delta;
  c.b = budget_share * gamma * c.h;
  return c;
}

}  // namespace

HalfspaceConstraint collision_constraint(const Vec3& p_i, const Vec3& p_j,
                                         const CbfParams& params) {
  return separation_row(p_i, p_j, params.r_s, params.gamma_s, 0.5, -1);
}

HalfspaceConstraint obstacle_collision_constraint(const Vec3& p_i, const Obstacle& box,
                                                  int obstacle_index, const CbfParams& params) {
  return separation_row(p_i, box.center, params.r_s + box.circumradius(), params.gamma_s, 1.0,
                        obstacle_index);
}

HalfspaceConstraint connectivity_constraint(const Vec3& p_i, const Vec3& p_j,
                                            const CbfParams& params) {
  const Vec3 delta = p_i - p_j;
  HalfspaceConstraint c;
  c.kind = ConstraintKind::connectivity;
  c.h = params.r_c * params.r_c - delta.squaredNorm();
  c.a.head<3>() = 2.0 * delta;
  c.b = 0.5 * params.gamma_c * c.h;
  return c;
}

double occlusion_angle(const Vec3& p_i, const Vec3& p_o, const Vec3& sight) {
  const Vec3 ray = p_o - p_i;
  const double ray_norm = ray.norm();
  const double sight_norm = sight.norm();
  if (ray_norm < 1e-9 || sight_norm < 1e-9) throw DegenerateGeometry();
  const double cosine = std::clamp(ray.dot(sight) / (ray_norm * sight_norm), -1.0, 1.0);
  return std::acos(cosine);
}

OcclusionRow occlusion_constraint(const Vec3& p_i, const Vec3& p_o, const Vec3& sight,
                                  int obstacle_index, const CbfParams& params) {
  OcclusionRow out;
  HalfspaceConstraint& c = out.row;
  c.kind = ConstraintKind::occlusion;
  c.partner = obstacle_index;

  const Vec3 ray = p_o - p_i;
  const double ray_norm = ray.norm();
  const double sight_norm = sight.norm();
  if (ray_norm < 1e-9 || sight_norm < 1e-9) throw DegenerateGeometry();

  const double theta = occlusion_angle(p_i, p_o, sight);
  c.h = theta - params.theta_star;

  if (theta < 1e-3) {
    // gradient direction undefined with the obstacle dead ahead; any velocity
    // that opens radial clearance is admissible
    out.escape = true;
    c.a.head<3>() = ray / ray_norm;
    c.b = 0.0;
    return out;
  }

  const double cosine = std::clamp(ray.dot(sight) / (ray_norm * sight_norm), -1.0 + 1e-6, 1.0 - 1e-6);
  const Vec3 grad_term = sight / (ray_norm * sight_norm) - ray * cosine / (ray_norm * ray_norm);
  c.a.head<3>() = (-1.0 / std::sqrt(1.0 - cosine * cosine)) * grad_term;
  c.b = params.gamma_o * c.h;
  return out;
}

OcclusionRow occlusion_tracking_constraint(const Vec3& p_i, const Vec3& p_o, const Vec3& sight,
                                           const Vec3& target_velocity, int obstacle_index,
                                           const CbfParams& params) {
  OcclusionRow out;
  HalfspaceConstraint& c = out.row;
  c.kind = ConstraintKind::occlusion;
  c.partner = obstacle_index;

  const Vec3 ray = p_o - p_i;
  const double ray_norm = ray.norm();
  const double sight_norm = sight.norm();
  if (ray_norm < 1e-9 || sight_norm < 1e-9) throw DegenerateGeometry();

  const double theta = occlusion_angle(p_i, p_o, sight);
  c.h = theta - params.theta_star;

  if (theta < 1e-3) {
    out.escape = true;
    c.a.head<3>() = ray / ray_norm;
    c.b = 0.0;
    return out;
  }

  const double cosine = std::clamp(ray.dot(sight) / (ray_norm * sight_norm), -1.0 + 1e-6, 1.0 - 1e-6);
  const double scale = -1.0 / std::sqrt(1.0 - cosine * cosine);
  // dtheta/d(ray) and dtheta/d(sight); ray moves at -V, sight at vq - V
  const Vec3 grad_ray = scale * (sight / (ray_norm * sight_norm) - ray * cosine / (ray_norm * ray_norm));
  const Vec3 grad_sight = scale * (ray / (ray_norm * sight_norm) - sight * cosine / (sight_norm * sight_norm));
  c.a.head<3>() = grad_ray + grad_sight;
  c.b = params.gamma_o * c.h + grad_sight.dot(target_velocity);
  return out;
}

HalfspaceConstraint ground_constraint(const Vec3& p_i, const CbfParams& params) {
  HalfspaceConstraint c;
  c.kind = ConstraintKind::safety;
  c.partner = -2;
  c.h = p_i.z() - params.z_floor;
  c.a[2] = -1.0;
  c.b = params.gamma_s * c.h;
  return c;
}

std::vector<HalfspaceConstraint> build_constraints(const std::vector<Vec3>& agent_positions,
                                                   int agent_index,
                                                   const std::vector<Obstacle>& obstacles,
                                                   const Vec3& sight, const Vec3& target_velocity,
                                                   double target_range, const CbfParams& params) {
  std::vector<Vec3> centers;
  centers.reserve(obstacles.size());
  for (const auto& o : obstacles) centers.push_back(o.center);
  const NeighborSets sets = neighbor_sets(agent_positions, agent_index, centers, target_range, params);
  const Vec3& p_i = agent_positions.at(static_cast<std::size_t>(agent_index));

  std::vector<HalfspaceConstraint> rows;
  for (int j : sets.collision) {
    HalfspaceConstraint c = collision_constraint(p_i, agent_positions[static_cast<std::size_t>(j)], params);
    c.partner = j;
    rows.push_back(c);
  }
  for (int j : sets.connectivity) {
    HalfspaceConstraint c = connectivity_constraint(p_i, agent_positions[static_cast<std::size_t>(j)], params);
    c.partner = j;
    rows.push_back(c);
  }
  for (int j = 0; j < static_cast<int>(obstacles.size()); ++j) {
    const Obstacle& box = obstacles[static_cast<std::size_t>(j)];
    if ((box.center - p_i).norm() <= params.d_s) {
      rows.push_back(obstacle_collision_constraint(p_i, box, j, params));
    }
  }
  for (int j : sets.obstacles) {
    const Obstacle& box = obstacles[static_cast<std::size_t>(j)];
    rows.push_back(
        params.occlusion_sight_motion
            ? occlusion_tracking_constraint(p_i, box.center, sight, target_velocity, j, params).row
            : occlusion_constraint(p_i, box.center, sight, j, params).row);
  }
  rows.push_back(ground_constraint(p_i, params));
  return rows;
}

}  // namespace uavtrack
