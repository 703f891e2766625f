#include "uavtrack/vision.hpp"

#include <cmath>

namespace uavtrack {

double NoiseStream::uniform01() {
  // 53-bit mantissa draw mapped to (0, 1]
  return 1.0 - static_cast<double>(rng_() >> 11) * 0x1.0p-53;
}

double NoiseStream::gaussian(double sigma) {
  if (sigma == 0.0) {
    rng_();
    rng_();
    return 0.0;
  }
  const double u1 = uniform01();
  const double u2 = uniform01();
  return sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::pair<double, double> project(const RelativePosition& r_rel_cam, const CameraIntrinsics& k) {
  if (r_rel_cam.z <= 0.0) throw NonPositiveDepth();
  return {k.f_x * (r_rel_cam.x / r_rel_cam.z) + k.c_u,
          k.f_y * (r_rel_cam.y / r_rel_cam.z) + k.c_v};
}

Detection detect(const WorldState& world, int agent_index, const CameraIntrinsics& k,
                 const NoiseSpec& noise, NoiseStream& stream) {
  const AgentState& agent = world.agents.at(static_cast<std::size_t>(agent_index));
  const TargetState& target = world.target;

  // fixed draw order keeps the stream reproducible across dropout patterns
  const double n_u = stream.gaussian(noise.sigma_px);
  const double n_v = stream.gaussian(noise.sigma_px);
  const double n_d = stream.gaussian(noise.sigma_d);
  const double n_psi = stream.gaussian(noise.sigma_psi);
  const Vec3 n_gps(stream.gaussian(noise.sigma_gps), stream.gaussian(noise.sigma_gps),
                   stream.gaussian(noise.sigma_gps));

  Detection det;
  const Vec3 rel_global = target.position - agent.p;
  const Vec3 rel_cam = agent.r_cg.transpose() * rel_global;
  if (rel_cam.z() <= 0.0) return det;

  const RelativePosition rel{rel_cam.x(), rel_cam.y(), rel_cam.z()};
  const auto [u, v] = project(rel, k);
  if (u < 0.0 || u > k.width || v < 0.0 || v > k.height) return det;

  for (const auto& box : world.obstacles) {
    if (segment_box_intersects(agent.p, target.position, box)) return det;
  }

  const double heading = std::hypot(target.velocity.x(), target.velocity.y()) >= kHeadingSpeedEps
                             ? std::atan2(target.velocity.y(), target.velocity.x())
                             : target.heading;
  const double bearing = std::atan2(agent.p.y() - target.position.y(),
                                    agent.p.x() - target.position.x());

  det.valid = true;
  det.u = u + n_u;
  det.v = v + n_v;
  det.d = std::max(rel_global.norm() + n_d, 1e-3);
  det.psi = wrap_angle(bearing - heading + n_psi);
  det.r_c = agent.p + n_gps;
  return det;
}

}  // namespace uavtrack
