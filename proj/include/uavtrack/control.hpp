#pragma once

#include "uavtrack/geometry.hpp"

namespace uavtrack {

/// Camera-frame command: translational velocity plus the pan rate about the
/// camera y axis. The remaining angular rates are held at zero by the mount.
struct ControlInput {
  double v_cx = 0.0;
  double v_cy = 0.0;
  double v_cz = 0.0;
  double omega_cy = 0.0;

  Vec4 vec() const { return {v_cx, v_cy, v_cz, omega_cy}; }
  static ControlInput from_vec(const Vec4& v) { return {v[0], v[1], v[2], v[3]}; }
  Vec3 velocity() const { return {v_cx, v_cy, v_cz}; }
};

/// Global-frame command applied to a single-integrator agent.
struct ControlInputGlobal {
  Vec3 v = Vec3::Zero();
  Vec3 omega = Vec3::Zero();

  Vec6 vec() const {
    Vec6 u;
    u << v, omega;
    return u;
  }
  static ControlInputGlobal from_vec(const Vec6& u) {
    return {u.head<3>(), u.tail<3>()};
  }
};

}  // namespace uavtrack
