#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace uavtrack {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;

struct NonPositiveDepth : std::runtime_error {
  NonPositiveDepth() : std::runtime_error("target depth is not positive") {}
};
struct DegenerateHeading : std::runtime_error {
  DegenerateHeading() : std::runtime_error("target planar speed below heading threshold") {}
};
struct DegenerateGeometry : std::runtime_error {
  DegenerateGeometry() : std::runtime_error("degenerate geometry (near-zero vector)") {}
};
struct DegenerateRange : std::runtime_error {
  DegenerateRange() : std::runtime_error("consideration distance must exceed safety radius") {}
};

/// Target position relative to the camera, expressed in the camera frame.
/// Camera axes: x right (image U), y down (image V), z along the optical axis.
struct RelativePosition {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 vec() const { return {x, y, z}; }
  double norm() const { return vec().norm(); }
};

/// Image-plane features and the relative viewing angle.
/// x1 = X/Z, x2 = Y/Z (dimensionless), x3 = 1/Z (1/m, positive),
/// psi in radians wrapped to (-pi, pi].
struct FeatureState {
  double x1 = 0.0;
  double x2 = 0.0;
  double x3 = 0.0;
  double psi = 0.0;

  Vec4 vec() const { return {x1, x2, x3, psi}; }
  static FeatureState from_vec(const Vec4& v) { return {v[0], v[1], v[2], v[3]}; }
};

/// Minimum planar target speed below which the heading (and hence psi) is
/// considered undefined; callers hold the last well-defined heading instead.
inline constexpr double kHeadingSpeedEps = 1e-3;

/// Wrap an angle to (-pi, pi].
double wrap_angle(double a);

/// Shortest-arc difference a - b, wrapped to (-pi, pi].
double angle_diff(double a, double b);

/// r_q - r_c, both expressed in the same frame.
RelativePosition relative_position(const Vec3& r_q, const Vec3& r_c);

/// (X/Z, Y/Z, 1/Z). Throws NonPositiveDepth if r.z <= 0.
Vec3 features_from_relative(const RelativePosition& r);

/// Euclidean camera-target range sqrt(1 + x1^2 + x2^2) / x3.
double range_from_features(const FeatureState& s);

/// Angle between the target heading and the bearing from target to camera,
/// planar, wrapped to (-pi, pi]. Throws DegenerateHeading when the target's
/// planar speed is below kHeadingSpeedEps.
double relative_angle(const Vec3& p_c, const Vec3& p_q, const Vec3& v_q);

/// Skew-symmetric matrix such that hat(w) * v == w x v.
Mat3 hat(const Vec3& w);

/// Camera-to-global rotation for a level camera mount whose optical axis
/// points along the horizontal heading `yaw`. Columns map camera x (image
/// right), y (image down) and z (optical axis) into the global frame; the
/// camera y axis maps to global -z.
Mat3 camera_rotation_from_yaw(double yaw);

/// True if R is orthonormal with determinant +1 within tol.
bool is_rotation(const Mat3& r, double tol = 1e-9);

}  // namespace uavtrack
