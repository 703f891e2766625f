#include "uavtrack/geometry.hpp"

#include <cmath>

namespace uavtrack {

double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * M_PI);
  if (w <= -M_PI) w += 2.0 * M_PI;
  return w;
}

double angle_diff(double a, double b) { return wrap_angle(a - b); }

RelativePosition relative_position(const Vec3& r_q, const Vec3& r_c) {
  return {r_q.x() - r_c.x(), r_q.y() - r_c.y(), r_q.z() - r_c.z()};
}

Vec3 features_from_relative(const RelativePosition& r) {
  if (r.z <= 0.0) throw NonPositiveDepth();
  return {r.x / r.z, r.y / r.z, 1.0 / r.z};
}

double range_from_features(const FeatureState& s) {
  if (s.x3 <= 0.0) throw NonPositiveDepth();
  return std::sqrt(1.0 + s.x1 * s.x1 + s.x2 * s.x2) / s.x3;
}

double relative_angle(const Vec3& p_c, const Vec3& p_q, const Vec3& v_q) {
  if (std::hypot(v_q.x(), v_q.y()) < kHeadingSpeedEps) throw DegenerateHeading();
  const double bearing = std::atan2(p_c.y() - p_q.y(), p_c.x() - p_q.x());
  const double heading = std::atan2(v_q.y(), v_q.x());
  return wrap_angle(bearing - heading);
}

Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
      -w.y(), w.x(), 0.0;
  return m;
}

Mat3 camera_rotation_from_yaw(double yaw) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  Mat3 r;
  // columns: camera x -> horizontal right of heading, camera y -> global down,
  // camera z -> heading direction
  r << s, 0.0, c,
      -c, 0.0, s,
       0.0, -1.0, 0.0;
  return r;
}

bool is_rotation(const Mat3& r, double tol) {
  const Mat3 err = r.transpose() * r - Mat3::Identity();
  return err.cwiseAbs().maxCoeff() < tol && std::abs(r.determinant() - 1.0) < tol;
}

}  // namespace uavtrack
