#pragma once

#include <cstdint>
#include <random>
#include <utility>

#include "uavtrack/world.hpp"

namespace uavtrack {

struct CameraIntrinsics {
  double f_x = 381.36;
  double f_y = 381.36;
  double c_u = 320.0;
  double c_v = 240.0;
  int width = 640;
  int height = 480;
};

/// One synthetic detector sample. When valid is false the numeric fields are
/// zero and carry no information (dropout is data, not an error).
struct Detection {
  double u = 0.0;    // box center, pixels
  double v = 0.0;
  double d = 0.0;    // camera-target range, meters
  double psi = 0.0;  // relative angle, radians
  Vec3 r_c = Vec3::Zero();  // camera GPS, global frame
  bool valid = false;
};

struct NoiseSpec {
  double sigma_px = 2.0;
  double sigma_d = 0.1;
  double sigma_psi = 0.05;
  double sigma_gps = 0.02;
  std::uint64_t seed = 0;
};

/// Deterministic Gaussian stream (Box-Muller over mt19937_64). Identical
/// seeds give bit-identical draws on every platform, which the replay and
/// determinism guarantees rely on.
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t seed) : rng_(seed) {}

  double gaussian(double sigma);

 private:
  double uniform01();  // (0, 1]
  std::mt19937_64 rng_;
};

/// Pinhole projection of a camera-frame point. Throws NonPositiveDepth.
std::pair<double, double> project(const RelativePosition& r_rel_cam, const CameraIntrinsics& k);

/// Ground-truth detector with Gaussian noise. Dropout (valid = false) occurs
/// exactly when the target is behind the camera, projects outside the image,
/// or the camera-target segment crosses an obstacle box. The stream advances
/// by the same number of draws on every tick regardless of validity.
Detection detect(const WorldState& world, int agent_index, const CameraIntrinsics& k,
                 const NoiseSpec& noise, NoiseStream& stream);

}  // namespace uavtrack
