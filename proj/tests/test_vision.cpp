#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "uavtrack/vision.hpp"

using namespace uavtrack;

namespace {

WorldState basic_world() {
  WorldState world;
  // camera at the origin looking along +x, target 7 m ahead on the optical axis
  world.agents.push_back(AgentState::at({0, 0, 0}, 0.0));
  world.target.position = Vec3(7, 0, 0);
  world.target.velocity = Vec3(0.5, 0, 0);
  world.target.heading = 0.0;
  return world;
}

}  // namespace

TEST_CASE("pinhole projection") {
  const CameraIntrinsics k;
  const auto [u0, v0] = project({0, 0, 7}, k);
  CHECK(u0 == 320.0);
  CHECK(v0 == 240.0);

  const auto [u1, v1] = project({0, 1.316, 7}, k);
  CHECK(u1 == 320.0);
  CHECK(v1 == doctest::Approx(311.69568).epsilon(1e-9));

  CHECK_THROWS_AS(project({0, 0, -1}, k), NonPositiveDepth);
}

TEST_CASE("projection inverts the feature extraction") {
  const CameraIntrinsics k;
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> coord(-3.0, 3.0);
  std::uniform_real_distribution<double> depth(0.5, 30.0);
  for (int trial = 0; trial < 200; ++trial) {
    const RelativePosition r{coord(rng), coord(rng), depth(rng)};
    const auto [u, v] = project(r, k);
    CHECK((u - k.c_u) / k.f_x == doctest::Approx(r.x / r.z).epsilon(1e-12));
    CHECK((v - k.c_v) / k.f_y == doctest::Approx(r.y / r.z).epsilon(1e-12));
  }
}

TEST_CASE("zero-noise detection returns ground truth") {
  WorldState world = basic_world();
  NoiseSpec noise;
  noise.sigma_px = noise.sigma_d = noise.sigma_psi = noise.sigma_gps = 0.0;
  NoiseStream stream(1);
  const Detection det = detect(world, 0, CameraIntrinsics{}, noise, stream);
  REQUIRE(det.valid);
  CHECK(det.u == 320.0);
  CHECK(det.v == 240.0);
  CHECK(det.d == doctest::Approx(7.0).epsilon(1e-12));
  // bearing from target to camera is pi, target heading 0
  CHECK(det.psi == doctest::Approx(M_PI));
  CHECK(det.r_c == world.agents[0].p);
}

TEST_CASE("detection drops out behind the camera, outside the image, and under occlusion") {
  NoiseSpec noise;
  noise.sigma_px = 0.0;
  NoiseStream stream(1);
  const CameraIntrinsics k;

  WorldState behind = basic_world();
  behind.target.position = Vec3(-7, 0, 0);
  CHECK_FALSE(detect(behind, 0, k, noise, stream).valid);

  WorldState outside = basic_world();
  outside.target.position = Vec3(7, 50, 0);  // far off the image to the side
  CHECK_FALSE(detect(outside, 0, k, noise, stream).valid);

  WorldState occluded = basic_world();
  Obstacle box;
  box.center = Vec3(3.5, 0, 0);
  box.half_extents = Vec3(0.5, 0.5, 0.5);
  occluded.obstacles.push_back(box);
  CHECK_FALSE(detect(occluded, 0, k, noise, stream).valid);

  // same box moved aside no longer blocks
  occluded.obstacles[0].center = Vec3(3.5, 5, 0);
  CHECK(detect(occluded, 0, k, noise, stream).valid);
}

TEST_CASE("pixel noise has the configured spread") {
  WorldState world = basic_world();
  NoiseSpec noise;
  noise.sigma_px = 2.0;
  noise.sigma_d = 0.0;
  noise.sigma_psi = 0.0;
  noise.sigma_gps = 0.0;
  NoiseStream stream(99);

  const int draws = 10000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < draws; ++i) {
    const Detection det = detect(world, 0, CameraIntrinsics{}, noise, stream);
    REQUIRE(det.valid);
    sum += det.u;
    sum2 += det.u * det.u;
  }
  const double mean = sum / draws;
  const double std = std::sqrt(sum2 / draws - mean * mean);
  CHECK(std > 1.9);
  CHECK(std < 2.1);
  CHECK(mean == doctest::Approx(320.0).epsilon(1e-3));
}

TEST_CASE("seeded noise streams replay bit-for-bit") {
  WorldState world = basic_world();
  NoiseSpec noise;
  NoiseStream a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    const Detection da = detect(world, 0, CameraIntrinsics{}, noise, a);
    const Detection db = detect(world, 0, CameraIntrinsics{}, noise, b);
    CHECK(da.u == db.u);
    CHECK(da.v == db.v);
    CHECK(da.d == db.d);
    CHECK(da.psi == db.psi);
    CHECK(da.r_c == db.r_c);
  }
}

TEST_CASE("the stream advances identically through dropouts") {
  NoiseSpec noise;
  NoiseStream a(7), b(7);
  WorldState visible = basic_world();
  WorldState hidden = basic_world();
  hidden.target.position = Vec3(-7, 0, 0);

  (void)detect(visible, 0, CameraIntrinsics{}, noise, a);
  (void)detect(hidden, 0, CameraIntrinsics{}, noise, b);
  const Detection da = detect(visible, 0, CameraIntrinsics{}, noise, a);
  const Detection db = detect(visible, 0, CameraIntrinsics{}, noise, b);
  CHECK(da.u == db.u);
  CHECK(da.r_c == db.r_c);
}
