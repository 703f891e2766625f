#include <random>

#include "doctest.h"
#include "uavtrack/safety_filter.hpp"

using namespace uavtrack;

TEST_CASE("augment rotates the command blocks") {
  const ControlInput u{1, 2, 3, 0.1};
  const ControlInputGlobal g = augment(u, Mat3::Identity());
  CHECK(g.v == Vec3(1, 2, 3));
  CHECK(g.omega == Vec3(0, 0.1, 0));

  Mat3 yaw90;  // plain z-rotation by 90 degrees
  yaw90 << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const ControlInputGlobal r = augment({1, 0, 0, 0}, yaw90);
  CHECK((r.v - Vec3(0, 1, 0)).norm() == doctest::Approx(0.0));

  std::mt19937 rng(5);
  std::uniform_real_distribution<double> val(-5.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    const ControlInput cmd{val(rng), val(rng), val(rng), val(rng)};
    const Mat3 rot = camera_rotation_from_yaw(val(rng));
    const ControlInputGlobal out = augment(cmd, rot);
    CHECK(out.v.norm() == doctest::Approx(cmd.velocity().norm()).epsilon(1e-12));
    CHECK(out.omega.norm() == doctest::Approx(std::abs(cmd.omega_cy)).epsilon(1e-12));
  }
}

TEST_CASE("filter is the identity when every row is slack") {
  CbfParams params;
  ControlInputGlobal u_hat;
  u_hat.v = Vec3(1.0, -2.0, 0.5);
  u_hat.omega = Vec3(0, 0, 0.2);
  std::vector<HalfspaceConstraint> rows;
  HalfspaceConstraint slack_row;
  slack_row.a << 1, 0, 0, 0, 0, 0;
  slack_row.b = 100.0;
  rows.push_back(slack_row);
  const FilterResult res = filter_control(u_hat, rows, params);
  REQUIRE(res.status == QpStatus::solved);
  CHECK((res.u.vec() - u_hat.vec()).norm() < 1e-12);
  CHECK(res.deviation < 1e-12);
}

TEST_CASE("projection onto an active halfspace removes the closing speed") {
  CbfParams params;
  // partner straight ahead at the safety boundary
  const Vec3 p_i(0, 0, 5), p_j(params.r_s, 0, 5);
  const HalfspaceConstraint row = collision_constraint(p_i, p_j, params);
  ControlInputGlobal u_hat;
  u_hat.v = Vec3(3.0, 0, 0);  // straight at the partner
  const FilterResult res = filter_control(u_hat, {row}, params);
  REQUIRE(res.status == QpStatus::solved);
  CHECK(res.u.v.x() == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(res.u.v.y() == doctest::Approx(0.0));
  CHECK(res.slacks.minCoeff() > -1e-8);
}

TEST_CASE("velocity ball projection preserves direction") {
  CbfParams params;  // alpha_v = 10
  ControlInputGlobal u_hat;
  u_hat.v = Vec3(12.0 / std::sqrt(2.0), 12.0 / std::sqrt(2.0), 0.0);  // norm 12, inside the boxes
  const FilterResult res = filter_control(u_hat, {}, params);
  REQUIRE(res.status == QpStatus::solved);
  CHECK(res.u.v.norm() == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(res.u.v.normalized().dot(u_hat.v.normalized()) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(res.rescaled);
}

TEST_CASE("filter is idempotent") {
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> coord(-12.0, 12.0);
  CbfParams params;
  for (int trial = 0; trial < 200; ++trial) {
    ControlInputGlobal u_hat;
    u_hat.v = Vec3(coord(rng), coord(rng), coord(rng));
    u_hat.omega = Vec3(0, 0, coord(rng) * 0.05);

    std::vector<HalfspaceConstraint> rows;
    const Vec3 p_i(0, 0, 5);
    const Vec3 p_j(coord(rng), coord(rng), 5 + 0.2 * coord(rng));
    if ((p_i - p_j).norm() > params.r_s + 0.1) {
      rows.push_back(collision_constraint(p_i, p_j, params));
      rows.push_back(connectivity_constraint(p_i, p_j, params));
    }
    const FilterResult once = filter_control(u_hat, rows, params);
    REQUIRE(once.status == QpStatus::solved);
    const FilterResult twice = filter_control(once.u, rows, params);
    REQUIRE(twice.status == QpStatus::solved);
    CHECK((twice.u.vec() - once.u.vec()).norm() < 1e-9);
  }
}

TEST_CASE("minimal invasiveness against random feasible commands") {
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> coord(-10.0, 10.0);
  CbfParams params;

  const Vec3 p_i(0, 0, 5);
  const Vec3 p_j(3.0, 1.0, 5.0);
  std::vector<HalfspaceConstraint> rows{collision_constraint(p_i, p_j, params),
                                        connectivity_constraint(p_i, p_j, params)};

  ControlInputGlobal u_hat;
  u_hat.v = Vec3(9.0, 4.0, 0.0);
  const FilterResult res = filter_control(u_hat, rows, params);
  REQUIRE(res.status == QpStatus::solved);
  const double d_star = (res.u.vec() - u_hat.vec()).norm();

  int feasible_samples = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Vec6 w;
    w << coord(rng), coord(rng), coord(rng), 0.0, 0.0, coord(rng) * 0.06;
    bool ok = w.head<3>().norm() <= params.alpha_v && w.tail<3>().norm() <= params.alpha_omega;
    for (const auto& row : rows) ok = ok && row.a.dot(w) <= row.b;
    if (!ok) continue;
    ++feasible_samples;
    CHECK(d_star <= (w - u_hat.vec()).norm() + 1e-9);
  }
  CHECK(feasible_samples > 50);
}

TEST_CASE("infeasible rows zero the command and report the failure") {
  CbfParams params;
  std::vector<HalfspaceConstraint> rows(2);
  rows[0].a << 1, 0, 0, 0, 0, 0;
  rows[0].b = -1.0;  // vx <= -1
  rows[1].a << -1, 0, 0, 0, 0, 0;
  rows[1].b = -1.0;  // vx >= 1
  ControlInputGlobal u_hat;
  u_hat.v = Vec3(5, 0, 0);
  const FilterResult res = filter_control(u_hat, rows, params);
  CHECK(res.status == QpStatus::infeasible);
  CHECK(res.u.vec().norm() == 0.0);
}

TEST_CASE("slacks match an independent recomputation") {
  CbfParams params;
  const Vec3 p_i(0, 0, 5), p_j(4, 0, 5);
  std::vector<HalfspaceConstraint> rows{collision_constraint(p_i, p_j, params),
                                        connectivity_constraint(p_i, p_j, params)};
  ControlInputGlobal u_hat;
  u_hat.v = Vec3(8.0, -1.0, 0.3);
  const FilterResult res = filter_control(u_hat, rows, params);
  REQUIRE(res.status == QpStatus::solved);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double slack = rows[i].b - rows[i].a.dot(res.u.vec());
    CHECK(res.slacks[static_cast<Eigen::Index>(i)] == doctest::Approx(slack).epsilon(1e-12));
    CHECK(slack > -1e-8);
  }
}
