#pragma once

#include <vector>

#include "uavtrack/control.hpp"
#include "uavtrack/geometry.hpp"
#include "uavtrack/qp.hpp"

namespace uavtrack {

struct InfeasibleInitialState : std::runtime_error {
  InfeasibleInitialState() : std::runtime_error("initial features outside the state box beyond the relaxation margin") {}
};

struct NmpcConfig {
  int horizon = 50;
  double dt = 1.0 / 80.0;
  Vec4 q_s{1.0, 1.0, 100.0, 1.0};     // running state weight (diagonal)
  Vec4 r_u{0.02, 0.03, 0.01, 0.3};    // control weight
  Vec4 w_s{1.0, 1.0, 100.0, 1.0};     // terminal weight
  Vec4 s_lower{-0.84, -0.63, 0.07, -M_PI};
  Vec4 s_upper{0.84, 0.63, 1.0, M_PI};
  Vec4 u_lower{-10.0, -10.0, -10.0, -0.6};
  Vec4 u_upper{10.0, 10.0, 10.0, 0.6};
  FeatureState reference{0.0, 0.188, 1.0 / 7.0, 0.0};
  int max_iterations = 30;
  double kkt_tolerance = 1e-6;
  double box_relaxation = 0.50;  // tolerated initial-state overshoot, fraction of box width
};

struct OcpSolution {
  std::vector<ControlInput> controls;    // horizon entries
  std::vector<FeatureState> predicted;   // horizon + 1 shooting states
  double cost = 0.0;                     // rollout cost of the returned controls
  bool converged = false;
  int iterations = 0;
  double max_defect = 0.0;               // shooting gap at the returned iterate
};

/// Continuous feature dynamics used for prediction: relative image-plane
/// motion under the camera command and the (camera-frame) target velocity.
/// Throws NonPositiveDepth if s.x3 <= 0.
Vec4 reduced_dynamics(const FeatureState& s, const ControlInput& u, const Vec3& v_q_cam);

/// Model-error compensation: eps = s_ukf - s_model (shortest arc on psi),
/// shifted reference s_d = s_star - eps, held constant over the horizon.
struct ErrorCompensation {
  FeatureState desired;
  Vec4 error = Vec4::Zero();
};
ErrorCompensation compensate_error(const FeatureState& s_ukf, const FeatureState& s_model,
                                   const FeatureState& s_star);

/// Receding-horizon tracker: direct multiple shooting with a Gauss-Newton
/// SQP loop; each step condenses the shooting system onto the controls and
/// solves the resulting box/inequality QP with the shared dense solver.
/// Warm starts shift the previous solution by one step.
class NmpcTracker {
 public:
  explicit NmpcTracker(const NmpcConfig& cfg) : cfg_(cfg) {}

  const NmpcConfig& config() const { return cfg_; }

  /// Solve the horizon problem from features s0 toward the compensated
  /// reference s_d. u_d0 seeds the desired-control sequence, propagated by
  /// the camera-frame target acceleration gamma_cam; its velocity block is
  /// also the predicted target velocity in the feature dynamics. Only
  /// controls[0] is meant to be applied.
  OcpSolution solve(const FeatureState& s0, const FeatureState& s_d, const ControlInput& u_d0,
                    const Vec3& gamma_cam);

  void reset_warm_start() { has_warm_ = false; }

  /// Rollout cost of a stacked control sequence (4*horizon entries).
  double rollout_cost(const FeatureState& s0, const FeatureState& s_d, const ControlInput& u_d0,
                      const Vec3& gamma_cam, const Eigen::VectorXd& u_stacked) const;

  /// Analytic gradient of rollout_cost with respect to the stacked controls.
  Eigen::VectorXd objective_gradient(const FeatureState& s0, const FeatureState& s_d,
                                     const ControlInput& u_d0, const Vec3& gamma_cam,
                                     const Eigen::VectorXd& u_stacked) const;

 private:
  NmpcConfig cfg_;
  std::vector<Vec4> warm_u_;
  bool has_warm_ = false;
};

}  // namespace uavtrack
