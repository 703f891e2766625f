#pragma once

#include <array>
#include <deque>
#include <functional>
#include <stdexcept>
#include <vector>

#include "uavtrack/control.hpp"
#include "uavtrack/vision.hpp"

namespace uavtrack {

struct CovarianceNotPsd : std::runtime_error {
  CovarianceNotPsd() : std::runtime_error("covariance square root failed after jitter") {}
};

/// Sigma-point filter over a generic state. Components listed in
/// angle_states are treated circularly: means via atan2 of weighted
/// sin/cos sums, residuals via shortest arc. The covariance is
/// re-symmetrized after every predict and update.
class UnscentedFilter {
 public:
  using Transition = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

  UnscentedFilter(Eigen::VectorXd x0, Eigen::MatrixXd p0, double alpha = 0.1,
                  double beta = 2.0, double kappa = 0.0);

  void set_angle_states(std::vector<int> idx) { angle_states_ = std::move(idx); }

  void predict(const Transition& f, const Eigen::MatrixXd& q);
  void update(const Transition& h, const Eigen::VectorXd& z, const Eigen::MatrixXd& r,
              const std::vector<int>& angle_measurements = {});

  const Eigen::VectorXd& state() const { return x_; }
  const Eigen::MatrixXd& covariance() const { return p_; }
  Eigen::VectorXd& state() { return x_; }
  Eigen::MatrixXd& covariance() { return p_; }

  /// Mean weights; they sum to one for any (alpha, beta, kappa).
  Eigen::VectorXd mean_weights() const;

 private:
  Eigen::MatrixXd sigma_points() const;  // n x (2n+1), throws CovarianceNotPsd
  void weights(Eigen::VectorXd& wm, Eigen::VectorXd& wc) const;

  Eigen::VectorXd x_;
  Eigen::MatrixXd p_;
  double alpha_, beta_, kappa_;
  std::vector<int> angle_states_;
};

/// Estimator state layout: [x1 x2 x3 psi, r_q (global), V_q (global)].
struct EstimatorState {
  FeatureState features;
  Vec3 target_position = Vec3::Zero();
  Vec3 target_velocity = Vec3::Zero();
  Eigen::Matrix<double, 10, 10> covariance = Eigen::Matrix<double, 10, 10>::Identity();

  Eigen::Matrix<double, 10, 1> vec() const;
  static EstimatorState from_vec(const Eigen::Matrix<double, 10, 1>& x,
                                 const Eigen::Matrix<double, 10, 10>& p);
};

struct UkfConfig {
  double alpha = 0.1;
  double beta = 2.0;
  double kappa = 0.0;
  Eigen::Matrix<double, 10, 10> process_noise;   // per-step Q
  Eigen::Matrix<double, 7, 7> measurement_noise; // R

  static UkfConfig defaults(const NoiseSpec& noise, double dt);
};

/// Forward-Euler step of the coupled feature/target dynamics. The target
/// velocity lives in the global frame and is rotated through r_cg where the
/// feature rows consume it. Throws NonPositiveDepth if x3 <= 0 on entry.
Eigen::Matrix<double, 10, 1> process_model(const Eigen::Matrix<double, 10, 1>& x,
                                           const ControlInput& u, const Mat3& r_cg, double dt);

/// Continuous-time derivative used by process_model; exposed for the
/// generality of a full angular-rate command.
Eigen::Matrix<double, 10, 1> state_derivative(const Eigen::Matrix<double, 10, 1>& x,
                                              const Vec3& v_cam, const Vec3& omega_cam,
                                              const Mat3& r_cg);

/// Predicted measurement [u, v, d, psi, r_c]: pixel center, range, relative
/// angle and the camera position implied by the state.
Eigen::Matrix<double, 7, 1> measurement_model(const Eigen::Matrix<double, 10, 1>& x,
                                              const CameraIntrinsics& k, const Mat3& r_cg);

/// Sliding window of estimated target positions; a least-squares quadratic
/// per axis provides the velocity and acceleration feed for the tracker.
class MotionWindow {
 public:
  explicit MotionWindow(double window_seconds = 1.0) : window_(window_seconds) {}

  void push(double t, const Vec3& position, const Vec3& velocity);
  void clear();

  struct Fit {
    Vec3 velocity = Vec3::Zero();
    Vec3 acceleration = Vec3::Zero();
    bool from_fit = false;  // false: fell back to the latest stored velocity
  };
  /// Requires >= 4 samples spanning >= 0.25 s, else falls back.
  Fit fit() const;

 private:
  double window_;
  std::deque<std::array<double, 7>> samples_;  // t, p(3), v(3)
};

/// Per-agent filter over the 10-state with dropout-tolerant updates:
/// the prediction always runs, the correction only on valid detections.
class TargetEstimator {
 public:
  TargetEstimator(const UkfConfig& cfg, const CameraIntrinsics& k);

  bool initialized() const { return initialized_; }
  /// Seeds the state from a first valid detection; velocity starts at zero
  /// with inflated covariance.
  void init_from_detection(const Detection& det, const Mat3& r_cg);
  void init_from_state(const EstimatorState& s);

  /// One predict(+update) cycle. u_prev is the camera-frame command applied
  /// over the elapsed interval under the pose r_cg_prev; the correction uses
  /// the pose r_cg_now at measurement time. det may be invalid (dropout).
  void step(const ControlInput& u_prev, const Mat3& r_cg_prev, const Detection& det,
            const Mat3& r_cg_now, double dt);
  void step(const ControlInput& u_prev, const Mat3& r_cg, const Detection& det, double dt) {
    step(u_prev, r_cg, det, r_cg, dt);
  }

  EstimatorState state() const;
  FeatureState features() const;
  bool clamped_last_step() const { return clamped_; }

 private:
  UkfConfig cfg_;
  CameraIntrinsics k_;
  UnscentedFilter filter_;
  bool initialized_ = false;
  bool clamped_ = false;
};

inline constexpr double kMinInverseDepth = 1e-4;
inline constexpr double kMaxInverseDepth = 10.0;

}  // namespace uavtrack
