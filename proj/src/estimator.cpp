#include "uavtrack/estimator.hpp"

#include <algorithm>
#include <cmath>

namespace uavtrack {

namespace {

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

double circular_mean(const Eigen::VectorXd& w, const Eigen::MatrixXd& pts, int row) {
  double s = 0.0;
  double c = 0.0;
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    s += w[i] * std::sin(pts(row, i));
    c += w[i] * std::cos(pts(row, i));
  }
  return std::atan2(s, c);
}

}  // namespace

UnscentedFilter::UnscentedFilter(Eigen::VectorXd x0, Eigen::MatrixXd p0, double alpha,
                                 double beta, double kappa)
    : x_(std::move(x0)), p_(symmetrized(std::move(p0))), alpha_(alpha), beta_(beta), kappa_(kappa) {}

void UnscentedFilter::weights(Eigen::VectorXd& wm, Eigen::VectorXd& wc) const {
  const auto n = static_cast<double>(x_.size());
  const double lambda = alpha_ * alpha_ * (n + kappa_) - n;
  const auto count = 2 * x_.size() + 1;
  wm.setConstant(count, 0.5 / (n + lambda));
  wc = wm;
  wm[0] = lambda / (n + lambda);
  wc[0] = wm[0] + (1.0 - alpha_ * alpha_ + beta_);
}

Eigen::VectorXd UnscentedFilter::mean_weights() const {
  Eigen::VectorXd wm, wc;
  weights(wm, wc);
  return wm;
}

Eigen::MatrixXd UnscentedFilter::sigma_points() const {
  const auto n = x_.size();
  const double lambda = alpha_ * alpha_ * (static_cast<double>(n) + kappa_) - static_cast<double>(n);
  const double scale = static_cast<double>(n) + lambda;

  Eigen::MatrixXd p = p_;
  Eigen::LLT<Eigen::MatrixXd> llt(p);
  for (int attempt = 0; llt.info() != Eigen::Success; ++attempt) {
    if (attempt >= 3) throw CovarianceNotPsd();
    p.diagonal().array() += 1e-9;
    llt.compute(p);
  }
  const Eigen::MatrixXd root = std::sqrt(scale) * Eigen::MatrixXd(llt.matrixL());

  Eigen::MatrixXd pts(n, 2 * n + 1);
  pts.col(0) = x_;
  for (Eigen::Index i = 0; i < n; ++i) {
    pts.col(1 + i) = x_ + root.col(i);
    pts.col(1 + n + i) = x_ - root.col(i);
  }
  return pts;
}

void UnscentedFilter::predict(const Transition& f, const Eigen::MatrixXd& q) {
  Eigen::VectorXd wm, wc;
  weights(wm, wc);
  Eigen::MatrixXd pts = sigma_points();
  for (Eigen::Index i = 0; i < pts.cols(); ++i) pts.col(i) = f(pts.col(i));

  Eigen::VectorXd mean = pts * wm;
  for (int idx : angle_states_) mean[idx] = circular_mean(wm, pts, idx);

  Eigen::MatrixXd cov = q;
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    Eigen::VectorXd d = pts.col(i) - mean;
    for (int idx : angle_states_) d[idx] = angle_diff(pts(idx, i), mean[idx]);
    cov += wc[i] * d * d.transpose();
  }
  x_ = mean;
  p_ = symmetrized(cov);
}

void UnscentedFilter::update(const Transition& h, const Eigen::VectorXd& z,
                             const Eigen::MatrixXd& r, const std::vector<int>& angle_measurements) {
  Eigen::VectorXd wm, wc;
  weights(wm, wc);
  const Eigen::MatrixXd pts = sigma_points();
  Eigen::MatrixXd zs(z.size(), pts.cols());
  for (Eigen::Index i = 0; i < pts.cols(); ++i) zs.col(i) = h(pts.col(i));

  Eigen::VectorXd z_mean = zs * wm;
  for (int idx : angle_measurements) z_mean[idx] = circular_mean(wm, zs, idx);

  Eigen::MatrixXd s = r;
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(x_.size(), z.size());
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    Eigen::VectorXd dz = zs.col(i) - z_mean;
    for (int idx : angle_measurements) dz[idx] = angle_diff(zs(idx, i), z_mean[idx]);
    Eigen::VectorXd dx = pts.col(i) - x_;
    for (int idx : angle_states_) dx[idx] = angle_diff(pts(idx, i), x_[idx]);
    s += wc[i] * dz * dz.transpose();
    cross += wc[i] * dx * dz.transpose();
  }
  s = symmetrized(s);

  const Eigen::MatrixXd gain = s.ldlt().solve(cross.transpose()).transpose();
  Eigen::VectorXd innovation = z - z_mean;
  for (int idx : angle_measurements) innovation[idx] = angle_diff(z[idx], z_mean[idx]);

  x_ += gain * innovation;
  for (int idx : angle_states_) x_[idx] = wrap_angle(x_[idx]);
  p_ = symmetrized(p_ - gain * s * gain.transpose());
}

Eigen::Matrix<double, 10, 1> EstimatorState::vec() const {
  Eigen::Matrix<double, 10, 1> x;
  x << features.x1, features.x2, features.x3, features.psi, target_position, target_velocity;
  return x;
}

EstimatorState EstimatorState::from_vec(const Eigen::Matrix<double, 10, 1>& x,
                                        const Eigen::Matrix<double, 10, 10>& p) {
  EstimatorState s;
  s.features = {x[0], x[1], x[2], x[3]};
  s.target_position = x.segment<3>(4);
  s.target_velocity = x.segment<3>(7);
  s.covariance = p;
  return s;
}

UkfConfig UkfConfig::defaults(const NoiseSpec& noise, double dt) {
  UkfConfig cfg;
  Eigen::Matrix<double, 10, 1> q;
  q << 1e-4, 1e-4, 1e-4, 1e-4, 1e-3, 1e-3, 1e-3, 1e-2, 1e-2, 1e-2;
  cfg.process_noise = (q * dt).asDiagonal();
  Eigen::Matrix<double, 7, 1> r;
  r << noise.sigma_px * noise.sigma_px, noise.sigma_px * noise.sigma_px,
      noise.sigma_d * noise.sigma_d, noise.sigma_psi * noise.sigma_psi,
      noise.sigma_gps * noise.sigma_gps, noise.sigma_gps * noise.sigma_gps,
      noise.sigma_gps * noise.sigma_gps;
  // floor keeps the innovation covariance invertible in noiseless configs
  cfg.measurement_noise = r.cwiseMax(1e-12).asDiagonal();
  return cfg;
}

Eigen::Matrix<double, 10, 1> state_derivative(const Eigen::Matrix<double, 10, 1>& x,
                                              const Vec3& v_cam, const Vec3& omega_cam,
                                              const Mat3& r_cg) {
  const double x1 = x[0], x2 = x[1], x3 = x[2];
  const Vec3 v_q = r_cg.transpose() * x.segment<3>(7);
  const double wx = omega_cam.x(), wy = omega_cam.y(), wz = omega_cam.z();

  const double zeta1 = wz * x2 - wy - wy * x1 * x1 + wx * x1 * x2;
  const double zeta2 = -wz * x1 + wx + wx * x2 * x2 - wy * x1 * x2;
  const double eta1 = (v_cam.z() * x1 - v_cam.x()) * x3;
  const double eta2 = (v_cam.z() * x2 - v_cam.y()) * x3;

  Eigen::Matrix<double, 10, 1> dx;
  dx[0] = v_q.x() * x3 - v_q.z() * x1 * x3 + zeta1 + eta1;
  dx[1] = v_q.y() * x3 - v_q.z() * x2 * x3 + zeta2 + eta2;
  dx[2] = -v_q.z() * x3 * x3 + v_cam.z() * x3 * x3 - (wy * x1 - wx * x2) * x3;
  dx[3] = (v_cam.x() - v_q.x()) * x3 / std::sqrt(1.0 + x1 * x1 + x2 * x2);
  dx.segment<3>(4) = x.segment<3>(7);
  dx.segment<3>(7).setZero();
  return dx;
}

Eigen::Matrix<double, 10, 1> process_model(const Eigen::Matrix<double, 10, 1>& x,
                                           const ControlInput& u, const Mat3& r_cg, double dt) {
  if (x[2] <= 0.0) throw NonPositiveDepth();
  Eigen::Matrix<double, 10, 1> next =
      x + dt * state_derivative(x, u.velocity(), Vec3(0.0, u.omega_cy, 0.0), r_cg);
  next[3] = wrap_angle(next[3]);
  return next;
}

Eigen::Matrix<double, 7, 1> measurement_model(const Eigen::Matrix<double, 10, 1>& x,
                                              const CameraIntrinsics& k, const Mat3& r_cg) {
  if (x[2] <= 0.0) throw NonPositiveDepth();
  const double depth = 1.0 / x[2];
  const Vec3 rel_cam(x[0] * depth, x[1] * depth, depth);
  Eigen::Matrix<double, 7, 1> z;
  z[0] = k.f_x * x[0] + k.c_u;
  z[1] = k.f_y * x[1] + k.c_v;
  z[2] = rel_cam.norm();
  z[3] = x[3];
  z.segment<3>(4) = x.segment<3>(4) - r_cg * rel_cam;
  return z;
}

void MotionWindow::push(double t, const Vec3& position, const Vec3& velocity) {
  samples_.push_back({t, position.x(), position.y(), position.z(),
                      velocity.x(), velocity.y(), velocity.z()});
  while (!samples_.empty() && t - samples_.front()[0] > window_) samples_.pop_front();
}

void MotionWindow::clear() { samples_.clear(); }

MotionWindow::Fit MotionWindow::fit() const {
  Fit result;
  if (samples_.empty()) return result;
  result.velocity = Vec3(samples_.back()[4], samples_.back()[5], samples_.back()[6]);

  const double t_end = samples_.back()[0];
  const double span = t_end - samples_.front()[0];
  if (samples_.size() < 4 || span < 0.25) return result;

  // quadratic least squares per axis in tau = t - t_end, derivatives at tau = 0
  Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d atb = Eigen::Matrix3d::Zero();
  for (const auto& s : samples_) {
    const double tau = s[0] - t_end;
    const Eigen::Vector3d row(1.0, tau, tau * tau);
    ata += row * row.transpose();
    atb += row * Eigen::RowVector3d(s[1], s[2], s[3]);
  }
  const Eigen::Matrix3d coef = ata.ldlt().solve(atb);
  result.velocity = coef.row(1);
  result.acceleration = 2.0 * coef.row(2);
  result.from_fit = true;
  return result;
}

TargetEstimator::TargetEstimator(const UkfConfig& cfg, const CameraIntrinsics& k)
    : cfg_(cfg), k_(k),
      filter_(Eigen::VectorXd::Zero(10), Eigen::MatrixXd::Identity(10, 10), cfg.alpha, cfg.beta,
              cfg.kappa) {
  filter_.set_angle_states({3});
}

void TargetEstimator::init_from_detection(const Detection& det, const Mat3& r_cg) {
  EstimatorState s;
  s.features.x1 = (det.u - k_.c_u) / k_.f_x;
  s.features.x2 = (det.v - k_.c_v) / k_.f_y;
  // the measured range maps to depth through the feature direction
  const double dir_norm = std::sqrt(1.0 + s.features.x1 * s.features.x1 +
                                    s.features.x2 * s.features.x2);
  const double depth = std::max(det.d / dir_norm, 1.0 / kMaxInverseDepth);
  s.features.x3 = 1.0 / depth;
  s.features.psi = det.psi;
  s.target_position = det.r_c + r_cg * Vec3(s.features.x1 * depth, s.features.x2 * depth, depth);
  s.target_velocity = Vec3::Zero();

  Eigen::Matrix<double, 10, 1> p0;
  p0 << 2e-4, 2e-4, 1e-4, 5e-3, 0.05, 0.05, 0.05, 1.0, 1.0, 1.0;
  s.covariance = p0.asDiagonal();
  init_from_state(s);
}

void TargetEstimator::init_from_state(const EstimatorState& s) {
  filter_.state() = s.vec();
  filter_.covariance() = s.covariance;
  initialized_ = true;
  clamped_ = false;
}

void TargetEstimator::step(const ControlInput& u_prev, const Mat3& r_cg_prev, const Detection& det,
                           const Mat3& r_cg_now, double dt) {
  const Vec3 omega(0.0, u_prev.omega_cy, 0.0);
  auto transition = [&](const Eigen::VectorXd& x) {
    Eigen::Matrix<double, 10, 1> xc = x;
    xc[2] = std::clamp(xc[2], kMinInverseDepth, kMaxInverseDepth);
    Eigen::Matrix<double, 10, 1> next =
        xc + dt * state_derivative(xc, u_prev.velocity(), omega, r_cg_prev);
    next[3] = wrap_angle(next[3]);
    return Eigen::VectorXd(next);
  };
  filter_.predict(transition, cfg_.process_noise);

  clamped_ = filter_.state()[2] < kMinInverseDepth || filter_.state()[2] > kMaxInverseDepth;
  filter_.state()[2] = std::clamp(filter_.state()[2], kMinInverseDepth, kMaxInverseDepth);

  if (det.valid) {
    auto observation = [&](const Eigen::VectorXd& x) {
      Eigen::Matrix<double, 10, 1> xc = x;
      xc[2] = std::clamp(xc[2], kMinInverseDepth, kMaxInverseDepth);
      return Eigen::VectorXd(measurement_model(xc, k_, r_cg_now));
    };
    Eigen::Matrix<double, 7, 1> z;
    z << det.u, det.v, det.d, det.psi, det.r_c;
    filter_.update(observation, z, cfg_.measurement_noise, {3});
    if (filter_.state()[2] < kMinInverseDepth || filter_.state()[2] > kMaxInverseDepth) {
      clamped_ = true;
      filter_.state()[2] = std::clamp(filter_.state()[2], kMinInverseDepth, kMaxInverseDepth);
    }
  }
}

EstimatorState TargetEstimator::state() const {
  return EstimatorState::from_vec(filter_.state(), filter_.covariance());
}

FeatureState TargetEstimator::features() const {
  const auto& x = filter_.state();
  return {x[0], x[1], x[2], x[3]};
}

}  // namespace uavtrack
