#include "uavtrack/tracker.hpp"

#include <algorithm>
#include <cmath>

namespace uavtrack {

using Mat4 = Eigen::Matrix4d;

Vec4 reduced_dynamics(const FeatureState& s, const ControlInput& u, const Vec3& v_q_cam) {
  if (s.x3 <= 0.0) throw NonPositiveDepth();
  const double x1 = s.x1, x2 = s.x2, x3 = s.x3;
  const double dvx = u.v_cx - v_q_cam.x();
  const double dvy = u.v_cy - v_q_cam.y();
  const double dvz = u.v_cz - v_q_cam.z();
  const double w = u.omega_cy;
  Vec4 ds;
  ds[0] = -x3 * dvx + x1 * x3 * dvz - (1.0 + x1 * x1) * w;
  ds[1] = -x3 * dvy + x2 * x3 * dvz - w * x1 * x2;
  ds[2] = x3 * x3 * dvz - w * x1 * x3;
  ds[3] = dvx * x3 / std::sqrt(1.0 + x1 * x1 + x2 * x2);
  return ds;
}

ErrorCompensation compensate_error(const FeatureState& s_ukf, const FeatureState& s_model,
                                   const FeatureState& s_star) {
  ErrorCompensation out;
  out.error = s_ukf.vec() - s_model.vec();
  out.error[3] = angle_diff(s_ukf.psi, s_model.psi);
  Vec4 d = s_star.vec() - out.error;
  d[3] = wrap_angle(s_star.psi - out.error[3]);
  d[2] = std::max(d[2], 1e-3);  // keep the shifted depth reference usable
  out.desired = FeatureState::from_vec(d);
  return out;
}

namespace {

constexpr double kPredictionDepthFloor = 1e-4;

Vec4 dynamics_clamped(const Vec4& s, const Vec4& u, const Vec3& vq) {
  FeatureState fs{s[0], s[1], std::max(s[2], kPredictionDepthFloor), s[3]};
  return reduced_dynamics(fs, ControlInput::from_vec(u), vq);
}

Vec4 euler_step(const Vec4& s, const Vec4& u, const Vec3& vq, double dt) {
  return s + dt * dynamics_clamped(s, u, vq);
}

// discrete Jacobians of euler_step: a = I + dt df/ds, b = dt df/du
void linearize(const Vec4& s, const Vec4& u, const Vec3& vq, double dt, Mat4& a, Mat4& b) {
  const double x1 = s[0], x2 = s[1], x3 = std::max(s[2], kPredictionDepthFloor);
  const double dvx = u[0] - vq.x();
  const double dvy = u[1] - vq.y();
  const double dvz = u[2] - vq.z();
  const double w = u[3];
  const double rho = std::sqrt(1.0 + x1 * x1 + x2 * x2);

  Mat4 fs = Mat4::Zero();
  fs(0, 0) = x3 * dvz - 2.0 * x1 * w;
  fs(0, 2) = -dvx + x1 * dvz;
  fs(1, 0) = -w * x2;
  fs(1, 1) = x3 * dvz - w * x1;
  fs(1, 2) = -dvy + x2 * dvz;
  fs(2, 0) = -w * x3;
  fs(2, 2) = 2.0 * x3 * dvz - w * x1;
  fs(3, 0) = -dvx * x3 * x1 / (rho * rho * rho);
  fs(3, 1) = -dvx * x3 * x2 / (rho * rho * rho);
  fs(3, 2) = dvx / rho;

  Mat4 fu = Mat4::Zero();
  fu(0, 0) = -x3;
  fu(0, 2) = x1 * x3;
  fu(0, 3) = -(1.0 + x1 * x1);
  fu(1, 1) = -x3;
  fu(1, 2) = x2 * x3;
  fu(1, 3) = -x1 * x2;
  fu(2, 2) = x3 * x3;
  fu(2, 3) = -x1 * x3;
  fu(3, 0) = x3 / rho;

  a = Mat4::Identity() + dt * fs;
  b = dt * fu;
}

}  // namespace

double NmpcTracker::rollout_cost(const FeatureState& s0, const FeatureState& s_d,
                                 const ControlInput& u_d0, const Vec3& gamma_cam,
                                 const Eigen::VectorXd& u_stacked) const {
  const int n = cfg_.horizon;
  const double dt = cfg_.dt;
  Vec4 sd = s_d.vec();
  sd[3] = s0.psi - angle_diff(s0.psi, s_d.psi);  // unwrapped reference near s0

  double cost = 0.0;
  Vec4 s = s0.vec();
  for (int k = 0; k < n; ++k) {
    const Vec4 ud =
        u_d0.vec() + static_cast<double>(k) * dt * Vec4(gamma_cam.x(), gamma_cam.y(), gamma_cam.z(), 0.0);
    const Vec4 u = u_stacked.segment<4>(4 * k);
    const Vec4 es = s - sd;
    const Vec4 eu = u - ud;
    cost += es.dot(cfg_.q_s.cwiseProduct(es)) + eu.dot(cfg_.r_u.cwiseProduct(eu));
    s = euler_step(s, u, ud.head<3>(), dt);
  }
  const Vec4 et = s - sd;
  cost += et.dot(cfg_.w_s.cwiseProduct(et));
  return cost;
}

Eigen::VectorXd NmpcTracker::objective_gradient(const FeatureState& s0, const FeatureState& s_d,
                                                const ControlInput& u_d0, const Vec3& gamma_cam,
                                                const Eigen::VectorXd& u_stacked) const {
  const int n = cfg_.horizon;
  const double dt = cfg_.dt;
  Vec4 sd = s_d.vec();
  sd[3] = s0.psi - angle_diff(s0.psi, s_d.psi);

  std::vector<Vec4> states(static_cast<std::size_t>(n) + 1);
  std::vector<Vec4> udes(static_cast<std::size_t>(n));
  states[0] = s0.vec();
  for (int k = 0; k < n; ++k) {
    udes[static_cast<std::size_t>(k)] =
        u_d0.vec() + static_cast<double>(k) * dt * Vec4(gamma_cam.x(), gamma_cam.y(), gamma_cam.z(), 0.0);
    states[static_cast<std::size_t>(k) + 1] =
        euler_step(states[static_cast<std::size_t>(k)], u_stacked.segment<4>(4 * k),
                   udes[static_cast<std::size_t>(k)].head<3>(), dt);
  }

  // adjoint sweep: lambda carries dJ/ds backwards through the rollout
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(4 * n);
  Vec4 lambda = 2.0 * cfg_.w_s.cwiseProduct(states[static_cast<std::size_t>(n)] - sd);
  for (int k = n - 1; k >= 0; --k) {
    Mat4 a, b;
    linearize(states[static_cast<std::size_t>(k)], u_stacked.segment<4>(4 * k),
              udes[static_cast<std::size_t>(k)].head<3>(), dt, a, b);
    grad.segment<4>(4 * k) =
        b.transpose() * lambda +
        2.0 * cfg_.r_u.cwiseProduct(Vec4(u_stacked.segment<4>(4 * k)) - udes[static_cast<std::size_t>(k)]);
    lambda = a.transpose() * lambda +
             2.0 * cfg_.q_s.cwiseProduct(states[static_cast<std::size_t>(k)] - sd);
  }
  return grad;
}

OcpSolution NmpcTracker::solve(const FeatureState& s0, const FeatureState& s_d,
                               const ControlInput& u_d0, const Vec3& gamma_cam) {
  if (s0.x3 <= 0.0) throw NonPositiveDepth();
  const int n = cfg_.horizon;
  const double dt = cfg_.dt;
  const int nz = 4 * n;

  // a transiently out-of-box start widens the box so the plan can funnel back
  // inside; beyond the relaxation margin the state is considered lost
  Vec4 s_lower_eff = cfg_.s_lower;
  Vec4 s_upper_eff = cfg_.s_upper;
  for (int k = 0; k < 4; ++k) {
    const double margin = cfg_.box_relaxation * (cfg_.s_upper[k] - cfg_.s_lower[k]);
    if (s0.vec()[k] < cfg_.s_lower[k] - margin || s0.vec()[k] > cfg_.s_upper[k] + margin) {
      throw InfeasibleInitialState();
    }
    s_lower_eff[k] = std::min(s_lower_eff[k], s0.vec()[k] - 1e-6);
    s_upper_eff[k] = std::max(s_upper_eff[k], s0.vec()[k] + 1e-6);
  }

  std::vector<Vec4> udes(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    udes[static_cast<std::size_t>(k)] =
        u_d0.vec() + static_cast<double>(k) * dt * Vec4(gamma_cam.x(), gamma_cam.y(), gamma_cam.z(), 0.0);
  }

  // initial candidate: shifted previous solution, else the clipped desired controls
  std::vector<Vec4> u(static_cast<std::size_t>(n));
  if (has_warm_ && static_cast<int>(warm_u_.size()) == n) {
    for (int k = 0; k + 1 < n; ++k) u[static_cast<std::size_t>(k)] = warm_u_[static_cast<std::size_t>(k) + 1];
    u[static_cast<std::size_t>(n) - 1] = warm_u_.back();
  } else {
    for (int k = 0; k < n; ++k) u[static_cast<std::size_t>(k)] = udes[static_cast<std::size_t>(k)];
  }
  for (auto& uk : u) uk = uk.cwiseMax(cfg_.u_lower).cwiseMin(cfg_.u_upper);

  auto stack = [n](const std::vector<Vec4>& seq) {
    Eigen::VectorXd v(4 * n);
    for (int k = 0; k < n; ++k) v.segment<4>(4 * k) = seq[static_cast<std::size_t>(k)];
    return v;
  };
  auto merit = [&](const std::vector<Vec4>& uu) {
    return rollout_cost(s0, s_d, u_d0, gamma_cam, stack(uu));
  };
  auto defect_of = [&](const std::vector<Vec4>& uu, const std::vector<Vec4>& ss) {
    double worst = 0.0;
    for (int k = 0; k < n; ++k) {
      const Vec4 next = euler_step(ss[static_cast<std::size_t>(k)], uu[static_cast<std::size_t>(k)],
                                   udes[static_cast<std::size_t>(k)].head<3>(), dt);
      worst = std::max(worst, (next - ss[static_cast<std::size_t>(k) + 1]).cwiseAbs().maxCoeff());
    }
    return worst;
  };

  std::vector<Vec4> s(static_cast<std::size_t>(n) + 1);
  s[0] = s0.vec();
  for (int k = 0; k < n; ++k) {
    s[static_cast<std::size_t>(k) + 1] = euler_step(
        s[static_cast<std::size_t>(k)], u[static_cast<std::size_t>(k)], udes[static_cast<std::size_t>(k)].head<3>(), dt);
  }

  const Vec4 sd = [&] {
    Vec4 d = s_d.vec();
    d[3] = s0.psi - angle_diff(s0.psi, s_d.psi);
    return d;
  }();

  Eigen::VectorXd qbar(nz), rbar(nz);
  for (int node = 1; node <= n; ++node) qbar.segment<4>(4 * (node - 1)) = (node == n) ? cfg_.w_s : cfg_.q_s;
  for (int k = 0; k < n; ++k) rbar.segment<4>(4 * k) = cfg_.r_u;

  double current_cost = merit(u);
  bool converged = false;
  int iterations = 0;

  Eigen::MatrixXd theta(nz, nz);
  std::vector<Mat4> ja(static_cast<std::size_t>(n)), jb(static_cast<std::size_t>(n));
  Eigen::VectorXd e(nz);

  for (int iter = 0; iter < cfg_.max_iterations && !converged; ++iter) {
    iterations = iter + 1;

    theta.setZero();
    for (int k = 0; k < n; ++k) {
      linearize(s[static_cast<std::size_t>(k)], u[static_cast<std::size_t>(k)],
                udes[static_cast<std::size_t>(k)].head<3>(), dt, ja[static_cast<std::size_t>(k)],
                jb[static_cast<std::size_t>(k)]);
      const Vec4 defect = euler_step(s[static_cast<std::size_t>(k)], u[static_cast<std::size_t>(k)],
                                     udes[static_cast<std::size_t>(k)].head<3>(), dt) -
                          s[static_cast<std::size_t>(k) + 1];
      if (k == 0) {
        e.segment<4>(0) = defect;
      } else {
        theta.middleRows(4 * k, 4).leftCols(4 * k) =
            ja[static_cast<std::size_t>(k)] * theta.middleRows(4 * (k - 1), 4).leftCols(4 * k);
        e.segment<4>(4 * k) = ja[static_cast<std::size_t>(k)] * e.segment<4>(4 * (k - 1)) + defect;
      }
      theta.block<4, 4>(4 * k, 4 * k) = jb[static_cast<std::size_t>(k)];
    }

    Eigen::VectorXd cres(nz), qres(nz);
    for (int node = 1; node <= n; ++node) {
      cres.segment<4>(4 * (node - 1)) = s[static_cast<std::size_t>(node)] + e.segment<4>(4 * (node - 1)) - sd;
    }
    for (int k = 0; k < n; ++k) {
      qres.segment<4>(4 * k) = u[static_cast<std::size_t>(k)] - udes[static_cast<std::size_t>(k)];
    }

    QpProblem qp;
    qp.h = 2.0 * (theta.transpose() * qbar.asDiagonal() * theta);
    qp.h.diagonal() += 2.0 * rbar;
    qp.g = 2.0 * (theta.transpose() * qbar.cwiseProduct(cres) + rbar.cwiseProduct(qres));
    qp.a.resize(0, nz);
    qp.b.resize(0);
    qp.lb.resize(nz);
    qp.ub.resize(nz);
    for (int k = 0; k < n; ++k) {
      qp.lb.segment<4>(4 * k) = cfg_.u_lower - u[static_cast<std::size_t>(k)];
      qp.ub.segment<4>(4 * k) = cfg_.u_upper - u[static_cast<std::size_t>(k)];
    }

    // state box rows enter lazily: only the rows the step actually violates
    Eigen::VectorXd z = Eigen::VectorXd::Zero(nz);
    QpStatus status = QpStatus::solved;
    std::vector<std::pair<int, int>> screened;
    for (int pass = 0; pass < 10; ++pass) {
      QpSolution sol = solve_qp(qp);
      status = sol.status;
      if (status != QpStatus::solved) break;
      z = sol.x;

      const Eigen::VectorXd pred = theta * z;
      bool added = false;
      for (int row = 0; row < nz; ++row) {
        const int d = row % 4;
        const double value = s[static_cast<std::size_t>(row / 4 + 1)][d] + e[row] + pred[row];
        int sign = 0;
        if (value > s_upper_eff[d] + 1e-9) sign = 1;
        if (value < s_lower_eff[d] - 1e-9) sign = -1;
        if (sign == 0) continue;
        if (std::find(screened.begin(), screened.end(), std::make_pair(row, sign)) != screened.end()) continue;
        screened.emplace_back(row, sign);
        const Eigen::Index mrow = qp.a.rows();
        qp.a.conservativeResize(mrow + 1, nz);
        qp.b.conservativeResize(mrow + 1);
        if (sign > 0) {
          qp.a.row(mrow) = theta.row(row);
          qp.b[mrow] = s_upper_eff[d] - s[static_cast<std::size_t>(row / 4 + 1)][d] - e[row];
        } else {
          qp.a.row(mrow) = -theta.row(row);
          qp.b[mrow] = s[static_cast<std::size_t>(row / 4 + 1)][d] + e[row] - s_lower_eff[d];
        }
        added = true;
      }
      if (!added) break;
    }
    if (status != QpStatus::solved) break;

    // damped accept on the rollout cost
    double accepted_alpha = 0.0;
    for (double alpha : {1.0, 0.5, 0.25, 0.125}) {
      std::vector<Vec4> u_try = u;
      for (int k = 0; k < n; ++k) u_try[static_cast<std::size_t>(k)] += alpha * z.segment<4>(4 * k);
      for (auto& uk : u_try) uk = uk.cwiseMax(cfg_.u_lower).cwiseMin(cfg_.u_upper);
      const double cost_try = merit(u_try);
      if (cost_try <= current_cost + 1e-12 * (1.0 + current_cost)) {
        const Eigen::VectorXd ds = alpha * (theta * z + e);
        for (int node = 1; node <= n; ++node) {
          s[static_cast<std::size_t>(node)] += ds.segment<4>(4 * (node - 1));
        }
        u = std::move(u_try);
        current_cost = cost_try;
        accepted_alpha = alpha;
        break;
      }
    }
    if (accepted_alpha == 0.0) break;

    converged = (z.cwiseAbs().maxCoeff() * accepted_alpha <= cfg_.kkt_tolerance) && defect_of(u, s) <= 1e-6;
  }

  warm_u_ = u;
  has_warm_ = true;

  OcpSolution result;
  result.controls.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) result.controls.push_back(ControlInput::from_vec(u[static_cast<std::size_t>(k)]));
  result.predicted.reserve(static_cast<std::size_t>(n) + 1);
  for (int node = 0; node <= n; ++node) {
    Vec4 sv = s[static_cast<std::size_t>(node)];
    sv[3] = wrap_angle(sv[3]);
    result.predicted.push_back(FeatureState::from_vec(sv));
  }
  result.cost = current_cost;
  result.converged = converged;
  result.iterations = iterations;
  result.max_defect = defect_of(u, s);
  return result;
}

}  // namespace uavtrack
