#include "uavtrack/safety_filter.hpp"

#include <cmath>

namespace uavtrack {

ControlInputGlobal augment(const ControlInput& u, const Mat3& r_cg) {
  ControlInputGlobal g;
  g.v = r_cg * u.velocity();
  g.omega = r_cg * Vec3(0.0, u.omega_cy, 0.0);
  return g;
}

namespace {

QpSolution project(const Vec6& u_hat, const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                   double box_v, double box_w) {
  QpProblem p;
  p.h = Eigen::MatrixXd::Identity(6, 6) * 2.0;
  p.g = -2.0 * u_hat;
  p.a = a;
  p.b = b;
  Vec6 box;
  box << box_v, box_v, box_v, box_w, box_w, box_w;
  p.lb = -box;
  p.ub = box;
  return solve_qp(p);
}

}  // namespace

FilterResult filter_control(const ControlInputGlobal& u_hat,
                            const std::vector<HalfspaceConstraint>& rows,
                            const CbfParams& params) {
  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd a(m, 6);
  Eigen::VectorXd b(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    a.row(i) = rows[static_cast<std::size_t>(i)].a;
    b[i] = rows[static_cast<std::size_t>(i)].b;
  }

  FilterResult result;
  QpSolution sol = project(u_hat.vec(), a, b, params.alpha_v, params.alpha_omega);
  result.iterations = sol.iterations;

  if (sol.status != QpStatus::solved) {
    result.u = ControlInputGlobal{};
    result.status = sol.status;
    result.slacks = m > 0 ? Eigen::VectorXd(b) : Eigen::VectorXd(0);
    result.deviation = u_hat.vec().norm();
    return result;
  }

  Vec6 u = sol.x;
  const double v_norm = u.head<3>().norm();
  if (v_norm > params.alpha_v) {
    u.head<3>() *= params.alpha_v / v_norm;
    result.rescaled = true;
    if (m > 0 && ((a * u - b).maxCoeff() > 1e-9)) {
      // per-axis boxes tightened so the box alone implies the norm bound
      sol = project(u_hat.vec(), a, b, params.alpha_v / std::sqrt(3.0), params.alpha_omega);
      result.iterations += sol.iterations;
      if (sol.status != QpStatus::solved) {
        result.u = ControlInputGlobal{};
        result.status = sol.status;
        result.slacks = m > 0 ? Eigen::VectorXd(b) : Eigen::VectorXd(0);
        result.deviation = u_hat.vec().norm();
        return result;
      }
      u = sol.x;
    }
  }
  const double w_norm = u.tail<3>().norm();
  if (w_norm > params.alpha_omega) {
    // rows never touch the angular block, so this cannot break them
    u.tail<3>() *= params.alpha_omega / w_norm;
    result.rescaled = true;
  }

  result.u = ControlInputGlobal::from_vec(u);
  result.status = QpStatus::solved;
  result.slacks = m > 0 ? Eigen::VectorXd(b - a * u) : Eigen::VectorXd(0);
  result.deviation = (u - u_hat.vec()).norm();
  return result;
}

}  // namespace uavtrack
