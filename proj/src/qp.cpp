#include "uavtrack/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace uavtrack {

namespace {

// rows + lower bounds (-x <= -lb) + upper bounds (x <= ub), in that order
void assemble(const QpProblem& p, Eigen::MatrixXd& a, Eigen::VectorXd& b) {
  const auto n = p.h.rows();
  const auto m = p.a.rows();
  const auto nl = p.lb.size();
  const auto nu = p.ub.size();
  a.setZero(m + nl + nu, n);
  b.resize(m + nl + nu);
  if (m > 0) {
    a.topRows(m) = p.a;
    b.head(m) = p.b;
  }
  for (Eigen::Index i = 0; i < nl; ++i) {
    a(m + i, i) = -1.0;
    b(m + i) = -p.lb[i];
  }
  for (Eigen::Index i = 0; i < nu; ++i) {
    a(m + nl + i, i) = 1.0;
    b(m + nl + i) = p.ub[i];
  }
}

}  // namespace

// Dual active-set iteration: walk from the unconstrained minimizer, adding the
// most violated row with exact primal/dual step lengths and dropping rows whose
// multiplier would turn negative. Finite and exact for positive definite H.
QpSolution solve_qp(const QpProblem& p) {
  const Eigen::Index n = p.h.rows();
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  assemble(p, a, b);
  const Eigen::Index m = a.rows();

  Eigen::LLT<Eigen::MatrixXd> chol(p.h);
  if (chol.info() != Eigen::Success) throw std::invalid_argument("QP Hessian is not positive definite");

  QpSolution sol;
  sol.x = chol.solve(-p.g);
  std::vector<int> active;
  std::vector<double> lambda;
  Eigen::MatrixXd hia(n, 0);  // H^{-1} a_k for the active rows

  const double feas_tol = 1e-9;
  const int max_iter = 100 + 20 * static_cast<int>(m);

  auto finish = [&](QpStatus status, int most_violated) {
    sol.status = status;
    sol.most_violated = most_violated;
    sol.slack = b - a * sol.x;
    sol.lambda = Eigen::VectorXd::Zero(m);
    for (std::size_t i = 0; i < active.size(); ++i) sol.lambda[active[i]] = lambda[i];
    sol.active = active;
    return sol;
  };
  auto drop = [&](std::size_t k) {
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(k));
    lambda.erase(lambda.begin() + static_cast<std::ptrdiff_t>(k));
    const Eigen::Index last = hia.cols() - 1;
    for (Eigen::Index c = static_cast<Eigen::Index>(k); c < last; ++c) hia.col(c) = hia.col(c + 1);
    hia.conservativeResize(Eigen::NoChange, last);
  };

  for (int iter = 0; iter < max_iter; ++iter) {
    sol.iterations = iter + 1;

    // most violated row, lowest index on ties
    const Eigen::VectorXd resid = a * sol.x - b;
    int enter = -1;
    double worst = feas_tol;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (resid[i] > worst) {
        worst = resid[i];
        enter = static_cast<int>(i);
      }
    }
    if (enter < 0) return finish(QpStatus::solved, -1);

    const Eigen::VectorXd normal = a.row(enter).transpose();
    const Eigen::VectorXd hi_normal = chol.solve(normal);
    double entering_multiplier = 0.0;

    // inner loop: take dual steps (dropping blockers) until the row can be
    // made tight with a primal step
    for (int inner = 0; inner <= static_cast<int>(m) + 1; ++inner) {
      const auto k = static_cast<Eigen::Index>(active.size());
      Eigen::VectorXd r(k), z;
      if (k > 0) {
        Eigen::MatrixXd nact(k, n);
        for (Eigen::Index i = 0; i < k; ++i) nact.row(i) = a.row(active[static_cast<std::size_t>(i)]);
        const Eigen::MatrixXd s = nact * hia;  // positive definite while rows stay independent
        r = s.ldlt().solve(nact * hi_normal);
        z = hi_normal - hia * r;
      } else {
        z = hi_normal;
      }
      const double gain = normal.dot(z);

      // dual blocking step
      double t1 = std::numeric_limits<double>::infinity();
      std::size_t blocker = 0;
      for (Eigen::Index i = 0; i < k; ++i) {
        if (r[i] > 1e-12) {
          const double ratio = lambda[static_cast<std::size_t>(i)] / r[i];
          if (ratio < t1 - 1e-15) {
            t1 = ratio;
            blocker = static_cast<std::size_t>(i);
          }
        }
      }
      const double violation = normal.dot(sol.x) - b[enter];
      const double t2 = gain > 1e-12 ? violation / gain : std::numeric_limits<double>::infinity();

      if (!std::isfinite(t1) && !std::isfinite(t2)) {
        return finish(QpStatus::infeasible, enter);  // no direction reduces the violation
      }

      if (t2 <= t1) {
        // full primal step: the entering row becomes tight and active
        sol.x -= t2 * z;
        for (Eigen::Index i = 0; i < k; ++i) lambda[static_cast<std::size_t>(i)] -= t2 * r[i];
        entering_multiplier += t2;
        active.push_back(enter);
        lambda.push_back(entering_multiplier);
        hia.conservativeResize(Eigen::NoChange, hia.cols() + 1);
        hia.col(hia.cols() - 1) = hi_normal;
        break;
      }

      // partial step: a blocking row leaves the active set first
      if (std::isfinite(t1) && t1 > 0.0) {
        sol.x -= t1 * z;
        for (Eigen::Index i = 0; i < k; ++i) lambda[static_cast<std::size_t>(i)] -= t1 * r[i];
        entering_multiplier += t1;
      }
      drop(blocker);
    }
  }

  return finish(QpStatus::iteration_limit, -1);
}

}  // namespace uavtrack
