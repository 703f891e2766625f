#pragma once

#include <Eigen/Dense>
#include <vector>

namespace uavtrack {

/// Dense convex QP:  min 1/2 x'Hx + g'x  s.t.  A x <= b,  lb <= x <= ub.
/// H must be symmetric positive definite. Bounds are optional (empty = none)
/// and are handled as ordinary rows appended after A, so slack/active-set
/// indices cover rows first, then lower bounds, then upper bounds.
struct QpProblem {
  Eigen::MatrixXd h;
  Eigen::VectorXd g;
  Eigen::MatrixXd a;  // m x n, may have zero rows
  Eigen::VectorXd b;
  Eigen::VectorXd lb;  // size n or 0
  Eigen::VectorXd ub;  // size n or 0
};

enum class QpStatus { solved, infeasible, iteration_limit };

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd slack;   // b_all - A_all x, over rows + bounds
  Eigen::VectorXd lambda;  // multipliers, same indexing as slack
  std::vector<int> active;
  QpStatus status = QpStatus::infeasible;
  int iterations = 0;
  int most_violated = -1;  // on infeasibility: row that could not be satisfied
};

/// Active-set solve starting from the unconstrained minimizer. Violated rows
/// enter by largest violation (ties broken by lowest index); rows with
/// negative multipliers leave by most-negative-first. Terminates with a
/// KKT-satisfying point within 1e-8 on success.
QpSolution solve_qp(const QpProblem& p);

}  // namespace uavtrack
