#include <limits>
#include <random>

#include "doctest.h"
#include "uavtrack/qp.hpp"

using namespace uavtrack;

namespace {

// exhaustive active-set enumeration; exact for small dense problems
Eigen::VectorXd enumeration_oracle(const QpProblem& p, bool& feasible) {
  const Eigen::Index n = p.h.rows();
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  for (Eigen::Index i = 0; i < p.a.rows(); ++i) {
    rows.push_back(p.a.row(i).transpose());
    rhs.push_back(p.b[i]);
  }
  for (Eigen::Index i = 0; i < p.lb.size(); ++i) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
    r[i] = -1.0;
    rows.push_back(r);
    rhs.push_back(-p.lb[i]);
  }
  for (Eigen::Index i = 0; i < p.ub.size(); ++i) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
    r[i] = 1.0;
    rows.push_back(r);
    rhs.push_back(p.ub[i]);
  }
  const int m = static_cast<int>(rows.size());

  double best_cost = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best;
  feasible = false;

  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    const int k = __builtin_popcount(mask);
    if (k > n) continue;
    Eigen::MatrixXd nact(k, n);
    Eigen::VectorXd bact(k);
    int idx = 0;
    for (int i = 0; i < m; ++i) {
      if (mask & (1u << i)) {
        nact.row(idx) = rows[static_cast<std::size_t>(i)].transpose();
        bact[idx] = rhs[static_cast<std::size_t>(i)];
        ++idx;
      }
    }
    // KKT system for the equality-constrained subproblem
    Eigen::MatrixXd kkt(n + k, n + k);
    kkt.setZero();
    kkt.topLeftCorner(n, n) = p.h;
    if (k > 0) {
      kkt.topRightCorner(n, k) = nact.transpose();
      kkt.bottomLeftCorner(k, n) = nact;
    }
    Eigen::VectorXd rhs_full(n + k);
    rhs_full.head(n) = -p.g;
    rhs_full.tail(k) = bact;
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd sol = lu.solve(rhs_full);
    const Eigen::VectorXd x = sol.head(n);
    const Eigen::VectorXd lambda = sol.tail(k);
    if (k > 0 && lambda.minCoeff() < -1e-9) continue;

    bool ok = true;
    for (int i = 0; i < m && ok; ++i) {
      if (rows[static_cast<std::size_t>(i)].dot(x) > rhs[static_cast<std::size_t>(i)] + 1e-8) ok = false;
    }
    if (!ok) continue;
    const double cost = 0.5 * x.dot(p.h * x) + p.g.dot(x);
    feasible = true;
    if (cost < best_cost - 1e-12) {
      best_cost = cost;
      best = x;
    }
  }
  return best;
}

QpProblem random_feasible_problem(std::mt19937& rng) {
  std::uniform_int_distribution<int> dim(2, 6);
  std::uniform_int_distribution<int> rows(0, 6);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  std::uniform_real_distribution<double> margin(0.0, 1.5);

  const int n = dim(rng);
  const int m = rows(rng);
  QpProblem p;
  Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return coef(rng); });
  p.h = a.transpose() * a + Eigen::MatrixXd::Identity(n, n);
  p.g = Eigen::VectorXd::NullaryExpr(n, [&] { return coef(rng); });
  const Eigen::VectorXd interior = Eigen::VectorXd::NullaryExpr(n, [&] { return 0.5 * coef(rng); });
  p.a = Eigen::MatrixXd::NullaryExpr(m, n, [&] { return coef(rng); });
  p.b.resize(m);
  for (int i = 0; i < m; ++i) p.b[i] = p.a.row(i).dot(interior) + margin(rng);
  p.lb = interior.array() - 3.0;
  p.ub = interior.array() + 3.0;
  return p;
}

}  // namespace

TEST_CASE("no rows: unconstrained minimizer") {
  QpProblem p;
  p.h = 2.0 * Eigen::MatrixXd::Identity(3, 3);
  p.g = Eigen::VectorXd::Constant(3, -2.0);
  p.a.resize(0, 3);
  p.b.resize(0);
  const QpSolution sol = solve_qp(p);
  REQUIRE(sol.status == QpStatus::solved);
  CHECK((sol.x - Eigen::VectorXd::Ones(3)).norm() == doctest::Approx(0.0));
}

TEST_CASE("single halfspace projection") {
  QpProblem p;
  p.h = 2.0 * Eigen::MatrixXd::Identity(6, 6);
  Eigen::VectorXd target(6);
  target << 1, 0, 0, 0, 0, 0;
  p.g = -2.0 * target;
  p.a = Eigen::MatrixXd::Zero(1, 6);
  p.a(0, 0) = 1.0;
  p.b = Eigen::VectorXd::Constant(1, 0.5);
  const QpSolution sol = solve_qp(p);
  REQUIRE(sol.status == QpStatus::solved);
  Eigen::VectorXd expected(6);
  expected << 0.5, 0, 0, 0, 0, 0;
  CHECK((sol.x - expected).norm() == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(sol.slack[0] == doctest::Approx(0.0));
}

TEST_CASE("matches brute-force enumeration on random problems") {
  std::mt19937 rng(2024);
  int solved = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const QpProblem p = random_feasible_problem(rng);
    bool feasible = false;
    const Eigen::VectorXd expected = enumeration_oracle(p, feasible);
    REQUIRE(feasible);
    const QpSolution sol = solve_qp(p);
    REQUIRE(sol.status == QpStatus::solved);
    CHECK((sol.x - expected).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(sol.slack.minCoeff() > -1e-8);
    ++solved;
  }
  CHECK(solved == 100);
}

TEST_CASE("KKT conditions hold at the reported solution") {
  std::mt19937 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const QpProblem p = random_feasible_problem(rng);
    const QpSolution sol = solve_qp(p);
    REQUIRE(sol.status == QpStatus::solved);

    Eigen::MatrixXd a_all;
    Eigen::VectorXd b_all;
    const Eigen::Index n = p.h.rows();
    a_all.setZero(p.a.rows() + 2 * n, n);
    b_all.resize(p.a.rows() + 2 * n);
    a_all.topRows(p.a.rows()) = p.a;
    b_all.head(p.a.rows()) = p.b;
    for (Eigen::Index i = 0; i < n; ++i) {
      a_all(p.a.rows() + i, i) = -1.0;
      b_all[p.a.rows() + i] = -p.lb[i];
      a_all(p.a.rows() + n + i, i) = 1.0;
      b_all[p.a.rows() + n + i] = p.ub[i];
    }

    // stationarity, dual feasibility, complementary slackness
    const Eigen::VectorXd grad = p.h * sol.x + p.g + a_all.transpose() * sol.lambda;
    CHECK(grad.cwiseAbs().maxCoeff() < 1e-7);
    CHECK(sol.lambda.minCoeff() > -1e-9);
    for (Eigen::Index i = 0; i < b_all.size(); ++i) {
      CHECK(std::abs(sol.lambda[i] * sol.slack[i]) < 1e-6);
    }
  }
}

TEST_CASE("conflicting rows are reported infeasible") {
  QpProblem p;
  p.h = Eigen::MatrixXd::Identity(2, 2);
  p.g = Eigen::VectorXd::Zero(2);
  p.a.resize(2, 2);
  p.a << 1, 0, -1, 0;
  p.b.resize(2);
  p.b << -1.0, -1.0;  // x <= -1 and x >= 1
  const QpSolution sol = solve_qp(p);
  CHECK(sol.status == QpStatus::infeasible);
  CHECK(sol.most_violated >= 0);
}
