#pragma once

#include <vector>

#include "uavtrack/barriers.hpp"
#include "uavtrack/control.hpp"
#include "uavtrack/qp.hpp"

namespace uavtrack {

/// Camera-frame command lifted to the 6-dim global command; the angular block
/// carries only the pan rate, rotated to the global frame.
ControlInputGlobal augment(const ControlInput& u, const Mat3& r_cg);

struct FilterResult {
  ControlInputGlobal u;
  Eigen::VectorXd slacks;  // b - a.u per constraint row, after the solve
  QpStatus status = QpStatus::solved;
  double deviation = 0.0;  // ||u - u_hat||
  bool rescaled = false;   // velocity ball projection engaged
  int iterations = 0;
};

/// Minimally invasive projection of the nominal command onto the admissible
/// set: min ||u - u_hat||^2 subject to the constraint rows, per-axis boxes at
/// +-alpha_v / +-alpha_omega, and the true velocity-norm bound enforced by a
/// radial rescale (with a tightened re-solve if the rescale breaks a row).
/// On an infeasible set the command is zeroed and flagged; zero always
/// satisfies the rows when the barriers are nonnegative.
FilterResult filter_control(const ControlInputGlobal& u_hat,
                            const std::vector<HalfspaceConstraint>& rows,
                            const CbfParams& params);

}  // namespace uavtrack
