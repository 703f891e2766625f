#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uavtrack/barriers.hpp"
#include "uavtrack/estimator.hpp"
#include "uavtrack/safety_filter.hpp"
#include "uavtrack/tracker.hpp"
#include "uavtrack/vision.hpp"
#include "uavtrack/world.hpp"

namespace uavtrack {

struct NoValidDetections : std::runtime_error {
  NoValidDetections() : std::runtime_error("no valid detections to aggregate") {}
};

struct AgentConfig {
  Vec3 initial_position = Vec3::Zero();
  double initial_yaw = 0.0;
  FeatureState reference;
};

struct ScenarioConfig {
  std::string name = "scenario";
  double duration = 60.0;
  double dt = 1.0 / 80.0;
  std::uint64_t seed = 0;
  std::vector<AgentConfig> agents;
  Vec3 target_position = Vec3::Zero();
  double target_heading = 0.0;
  TargetScript script;
  std::vector<Obstacle> obstacles;
  CameraIntrinsics camera;
  NoiseSpec noise;
  double ukf_alpha = 0.1;
  double ukf_beta = 2.0;
  double ukf_kappa = 0.0;
  NmpcConfig nmpc;  // reference is overridden per agent
  CbfParams cbf;
  double motion_window = 1.0;
};

/// Parse a scenario from JSON text. Angle-valued fields accept plain numbers
/// (radians) or strings with an explicit unit ("30 deg", "1.57 rad").
/// Validates the config, including the gamma_s feasibility gate.
ScenarioConfig parse_scenario(const std::string& json_text);
ScenarioConfig load_scenario(const std::filesystem::path& file);

/// Canonical serialization (sorted keys) and the FNV-1a hash over it; run
/// directories are named <hash>-s<seed>.
std::string canonical_json(const ScenarioConfig& cfg);
std::string config_hash(const ScenarioConfig& cfg);

struct AgentReport {
  double rms_u = 0.0;
  double rms_v = 0.0;
  int valid_detections = 0;
  int dropouts = 0;
  int nonconverged_solves = 0;
};

struct RunReport {
  std::vector<AgentReport> agents;
  double min_pairwise_distance = 0.0;
  double max_pairwise_distance = 0.0;
  double min_obstacle_distance = 0.0;  // agent to box center
  double min_occlusion_angle = 0.0;    // radians, over gated ticks; pi if never gated
  /// Per (agent, obstacle) minimum occlusion angle over the ticks the
  /// obstacle was inside the consideration set; pi when never considered.
  std::vector<std::vector<double>> occlusion_angle_matrix;
  double min_slack = 0.0;
  int infeasible_ticks = 0;
  int ticks = 0;
  bool aborted = false;
  std::string abort_reason;

  bool audit_collision = false;     // pairwise >= r_s - tol
  bool audit_connectivity = false;  // pairwise <= r_c + tol
  bool audit_obstacle = false;      // obstacle clearance >= r_s - tol
  bool audit_occlusion = false;     // gated angle >= theta_star - 2 deg
  bool audit_slack = false;         // logged slacks >= -1e-8
  bool audit_feasible = false;      // no infeasible filter ticks
  bool all_audits() const {
    return !aborted && audit_collision && audit_connectivity && audit_obstacle &&
           audit_occlusion && audit_slack && audit_feasible;
  }

  std::string to_json() const;
};

/// Ground-truth audit tolerances: Euler-discretization allowance on the
/// distance audits and the angular margin on the occlusion audit.
inline constexpr double kAuditDistanceTol = 0.05;
inline constexpr double kAuditAngleTolDeg = 2.0;

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;  // logs written when set
};

/// Closed-loop run: detect -> estimate -> fit motion -> compensate ->
/// solve the horizon problem -> augment -> build constraint rows -> filter ->
/// step, synchronously at 1/dt Hz. Deterministic for a fixed config & seed.
RunReport run_scenario(const ScenarioConfig& cfg, const RunOptions& options = {});

/// RMS pixel errors of valid detections against the reference image point.
/// Throws NoValidDetections when no detection is valid.
std::pair<double, double> rms_pixel_errors(const std::vector<Detection>& detections,
                                           const FeatureState& reference,
                                           const CameraIntrinsics& k);

}  // namespace uavtrack
