#include "uavtrack/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace uavtrack {

using nlohmann::json;

namespace {

double parse_angle(const json& j, const char* field) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const std::string text = j.get<std::string>();
    std::istringstream in(text);
    double value = 0.0;
    std::string unit;
    in >> value >> unit;
    if (!in.fail()) {
      if (unit == "deg" || unit == "degree" || unit == "degrees") return value * M_PI / 180.0;
      if (unit == "rad" || unit == "radian" || unit == "radians" || unit.empty()) return value;
    }
  }
  throw std::runtime_error(std::string("bad angle value for '") + field +
                           "': expected radians or a '<value> deg' string");
}

Vec3 parse_vec3(const json& j, const char* field) {
  if (!j.is_array() || j.size() != 3) throw std::runtime_error(std::string("'") + field + "' must be a 3-array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Vec4 parse_vec4(const json& j, const char* field) {
  if (!j.is_array() || j.size() != 4) throw std::runtime_error(std::string("'") + field + "' must be a 4-array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_time(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", t);
  return buf;
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& json_text) {
  const json j = json::parse(json_text);
  ScenarioConfig cfg;

  cfg.name = j.value("name", cfg.name);
  cfg.duration = j.value("duration", cfg.duration);
  cfg.dt = j.value("dt", cfg.dt);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.motion_window = j.value("motion_window", cfg.motion_window);

  if (j.contains("camera")) {
    const json& c = j["camera"];
    cfg.camera.f_x = c.value("fx", cfg.camera.f_x);
    cfg.camera.f_y = c.value("fy", cfg.camera.f_y);
    cfg.camera.c_u = c.value("cu", cfg.camera.c_u);
    cfg.camera.c_v = c.value("cv", cfg.camera.c_v);
    cfg.camera.width = c.value("width", cfg.camera.width);
    cfg.camera.height = c.value("height", cfg.camera.height);
  }
  if (j.contains("noise")) {
    const json& n = j["noise"];
    cfg.noise.sigma_px = n.value("sigma_px", cfg.noise.sigma_px);
    cfg.noise.sigma_d = n.value("sigma_d", cfg.noise.sigma_d);
    cfg.noise.sigma_psi = n.value("sigma_psi", cfg.noise.sigma_psi);
    cfg.noise.sigma_gps = n.value("sigma_gps", cfg.noise.sigma_gps);
  }
  if (j.contains("ukf")) {
    const json& u = j["ukf"];
    cfg.ukf_alpha = u.value("alpha", cfg.ukf_alpha);
    cfg.ukf_beta = u.value("beta", cfg.ukf_beta);
    cfg.ukf_kappa = u.value("kappa", cfg.ukf_kappa);
  }
  if (j.contains("nmpc")) {
    const json& m = j["nmpc"];
    cfg.nmpc.horizon = m.value("horizon", cfg.nmpc.horizon);
    cfg.nmpc.dt = m.value("dt", cfg.dt);
    if (m.contains("q_s")) cfg.nmpc.q_s = parse_vec4(m["q_s"], "nmpc.q_s");
    if (m.contains("r_u")) cfg.nmpc.r_u = parse_vec4(m["r_u"], "nmpc.r_u");
    if (m.contains("w_s")) cfg.nmpc.w_s = parse_vec4(m["w_s"], "nmpc.w_s");
    if (m.contains("s_lower")) cfg.nmpc.s_lower = parse_vec4(m["s_lower"], "nmpc.s_lower");
    if (m.contains("s_upper")) cfg.nmpc.s_upper = parse_vec4(m["s_upper"], "nmpc.s_upper");
    if (m.contains("u_lower")) cfg.nmpc.u_lower = parse_vec4(m["u_lower"], "nmpc.u_lower");
    if (m.contains("u_upper")) cfg.nmpc.u_upper = parse_vec4(m["u_upper"], "nmpc.u_upper");
    cfg.nmpc.max_iterations = m.value("max_iterations", cfg.nmpc.max_iterations);
  } else {
    cfg.nmpc.dt = cfg.dt;
  }
  if (j.contains("cbf")) {
    const json& c = j["cbf"];
    cfg.cbf.r_s = c.value("r_s", cfg.cbf.r_s);
    cfg.cbf.r_c = c.value("r_c", cfg.cbf.r_c);
    cfg.cbf.d_s = c.value("d_s", cfg.cbf.d_s);
    if (c.contains("theta_star")) cfg.cbf.theta_star = parse_angle(c["theta_star"], "cbf.theta_star");
    cfg.cbf.gamma_s = c.value("gamma_s", cfg.cbf.gamma_s);
    cfg.cbf.gamma_c = c.value("gamma_c", cfg.cbf.gamma_c);
    cfg.cbf.gamma_o = c.value("gamma_o", cfg.cbf.gamma_o);
    cfg.cbf.alpha_v = c.value("alpha_v", cfg.cbf.alpha_v);
    if (c.contains("alpha_omega")) cfg.cbf.alpha_omega = c["alpha_omega"].get<double>();
    cfg.cbf.z_floor = c.value("z_floor", cfg.cbf.z_floor);
    cfg.cbf.occlusion_sight_motion = c.value("occlusion_sight_motion", cfg.cbf.occlusion_sight_motion);
  }

  if (j.contains("target")) {
    const json& t = j["target"];
    if (t.contains("position")) cfg.target_position = parse_vec3(t["position"], "target.position");
    if (t.contains("heading")) cfg.target_heading = parse_angle(t["heading"], "target.heading");
    cfg.script.initial_heading = cfg.target_heading;
    if (t.contains("script")) {
      for (const json& seg : t["script"]) {
        ScriptSegment s;
        s.duration = seg.value("duration", 0.0);
        s.speed = seg.value("speed", 0.0);
        s.lateral_accel = seg.value("lateral_accel", 0.0);
        cfg.script.segments.push_back(s);
      }
    }
  }

  for (const json& o : j.value("obstacles", json::array())) {
    Obstacle box;
    box.center = parse_vec3(o.at("center"), "obstacle.center");
    if (o.contains("size")) box.half_extents = 0.5 * parse_vec3(o["size"], "obstacle.size");
    if ((box.half_extents.array() <= 0.0).any()) throw std::runtime_error("obstacle size must be positive");
    cfg.obstacles.push_back(box);
  }

  if (!j.contains("agents") || j["agents"].empty()) throw std::runtime_error("config needs at least one agent");
  for (const json& a : j["agents"]) {
    AgentConfig agent;
    agent.initial_position = parse_vec3(a.at("position"), "agent.position");
    if (a.contains("yaw")) agent.initial_yaw = parse_angle(a["yaw"], "agent.yaw");
    if (a.contains("reference")) {
      const json& r = a["reference"];
      agent.reference.x1 = r.value("x1", 0.0);
      agent.reference.x2 = r.value("x2", 0.0);
      agent.reference.x3 = r.value("x3", 1.0 / 7.0);
      if (r.contains("psi")) agent.reference.psi = parse_angle(r["psi"], "agent.reference.psi");
    }
    cfg.agents.push_back(agent);
  }

  // config gates
  if (cfg.duration <= 0.0 || cfg.dt <= 0.0) throw std::runtime_error("duration and dt must be positive");
  if (!(cfg.cbf.r_s < cfg.cbf.d_s && cfg.cbf.d_s <= cfg.cbf.r_c)) {
    throw std::runtime_error("CBF ranges must satisfy r_s < d_s <= r_c");
  }
  const double gate = gamma_s_lower_bound(cfg.cbf);
  if (cfg.cbf.gamma_s < gate) {
    throw std::runtime_error("gamma_s " + std::to_string(cfg.cbf.gamma_s) +
                             " below the feasibility bound " + std::to_string(gate));
  }
  for (const auto& agent : cfg.agents) {
    const Vec4 r = agent.reference.vec();
    for (int k = 0; k < 4; ++k) {
      if (r[k] < cfg.nmpc.s_lower[k] - 1e-12 || r[k] > cfg.nmpc.s_upper[k] + 1e-12) {
        throw std::runtime_error("agent reference outside the feature box");
      }
    }
  }
  return cfg;
}

ScenarioConfig load_scenario(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open config file: " + file.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario(buffer.str());
}

std::string canonical_json(const ScenarioConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  j["duration"] = cfg.duration;
  j["dt"] = cfg.dt;
  j["motion_window"] = cfg.motion_window;
  j["camera"] = {{"fx", cfg.camera.f_x}, {"fy", cfg.camera.f_y}, {"cu", cfg.camera.c_u},
                 {"cv", cfg.camera.c_v}, {"width", cfg.camera.width}, {"height", cfg.camera.height}};
  j["noise"] = {{"sigma_px", cfg.noise.sigma_px}, {"sigma_d", cfg.noise.sigma_d},
                {"sigma_psi", cfg.noise.sigma_psi}, {"sigma_gps", cfg.noise.sigma_gps}};
  j["ukf"] = {{"alpha", cfg.ukf_alpha}, {"beta", cfg.ukf_beta}, {"kappa", cfg.ukf_kappa}};
  j["nmpc"] = {{"horizon", cfg.nmpc.horizon}, {"dt", cfg.nmpc.dt},
               {"q_s", {cfg.nmpc.q_s[0], cfg.nmpc.q_s[1], cfg.nmpc.q_s[2], cfg.nmpc.q_s[3]}},
               {"r_u", {cfg.nmpc.r_u[0], cfg.nmpc.r_u[1], cfg.nmpc.r_u[2], cfg.nmpc.r_u[3]}},
               {"w_s", {cfg.nmpc.w_s[0], cfg.nmpc.w_s[1], cfg.nmpc.w_s[2], cfg.nmpc.w_s[3]}},
               {"s_lower", {cfg.nmpc.s_lower[0], cfg.nmpc.s_lower[1], cfg.nmpc.s_lower[2], cfg.nmpc.s_lower[3]}},
               {"s_upper", {cfg.nmpc.s_upper[0], cfg.nmpc.s_upper[1], cfg.nmpc.s_upper[2], cfg.nmpc.s_upper[3]}},
               {"u_lower", {cfg.nmpc.u_lower[0], cfg.nmpc.u_lower[1], cfg.nmpc.u_lower[2], cfg.nmpc.u_lower[3]}},
               {"u_upper", {cfg.nmpc.u_upper[0], cfg.nmpc.u_upper[1], cfg.nmpc.u_upper[2], cfg.nmpc.u_upper[3]}},
               {"max_iterations", cfg.nmpc.max_iterations}};
  j["cbf"] = {{"r_s", cfg.cbf.r_s}, {"r_c", cfg.cbf.r_c}, {"d_s", cfg.cbf.d_s},
              {"theta_star", cfg.cbf.theta_star}, {"gamma_s", cfg.cbf.gamma_s},
              {"gamma_c", cfg.cbf.gamma_c}, {"gamma_o", cfg.cbf.gamma_o},
              {"alpha_v", cfg.cbf.alpha_v}, {"alpha_omega", cfg.cbf.alpha_omega},
              {"z_floor", cfg.cbf.z_floor},
              {"occlusion_sight_motion", cfg.cbf.occlusion_sight_motion}};
  j["target"] = {{"position", {cfg.target_position.x(), cfg.target_position.y(), cfg.target_position.z()}},
                 {"heading", cfg.target_heading}};
  json script = json::array();
  for (const auto& seg : cfg.script.segments) {
    script.push_back({{"duration", seg.duration}, {"speed", seg.speed}, {"lateral_accel", seg.lateral_accel}});
  }
  j["target"]["script"] = script;
  json obstacles = json::array();
  for (const auto& o : cfg.obstacles) {
    obstacles.push_back({{"center", {o.center.x(), o.center.y(), o.center.z()}},
                         {"size", {2 * o.half_extents.x(), 2 * o.half_extents.y(), 2 * o.half_extents.z()}}});
  }
  j["obstacles"] = obstacles;
  json agents = json::array();
  for (const auto& a : cfg.agents) {
    agents.push_back({{"position", {a.initial_position.x(), a.initial_position.y(), a.initial_position.z()}},
                      {"yaw", a.initial_yaw},
                      {"reference", {{"x1", a.reference.x1}, {"x2", a.reference.x2},
                                     {"x3", a.reference.x3}, {"psi", a.reference.psi}}}});
  }
  j["agents"] = agents;
  return j.dump();
}

std::string config_hash(const ScenarioConfig& cfg) {
  const std::string text = canonical_json(cfg);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf).substr(0, 8);
}

std::pair<double, double> rms_pixel_errors(const std::vector<Detection>& detections,
                                           const FeatureState& reference,
                                           const CameraIntrinsics& k) {
  const double u_ref = k.f_x * reference.x1 + k.c_u;
  const double v_ref = k.f_y * reference.x2 + k.c_v;
  double su = 0.0, sv = 0.0;
  int count = 0;
  for (const auto& det : detections) {
    if (!det.valid) continue;
    su += (det.u - u_ref) * (det.u - u_ref);
    sv += (det.v - v_ref) * (det.v - v_ref);
    ++count;
  }
  if (count == 0) throw NoValidDetections();
  return {std::sqrt(su / count), std::sqrt(sv / count)};
}

std::string RunReport::to_json() const {
  json j;
  json agents_json = json::array();
  for (const auto& a : agents) {
    agents_json.push_back({{"rms_u", a.rms_u}, {"rms_v", a.rms_v},
                           {"valid_detections", a.valid_detections}, {"dropouts", a.dropouts},
                           {"nonconverged_solves", a.nonconverged_solves}});
  }
  j["agents"] = agents_json;
  j["min_pairwise_distance"] = min_pairwise_distance;
  j["max_pairwise_distance"] = max_pairwise_distance;
  j["min_obstacle_distance"] = min_obstacle_distance;
  j["min_occlusion_angle_deg"] = min_occlusion_angle * 180.0 / M_PI;
  json occl = json::array();
  for (const auto& row : occlusion_angle_matrix) {
    json r = json::array();
    for (double v : row) r.push_back(v * 180.0 / M_PI);
    occl.push_back(r);
  }
  j["occlusion_angle_matrix_deg"] = occl;
  j["min_slack"] = min_slack;
  j["infeasible_ticks"] = infeasible_ticks;
  j["ticks"] = ticks;
  j["aborted"] = aborted;
  j["abort_reason"] = abort_reason;
  j["audits"] = {{"collision", audit_collision}, {"connectivity", audit_connectivity},
                 {"obstacle", audit_obstacle}, {"occlusion", audit_occlusion},
                 {"slack", audit_slack}, {"feasible", audit_feasible},
                 {"all", all_audits()}};
  return j.dump(2);
}

namespace {

struct AgentRuntime {
  NoiseStream stream;
  TargetEstimator estimator;
  MotionWindow window;
  NmpcTracker tracker;
  std::vector<Detection> detections;
  ControlInput last_command;         // tracker output applied last tick (camera frame)
  ControlInputGlobal applied;        // filtered command for the world step
  Vec3 last_vq_cam = Vec3::Zero();
  FeatureState last_features;
  Mat3 last_r_cg = Mat3::Identity();
  bool has_prev = false;
  AgentReport report;

  AgentRuntime(std::uint64_t seed, const UkfConfig& ukf, const CameraIntrinsics& cam,
               const NmpcConfig& nmpc, double window_seconds)
      : stream(seed), estimator(ukf, cam), window(window_seconds), tracker(nmpc) {}
};

class Logs {
 public:
  explicit Logs(const std::optional<std::filesystem::path>& dir) {
    if (!dir) return;
    std::filesystem::create_directories(*dir);
    open(detections, *dir / "detections.csv", "t,agent,valid,u,v,d,psi,rcx,rcy,rcz");
    open(estimates, *dir / "estimates.csv",
         "t,agent,x1,x2,x3,psi,rqx,rqy,rqz,vqx,vqy,vqz,trace_p,clamped");
    open(nmpc, *dir / "nmpc.csv", "t,agent,cost,iterations,converged,u_vcx,u_vcy,u_vcz,u_wcy,eps1,eps2,eps3,eps4");
    open(constraints, *dir / "constraints.csv", "t,agent,kind,partner,h,b,slack");
    open(filter, *dir / "filter.csv", "t,agent,du_norm,status,min_slack_safety,min_slack_conn,min_slack_occl");
    open(world, *dir / "world.csv", "t,agent,px,py,pz,yaw,tx,ty,tz,theading");
    open(pairwise, *dir / "pairwise_distances.csv", "t,agent_i,agent_j,distance");
    open(obstacle, *dir / "obstacle_distances.csv", "t,agent,obstacle,distance");
    open(occlusion, *dir / "occlusion_angles.csv", "t,agent,obstacle,theta_deg,considered");
    open(depth, *dir / "depth_errors.csv", "t,agent,d_true,d_est,d_ref");
    open(image, *dir / "features_image.csv", "t,agent,u,v,u_ref,v_ref");
    enabled = true;
  }

  bool enabled = false;
  std::ofstream detections, estimates, nmpc, constraints, filter, world, pairwise, obstacle,
      occlusion, depth, image;

 private:
  static void open(std::ofstream& f, const std::filesystem::path& p, const std::string& header) {
    f.open(p, std::ios::trunc);
    f << header << "\n";
  }
};

}  // namespace

RunReport run_scenario(const ScenarioConfig& cfg, const RunOptions& options) {
  const double dt = cfg.dt;
  const int ticks = static_cast<int>(std::llround(cfg.duration / dt));
  const int n_agents = static_cast<int>(cfg.agents.size());
  const int n_obstacles = static_cast<int>(cfg.obstacles.size());

  WorldState world;
  world.time = 0.0;
  world.obstacles = cfg.obstacles;
  world.target.position = cfg.target_position;
  world.target.heading = cfg.target_heading;
  world.target.velocity = Vec3::Zero();
  for (const auto& a : cfg.agents) world.agents.push_back(AgentState::at(a.initial_position, a.initial_yaw));

  UkfConfig ukf = UkfConfig::defaults(cfg.noise, dt);
  ukf.alpha = cfg.ukf_alpha;
  ukf.beta = cfg.ukf_beta;
  ukf.kappa = cfg.ukf_kappa;

  std::vector<AgentRuntime> agents;
  agents.reserve(static_cast<std::size_t>(n_agents));
  for (int i = 0; i < n_agents; ++i) {
    NmpcConfig nmpc = cfg.nmpc;
    nmpc.reference = cfg.agents[static_cast<std::size_t>(i)].reference;
    const std::uint64_t seed = cfg.seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(i + 1));
    agents.emplace_back(seed, ukf, cfg.camera, nmpc, cfg.motion_window);
  }

  Logs logs(options.out_dir);

  RunReport report;
  report.agents.resize(static_cast<std::size_t>(n_agents));
  report.min_pairwise_distance = n_agents > 1 ? 1e9 : 0.0;
  report.max_pairwise_distance = 0.0;
  report.min_obstacle_distance = n_obstacles > 0 ? 1e9 : 0.0;
  report.min_occlusion_angle = M_PI;
  report.occlusion_angle_matrix.assign(static_cast<std::size_t>(n_agents),
                                       std::vector<double>(static_cast<std::size_t>(n_obstacles), M_PI));
  report.min_slack = 1e9;
  report.ticks = ticks;

  bool occlusion_ok = true;
  const double occl_floor = cfg.cbf.theta_star - kAuditAngleTolDeg * M_PI / 180.0;

  auto audit_tick = [&](double t) {
    const std::string ts = fmt_time(t);
    for (int i = 0; i < n_agents; ++i) {
      const Vec3& p_i = world.agents[static_cast<std::size_t>(i)].p;
      for (int jj = i + 1; jj < n_agents; ++jj) {
        const double dist = (p_i - world.agents[static_cast<std::size_t>(jj)].p).norm();
        report.min_pairwise_distance = std::min(report.min_pairwise_distance, dist);
        report.max_pairwise_distance = std::max(report.max_pairwise_distance, dist);
        if (logs.enabled) logs.pairwise << ts << ',' << i << ',' << jj << ',' << fmt(dist) << "\n";
      }
      const Vec3 sight = world.target.position - p_i;
      const double range = sight.norm();
      for (int o = 0; o < n_obstacles; ++o) {
        const Vec3& center = cfg.obstacles[static_cast<std::size_t>(o)].center;
        const double dist = (center - p_i).norm();
        report.min_obstacle_distance = std::min(report.min_obstacle_distance, dist);
        const bool considered = dist <= range;
        double theta = M_PI;
        if (range > 1e-9 && dist > 1e-9) theta = occlusion_angle(p_i, center, sight);
        if (considered) {
          auto& cell = report.occlusion_angle_matrix[static_cast<std::size_t>(i)][static_cast<std::size_t>(o)];
          cell = std::min(cell, theta);
          report.min_occlusion_angle = std::min(report.min_occlusion_angle, theta);
          if (theta < occl_floor) occlusion_ok = false;
        }
        if (logs.enabled) {
          logs.obstacle << ts << ',' << i << ',' << o << ',' << fmt(dist) << "\n";
          logs.occlusion << ts << ',' << i << ',' << o << ',' << fmt(theta * 180.0 / M_PI) << ','
                         << (considered ? 1 : 0) << "\n";
        }
      }
      if (logs.enabled) {
        const AgentState& a = world.agents[static_cast<std::size_t>(i)];
        logs.world << ts << ',' << i << ',' << fmt(a.p.x()) << ',' << fmt(a.p.y()) << ','
                   << fmt(a.p.z()) << ',' << fmt(a.yaw) << ',' << fmt(world.target.position.x())
                   << ',' << fmt(world.target.position.y()) << ',' << fmt(world.target.position.z())
                   << ',' << fmt(world.target.heading) << "\n";
      }
    }
  };

  for (int tick = 0; tick < ticks && !report.aborted; ++tick) {
    const double t = tick * dt;
    const std::string ts = fmt_time(t);
    audit_tick(t);

    std::vector<Vec3> positions;
    positions.reserve(static_cast<std::size_t>(n_agents));
    for (const auto& a : world.agents) positions.push_back(a.p);

    for (int i = 0; i < n_agents && !report.aborted; ++i) {
      AgentRuntime& agent = agents[static_cast<std::size_t>(i)];
      const AgentState& state = world.agents[static_cast<std::size_t>(i)];
      try {
        const Detection det = detect(world, i, cfg.camera, cfg.noise, agent.stream);
        agent.detections.push_back(det);
        if (det.valid) {
          ++agent.report.valid_detections;
        } else {
          ++agent.report.dropouts;
        }
        if (logs.enabled) {
          logs.detections << ts << ',' << i << ',' << (det.valid ? 1 : 0) << ',' << fmt(det.u) << ','
                          << fmt(det.v) << ',' << fmt(det.d) << ',' << fmt(det.psi) << ','
                          << fmt(det.r_c.x()) << ',' << fmt(det.r_c.y()) << ',' << fmt(det.r_c.z())
                          << "\n";
        }

        if (!agent.estimator.initialized()) {
          if (!det.valid) {
            agent.applied = ControlInputGlobal{};
            continue;
          }
          agent.estimator.init_from_detection(det, state.r_cg);
        } else {
          const ControlInput applied_cam{
              (agent.last_r_cg.transpose() * agent.applied.v).x(),
              (agent.last_r_cg.transpose() * agent.applied.v).y(),
              (agent.last_r_cg.transpose() * agent.applied.v).z(),
              (agent.last_r_cg.transpose() * agent.applied.omega).y()};
          agent.estimator.step(applied_cam, agent.last_r_cg, det, state.r_cg, dt);
        }

        const EstimatorState est = agent.estimator.state();
        agent.window.push(t, est.target_position, est.target_velocity);
        if (logs.enabled) {
          logs.estimates << ts << ',' << i << ',' << fmt(est.features.x1) << ',' << fmt(est.features.x2)
                         << ',' << fmt(est.features.x3) << ',' << fmt(est.features.psi) << ','
                         << fmt(est.target_position.x()) << ',' << fmt(est.target_position.y()) << ','
                         << fmt(est.target_position.z()) << ',' << fmt(est.target_velocity.x()) << ','
                         << fmt(est.target_velocity.y()) << ',' << fmt(est.target_velocity.z()) << ','
                         << fmt(est.covariance.trace()) << ',' << (agent.estimator.clamped_last_step() ? 1 : 0)
                         << "\n";
          const double d_true = (world.target.position - state.p).norm();
          const double d_est = range_from_features(est.features);
          const FeatureState& ref = cfg.agents[static_cast<std::size_t>(i)].reference;
          logs.depth << ts << ',' << i << ',' << fmt(d_true) << ',' << fmt(d_est) << ','
                     << fmt(range_from_features(ref)) << "\n";
          if (det.valid) {
            logs.image << ts << ',' << i << ',' << fmt(det.u) << ',' << fmt(det.v) << ','
                       << fmt(cfg.camera.f_x * ref.x1 + cfg.camera.c_u) << ','
                       << fmt(cfg.camera.f_y * ref.x2 + cfg.camera.c_v) << "\n";
          }
        }

        const MotionWindow::Fit fit = agent.window.fit();
        const Vec3 vq_cam = state.r_cg.transpose() * fit.velocity;
        const Vec3 gamma_cam = state.r_cg.transpose() * fit.acceleration;

        const FeatureState s_ukf = agent.estimator.features();
        FeatureState s_model = s_ukf;
        if (agent.has_prev) {
          const Vec4 stepped = agent.last_features.vec() +
                               dt * reduced_dynamics(agent.last_features, agent.last_command,
                                                     agent.last_vq_cam);
          s_model = FeatureState::from_vec(stepped);
        }
        const ErrorCompensation comp =
            compensate_error(s_ukf, s_model, cfg.agents[static_cast<std::size_t>(i)].reference);

        const ControlInput u_d0{vq_cam.x(), vq_cam.y(), vq_cam.z(), 0.0};
        const OcpSolution sol = agent.tracker.solve(s_ukf, comp.desired, u_d0, gamma_cam);
        if (!sol.converged) ++agent.report.nonconverged_solves;
        if (logs.enabled) {
          const Vec4 u0 = sol.controls.front().vec();
          logs.nmpc << ts << ',' << i << ',' << fmt(sol.cost) << ',' << sol.iterations << ','
                    << (sol.converged ? 1 : 0) << ',' << fmt(u0[0]) << ',' << fmt(u0[1]) << ','
                    << fmt(u0[2]) << ',' << fmt(u0[3]) << ',' << fmt(comp.error[0]) << ','
                    << fmt(comp.error[1]) << ',' << fmt(comp.error[2]) << ',' << fmt(comp.error[3])
                    << "\n";
        }

        const ControlInputGlobal u_hat = augment(sol.controls.front(), state.r_cg);
        const Vec3 sight = est.target_position - state.p;
        const double target_range = range_from_features(s_ukf);
        const std::vector<HalfspaceConstraint> rows = build_constraints(
            positions, i, cfg.obstacles, sight, est.target_velocity, target_range, cfg.cbf);
        const FilterResult fres = filter_control(u_hat, rows, cfg.cbf);
        if (fres.status != QpStatus::solved) ++report.infeasible_ticks;

        double min_slack_kind[3] = {1e9, 1e9, 1e9};
        for (std::size_t r = 0; r < rows.size(); ++r) {
          const double slack = fres.slacks[static_cast<Eigen::Index>(r)];
          report.min_slack = std::min(report.min_slack, slack);
          min_slack_kind[static_cast<int>(rows[r].kind)] =
              std::min(min_slack_kind[static_cast<int>(rows[r].kind)], slack);
          if (logs.enabled) {
            logs.constraints << ts << ',' << i << ',' << to_string(rows[r].kind) << ','
                             << rows[r].partner << ',' << fmt(rows[r].h) << ',' << fmt(rows[r].b)
                             << ',' << fmt(slack) << "\n";
          }
        }
        if (logs.enabled) {
          logs.filter << ts << ',' << i << ',' << fmt(fres.deviation) << ','
                      << (fres.status == QpStatus::solved ? "ok" : "infeasible");
          for (int kind = 0; kind < 3; ++kind) {
            logs.filter << ',';
            if (min_slack_kind[kind] < 1e9) logs.filter << fmt(min_slack_kind[kind]);
          }
          logs.filter << "\n";
        }

        agent.applied = fres.u;
        agent.last_command = sol.controls.front();
        agent.last_vq_cam = vq_cam;
        agent.last_features = s_ukf;
        agent.has_prev = true;
      } catch (const std::exception& e) {
        report.aborted = true;
        report.abort_reason = "tick " + std::to_string(tick) + " agent " + std::to_string(i) + ": " + e.what();
      }
      agents[static_cast<std::size_t>(i)].last_r_cg = state.r_cg;
    }
    if (report.aborted) break;

    for (int i = 0; i < n_agents; ++i) {
      world.agents[static_cast<std::size_t>(i)] =
          step_agent(world.agents[static_cast<std::size_t>(i)], agents[static_cast<std::size_t>(i)].applied, dt);
    }
    world.target = step_target(world.target, t, dt, cfg.script);
    world.time = (tick + 1) * dt;
  }
  if (!report.aborted) audit_tick(world.time);

  for (int i = 0; i < n_agents; ++i) {
    AgentRuntime& agent = agents[static_cast<std::size_t>(i)];
    try {
      const auto [ru, rv] =
          rms_pixel_errors(agent.detections, cfg.agents[static_cast<std::size_t>(i)].reference, cfg.camera);
      agent.report.rms_u = ru;
      agent.report.rms_v = rv;
    } catch (const NoValidDetections&) {
      agent.report.rms_u = agent.report.rms_v = -1.0;
    }
    report.agents[static_cast<std::size_t>(i)] = agent.report;
  }

  const double tol = kAuditDistanceTol;
  report.audit_collision = n_agents < 2 || report.min_pairwise_distance >= cfg.cbf.r_s - tol;
  report.audit_connectivity = n_agents < 2 || report.max_pairwise_distance <= cfg.cbf.r_c + tol;
  report.audit_obstacle = n_obstacles == 0 || report.min_obstacle_distance >= cfg.cbf.r_s - tol;
  report.audit_occlusion = occlusion_ok;
  report.audit_slack = report.min_slack >= -1e-8 || report.min_slack == 1e9;
  report.audit_feasible = report.infeasible_ticks == 0;

  if (options.out_dir) {
    std::ofstream out(*options.out_dir / "report.json", std::ios::trunc);
    out << report.to_json() << "\n";
  }
  return report;
}

}  // namespace uavtrack
