#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "uavtrack/scenario.hpp"

using namespace uavtrack;

namespace {

std::string mini_config(double sigma_px = 0.0, const char* psi2 = "90 deg") {
  std::ostringstream cfg;
  cfg << R"({
    "name": "mini",
    "duration": 2.0,
    "seed": 5,
    "noise": {"sigma_px": )"
      << sigma_px << R"(, "sigma_d": 0.0, "sigma_psi": 0.0, "sigma_gps": 0.0},
    "target": {"position": [0, 0, 0], "heading": 0,
               "script": [{"duration": 10, "speed": 0.5, "lateral_accel": 0}]},
    "agents": [
      {"position": [0, 6, 1.3], "yaw": "-90 deg",
       "reference": {"x1": 0, "x2": 0.188, "x3": 0.142857142857143, "psi": ")"
      << psi2 << R"("}},
      {"position": [0, -6, 1.3], "yaw": "90 deg",
       "reference": {"x1": 0, "x2": 0.188, "x3": 0.142857142857143, "psi": "-90 deg"}}
    ]
  })";
  return cfg.str();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing: angles, defaults, and validation") {
  const ScenarioConfig cfg = parse_scenario(mini_config());
  CHECK(cfg.agents.size() == 2);
  CHECK(cfg.agents[0].initial_yaw == doctest::Approx(-M_PI / 2));
  CHECK(cfg.agents[0].reference.psi == doctest::Approx(M_PI / 2));
  CHECK(cfg.dt == doctest::Approx(1.0 / 80.0));
  CHECK(cfg.cbf.r_s == 2.0);        // Table defaults apply when omitted
  CHECK(cfg.nmpc.horizon == 50);
  CHECK(cfg.nmpc.q_s[2] == 100.0);

  CHECK_THROWS(parse_scenario("{\"agents\": []}"));
  // gamma_s below the feasibility gate is rejected at load
  std::string bad = mini_config();
  bad.insert(bad.rfind('}'), R"(, "cbf": {"gamma_s": 0.01})");
  CHECK_THROWS_WITH_AS(parse_scenario(bad), doctest::Contains("feasibility"), std::runtime_error);
  // reference outside the feature box is rejected
  std::string out_of_box = mini_config(0.0, "90 deg");
  out_of_box.replace(out_of_box.find("\"x1\": 0"), 7, "\"x1\": 2");
  CHECK_THROWS_WITH_AS(parse_scenario(out_of_box), doctest::Contains("reference"), std::runtime_error);
}

TEST_CASE("config hash is stable and sensitive") {
  const ScenarioConfig a = parse_scenario(mini_config());
  const ScenarioConfig b = parse_scenario(mini_config());
  CHECK(config_hash(a) == config_hash(b));
  const ScenarioConfig c = parse_scenario(mini_config(2.0));
  CHECK(config_hash(a) != config_hash(c));
  CHECK(config_hash(a).size() == 8);
}

TEST_CASE("rms pixel errors") {
  const CameraIntrinsics k;
  const FeatureState ref{0.0, 0.188, 1.0 / 7.0, 0.0};
  const double u_ref = k.f_x * ref.x1 + k.c_u;
  const double v_ref = k.f_y * ref.x2 + k.c_v;

  SUBCASE("all at the reference") {
    std::vector<Detection> dets(5);
    for (auto& d : dets) {
      d.valid = true;
      d.u = u_ref;
      d.v = v_ref;
    }
    const auto [ru, rv] = rms_pixel_errors(dets, ref, k);
    CHECK(ru == 0.0);
    CHECK(rv == 0.0);
  }
  SUBCASE("constant offset") {
    std::vector<Detection> dets(7);
    for (auto& d : dets) {
      d.valid = true;
      d.u = u_ref + 3.0;
      d.v = v_ref;
    }
    const auto [ru, rv] = rms_pixel_errors(dets, ref, k);
    CHECK(ru == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(rv == 0.0);
  }
  SUBCASE("hand-computed mixed sequence") {
    std::vector<Detection> dets(3);
    const double du[3] = {1.0, -2.0, 2.0};
    const double dv[3] = {0.5, 0.5, -1.0};
    for (int i = 0; i < 3; ++i) {
      dets[static_cast<std::size_t>(i)].valid = true;
      dets[static_cast<std::size_t>(i)].u = u_ref + du[i];
      dets[static_cast<std::size_t>(i)].v = v_ref + dv[i];
    }
    dets.push_back(Detection{});  // invalid ones are skipped
    const auto [ru, rv] = rms_pixel_errors(dets, ref, k);
    CHECK(ru == doctest::Approx(std::sqrt((1.0 + 4.0 + 4.0) / 3.0)).epsilon(1e-12));
    CHECK(rv == doctest::Approx(std::sqrt((0.25 + 0.25 + 1.0) / 3.0)).epsilon(1e-12));
  }
  SUBCASE("no valid detections") {
    std::vector<Detection> dets(2);
    CHECK_THROWS_AS(rms_pixel_errors(dets, ref, k), NoValidDetections);
  }
}

TEST_CASE("mini closed-loop run passes its audits and converges") {
  const ScenarioConfig cfg = parse_scenario(mini_config());
  const RunReport report = run_scenario(cfg);
  CHECK_FALSE(report.aborted);
  CHECK(report.all_audits());
  CHECK(report.agents[0].valid_detections > 100);
  CHECK(report.infeasible_ticks == 0);
  // two agents 12 m apart, tracking the same target from opposite sides
  CHECK(report.min_pairwise_distance > 2.0);
  CHECK(report.max_pairwise_distance < 20.0);
}

TEST_CASE("replays are byte-identical for a fixed config and seed") {
  const ScenarioConfig cfg = parse_scenario(mini_config(2.0));
  const std::filesystem::path base = std::filesystem::temp_directory_path() / "uavtrack_replay";
  std::filesystem::remove_all(base);

  RunOptions first, second;
  first.out_dir = base / "a";
  second.out_dir = base / "b";
  (void)run_scenario(cfg, first);
  (void)run_scenario(cfg, second);

  for (const char* file :
       {"detections.csv", "estimates.csv", "nmpc.csv", "constraints.csv", "filter.csv",
        "world.csv", "report.json"}) {
    CAPTURE(file);
    CHECK(slurp(base / "a" / file) == slurp(base / "b" / file));
    CHECK(slurp(base / "a" / file).size() > 0);
  }
  std::filesystem::remove_all(base);
}

TEST_CASE("audit quantities recompute from the ground-truth log") {
  const ScenarioConfig cfg = parse_scenario(mini_config());
  const std::filesystem::path dir = std::filesystem::temp_directory_path() / "uavtrack_audit";
  std::filesystem::remove_all(dir);
  RunOptions options;
  options.out_dir = dir;
  const RunReport report = run_scenario(cfg, options);
  REQUIRE_FALSE(report.aborted);

  // recompute the pairwise minimum from world.csv alone
  std::ifstream in(dir / "world.csv");
  std::string line;
  std::getline(in, line);  // header
  double min_dist = 1e9, max_dist = 0.0;
  std::string current_t;
  std::vector<Vec3> positions;
  auto flush = [&] {
    for (std::size_t i = 0; i < positions.size(); ++i) {
      for (std::size_t j = i + 1; j < positions.size(); ++j) {
        const double d = (positions[i] - positions[j]).norm();
        min_dist = std::min(min_dist, d);
        max_dist = std::max(max_dist, d);
      }
    }
    positions.clear();
  };
  while (std::getline(in, line)) {
    std::stringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells[0] != current_t) {
      flush();
      current_t = cells[0];
    }
    positions.emplace_back(std::stod(cells[2]), std::stod(cells[3]), std::stod(cells[4]));
  }
  flush();
  CHECK(min_dist == doctest::Approx(report.min_pairwise_distance).epsilon(1e-6));
  CHECK(max_dist == doctest::Approx(report.max_pairwise_distance).epsilon(1e-6));
  std::filesystem::remove_all(dir);
}
