#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "uavtrack/scenario.hpp"

namespace {

using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// dotted path override on the raw config document, e.g. cbf.gamma_o=0.5
void apply_override(json& j, const std::string& path, double value) {
  json* node = &j;
  std::stringstream keys(path);
  std::string key;
  std::vector<std::string> parts;
  while (std::getline(keys, key, '.')) parts.push_back(key);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &((*node)[parts[i]]);
  (*node)[parts.back()] = value;
}

void print_report(const uavtrack::RunReport& report) {
  std::printf("%-8s %12s %12s %8s %8s %8s\n", "agent", "rms_u[px]", "rms_v[px]", "valid", "dropout",
              "nonconv");
  for (std::size_t i = 0; i < report.agents.size(); ++i) {
    const auto& a = report.agents[i];
    std::printf("%-8zu %12.3f %12.3f %8d %8d %8d\n", i, a.rms_u, a.rms_v, a.valid_detections,
                a.dropouts, a.nonconverged_solves);
  }
  std::printf("pairwise distance [m]   : min %.4f  max %.4f\n", report.min_pairwise_distance,
              report.max_pairwise_distance);
  std::printf("obstacle distance [m]   : min %.4f\n", report.min_obstacle_distance);
  std::printf("occlusion angle [deg]   : min %.3f\n", report.min_occlusion_angle * 180.0 / M_PI);
  std::printf("constraint slack        : min %.6g\n", report.min_slack);
  std::printf("infeasible ticks        : %d\n", report.infeasible_ticks);
  if (report.aborted) std::printf("ABORTED: %s\n", report.abort_reason.c_str());
  std::printf("audits: collision=%s connectivity=%s obstacle=%s occlusion=%s slack=%s feasible=%s -> %s\n",
              report.audit_collision ? "pass" : "FAIL", report.audit_connectivity ? "pass" : "FAIL",
              report.audit_obstacle ? "pass" : "FAIL", report.audit_occlusion ? "pass" : "FAIL",
              report.audit_slack ? "pass" : "FAIL", report.audit_feasible ? "pass" : "FAIL",
              report.all_audits() ? "PASS" : "FAIL");
}

uavtrack::RunReport run_one(json doc, std::uint64_t seed, double duration, const std::string& out_base,
                            bool quiet = false) {
  if (seed != static_cast<std::uint64_t>(-1)) doc["seed"] = seed;
  if (duration > 0.0) doc["duration"] = duration;
  const uavtrack::ScenarioConfig cfg = uavtrack::parse_scenario(doc.dump());

  uavtrack::RunOptions options;
  const std::string run_dir =
      out_base + "/" + uavtrack::config_hash(cfg) + "-s" + std::to_string(cfg.seed);
  options.out_dir = run_dir;
  const uavtrack::RunReport report = uavtrack::run_scenario(cfg, options);
  if (!quiet) {
    std::printf("run dir: %s\n", run_dir.c_str());
    print_report(report);
  }
  return report;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-UAV visual tracking simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_base = "runs";
  std::uint64_t seed = static_cast<std::uint64_t>(-1);
  double duration = -1.0;

  CLI::App* cmd_run = app.add_subcommand("run", "run a scenario and audit the result");
  cmd_run->add_option("config", config_path, "scenario config (JSON)")->required();
  cmd_run->add_option("--seed", seed, "override the config seed");
  cmd_run->add_option("--duration", duration, "override the duration, seconds");
  cmd_run->add_option("--out", out_base, "base directory for run outputs");

  std::string sweep_param;
  std::vector<double> sweep_values;
  CLI::App* cmd_sweep = app.add_subcommand("sweep", "rerun a scenario over a parameter sweep");
  cmd_sweep->add_option("config", config_path, "scenario config (JSON)")->required();
  cmd_sweep->add_option("--param", sweep_param, "dotted config path, e.g. cbf.gamma_o")->required();
  cmd_sweep->add_option("--values", sweep_values, "comma separated values")->required()->delimiter(',');
  cmd_sweep->add_option("--seed", seed, "override the config seed");
  cmd_sweep->add_option("--duration", duration, "override the duration, seconds");
  cmd_sweep->add_option("--out", out_base, "base directory for run outputs");

  std::string run_dir;
  CLI::App* cmd_report = app.add_subcommand("report", "print the report of a finished run");
  cmd_report->add_option("run_dir", run_dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_run->parsed()) {
      const json doc = json::parse(read_file(config_path));
      const uavtrack::RunReport report = run_one(doc, seed, duration, out_base);
      return report.all_audits() ? 0 : 1;
    }
    if (cmd_sweep->parsed()) {
      const json doc = json::parse(read_file(config_path));
      bool all_ok = true;
      std::printf("%-14s %-22s %-8s\n", sweep_param.c_str(), "min_occl_margin[deg]", "audits");
      for (double value : sweep_values) {
        json variant = doc;
        apply_override(variant, sweep_param, value);
        const uavtrack::RunReport report = run_one(variant, seed, duration, out_base, true);
        const double margin = report.min_occlusion_angle * 180.0 / M_PI;
        std::printf("%-14g %-22.4f %-8s\n", value, margin, report.all_audits() ? "PASS" : "FAIL");
        all_ok = all_ok && report.all_audits();
      }
      return all_ok ? 0 : 1;
    }
    if (cmd_report->parsed()) {
      const json j = json::parse(read_file(run_dir + "/report.json"));
      uavtrack::RunReport report;
      for (const auto& a : j.at("agents")) {
        uavtrack::AgentReport ar;
        ar.rms_u = a.at("rms_u").get<double>();
        ar.rms_v = a.at("rms_v").get<double>();
        ar.valid_detections = a.at("valid_detections").get<int>();
        ar.dropouts = a.at("dropouts").get<int>();
        ar.nonconverged_solves = a.at("nonconverged_solves").get<int>();
        report.agents.push_back(ar);
      }
      report.min_pairwise_distance = j.at("min_pairwise_distance").get<double>();
      report.max_pairwise_distance = j.at("max_pairwise_distance").get<double>();
      report.min_obstacle_distance = j.at("min_obstacle_distance").get<double>();
      report.min_occlusion_angle = j.at("min_occlusion_angle_deg").get<double>() * M_PI / 180.0;
      report.min_slack = j.at("min_slack").get<double>();
      report.infeasible_ticks = j.at("infeasible_ticks").get<int>();
      report.ticks = j.at("ticks").get<int>();
      report.aborted = j.at("aborted").get<bool>();
      report.abort_reason = j.at("abort_reason").get<std::string>();
      const auto& audits = j.at("audits");
      report.audit_collision = audits.at("collision").get<bool>();
      report.audit_connectivity = audits.at("connectivity").get<bool>();
      report.audit_obstacle = audits.at("obstacle").get<bool>();
      report.audit_occlusion = audits.at("occlusion").get<bool>();
      report.audit_slack = audits.at("slack").get<bool>();
      report.audit_feasible = audits.at("feasible").get<bool>();
      print_report(report);
      std::printf("machine summary: %s\n", j.dump().c_str());
      return report.all_audits() ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
