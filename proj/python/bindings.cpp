#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "uavtrack/barriers.hpp"
#include "uavtrack/qp.hpp"
#include "uavtrack/safety_filter.hpp"
#include "uavtrack/scenario.hpp"
#include "uavtrack/tracker.hpp"

namespace py = pybind11;
using namespace uavtrack;

namespace {

py::dict row_to_dict(const HalfspaceConstraint& c) {
  py::dict d;
  d["a"] = Vec6(c.a);
  d["b"] = c.b;
  d["h"] = c.h;
  d["kind"] = std::string(to_string(c.kind));
  d["partner"] = c.partner;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "multi-UAV visual target tracking: feature geometry, estimation, "
            "receding-horizon tracking and barrier-constrained safety filtering";

  py::class_<FeatureState>(m, "FeatureState")
      .def(py::init<>())
      .def(py::init([](double x1, double x2, double x3, double psi) {
             return FeatureState{x1, x2, x3, psi};
           }),
           py::arg("x1"), py::arg("x2"), py::arg("x3"), py::arg("psi") = 0.0)
      .def_readwrite("x1", &FeatureState::x1)
      .def_readwrite("x2", &FeatureState::x2)
      .def_readwrite("x3", &FeatureState::x3)
      .def_readwrite("psi", &FeatureState::psi)
      .def("__repr__", [](const FeatureState& s) {
        return "FeatureState(x1=" + std::to_string(s.x1) + ", x2=" + std::to_string(s.x2) +
               ", x3=" + std::to_string(s.x3) + ", psi=" + std::to_string(s.psi) + ")";
      });

  py::class_<CbfParams>(m, "CbfParams")
      .def(py::init<>())
      .def_readwrite("r_s", &CbfParams::r_s)
      .def_readwrite("r_c", &CbfParams::r_c)
      .def_readwrite("d_s", &CbfParams::d_s)
      .def_readwrite("theta_star", &CbfParams::theta_star)
      .def_readwrite("gamma_s", &CbfParams::gamma_s)
      .def_readwrite("gamma_c", &CbfParams::gamma_c)
      .def_readwrite("gamma_o", &CbfParams::gamma_o)
      .def_readwrite("alpha_v", &CbfParams::alpha_v)
      .def_readwrite("alpha_omega", &CbfParams::alpha_omega)
      .def_readwrite("z_floor", &CbfParams::z_floor);

  m.def("wrap_angle", &wrap_angle, py::arg("angle"));
  m.def(
      "features_from_relative",
      [](const Vec3& r) { return features_from_relative({r.x(), r.y(), r.z()}); },
      py::arg("relative_position"), "Image features (x1, x2, x3) of a camera-frame point.");
  m.def("range_from_features", &range_from_features, py::arg("features"));
  m.def("relative_angle", &relative_angle, py::arg("p_camera"), py::arg("p_target"),
        py::arg("v_target"));
  m.def("hat", &hat, py::arg("w"), "Skew-symmetric cross-product matrix.");
  m.def("camera_rotation_from_yaw", &camera_rotation_from_yaw, py::arg("yaw"));

  m.def("gamma_s_lower_bound", &gamma_s_lower_bound, py::arg("params"));
  m.def("occlusion_angle", &occlusion_angle, py::arg("p_agent"), py::arg("p_obstacle"),
        py::arg("sight"));
  m.def(
      "collision_constraint",
      [](const Vec3& p_i, const Vec3& p_j, const CbfParams& params) {
        return row_to_dict(collision_constraint(p_i, p_j, params));
      },
      py::arg("p_i"), py::arg("p_j"), py::arg("params"));
  m.def(
      "connectivity_constraint",
      [](const Vec3& p_i, const Vec3& p_j, const CbfParams& params) {
        return row_to_dict(connectivity_constraint(p_i, p_j, params));
      },
      py::arg("p_i"), py::arg("p_j"), py::arg("params"));
  m.def(
      "occlusion_constraint",
      [](const Vec3& p_i, const Vec3& p_o, const Vec3& sight, const CbfParams& params) {
        return row_to_dict(occlusion_constraint(p_i, p_o, sight, -1, params).row);
      },
      py::arg("p_i"), py::arg("p_obstacle"), py::arg("sight"), py::arg("params"));

  m.def(
      "reduced_dynamics",
      [](const FeatureState& s, const Vec4& u, const Vec3& v_q_cam) {
        return reduced_dynamics(s, ControlInput::from_vec(u), v_q_cam);
      },
      py::arg("features"), py::arg("control"), py::arg("target_velocity_cam"),
      "Continuous feature derivative under a camera command (vx, vy, vz, pan rate).");

  m.def(
      "solve_qp",
      [](const Eigen::MatrixXd& h, const Eigen::VectorXd& g, const Eigen::MatrixXd& a,
         const Eigen::VectorXd& b, const Eigen::VectorXd& lb, const Eigen::VectorXd& ub) {
        const QpSolution sol = solve_qp({h, g, a, b, lb, ub});
        py::dict d;
        d["x"] = sol.x;
        d["status"] = sol.status == QpStatus::solved
                          ? "solved"
                          : (sol.status == QpStatus::infeasible ? "infeasible" : "iteration_limit");
        d["slack"] = sol.slack;
        d["iterations"] = sol.iterations;
        return d;
      },
      py::arg("h"), py::arg("g"), py::arg("a") = Eigen::MatrixXd(0, 0),
      py::arg("b") = Eigen::VectorXd(0), py::arg("lb") = Eigen::VectorXd(0),
      py::arg("ub") = Eigen::VectorXd(0),
      "Minimize 1/2 x'Hx + g'x subject to Ax <= b and lb <= x <= ub.");

  m.def(
      "run_scenario",
      [](const std::string& config_json, py::object out_dir) {
        const ScenarioConfig cfg = parse_scenario(config_json);
        RunOptions options;
        if (!out_dir.is_none()) options.out_dir = out_dir.cast<std::string>();
        return run_scenario(cfg, options).to_json();
      },
      py::arg("config_json"), py::arg("out_dir") = py::none(),
      "Run a scenario from JSON text; returns the run report as a JSON string.");

  m.def("config_hash",
        [](const std::string& config_json) { return config_hash(parse_scenario(config_json)); });
}
