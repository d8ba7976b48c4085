#include "procam/bench.hpp"
#include "procam/debruijn.hpp"
#include "procam/geometry.hpp"
#include "procam/io.hpp"
#include "procam/pipeline.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace procam;

namespace {

SceneConfig scene(std::uint64_t seed, int poses) {
  SceneConfig cfg;
  cfg.seed = seed;
  cfg.pose_count = poses;
  cfg.validate();
  return cfg;
}

// JSON crosses the boundary as text; the Python side parses it.
std::string synthesize_captures(std::uint64_t seed, int poses, double sigma) {
  const SceneConfig cfg = scene(seed, poses);
  const GroundTruthScene s = generate_scene(cfg);
  CaptureFile file;
  file.board = cfg.board;
  file.poses = sigma > 0 ? add_noise(s, sigma, noise_seed(seed, 0, 0)).captures : scene_captures(s);
  return captures_to_json(file).dump();
}

std::string calibrate(const std::string& captures, bool skip_ba) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(captures);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("", std::string("malformed JSON: ") + e.what());
  }
  const CaptureFile file = parse_captures(doc);
  PipelineOptions opts;
  opts.skip_ba = skip_ba;
  const SystemCalibration calib = calibrate_full(file.poses, file.board, opts);
  nlohmann::json out = calibration_to_json(calib);
  out["convergence"] = convergence_to_json(calib.report);
  return out.dump();
}

std::string benchmark(const std::vector<double>& sigmas, int trials, const std::vector<std::string>& methods,
                      std::uint64_t seed, int poses, int jobs) {
  std::vector<Method> ms;
  for (const std::string& m : methods) ms.push_back(method_from_name(m));
  BenchOptions opts;
  opts.jobs = jobs;
  BenchmarkReport report;
  {
    py::gil_scoped_release release;
    report = run_benchmark(scene(seed, poses), sigmas, trials, ms, opts);
  }
  nlohmann::json out = report_json(report);
  out["trials"] = trials_to_json(report.trials)["trials"];
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_procam, m) {
  m.doc() = "Camera-projector calibration core";
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  py::class_<Intrinsics>(m, "Intrinsics")
      .def(py::init([](double fx, double fy, double cx, double cy) { return Intrinsics{fx, fy, cx, cy}; }),
           py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"))
      .def_readwrite("fx", &Intrinsics::fx)
      .def_readwrite("fy", &Intrinsics::fy)
      .def_readwrite("cx", &Intrinsics::cx)
      .def_readwrite("cy", &Intrinsics::cy);
  py::class_<Distortion>(m, "Distortion")
      .def(py::init([](double k1, double k2, double p1, double p2) { return Distortion{k1, k2, p1, p2}; }),
           py::arg("k1") = 0.0, py::arg("k2") = 0.0, py::arg("p1") = 0.0,
           py::arg("p2") = 0.0)
      .def_readwrite("k1", &Distortion::k1)
      .def_readwrite("k2", &Distortion::k2)
      .def_readwrite("p1", &Distortion::p1)
      .def_readwrite("p2", &Distortion::p2);
  py::class_<Device>(m, "Device")
      .def(py::init([](const Intrinsics& k, const Distortion& d) { return Device{k, d}; }), py::arg("intrinsics"), py::arg("distortion") = Distortion{})
      .def_readwrite("intrinsics", &Device::intrinsics)
      .def_readwrite("distortion", &Device::distortion);
  py::class_<Pose>(m, "Pose")
      .def(py::init([](const Vec3& r, const Vec3& t) { return Pose{r, t}; }), py::arg("r"), py::arg("t"))
      .def_readwrite("r", &Pose::r)
      .def_readwrite("t", &Pose::t)
      .def("rotation", &Pose::rotation)
      .def("apply", &Pose::apply);

  m.def("rotation_vector_to_matrix", &rotation_vector_to_matrix);
  m.def("matrix_to_rotation_vector", &matrix_to_rotation_vector);
  m.def("distort", &distort, py::arg("pt"), py::arg("distortion"));
  m.def("undistort", &undistort, py::arg("pt"), py::arg("distortion"));
  m.def(
      "project", [](const Vec3& x, const Pose& pose, const Device& dev) { return project(x, pose, dev); },
      py::arg("x_m"), py::arg("board_pose"), py::arg("device"));
  m.def(
      "triangulate",
      [](const Vec2& xc, const Vec2& xp, const Device& cam, const Device& proj, const Pose& stereo) {
        return triangulate(xc, xp, StereoRig{cam, proj, stereo});
      },
      py::arg("x_c"), py::arg("x_p"), py::arg("camera"), py::arg("projector"), py::arg("stereo"));

  m.def("debruijn_sequence", &generate_debruijn_sequence, py::arg("k"), py::arg("n"));
  m.def(
      "pattern_json",
      [](int k, int n, int spacing, int width, int height) {
        return pattern_to_json(build_pattern_graph(k, n, spacing, width, height)).dump();
      },
      py::arg("k"), py::arg("n"), py::arg("spacing"), py::arg("width"), py::arg("height"));
  m.def("synthesize_captures", &synthesize_captures, py::arg("seed"), py::arg("poses"), py::arg("sigma"));
  m.def("calibrate", &calibrate, py::arg("captures"), py::arg("skip_ba") = false);
  m.def("benchmark", &benchmark, py::arg("sigmas"), py::arg("trials"), py::arg("methods"), py::arg("seed"),
        py::arg("poses"), py::arg("jobs"));
}
