#include "procam/bench.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <random>
#include <thread>

namespace procam {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Mat3 rot_x(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
Mat3 rot_y(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }

// Central pixel ray of the projector, projector frame, unit length.
Vec3 projector_center_ray(const Device& projector, int width, int height) {
  const Intrinsics& k = projector.intrinsics;
  return Vec3((0.5 * width - k.cx) / k.fx, (0.5 * height - k.cy) / k.fy, 1.0).normalized();
}

// Points past the turning radius of the lens polynomial fold back into the image.
bool inside_lens(const Vec3& x_dev, const Distortion& d) {
  const double x = x_dev.x() / x_dev.z();
  const double y = x_dev.y() / x_dev.z();
  const double r2 = x * x + y * y;
  return 1.0 + 3.0 * d.k1 * r2 + 5.0 * d.k2 * r2 * r2 > 0.1;
}

bool in_image(const Vec2& px, int width, int height) {
  return px.x() >= 0.0 && px.y() >= 0.0 && px.x() <= width - 1.0 && px.y() <= height - 1.0;
}

bool observe(const Vec3& x_cam, const Device& device, const Pose& device_pose, int width, int height, Vec2& px) {
  const Vec3 x_dev = device_pose.apply(x_cam);
  if (!project_to_pixel(x_dev, device, px)) return false;
  return inside_lens(x_dev, device.distortion) && in_image(px, width, height);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Pose sample_board_pose(const SceneConfig& cfg, const StereoRig& rig, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double depth = cfg.depth_min_mm + (cfg.depth_max_mm - cfg.depth_min_mm) * unit(rng);
  const double tilt = (cfg.tilt_min_deg + (cfg.tilt_max_deg - cfg.tilt_min_deg) * unit(rng)) * kDeg;
  const double axis_angle = 2.0 * std::numbers::pi * unit(rng);
  const double offset_x = cfg.board_offset_mm * (2.0 * unit(rng) - 1.0);
  const double offset_y = cfg.board_offset_mm * (2.0 * unit(rng) - 1.0);

  // Board center on the projector's central ray at the sampled camera depth.
  const Pose proj_to_cam = rig.camera_to_projector.inverse();
  const Vec3 origin = proj_to_cam.t;
  const Vec3 dir = proj_to_cam.rotation() * projector_center_ray(rig.projector, cfg.projector_width,
                                                                  cfg.projector_height);
  const Vec3 center = origin + dir * ((depth - origin.z()) / dir.z());

  // Face the midpoint of the rig, x axis kept horizontal, then tilt.
  const Vec3 z_axis = (center - 0.5 * origin).normalized();
  const Vec3 x_axis = Vec3::UnitY().cross(z_axis).normalized();
  Mat3 base;
  base.col(0) = x_axis;
  base.col(1) = z_axis.cross(x_axis);
  base.col(2) = z_axis;
  const Vec3 tilt_axis(std::cos(axis_angle), std::sin(axis_angle), 0.0);
  const Mat3 R = base * Eigen::AngleAxisd(tilt, tilt_axis).toRotationMatrix();

  const double w = (cfg.board.cols - 1) * cfg.board.square_mm;
  const double h = (cfg.board.rows - 1) * cfg.board.square_mm;
  const Vec3 board_center = center + base.col(0) * offset_x + base.col(1) * offset_y;
  return Pose::from_matrix(R, board_center - R * Vec3(0.5 * w, 0.5 * h, 0.0));
}

double rms_distance(double sum_sq, std::size_t n) { return n == 0 ? 0.0 : std::sqrt(sum_sq / static_cast<double>(n)); }

}  // namespace

Pose toe_in_stereo_pose(const Device& projector, int projector_width, int projector_height, double baseline_mm,
                        double convergence_mm) {
  if (!(convergence_mm > 0.0)) throw Error("convergence distance must be positive");
  const Vec3 f = projector_center_ray(projector, projector_width, projector_height);
  const double pitch = std::atan2(-f.y(), f.z());
  const double yaw_offset = std::atan2(f.x(), std::hypot(f.y(), f.z()));
  const double yaw = std::atan2(-baseline_mm, convergence_mm);
  // Projector -> camera rotation sending the central ray toward (0, 0, convergence).
  const Mat3 R_pc = rot_y(yaw) * rot_x(-pitch) * rot_y(-yaw_offset);
  const Mat3 R_cp = R_pc.transpose();
  const Vec3 center(baseline_mm, 0.0, 0.0);
  return Pose::from_matrix(R_cp, -(R_cp * center));
}

Pose SceneConfig::stereo_pose() const {
  if (stereo) return *stereo;
  return toe_in_stereo_pose(projector, projector_width, projector_height, baseline_mm, convergence_mm);
}

StereoRig SceneConfig::rig() const { return {camera, projector, stereo_pose()}; }

void SceneConfig::validate() const {
  if (camera_width <= 0 || camera_height <= 0 || projector_width <= 0 || projector_height <= 0) {
    throw Error("resolutions must be positive");
  }
  if (!camera.intrinsics.valid() || !projector.intrinsics.valid()) throw Error("invalid intrinsics");
  if (!(depth_min_mm > 0.0) || !(depth_max_mm >= depth_min_mm)) throw Error("invalid depth range");
  if (!(tilt_min_deg >= 0.0) || !(tilt_max_deg >= tilt_min_deg) || tilt_max_deg >= 90.0) {
    throw Error("invalid tilt range");
  }
  if (pose_count < 3) throw Error("pose count must be at least 3");
  if (board.cols < 2 || board.rows < 2 || !(board.square_mm > 0.0)) throw Error("invalid board spec");
  if (!(board_offset_mm >= 0.0)) throw Error("invalid board offset");
  if (!(min_visible_fraction >= 0.0 && min_visible_fraction <= 1.0)) throw Error("invalid visible fraction");
  if (max_attempts < 1) throw Error("max attempts must be positive");
}

std::size_t GroundTruthScene::node_count() const {
  std::size_t n = 0;
  for (const ScenePose& p : poses) n += p.nodes.size();
  return n;
}

ScenePose make_scene_pose(const SceneConfig& cfg, const StereoRig& rig, const PatternGraph& graph,
                          const Pose& board_to_camera, double* visible_fraction) {
  ScenePose sp;
  sp.board_to_camera = board_to_camera;
  const Mat3 R = board_to_camera.rotation();
  sp.plane = Plane3::through(board_to_camera.t, R.col(2));

  const Pose proj_to_cam = rig.camera_to_projector.inverse();
  const Mat3 R_pc = proj_to_cam.rotation();
  const Pose cam_to_board = board_to_camera.inverse();
  const Intrinsics& kp = rig.projector.intrinsics;

  for (const PatternNode& node : graph.nodes()) {
    const Vec2 ray_n = undistort(kp.to_normalized(node.x_p), rig.projector.distortion);
    const Vec3 dir = R_pc * Vec3(ray_n.x(), ray_n.y(), 1.0);
    Vec3 hit;
    try {
      hit = intersect_ray_plane(proj_to_cam.t, dir, sp.plane);
    } catch (const Error&) {
      continue;
    }
    Vec3 x_m = cam_to_board.apply(hit);
    x_m.z() = 0.0;
    const Vec3 x_cam = board_to_camera.apply(x_m);
    Vec2 x_c;
    Vec2 x_p;
    if (!observe(x_cam, rig.camera, Pose{}, cfg.camera_width, cfg.camera_height, x_c)) continue;
    if (!observe(x_cam, rig.projector, rig.camera_to_projector, cfg.projector_width, cfg.projector_height, x_p)) {
      continue;
    }
    sp.node_ids.push_back(graph.node_id(node.row, node.col));
    sp.nodes.push_back(x_m);
    sp.x_c.push_back(project(x_m, board_to_camera, rig.camera));
    sp.x_p.push_back(project(x_m, board_to_camera, rig.projector, rig.camera_to_projector));
  }
  if (visible_fraction) {
    *visible_fraction = static_cast<double>(sp.nodes.size()) / static_cast<double>(graph.nodes().size());
  }

  for (const Vec2& c : cfg.board.corner_points()) {
    const Vec3 x_m(c.x(), c.y(), 0.0);
    sp.corners.push_back(x_m);
    sp.corner_pixels.push_back(project(x_m, board_to_camera, rig.camera));
  }
  return sp;
}

GroundTruthScene generate_scene(const SceneConfig& config) {
  config.validate();
  GroundTruthScene scene;
  scene.config = config;
  scene.rig = config.rig();
  const PatternGraph graph = build_pattern_graph(config.pattern_k, config.pattern_n, config.pattern_spacing,
                                                 config.projector_width, config.projector_height);
  scene.pattern_size = graph.size();
  scene.pattern_nodes = static_cast<int>(graph.nodes().size());

  std::mt19937_64 rng(config.seed);
  for (int j = 0; j < config.pose_count; ++j) {
    bool accepted = false;
    for (int attempt = 0; attempt < config.max_attempts && !accepted; ++attempt) {
      const Pose pose = sample_board_pose(config, scene.rig, rng);
      double fraction = 0.0;
      ScenePose sp;
      try {
        sp = make_scene_pose(config, scene.rig, graph, pose, &fraction);
      } catch (const Error&) {
        continue;  // part of the board behind the camera
      }
      if (fraction < config.min_visible_fraction) continue;
      Vec2 px;
      const bool corners_visible = std::all_of(sp.corners.begin(), sp.corners.end(), [&](const Vec3& x_m) {
        return observe(pose.apply(x_m), scene.rig.camera, Pose{}, config.camera_width, config.camera_height, px);
      });
      if (!corners_visible) continue;
      scene.poses.push_back(std::move(sp));
      accepted = true;
    }
    if (!accepted) throw Error("unsatisfiable config");
  }
  return scene;
}

std::vector<PoseCapture> scene_captures(const GroundTruthScene& scene) {
  std::vector<PoseCapture> out;
  out.reserve(scene.poses.size());
  for (std::size_t j = 0; j < scene.poses.size(); ++j) {
    const ScenePose& sp = scene.poses[j];
    PoseCapture cap;
    cap.id = static_cast<int>(j);
    cap.corners = sp.corner_pixels;
    cap.nodes.reserve(sp.nodes.size());
    for (std::size_t i = 0; i < sp.nodes.size(); ++i) cap.nodes.push_back({sp.node_ids[i], sp.x_c[i], sp.x_p[i]});
    out.push_back(std::move(cap));
  }
  return out;
}

NoisyCaptures add_noise(const GroundTruthScene& scene, double sigma, std::uint64_t seed, const NoiseOptions& options) {
  if (!(sigma >= 0.0)) throw Error("noise level must be non-negative");
  const double px_sigma = options.pixel_sigma.value_or(sigma);
  const double mm_sigma = options.board_sigma.value_or(sigma);
  if (!(px_sigma >= 0.0) || !(mm_sigma >= 0.0)) throw Error("noise level must be non-negative");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto perturb = [&](const Vec3& x) {
    Vec3 d(gauss(rng), gauss(rng), gauss(rng));
    if (options.out_of_plane_only) d.head<2>().setZero();
    return Vec3(x + mm_sigma * d);
  };
  const auto jitter = [&](const Vec2& x) {
    const double dx = gauss(rng);
    const double dy = gauss(rng);
    return Vec2(x.x() + px_sigma * dx, x.y() + px_sigma * dy);
  };

  NoisyCaptures out;
  const StereoRig& rig = scene.rig;
  for (std::size_t j = 0; j < scene.poses.size(); ++j) {
    const ScenePose& sp = scene.poses[j];
    PoseCapture cap;
    cap.id = static_cast<int>(j);
    for (const Vec3& c : sp.corners) {
      const Vec3 x = perturb(c);
      cap.corners.push_back(jitter(project(x, sp.board_to_camera, rig.camera)));
    }
    std::vector<Vec3> truth;
    std::vector<Vec2> clean_c;
    std::vector<Vec2> clean_p;
    truth.reserve(sp.nodes.size());
    for (std::size_t i = 0; i < sp.nodes.size(); ++i) {
      const Vec3 x = perturb(sp.nodes[i]);
      const Vec2 xc = project(x, sp.board_to_camera, rig.camera);
      const Vec2 xp = project(x, sp.board_to_camera, rig.projector, rig.camera_to_projector);
      truth.push_back(x);
      clean_c.push_back(xc);
      clean_p.push_back(xp);
      cap.nodes.push_back({sp.node_ids[i], jitter(xc), jitter(xp)});
    }
    out.captures.push_back(std::move(cap));
    out.true_nodes.push_back(std::move(truth));
    out.clean_x_c.push_back(std::move(clean_c));
    out.clean_x_p.push_back(std::move(clean_p));
  }
  return out;
}

SystemCalibration calibrate_global_homography(std::span<const PoseCapture> captures, const BoardSpec& board,
                                              const Stage1Result& stage1) {
  if (stage1.homographies.size() != captures.size()) throw Error("stage 1 does not match the captures");
  const Device& camera = stage1.camera.device;
  const auto corners = board.corner_points();

  SystemCalibration out;
  BundleProblem problem;
  std::vector<PlanarObservation> obs;
  std::vector<int> used;
  for (std::size_t j = 0; j < captures.size(); ++j) {
    const PoseCapture& cap = captures[j];
    if (cap.nodes.size() < 4) {
      out.warnings.push_back("pose " + std::to_string(cap.id) + " dropped: " + std::to_string(cap.nodes.size()) +
                             " nodes");
      continue;
    }
    const Homography& H = stage1.homographies[j];
    std::vector<PointPair> cam_to_proj;
    cam_to_proj.reserve(cap.nodes.size());
    const int pose_index = static_cast<int>(used.size());
    for (const NodeCapture& node : cap.nodes) {
      const Vec2 u = camera.intrinsics.to_pixel(undistort(camera.intrinsics.to_normalized(node.x_c), camera.distortion));
      cam_to_proj.push_back({u, node.x_p});
      problem.nodes.push_back({pose_index, node.node_id, node.x_c, node.x_p, warp_to_board(u, H)});
    }
    const Homography H_cp = estimate_homography_dlt(cam_to_proj);

    PlanarObservation o;
    o.pose_id = cap.id;
    for (const Vec2& c : corners) o.pairs.push_back({c, H_cp.apply(H.apply(c))});
    obs.push_back(std::move(o));
    used.push_back(static_cast<int>(j));
  }
  if (obs.size() < 3) throw Error("insufficient poses");
  problem.pose_count = static_cast<int>(used.size());

  ZhangOptions zopts;
  zopts.refine_distortion = false;
  const DeviceCalibration projector = calibrate_device(obs, zopts);

  std::vector<Mat3> rotations;
  std::vector<Vec3> translations;
  for (std::size_t u = 0; u < used.size(); ++u) {
    const auto [R, t] = relative_transform(stage1.camera.poses[static_cast<std::size_t>(used[u])], projector.poses[u]);
    rotations.push_back(R);
    translations.push_back(t);
  }

  SystemParams params;
  params.camera = camera;
  params.projector = projector.device;
  params.stereo = median_pose(rotations, translations);
  for (int idx : used) params.poses.push_back(stage1.camera.poses[static_cast<std::size_t>(idx)]);
  for (const NodeObservation& n : problem.nodes) params.points.push_back(n.x_m_init);

  out.camera = params.camera;
  out.projector = params.projector;
  out.stereo = params.stereo;
  out.board_poses = params.poses;
  for (int idx : used) out.pose_ids.push_back(captures[static_cast<std::size_t>(idx)].id);
  for (const NodeObservation& n : problem.nodes) {
    out.nodes.push_back({n.pose, n.node_id, n.x_c, n.x_p, n.x_m_init, n.x_m_init});
  }
  out.stage1_rms = {stage1.camera.rms, projector.rms, 0.0};
  out.stage1_rms.stereo = std::sqrt(0.5 * (stage1.camera.rms * stage1.camera.rms + projector.rms * projector.rms));
  out.rms = node_rms(params, problem);
  out.report.termination = "not refined";
  return out;
}

std::string method_name(Method m) {
  switch (m) {
    case Method::proposed:
      return "proposed";
    case Method::proposed_wo_ba:
      return "proposed_wo_ba";
    case Method::global_homography:
      return "global_homography";
  }
  return "unknown";
}

Method method_from_name(const std::string& name) {
  if (name == "proposed") return Method::proposed;
  if (name == "proposed_wo_ba") return Method::proposed_wo_ba;
  if (name == "global_homography") return Method::global_homography;
  throw Error("unknown method: " + name);
}

TrialResult evaluate_trial(const GroundTruthScene& scene, const NoisyCaptures& noisy, const SystemCalibration& calib) {
  TrialResult r;
  const StereoRig estimated{calib.camera, calib.projector, calib.stereo};
  double sum_sq = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < scene.poses.size(); ++j) {
    const Pose& pose = scene.poses[j].board_to_camera;
    for (std::size_t i = 0; i < noisy.true_nodes[j].size(); ++i) {
      const Vec3 truth = pose.apply(noisy.true_nodes[j][i]);
      const Vec3 rec = triangulate(noisy.clean_x_c[j][i], noisy.clean_x_p[j][i], estimated);
      sum_sq += (rec - truth).squaredNorm();
      ++count;
    }
  }
  const Pose& true_stereo = scene.rig.camera_to_projector;
  auto& m = r.metrics;
  m[0] = calib.rms.stereo;
  m[1] = rms_distance(sum_sq, count);
  m[2] = rotation_angle_between(calib.stereo.rotation(), true_stereo.rotation()) / kDeg;
  m[3] = (calib.stereo.t - true_stereo.t).norm();
  const auto fill = [&](std::size_t at, const Device& est, const Device& truth) {
    m[at + 0] = std::abs(est.intrinsics.fx - truth.intrinsics.fx);
    m[at + 1] = std::abs(est.intrinsics.fy - truth.intrinsics.fy);
    m[at + 2] = std::abs(est.intrinsics.cx - truth.intrinsics.cx);
    m[at + 3] = std::abs(est.intrinsics.cy - truth.intrinsics.cy);
    m[at + 4] = std::abs(est.distortion.k1 - truth.distortion.k1);
    m[at + 5] = std::abs(est.distortion.k2 - truth.distortion.k2);
    m[at + 6] = std::abs(est.distortion.p1 - truth.distortion.p1);
    m[at + 7] = std::abs(est.distortion.p2 - truth.distortion.p2);
  };
  fill(4, calib.camera, scene.rig.camera);
  fill(12, calib.projector, scene.rig.projector);
  for (double v : m) {
    if (!std::isfinite(v)) throw Error("non-finite metric");
  }
  return r;
}

std::uint64_t scene_seed(std::uint64_t master, int trial) { return master ^ static_cast<std::uint64_t>(trial); }

std::uint64_t noise_seed(std::uint64_t master, int trial, int sigma_index) {
  return splitmix64(splitmix64(scene_seed(master, trial)) ^ static_cast<std::uint64_t>(sigma_index + 1));
}

std::vector<TrialResult> run_trial(const SceneConfig& config, double sigma, int sigma_index, int trial,
                                   std::span<const Method> methods, const BenchOptions& options) {
  std::vector<TrialResult> out;
  out.reserve(methods.size());
  for (Method m : methods) {
    TrialResult r;
    r.method = m;
    r.sigma = sigma;
    r.trial = trial;
    out.push_back(r);
  }
  const auto fail_all = [&](const std::string& what) {
    for (TrialResult& r : out) {
      if (r.error.empty() && !r.failed) {
        r.failed = true;
        r.error = what;
      }
    }
  };

  try {
    SceneConfig cfg = config;
    cfg.seed = scene_seed(config.seed, trial);
    const GroundTruthScene scene = generate_scene(cfg);
    const NoisyCaptures noisy = add_noise(scene, sigma, noise_seed(config.seed, trial, sigma_index), options.noise);
    const Stage1Result s1 = stage1_camera(noisy.captures, cfg.board, options.pipeline.zhang);

    std::optional<Stage2Result> s2;
    std::string s2_error;
    for (std::size_t k = 0; k < methods.size(); ++k) {
      TrialResult& r = out[k];
      try {
        SystemCalibration calib;
        if (methods[k] == Method::global_homography) {
          calib = calibrate_global_homography(noisy.captures, cfg.board, s1);
        } else {
          if (!s2 && s2_error.empty()) {
            try {
              s2 = stage2_projector(noisy.captures, s1, options.pipeline.zhang);
            } catch (const Error& e) {
              s2_error = e.what();
            }
          }
          if (!s2) throw Error(s2_error);
          PipelineOptions popts = options.pipeline;
          popts.skip_ba = methods[k] == Method::proposed_wo_ba;
          calib = refine(noisy.captures, s1, *s2, popts);
        }
        const TrialResult scored = evaluate_trial(scene, noisy, calib);
        r.metrics = scored.metrics;
      } catch (const std::exception& e) {
        r.failed = true;
        r.error = e.what();
      }
    }
  } catch (const std::exception& e) {
    fail_all(e.what());
  }
  return out;
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

BenchmarkReport summarize(std::vector<TrialResult> trials) {
  BenchmarkReport report;
  for (const TrialResult& t : trials) {
    if (std::find(report.sigmas.begin(), report.sigmas.end(), t.sigma) == report.sigmas.end()) {
      report.sigmas.push_back(t.sigma);
    }
    if (std::find(report.methods.begin(), report.methods.end(), t.method) == report.methods.end()) {
      report.methods.push_back(t.method);
    }
  }
  std::sort(report.sigmas.begin(), report.sigmas.end());
  std::sort(report.methods.begin(), report.methods.end());

  for (double sigma : report.sigmas) {
    for (Method method : report.methods) {
      GridPointSummary g;
      g.sigma = sigma;
      g.method = method;
      std::array<std::vector<double>, kMetricNames.size()> values;
      for (const TrialResult& t : trials) {
        if (t.sigma != sigma || t.method != method) continue;
        ++g.trials;
        if (t.failed) {
          ++g.failures;
          continue;
        }
        for (std::size_t k = 0; k < kMetricNames.size(); ++k) values[k].push_back(t.metrics[k]);
      }
      if (g.trials == 0) continue;
      for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
        g.metrics[k] = {quantile(values[k], 0.5), quantile(values[k], 0.25), quantile(values[k], 0.75)};
      }
      if (5 * g.failures > g.trials) {
        report.warnings.push_back(method_name(method) + " at sigma " + std::to_string(sigma) + ": " +
                                  std::to_string(g.failures) + " of " + std::to_string(g.trials) +
                                  " trials failed");
      }
      report.summary.push_back(g);
    }
  }
  report.trials = std::move(trials);
  return report;
}

const GridPointSummary& BenchmarkReport::at(double sigma, Method method) const {
  for (const GridPointSummary& g : summary) {
    if (g.sigma == sigma && g.method == method) return g;
  }
  throw Error("no summary for " + method_name(method) + " at sigma " + std::to_string(sigma));
}

bool BenchmarkReport::ordering_holds() const {
  constexpr std::array<Method, 3> order = {Method::proposed, Method::proposed_wo_ba, Method::global_homography};
  for (double sigma : sigmas) {
    if (sigma <= 0.0) continue;
    const GridPointSummary* prev = nullptr;
    for (Method m : order) {
      const auto it = std::find_if(summary.begin(), summary.end(),
                                   [&](const GridPointSummary& g) { return g.sigma == sigma && g.method == m; });
      if (it == summary.end()) continue;
      if (prev && !(prev->metrics[0].median <= it->metrics[0].median)) return false;
      prev = &*it;
    }
  }
  return true;
}

bool BenchmarkReport::failure_gate_tripped() const {
  return std::any_of(summary.begin(), summary.end(),
                     [](const GridPointSummary& g) { return 5 * g.failures > g.trials; });
}

BenchmarkReport run_benchmark(const SceneConfig& config, std::span<const double> sigmas, int trials_per_sigma,
                              std::span<const Method> methods, const BenchOptions& options) {
  if (trials_per_sigma < 1) throw Error("trials must be at least 1");
  if (sigmas.empty() || methods.empty()) throw Error("empty benchmark grid");
  for (double s : sigmas) {
    if (!(s >= 0.0)) throw Error("noise level must be non-negative");
  }
  config.validate();

  const std::size_t tasks = sigmas.size() * static_cast<std::size_t>(trials_per_sigma);
  std::vector<std::vector<TrialResult>> results(tasks);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t task = next++; task < tasks; task = next++) {
      const auto si = static_cast<int>(task / static_cast<std::size_t>(trials_per_sigma));
      const auto trial = static_cast<int>(task % static_cast<std::size_t>(trials_per_sigma));
      results[task] = run_trial(config, sigmas[static_cast<std::size_t>(si)], si, trial, methods, options);
    }
  };
  const int jobs = std::max(1, std::min<int>(options.jobs, static_cast<int>(tasks)));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(jobs));
    for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  std::vector<TrialResult> flat;
  flat.reserve(tasks * methods.size());
  for (auto& batch : results) {
    for (TrialResult& r : batch) flat.push_back(std::move(r));
  }
  return summarize(std::move(flat));
}

}  // namespace procam
