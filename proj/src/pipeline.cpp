#include "procam/pipeline.hpp"

#include <cmath>

namespace procam {

std::vector<Vec2> BoardSpec::corner_points() const {
  if (cols < 2 || rows < 2 || !(square_mm > 0.0)) throw Error("invalid board spec");
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(cols * rows));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) pts.emplace_back(c * square_mm, r * square_mm);
  }
  return pts;
}

Stage1Result stage1_camera(std::span<const PoseCapture> captures, const BoardSpec& board, const ZhangOptions& options) {
  if (captures.size() < 3) throw Error("insufficient poses");
  const auto corners = board.corner_points();
  std::vector<PlanarObservation> obs;
  obs.reserve(captures.size());
  for (const PoseCapture& cap : captures) {
    if (cap.corners.size() != corners.size()) {
      throw Error("pose " + std::to_string(cap.id) + " has " + std::to_string(cap.corners.size()) +
                  " corners, board expects " + std::to_string(corners.size()));
    }
    PlanarObservation o;
    o.pose_id = cap.id;
    for (std::size_t i = 0; i < corners.size(); ++i) o.pairs.push_back({corners[i], cap.corners[i]});
    obs.push_back(std::move(o));
  }
  Stage1Result out;
  out.camera = calibrate_device(obs, options);
  out.homographies.reserve(captures.size());
  for (const Pose& pose : out.camera.poses) {
    out.homographies.push_back(homography_from_pose(out.camera.device.intrinsics, pose));
  }
  return out;
}

Stage2Result stage2_projector(std::span<const PoseCapture> captures, const Stage1Result& stage1,
                              const ZhangOptions& options) {
  if (stage1.homographies.size() != captures.size()) throw Error("stage 1 does not match the captures");
  const Device& camera = stage1.camera.device;

  Stage2Result out;
  std::vector<PlanarObservation> obs;
  for (std::size_t j = 0; j < captures.size(); ++j) {
    const PoseCapture& cap = captures[j];
    if (cap.nodes.size() < 4) {
      out.warnings.push_back("pose " + std::to_string(cap.id) + " dropped: " + std::to_string(cap.nodes.size()) +
                             " nodes");
      continue;
    }
    std::vector<Vec3> warped;
    PlanarObservation o;
    o.pose_id = cap.id;
    warped.reserve(cap.nodes.size());
    for (const NodeCapture& node : cap.nodes) {
      const Vec2 undistorted = camera.intrinsics.to_pixel(
          undistort(camera.intrinsics.to_normalized(node.x_c), camera.distortion));
      const Vec3 x_m = warp_to_board(undistorted, stage1.homographies[j]);
      warped.push_back(x_m);
      o.pairs.push_back({x_m.head<2>(), node.x_p});
    }
    out.used.push_back(static_cast<int>(j));
    out.warped.push_back(std::move(warped));
    obs.push_back(std::move(o));
  }
  if (obs.size() < 3) throw Error("insufficient poses");
  out.projector = calibrate_device(obs, options);

  std::vector<Mat3> rotations;
  std::vector<Vec3> translations;
  for (std::size_t u = 0; u < out.used.size(); ++u) {
    const Pose& board_to_cam = stage1.camera.poses[static_cast<std::size_t>(out.used[u])];
    const auto [R, t] = relative_transform(board_to_cam, out.projector.poses[u]);
    rotations.push_back(R);
    translations.push_back(t);
  }
  out.stereo = median_pose(rotations, translations);
  return out;
}

BundleProblem make_bundle_problem(std::span<const PoseCapture> captures, const Stage2Result& stage2) {
  BundleProblem problem;
  problem.pose_count = static_cast<int>(stage2.used.size());
  for (std::size_t u = 0; u < stage2.used.size(); ++u) {
    const PoseCapture& cap = captures[static_cast<std::size_t>(stage2.used[u])];
    for (std::size_t i = 0; i < cap.nodes.size(); ++i) {
      problem.nodes.push_back(
          {static_cast<int>(u), cap.nodes[i].node_id, cap.nodes[i].x_c, cap.nodes[i].x_p, stage2.warped[u][i]});
    }
  }
  return problem;
}

SystemParams initial_parameters(const Stage1Result& stage1, const Stage2Result& stage2) {
  SystemParams s;
  s.camera = stage1.camera.device;
  s.projector = stage2.projector.device;
  s.stereo = stage2.stereo;
  for (int idx : stage2.used) s.poses.push_back(stage1.camera.poses[static_cast<std::size_t>(idx)]);
  for (const auto& pts : stage2.warped) s.points.insert(s.points.end(), pts.begin(), pts.end());
  return s;
}

RmsTriple node_rms(const SystemParams& params, const BundleProblem& problem) {
  const std::vector<double> zero(problem.nodes.size(), 0.0);
  const Eigen::VectorXd r = compute_residuals(pack(params), problem, zero);
  double cam = 0.0;
  double proj = 0.0;
  for (std::size_t i = 0; i < problem.nodes.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(7 * i);
    cam += r.segment<2>(row).squaredNorm();
    proj += r.segment<2>(row + 2).squaredNorm();
  }
  const auto n = static_cast<double>(problem.nodes.size());
  if (n == 0.0) return {};
  return {std::sqrt(cam / n), std::sqrt(proj / n), std::sqrt((cam + proj) / (2.0 * n))};
}

SystemCalibration refine(std::span<const PoseCapture> captures, const Stage1Result& stage1, const Stage2Result& stage2,
                         const PipelineOptions& options) {
  const BundleProblem problem = make_bundle_problem(captures, stage2);
  const SystemParams init = initial_parameters(stage1, stage2);

  BundleOptions bopts = options.bundle;
  if (options.skip_ba) {
    bopts.optimize_intrinsics = false;
    bopts.optimize_stereo = false;
    bopts.optimize_points = false;
    bopts.optimize_poses = true;
  }
  const BundleResult solved = solve(pack(init), problem, bopts);
  const SystemParams final_params = unpack(solved.params, problem.pose_count, static_cast<int>(problem.nodes.size()));

  SystemCalibration out;
  out.camera = final_params.camera;
  out.projector = final_params.projector;
  out.stereo = final_params.stereo;
  out.board_poses = final_params.poses;
  for (int idx : stage2.used) out.pose_ids.push_back(captures[static_cast<std::size_t>(idx)].id);
  out.nodes.reserve(problem.nodes.size());
  for (std::size_t i = 0; i < problem.nodes.size(); ++i) {
    const NodeObservation& n = problem.nodes[i];
    out.nodes.push_back({n.pose, n.node_id, n.x_c, n.x_p, n.x_m_init, final_params.points[i]});
  }
  out.stage1_rms = {stage1.camera.rms, stage2.projector.rms, 0.0};
  out.stage1_rms.stereo = std::sqrt(0.5 * (out.stage1_rms.camera * out.stage1_rms.camera +
                                           out.stage1_rms.projector * out.stage1_rms.projector));
  out.rms = node_rms(final_params, problem);
  out.report = solved.report;
  out.warnings = stage2.warnings;
  if (!stage1.camera.converged) out.warnings.emplace_back("camera refinement hit its iteration cap");
  if (!stage2.projector.converged) out.warnings.emplace_back("projector refinement hit its iteration cap");
  if (!solved.report.converged) out.warnings.emplace_back("bundle adjustment hit its iteration cap");
  return out;
}

SystemCalibration calibrate_full(std::span<const PoseCapture> captures, const BoardSpec& board,
                                 const PipelineOptions& options) {
  if (captures.empty()) throw Error("no captures");
  const Stage1Result s1 = stage1_camera(captures, board, options.zhang);
  const Stage2Result s2 = stage2_projector(captures, s1, options.zhang);
  return refine(captures, s1, s2, options);
}

}  // namespace procam
