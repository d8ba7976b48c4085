#pragma once

#include "procam/bundle_adjustment.hpp"
#include "procam/geometry.hpp"
#include "procam/zhang.hpp"

#include <span>
#include <string>
#include <vector>

namespace procam {

/// Checkerboard of `cols`×`rows` inner corners. Corner (r, c) sits at
/// (c·square, r·square, 0) in board model space; corners are listed row-major.
struct BoardSpec {
  int cols = 9;
  int rows = 7;
  double square_mm = 30.0;

  [[nodiscard]] std::vector<Vec2> corner_points() const;
};

struct NodeCapture {
  int node_id = 0;
  Vec2 x_c;
  Vec2 x_p;
};

/// Extracted points for one board pose.
struct PoseCapture {
  int id = 0;
  std::vector<Vec2> corners;  // camera pixels, row-major over the board grid
  std::vector<NodeCapture> nodes;
};

struct Stage1Result {
  DeviceCalibration camera;
  std::vector<Homography> homographies;  // H^j = K_c [r1 r2 t], one per capture
};

struct Stage2Result {
  DeviceCalibration projector;        // poses are board -> projector, one per used capture
  Pose stereo;                        // camera -> projector median initialization
  std::vector<int> used;              // capture indices that carried ≥ 4 nodes
  std::vector<std::vector<Vec3>> warped;  // ẋ_m per used capture, parallel to its nodes
  std::vector<std::string> warnings;
};

struct PipelineOptions {
  bool skip_ba = false;
  BundleOptions bundle;
  ZhangOptions zhang;
};

struct RmsTriple {
  double camera = 0.0;
  double projector = 0.0;
  double stereo = 0.0;
};

struct CalibratedNode {
  int pose = 0;  // index into SystemCalibration::pose_ids / board_poses
  int node_id = 0;
  Vec2 x_c;
  Vec2 x_p;
  Vec3 x_m_init;
  Vec3 x_m;
};

struct SystemCalibration {
  Device camera;
  Device projector;
  Pose stereo;                    // camera -> projector
  std::vector<int> pose_ids;      // capture ids of the poses used past stage 1
  std::vector<Pose> board_poses;  // board -> camera, parallel to pose_ids
  std::vector<CalibratedNode> nodes;
  RmsTriple stage1_rms;           // camera checkerboard RMS; projector Zhang RMS
  RmsTriple rms;                  // final node reprojection RMS
  ConvergenceReport report;
  std::vector<std::string> warnings;
};

[[nodiscard]] Stage1Result stage1_camera(std::span<const PoseCapture> captures, const BoardSpec& board,
                                         const ZhangOptions& options = {});

[[nodiscard]] Stage2Result stage2_projector(std::span<const PoseCapture> captures, const Stage1Result& stage1,
                                            const ZhangOptions& options = {});

/// Bundle problem and initial Ψ̇ assembled from stages 1 and 2.
[[nodiscard]] BundleProblem make_bundle_problem(std::span<const PoseCapture> captures, const Stage2Result& stage2);
[[nodiscard]] SystemParams initial_parameters(const Stage1Result& stage1, const Stage2Result& stage2);

/// Stage 3 on top of completed stages: full joint refinement, or only board poses with `skip_ba`.
[[nodiscard]] SystemCalibration refine(std::span<const PoseCapture> captures, const Stage1Result& stage1,
                                       const Stage2Result& stage2, const PipelineOptions& options);

[[nodiscard]] SystemCalibration calibrate_full(std::span<const PoseCapture> captures, const BoardSpec& board,
                                               const PipelineOptions& options = {});

/// Camera, projector and pooled reprojection RMS of nodes under the given parameters.
[[nodiscard]] RmsTriple node_rms(const SystemParams& params, const BundleProblem& problem);

}  // namespace procam
