#pragma once

#include "procam/debruijn.hpp"
#include "procam/geometry.hpp"
#include "procam/pipeline.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace procam {

/// Camera -> projector transform of a toed-in rig: projector `baseline_mm` along
/// camera +x, aimed so the center of its image lands on the camera axis at
/// `convergence_mm`.
[[nodiscard]] Pose toe_in_stereo_pose(const Device& projector, int projector_width, int projector_height,
                                      double baseline_mm, double convergence_mm);

struct SceneConfig {
  int camera_width = 640;
  int camera_height = 480;
  int projector_width = 800;
  int projector_height = 600;
  Device camera{{600.0, 600.0, 320.0, 240.0}, {-0.1, 0.0, 0.0, 0.0}};
  Device projector{{1100.0, 1100.0, 400.0, 550.0}, {-0.08, 0.0, 0.0, 0.0}};
  double baseline_mm = 1500.0;
  double convergence_mm = 2000.0;
  std::optional<Pose> stereo;  // overrides the toe-in pose when set
  int pose_count = 10;
  double depth_min_mm = 1800.0;
  double depth_max_mm = 2200.0;
  double tilt_min_deg = 10.0;
  double tilt_max_deg = 30.0;
  double board_offset_mm = 250.0;  // checkerboard center jitter around the pattern center, per in-plane axis
  BoardSpec board{9, 7, 150.0};
  int pattern_k = 4;
  int pattern_n = 3;
  int pattern_spacing = 12;
  double min_visible_fraction = 0.9;
  int max_attempts = 20;
  std::uint64_t seed = 1;

  [[nodiscard]] Pose stereo_pose() const;
  [[nodiscard]] StereoRig rig() const;
  void validate() const;
};

struct ScenePose {
  Pose board_to_camera;
  Plane3 plane;                      // camera frame
  std::vector<int> node_ids;
  std::vector<Vec3> nodes;           // board frame, on z = 0
  std::vector<Vec2> x_c;
  std::vector<Vec2> x_p;
  std::vector<Vec3> corners;         // board frame, z = 0
  std::vector<Vec2> corner_pixels;   // camera
};

struct GroundTruthScene {
  SceneConfig config;
  StereoRig rig;
  int pattern_size = 0;
  int pattern_nodes = 0;
  std::vector<ScenePose> poses;

  [[nodiscard]] std::size_t node_count() const;
};

[[nodiscard]] GroundTruthScene generate_scene(const SceneConfig& config);

/// Lays the board at `board_to_camera` and casts every pattern node onto it.
/// Keeps nodes visible in both images; `visible_fraction` receives kept / all.
[[nodiscard]] ScenePose make_scene_pose(const SceneConfig& config, const StereoRig& rig, const PatternGraph& graph,
                                        const Pose& board_to_camera, double* visible_fraction = nullptr);

/// Captures of the noiseless scene.
[[nodiscard]] std::vector<PoseCapture> scene_captures(const GroundTruthScene& scene);

struct NoiseOptions {
  std::optional<double> pixel_sigma;  // px; defaults to the shared σ
  std::optional<double> board_sigma;  // mm; defaults to the shared σ
  bool out_of_plane_only = false;
};

struct NoisyCaptures {
  std::vector<PoseCapture> captures;
  std::vector<std::vector<Vec3>> true_nodes;     // perturbed board-frame nodes per pose
  std::vector<std::vector<Vec2>> clean_x_c;      // projections of the perturbed nodes, no pixel noise
  std::vector<std::vector<Vec2>> clean_x_p;
};

/// Perturbs board points by σ mm (the imperfect-planar truth), reprojects them,
/// then adds σ px pixel noise to every camera and projector coordinate.
[[nodiscard]] NoisyCaptures add_noise(const GroundTruthScene& scene, double sigma, std::uint64_t seed,
                                      const NoiseOptions& options = {});

/// Baseline: per-pose camera->projector homographies, checkerboard corners
/// pushed through them, projector Zhang without lens distortion, no joint refinement.
[[nodiscard]] SystemCalibration calibrate_global_homography(std::span<const PoseCapture> captures,
                                                            const BoardSpec& board, const Stage1Result& stage1);

enum class Method { proposed, proposed_wo_ba, global_homography };

[[nodiscard]] std::string method_name(Method m);
[[nodiscard]] Method method_from_name(const std::string& name);

inline constexpr std::array<const char*, 20> kMetricNames = {
    "reprojection_px", "alignment_mm", "rotation_deg", "translation_mm",
    "cam_fx", "cam_fy", "cam_cx", "cam_cy", "cam_k1", "cam_k2", "cam_p1", "cam_p2",
    "proj_fx", "proj_fy", "proj_cx", "proj_cy", "proj_k1", "proj_k2", "proj_p1", "proj_p2"};

struct TrialResult {
  Method method = Method::proposed;
  double sigma = 0.0;
  int trial = 0;
  bool failed = false;
  std::string error;
  std::array<double, kMetricNames.size()> metrics{};

  [[nodiscard]] double reprojection() const { return metrics[0]; }
  [[nodiscard]] double alignment() const { return metrics[1]; }
  [[nodiscard]] double rotation_deg() const { return metrics[2]; }
  [[nodiscard]] double translation() const { return metrics[3]; }
};

/// Scores a calibration against the scene it came from.
[[nodiscard]] TrialResult evaluate_trial(const GroundTruthScene& scene, const NoisyCaptures& noisy,
                                         const SystemCalibration& calib);

struct MetricSummary {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

struct GridPointSummary {
  double sigma = 0.0;
  Method method = Method::proposed;
  int trials = 0;
  int failures = 0;
  std::array<MetricSummary, kMetricNames.size()> metrics{};
};

struct BenchmarkReport {
  std::vector<double> sigmas;
  std::vector<Method> methods;
  std::vector<TrialResult> trials;
  std::vector<GridPointSummary> summary;
  std::vector<std::string> warnings;

  [[nodiscard]] const GridPointSummary& at(double sigma, Method method) const;
  /// Median stereo RMS ordering proposed ≤ proposed_wo_ba ≤ global_homography at every σ > 0.
  [[nodiscard]] bool ordering_holds() const;
  [[nodiscard]] bool failure_gate_tripped() const;
};

struct BenchOptions {
  int jobs = 1;
  NoiseOptions noise;
  PipelineOptions pipeline;
};

/// Per-trial RNG seeds: the scene uses master ⊕ trial, the noise stream also mixes in the σ index.
[[nodiscard]] std::uint64_t scene_seed(std::uint64_t master, int trial);
[[nodiscard]] std::uint64_t noise_seed(std::uint64_t master, int trial, int sigma_index);

/// Runs every method on one (σ, trial) point; methods share the scene, noise and stages 1-2.
[[nodiscard]] std::vector<TrialResult> run_trial(const SceneConfig& config, double sigma, int sigma_index, int trial,
                                                 std::span<const Method> methods, const BenchOptions& options);

[[nodiscard]] BenchmarkReport run_benchmark(const SceneConfig& config, std::span<const double> sigmas,
                                            int trials_per_sigma, std::span<const Method> methods,
                                            const BenchOptions& options = {});

/// Rebuilds medians and quartiles from raw trial records.
[[nodiscard]] BenchmarkReport summarize(std::vector<TrialResult> trials);

/// Linear-interpolated quantile of a copy of `values`.
[[nodiscard]] double quantile(std::span<const double> values, double q);

}  // namespace procam
