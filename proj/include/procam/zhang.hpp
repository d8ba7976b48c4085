#pragma once

#include "procam/geometry.hpp"

#include <span>
#include <vector>

namespace procam {

struct PointPair {
  Vec2 board;  // mm, on the z=0 board plane
  Vec2 image;  // px
};

struct PlanarObservation {
  int pose_id = 0;
  std::vector<PointPair> pairs;
};

struct DeviceCalibration {
  Device device;
  std::vector<Pose> poses;  // board -> device, one per observation
  double initial_rms = 0.0;
  double rms = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct ZhangOptions {
  bool refine_distortion = true;
  int max_iterations = 200;
};

/// Hartley-normalized DLT; throws "degenerate configuration" on rank deficiency.
[[nodiscard]] Homography estimate_homography_dlt(std::span<const PointPair> pairs);

/// Closed-form zero-skew intrinsics from the image of the absolute conic.
[[nodiscard]] Intrinsics intrinsics_from_homographies(std::span<const Homography> hs);

/// Board pose from K and a board-to-image homography, rotation projected onto SO(3).
[[nodiscard]] Pose extrinsics_from_homography(const Intrinsics& K, const Homography& H);

/// Closed-form initialization followed by Levenberg-Marquardt refinement of
/// intrinsics, distortion (unless disabled) and all poses.
[[nodiscard]] DeviceCalibration calibrate_device(std::span<const PlanarObservation> observations,
                                                 const ZhangOptions& options = {});

/// RMS of per-point reprojection distances.
[[nodiscard]] double reprojection_rms(std::span<const PlanarObservation> observations, const Device& device,
                                      std::span<const Pose> poses);

}  // namespace procam
