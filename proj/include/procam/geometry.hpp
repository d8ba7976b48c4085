#pragma once

#include <Eigen/Core>

#include <span>
#include <stdexcept>
#include <string>
#include <utility>

namespace procam {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Raised for every precondition or numerical failure in the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pinhole intrinsics, zero skew. Pixels.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  [[nodiscard]] Mat3 matrix() const;
  [[nodiscard]] Vec2 to_pixel(const Vec2& normalized) const {
    return {fx * normalized.x() + cx, fy * normalized.y() + cy};
  }
  [[nodiscard]] Vec2 to_normalized(const Vec2& pixel) const {
    return {(pixel.x() - cx) / fx, (pixel.y() - cy) / fy};
  }
  [[nodiscard]] bool valid() const;
};

/// Brown-Conrady lens model: two radial and two tangential terms.
struct Distortion {
  double k1 = 0.0;
  double k2 = 0.0;
  double p1 = 0.0;
  double p2 = 0.0;

  [[nodiscard]] bool is_zero() const { return k1 == 0.0 && k2 == 0.0 && p1 == 0.0 && p2 == 0.0; }
};

/// A device seen as a pinhole with lens distortion (camera or inverse-camera projector).
struct Device {
  Intrinsics intrinsics;
  Distortion distortion;
};

/// Rigid transform x' = R(r) x + t. Rotation vector in radians, translation in mm.
struct Pose {
  Vec3 r = Vec3::Zero();
  Vec3 t = Vec3::Zero();

  [[nodiscard]] Mat3 rotation() const;
  [[nodiscard]] Vec3 apply(const Vec3& x) const;
  [[nodiscard]] Pose inverse() const;
  /// (this ∘ first): apply `first`, then this.
  [[nodiscard]] Pose compose(const Pose& first) const;

  static Pose from_matrix(const Mat3& R, const Vec3& t);
};

struct Homography {
  Mat3 h = Mat3::Identity();

  /// Maps a 2D point through h with perspective division.
  [[nodiscard]] Vec2 apply(const Vec2& p) const;
  /// Scales so h(2,2) == 1 when that entry is nonzero.
  [[nodiscard]] Homography normalized() const;
};

/// Plane {x : n·x = d}, unit normal.
struct Plane3 {
  Vec3 n = Vec3::UnitZ();
  double d = 0.0;

  static Plane3 through(const Vec3& point, const Vec3& normal);
};

/// Camera plus projector with the camera-to-projector transform (r_cp, t_cp).
struct StereoRig {
  Device camera;
  Device projector;
  Pose camera_to_projector;
};

[[nodiscard]] Mat3 skew(const Vec3& v);

[[nodiscard]] Mat3 rotation_vector_to_matrix(const Vec3& r);
/// Canonical axis-angle with angle in [0, π]. Throws "not a rotation" when R
/// fails RᵀR = I within 1e-6 or has non-positive determinant.
[[nodiscard]] Vec3 matrix_to_rotation_vector(const Mat3& R);
/// Geodesic distance between two rotations, radians.
[[nodiscard]] double rotation_angle_between(const Mat3& a, const Mat3& b);

[[nodiscard]] Vec2 distort(const Vec2& pt, const Distortion& d);
/// Inverts `distort` by Newton iteration (50 step cap, 1e-10 step tolerance).
[[nodiscard]] Vec2 undistort(const Vec2& pt, const Distortion& d);

/// Non-throwing pinhole + lens projection of a device-frame point; false when z <= 0.
[[nodiscard]] inline bool project_to_pixel(const Vec3& x_dev, const Device& device, Vec2& pixel) noexcept {
  if (!(x_dev.z() > 0.0)) return false;
  const double x = x_dev.x() / x_dev.z();
  const double y = x_dev.y() / x_dev.z();
  const Distortion& d = device.distortion;
  const double r2 = x * x + y * y;
  const double radial = 1.0 + d.k1 * r2 + d.k2 * r2 * r2;
  const double xd = x * radial + 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x);
  const double yd = y * radial + d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y;
  const Intrinsics& k = device.intrinsics;
  pixel = {k.fx * xd + k.cx, k.fy * yd + k.cy};
  return true;
}

/// Pixel of a point already expressed in the device frame. Throws "behind device" for z <= 0.
[[nodiscard]] Vec2 project_device_point(const Vec3& x_dev, const Device& device);

/// Projects a board-model point: board -> camera via board_pose, then camera ->
/// device via device_pose (identity for the camera itself), then pinhole + lens.
[[nodiscard]] Vec2 project(const Vec3& x_m, const Pose& board_pose, const Device& device,
                           const Pose& device_pose = Pose{});

/// H = K [r1 r2 t] for the z=0 board plane.
[[nodiscard]] Homography homography_from_pose(const Intrinsics& K, const Pose& pose);

/// Maps an undistorted camera pixel back onto the z=0 board plane through H⁻¹.
[[nodiscard]] Vec3 warp_to_board(const Vec2& pt, const Homography& H);

[[nodiscard]] Vec3 intersect_ray_plane(const Vec3& origin, const Vec3& direction, const Plane3& plane);

/// Midpoint of the common perpendicular of the camera and projector rays, camera frame, mm.
[[nodiscard]] Vec3 triangulate(const Vec2& x_c, const Vec2& x_p, const StereoRig& rig);

/// Rotation and translation taking frame a to frame b, given board->a and board->b poses:
/// R = R_b R_aᵀ, t = t_b - R t_a.
[[nodiscard]] std::pair<Mat3, Vec3> relative_transform(const Pose& board_to_a, const Pose& board_to_b);

/// Component-wise median of rotation vectors and of translations.
[[nodiscard]] Pose median_pose(std::span<const Mat3> rel_rotations, std::span<const Vec3> rel_translations);

/// Median of a copy of `values` (average of the two middle elements for even sizes).
[[nodiscard]] double median(std::span<const double> values);

}  // namespace procam
