#include "procam/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace procam {

Mat3 Intrinsics::matrix() const {
  Mat3 K;
  K << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return K;
}

bool Intrinsics::valid() const {
  return std::isfinite(fx) && std::isfinite(fy) && std::isfinite(cx) && std::isfinite(cy) && fx > 0.0 &&
         fy > 0.0;
}

Mat3 Pose::rotation() const { return rotation_vector_to_matrix(r); }

Vec3 Pose::apply(const Vec3& x) const { return rotation() * x + t; }

Pose Pose::inverse() const {
  const Mat3 R = rotation();
  return {-r, -(R.transpose() * t)};
}

Pose Pose::compose(const Pose& first) const {
  const Mat3 R = rotation();
  return from_matrix(R * first.rotation(), R * first.t + t);
}

Pose Pose::from_matrix(const Mat3& R, const Vec3& t) { return {matrix_to_rotation_vector(R), t}; }

Vec2 Homography::apply(const Vec2& p) const {
  const Vec3 q = h * Vec3(p.x(), p.y(), 1.0);
  return q.head<2>() / q.z();
}

Homography Homography::normalized() const {
  if (h(2, 2) == 0.0) return *this;
  return {h / h(2, 2)};
}

Plane3 Plane3::through(const Vec3& point, const Vec3& normal) {
  const Vec3 n = normal.normalized();
  return {n, n.dot(point)};
}

Mat3 skew(const Vec3& v) {
  Mat3 S;
  S << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return S;
}

Mat3 rotation_vector_to_matrix(const Vec3& r) {
  const double theta2 = r.squaredNorm();
  const Mat3 K = skew(r);
  double a;  // sin θ / θ
  double b;  // (1 - cos θ) / θ²
  if (theta2 < 1e-10) {
    a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0;
    b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Mat3::Identity() + a * K + b * K * K;
}

Vec3 matrix_to_rotation_vector(const Mat3& R) {
  if (!R.allFinite() || (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
      R.determinant() <= 0.0) {
    throw Error("not a rotation");
  }
  const double c = std::clamp((R.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Vec3 v(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  const Vec3 sin_axis = 0.5 * v;
  const double s = sin_axis.norm();
  const double theta = std::atan2(s, c);

  if (c > -0.9) {
    if (s == 0.0) return Vec3::Zero();
    return sin_axis * (theta / s);
  }

  // Near π the antisymmetric part vanishes; read the axis from the symmetric part.
  const Mat3 B = 0.5 * (R + R.transpose()) - c * Mat3::Identity();
  int i = 0;
  B.diagonal().maxCoeff(&i);
  Vec3 axis = B.col(i).normalized();
  if (s > 1e-12) {
    if (axis.dot(sin_axis) < 0.0) axis = -axis;
  } else {
    for (int k = 0; k < 3; ++k) {
      if (std::abs(axis[k]) > 1e-12) {
        if (axis[k] < 0.0) axis = -axis;
        break;
      }
    }
  }
  return axis * theta;
}

double rotation_angle_between(const Mat3& a, const Mat3& b) {
  const Mat3 d = a * b.transpose();
  const double c = std::clamp((d.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Vec3 v(d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1));
  return std::atan2(0.5 * v.norm(), c);
}

Vec2 distort(const Vec2& pt, const Distortion& d) {
  const double x = pt.x();
  const double y = pt.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + d.k1 * r2 + d.k2 * r2 * r2;
  return {x * radial + 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x),
          y * radial + d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y};
}

Vec2 undistort(const Vec2& pt, const Distortion& d) {
  if (d.is_zero()) return pt;
  Vec2 x = pt;
  for (int iter = 0; iter < 50; ++iter) {
    const double u = x.x();
    const double v = x.y();
    const double r2 = u * u + v * v;
    const double radial = 1.0 + d.k1 * r2 + d.k2 * r2 * r2;
    const double dradial = 2.0 * d.k1 + 4.0 * d.k2 * r2;  // ∂radial/∂u = dradial·u
    Eigen::Matrix2d J;
    J(0, 0) = radial + u * dradial * u + 2.0 * d.p1 * v + 6.0 * d.p2 * u;
    J(0, 1) = u * dradial * v + 2.0 * d.p1 * u + 2.0 * d.p2 * v;
    J(1, 0) = v * dradial * u + 2.0 * d.p1 * u + 2.0 * d.p2 * v;
    J(1, 1) = radial + v * dradial * v + 6.0 * d.p1 * v + 2.0 * d.p2 * u;
    const Vec2 residual = distort(x, d) - pt;
    const double det = J.determinant();
    if (!std::isfinite(det) || std::abs(det) < 1e-14) break;
    const Vec2 step = J.inverse() * residual;
    x -= step;
    if (!x.allFinite()) break;
    if (step.norm() < 1e-10) {
      if ((distort(x, d) - pt).norm() < 1e-8) return x;
      break;
    }
  }
  throw Error("undistort diverged");
}

Vec2 project_device_point(const Vec3& x_dev, const Device& device) {
  Vec2 pixel;
  if (!project_to_pixel(x_dev, device, pixel)) throw Error("behind device");
  return pixel;
}

Vec2 project(const Vec3& x_m, const Pose& board_pose, const Device& device, const Pose& device_pose) {
  const Vec3 x_cam = board_pose.apply(x_m);
  return project_device_point(device_pose.apply(x_cam), device);
}

Homography homography_from_pose(const Intrinsics& K, const Pose& pose) {
  const Mat3 R = pose.rotation();
  Mat3 M;
  M.col(0) = R.col(0);
  M.col(1) = R.col(1);
  M.col(2) = pose.t;
  if (std::abs(M.determinant()) <= 1e-12 * std::max(1.0, pose.t.norm())) throw Error("degenerate pose");
  return Homography{K.matrix() * M}.normalized();
}

Vec3 warp_to_board(const Vec2& pt, const Homography& H) {
  const double det = H.h.determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-300) throw Error("warp singular");
  const Vec3 q = H.h.inverse() * Vec3(pt.x(), pt.y(), 1.0);
  if (std::abs(q.z()) <= 1e-12 * q.norm()) throw Error("warp singular");
  return {q.x() / q.z(), q.y() / q.z(), 0.0};
}

Vec3 intersect_ray_plane(const Vec3& origin, const Vec3& direction, const Plane3& plane) {
  const double denom = plane.n.dot(direction);
  if (std::abs(denom) <= 1e-9) throw Error("no intersection");
  const double s = (plane.d - plane.n.dot(origin)) / denom;
  if (s <= 0.0) throw Error("intersection behind origin");
  return origin + s * direction;
}

Vec3 triangulate(const Vec2& x_c, const Vec2& x_p, const StereoRig& rig) {
  const Vec2 nc = undistort(rig.camera.intrinsics.to_normalized(x_c), rig.camera.distortion);
  const Vec2 np = undistort(rig.projector.intrinsics.to_normalized(x_p), rig.projector.distortion);
  const Mat3 R = rig.camera_to_projector.rotation();
  const Vec3 origin_p = -(R.transpose() * rig.camera_to_projector.t);
  const Vec3 dir_c(nc.x(), nc.y(), 1.0);
  const Vec3 dir_p = R.transpose() * Vec3(np.x(), np.y(), 1.0);

  const Vec3 w0 = -origin_p;  // camera origin minus projector origin
  const double a = dir_c.dot(dir_c);
  const double b = dir_c.dot(dir_p);
  const double c = dir_p.dot(dir_p);
  const double d = dir_c.dot(w0);
  const double e = dir_p.dot(w0);
  const double denom = a * c - b * b;
  if (denom <= 1e-18 * a * c) throw Error("triangulation degenerate");
  const double sc = (b * e - c * d) / denom;
  const double sp = (a * e - b * d) / denom;
  return 0.5 * (sc * dir_c + origin_p + sp * dir_p);
}

std::pair<Mat3, Vec3> relative_transform(const Pose& board_to_a, const Pose& board_to_b) {
  const Mat3 Rb = board_to_b.rotation();
  const Mat3 R = Rb * board_to_a.rotation().transpose();
  return {R, board_to_b.t - R * board_to_a.t};
}

double median(std::span<const double> values) {
  if (values.empty()) throw Error("median of empty set");
  std::vector<double> v(values.begin(), values.end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

Pose median_pose(std::span<const Mat3> rel_rotations, std::span<const Vec3> rel_translations) {
  if (rel_rotations.empty() || rel_rotations.size() != rel_translations.size()) {
    throw Error("median_pose needs matching nonempty lists");
  }
  const std::size_t n = rel_rotations.size();
  std::vector<Vec3> rvecs;
  rvecs.reserve(n);
  for (const Mat3& R : rel_rotations) rvecs.push_back(matrix_to_rotation_vector(R));

  Pose out;
  std::vector<double> comp(n);
  for (int k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < n; ++i) comp[i] = rvecs[i][k];
    out.r[k] = median(comp);
    for (std::size_t i = 0; i < n; ++i) comp[i] = rel_translations[i][k];
    out.t[k] = median(comp);
  }
  return out;
}

}  // namespace procam
