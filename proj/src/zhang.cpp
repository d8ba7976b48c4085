#include "procam/zhang.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace procam {

namespace {

constexpr double kBehindSentinel = 1e6;

// Similarity that moves the centroid to the origin and the mean distance to √2.
Mat3 hartley_transform(std::span<const Vec2> pts) {
  Vec2 centroid = Vec2::Zero();
  for (const Vec2& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const Vec2& p : pts) mean_dist += (p - centroid).norm();
  mean_dist /= static_cast<double>(pts.size());
  if (!(mean_dist > 0.0)) throw Error("degenerate configuration");
  const double s = std::sqrt(2.0) / mean_dist;
  Mat3 T;
  T << s, 0.0, -s * centroid.x(), 0.0, s, -s * centroid.y(), 0.0, 0.0, 1.0;
  return T;
}

Eigen::Matrix<double, 1, 5> conic_row(const Mat3& H, int i, int j) {
  const Vec3 hi = H.col(i);
  const Vec3 hj = H.col(j);
  Eigen::Matrix<double, 1, 5> v;
  v << hi(0) * hj(0), hi(1) * hj(1), hi(2) * hj(0) + hi(0) * hj(2), hi(2) * hj(1) + hi(1) * hj(2), hi(2) * hj(2);
  return v;
}

struct PointRef {
  int pose;
  Vec3 board;
  Vec2 image;
};

constexpr int kIntrinsicParams = 8;

Device unpack_device(const Eigen::VectorXd& p) {
  Device d;
  d.intrinsics = {p[0], p[1], p[2], p[3]};
  d.distortion = {p[4], p[5], p[6], p[7]};
  return d;
}

// Residuals (observed - predicted), two per point.
void evaluate(const Eigen::VectorXd& p, std::span<const PointRef> points, int pose_count, Eigen::VectorXd& out) {
  const Device device = unpack_device(p);
  std::vector<Mat3> R(static_cast<std::size_t>(pose_count));
  std::vector<Vec3> t(static_cast<std::size_t>(pose_count));
  for (int j = 0; j < pose_count; ++j) {
    R[static_cast<std::size_t>(j)] = rotation_vector_to_matrix(p.segment<3>(kIntrinsicParams + 6 * j));
    t[static_cast<std::size_t>(j)] = p.segment<3>(kIntrinsicParams + 6 * j + 3);
  }
  out.resize(2 * static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto j = static_cast<std::size_t>(points[i].pose);
    Vec2 px;
    const auto row = 2 * static_cast<Eigen::Index>(i);
    if (project_to_pixel(R[j] * points[i].board + t[j], device, px)) {
      out.segment<2>(row) = points[i].image - px;
    } else {
      out.segment<2>(row).setConstant(kBehindSentinel);
    }
  }
}

}  // namespace

Homography estimate_homography_dlt(std::span<const PointPair> pairs) {
  if (pairs.size() < 4) throw Error("degenerate configuration");
  std::vector<Vec2> board;
  std::vector<Vec2> image;
  board.reserve(pairs.size());
  image.reserve(pairs.size());
  for (const PointPair& pp : pairs) {
    board.push_back(pp.board);
    image.push_back(pp.image);
  }
  const Mat3 Tb = hartley_transform(board);
  const Mat3 Ti = hartley_transform(image);

  Eigen::MatrixXd A(2 * static_cast<Eigen::Index>(pairs.size()), 9);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Vec3 b = Tb * Vec3(board[i].x(), board[i].y(), 1.0);
    const Vec3 m = Ti * Vec3(image[i].x(), image[i].y(), 1.0);
    const double X = b.x() / b.z();
    const double Y = b.y() / b.z();
    const double u = m.x() / m.z();
    const double v = m.y() / m.z();
    const auto r = 2 * static_cast<Eigen::Index>(i);
    A.row(r) << -X, -Y, -1.0, 0.0, 0.0, 0.0, u * X, u * Y, u;
    A.row(r + 1) << 0.0, 0.0, 0.0, -X, -Y, -1.0, v * X, v * Y, v;
  }
  // The 9×9 normal matrix keeps this cheap for thousands of points; its
  // spectrum is the squared singular values of A.
  const Eigen::Matrix<double, 9, 9> AtA = A.transpose() * A;
  Eigen::JacobiSVD<Eigen::Matrix<double, 9, 9>> svd(AtA, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(7) <= 1e-14 * sv(0)) throw Error("degenerate configuration");
  const Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Mat3 Hn;
  Hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Mat3 H = Ti.inverse() * Hn * Tb;
  if (!H.allFinite() || std::abs(H.determinant()) < 1e-300) throw Error("degenerate configuration");
  return Homography{H}.normalized();
}

Intrinsics intrinsics_from_homographies(std::span<const Homography> hs) {
  if (hs.size() < 3) throw Error("insufficient poses");

  // Pixel-scale conditioning: K' = S K with S = diag(1/s, 1/s, 1) keeps zero skew.
  double s = 0.0;
  for (const Homography& H : hs) {
    const Mat3 h = H.h / H.h(2, 2);
    s += std::hypot(h(0, 2), h(1, 2));
  }
  s = std::max(1.0, s / static_cast<double>(hs.size()));
  Mat3 S = Mat3::Identity();
  S(0, 0) = S(1, 1) = 1.0 / s;

  Eigen::MatrixXd V(2 * static_cast<Eigen::Index>(hs.size()), 5);
  for (std::size_t i = 0; i < hs.size(); ++i) {
    Mat3 h = S * hs[i].h;
    h /= h.norm();
    const auto r = 2 * static_cast<Eigen::Index>(i);
    V.row(r) = conic_row(h, 0, 1);
    V.row(r + 1) = conic_row(h, 0, 0) - conic_row(h, 1, 1);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(V, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(3) <= 1e-9 * sv(0)) throw Error("degenerate pose set");
  Eigen::Matrix<double, 5, 1> b = svd.matrixV().col(4);
  if (b(0) < 0.0) b = -b;
  const double B11 = b(0), B22 = b(1), B13 = b(2), B23 = b(3), B33 = b(4);
  if (!(B11 > 0.0) || !(B22 > 0.0)) throw Error("degenerate pose set");
  const double mu = B33 - B13 * B13 / B11 - B23 * B23 / B22;
  if (!(mu > 0.0)) throw Error("degenerate pose set");
  Intrinsics K;
  K.fx = std::sqrt(mu / B11) * s;
  K.fy = std::sqrt(mu / B22) * s;
  K.cx = -B13 / B11 * s;
  K.cy = -B23 / B22 * s;
  if (!K.valid()) throw Error("degenerate pose set");
  return K;
}

Pose extrinsics_from_homography(const Intrinsics& K, const Homography& H) {
  const Mat3 Kinv = K.matrix().inverse();
  const Vec3 a1 = Kinv * H.h.col(0);
  const Vec3 a2 = Kinv * H.h.col(1);
  const Vec3 a3 = Kinv * H.h.col(2);
  const double n1 = a1.norm();
  if (!(n1 > 0.0)) throw Error("degenerate pose");
  double lambda = 1.0 / n1;
  if (lambda * a3.z() < 0.0) lambda = -lambda;
  const Vec3 t = lambda * a3;
  if (!(t.z() > 0.0)) throw Error("board behind camera");
  Mat3 Q;
  Q.col(0) = lambda * a1;
  Q.col(1) = lambda * a2;
  Q.col(2) = Q.col(0).cross(Q.col(1));
  Eigen::JacobiSVD<Mat3> svd(Q, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 R = svd.matrixU() * svd.matrixV().transpose();
  if (R.determinant() < 0.0) {
    Mat3 D = Mat3::Identity();
    D(2, 2) = -1.0;
    R = svd.matrixU() * D * svd.matrixV().transpose();
  }
  return Pose::from_matrix(R, t);
}

double reprojection_rms(std::span<const PlanarObservation> observations, const Device& device,
                        std::span<const Pose> poses) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < observations.size(); ++j) {
    const Mat3 R = poses[j].rotation();
    for (const PointPair& pp : observations[j].pairs) {
      Vec2 px;
      if (project_to_pixel(R * Vec3(pp.board.x(), pp.board.y(), 0.0) + poses[j].t, device, px)) {
        sum += (pp.image - px).squaredNorm();
      } else {
        sum += 2.0 * kBehindSentinel * kBehindSentinel;
      }
      ++count;
    }
  }
  return count ? std::sqrt(sum / static_cast<double>(count)) : 0.0;
}

DeviceCalibration calibrate_device(std::span<const PlanarObservation> observations, const ZhangOptions& options) {
  if (observations.size() < 3) throw Error("insufficient poses");
  for (const PlanarObservation& obs : observations) {
    if (obs.pairs.size() < 4) throw Error("degenerate configuration");
  }

  std::vector<Homography> hs;
  hs.reserve(observations.size());
  for (const PlanarObservation& obs : observations) hs.push_back(estimate_homography_dlt(obs.pairs));
  const Intrinsics K0 = intrinsics_from_homographies(hs);

  const int N = static_cast<int>(observations.size());
  const int P = kIntrinsicParams + 6 * N;
  Eigen::VectorXd p = Eigen::VectorXd::Zero(P);
  p.head<4>() << K0.fx, K0.fy, K0.cx, K0.cy;
  for (int j = 0; j < N; ++j) {
    const Pose pose = extrinsics_from_homography(K0, hs[static_cast<std::size_t>(j)]);
    p.segment<3>(kIntrinsicParams + 6 * j) = pose.r;
    p.segment<3>(kIntrinsicParams + 6 * j + 3) = pose.t;
  }

  std::vector<PointRef> points;
  for (int j = 0; j < N; ++j) {
    for (const PointPair& pp : observations[static_cast<std::size_t>(j)].pairs) {
      points.push_back({j, Vec3(pp.board.x(), pp.board.y(), 0.0), pp.image});
    }
  }

  std::vector<int> free_intrinsics = {0, 1, 2, 3};
  if (options.refine_distortion) free_intrinsics.insert(free_intrinsics.end(), {4, 5, 6, 7});

  Eigen::VectorXd r;
  evaluate(p, points, N, r);
  double cost = r.squaredNorm();
  const double initial_cost = cost;

  // Per point: 2 rows × (8 intrinsic + 6 pose) local columns.
  const auto n_points = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd Jint(2 * n_points, kIntrinsicParams);
  Eigen::MatrixXd Jpose(2 * n_points, 6);
  Eigen::VectorXd r_pert;

  DeviceCalibration result;
  double mu = -1.0;
  int iter = 0;
  bool converged = false;
  for (; iter < options.max_iterations && !converged; ++iter) {
    if (cost == 0.0) {
      converged = true;
      break;
    }
    // Forward differences; one evaluation per intrinsic, and one per pose
    // component shared by all poses since pose j only touches its own rows.
    Jint.setZero();
    for (int c : free_intrinsics) {
      const double h = 1e-7 * std::max(1.0, std::abs(p[c]));
      Eigen::VectorXd q = p;
      q[c] += h;
      evaluate(q, points, N, r_pert);
      Jint.col(c) = (r_pert - r) / h;
    }
    for (int k = 0; k < 6; ++k) {
      Eigen::VectorXd q = p;
      Eigen::VectorXd steps(N);
      for (int j = 0; j < N; ++j) {
        const int c = kIntrinsicParams + 6 * j + k;
        steps[j] = 1e-7 * std::max(1.0, std::abs(p[c]));
        q[c] += steps[j];
      }
      evaluate(q, points, N, r_pert);
      for (Eigen::Index i = 0; i < n_points; ++i) {
        const double h = steps[points[static_cast<std::size_t>(i)].pose];
        Jpose.block<2, 1>(2 * i, k) = (r_pert.segment<2>(2 * i) - r.segment<2>(2 * i)) / h;
      }
    }

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(P, P);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(P);
    for (Eigen::Index i = 0; i < n_points; ++i) {
      const int j = points[static_cast<std::size_t>(i)].pose;
      Eigen::Matrix<double, 2, 14> Jl;
      Jl.leftCols<8>() = Jint.middleRows<2>(2 * i);
      Jl.rightCols<6>() = Jpose.middleRows<2>(2 * i);
      const Eigen::Matrix<double, 14, 14> H = Jl.transpose() * Jl;
      const Eigen::Matrix<double, 14, 1> gl = Jl.transpose() * r.segment<2>(2 * i);
      const int pc = kIntrinsicParams + 6 * j;
      A.topLeftCorner<8, 8>() += H.topLeftCorner<8, 8>();
      A.block<8, 6>(0, pc) += H.topRightCorner<8, 6>();
      A.block<6, 8>(pc, 0) += H.bottomLeftCorner<6, 8>();
      A.block<6, 6>(pc, pc) += H.bottomRightCorner<6, 6>();
      g.head<8>() += gl.head<8>();
      g.segment<6>(pc) += gl.tail<6>();
    }
    if (!options.refine_distortion) {
      for (int c = 4; c < 8; ++c) {
        A.row(c).setZero();
        A.col(c).setZero();
        A(c, c) = 1.0;
        g[c] = 0.0;
      }
    }
    if (g.cwiseAbs().maxCoeff() < 1e-10) {
      converged = true;
      break;
    }
    if (mu < 0.0) mu = 1e-3 * A.diagonal().maxCoeff();

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd Ad = A;
      Ad.diagonal().array() += mu;
      const Eigen::VectorXd delta = -Ad.ldlt().solve(g);
      Eigen::VectorXd q = p + delta;
      Eigen::VectorXd r_new;
      evaluate(q, points, N, r_new);
      const double new_cost = r_new.squaredNorm();
      if (std::isfinite(new_cost) && new_cost < cost) {
        const double rel = (cost - new_cost) / cost;
        p = q;
        r = r_new;
        cost = new_cost;
        mu /= 10.0;
        accepted = true;
        if (rel < 1e-12) converged = true;
      } else {
        mu *= 10.0;
        if (mu > 1e30 || delta.norm() <= 1e-15 * (p.norm() + 1e-15)) {
          converged = true;
          break;
        }
      }
    }
  }

  result.device = unpack_device(p);
  result.poses.reserve(static_cast<std::size_t>(N));
  for (int j = 0; j < N; ++j) {
    result.poses.push_back({p.segment<3>(kIntrinsicParams + 6 * j), p.segment<3>(kIntrinsicParams + 6 * j + 3)});
  }
  const auto n = static_cast<double>(points.size());
  result.initial_rms = std::sqrt(initial_cost / n);
  result.rms = std::sqrt(cost / n);
  result.iterations = iter;
  result.converged = converged;
  return result;
}

}  // namespace procam
