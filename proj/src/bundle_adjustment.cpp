#include "procam/bundle_adjustment.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>

namespace procam {

namespace {

constexpr double kBehindSentinel = 1e6;
constexpr int kLocalCols = 31;  // 22 global + 6 pose + 3 point

ParameterLayout layout_for(const BundleProblem& problem) {
  return {problem.pose_count, static_cast<int>(problem.nodes.size())};
}

void check_problem(const Eigen::VectorXd& params, const BundleProblem& problem) {
  const ParameterLayout L = layout_for(problem);
  if (params.size() != L.size()) throw Error("parameter vector length does not match the problem");
  for (const NodeObservation& n : problem.nodes) {
    if (n.pose < 0 || n.pose >= problem.pose_count) throw Error("node references an unknown pose");
  }
}

// Unpacked rotations and devices for one parameter vector.
class Evaluator {
 public:
  explicit Evaluator(const ParameterLayout& layout) : layout_(layout) {
    R_.resize(static_cast<std::size_t>(layout.pose_count));
    t_.resize(static_cast<std::size_t>(layout.pose_count));
  }

  void load(const Eigen::VectorXd& p) {
    camera_.intrinsics = {p[0], p[1], p[2], p[3]};
    camera_.distortion = {p[4], p[5], p[6], p[7]};
    projector_.intrinsics = {p[8], p[9], p[10], p[11]};
    projector_.distortion = {p[12], p[13], p[14], p[15]};
    R_cp_ = rotation_vector_to_matrix(p.segment<3>(16));
    t_cp_ = p.segment<3>(19);
    for (int j = 0; j < layout_.pose_count; ++j) {
      const int o = layout_.pose_offset(j);
      R_[static_cast<std::size_t>(j)] = rotation_vector_to_matrix(p.segment<3>(o));
      t_[static_cast<std::size_t>(j)] = p.segment<3>(o + 3);
    }
  }

  enum Part : unsigned { kCameraRows = 1, kProjectorRows = 2, kScaleRows = 4, kAllRows = 7 };

  void residual(const Eigen::VectorXd& p, int i, const NodeObservation& obs, double sqrt_lambda, double* out,
                unsigned part = kAllRows) const {
    const Vec3 x_m = p.segment<3>(layout_.point_offset(i));
    const auto j = static_cast<std::size_t>(obs.pose);
    const Vec3 x_cam = R_[j] * x_m + t_[j];
    Vec2 px;
    if (part & kCameraRows) {
      if (project_to_pixel(x_cam, camera_, px)) {
        out[0] = obs.x_c.x() - px.x();
        out[1] = obs.x_c.y() - px.y();
      } else {
        out[0] = out[1] = kBehindSentinel;
      }
    }
    if (part & kProjectorRows) {
      if (project_to_pixel(R_cp_ * x_cam + t_cp_, projector_, px)) {
        out[2] = obs.x_p.x() - px.x();
        out[3] = obs.x_p.y() - px.y();
      } else {
        out[2] = out[3] = kBehindSentinel;
      }
    }
    if (part & kScaleRows) {
      for (int k = 0; k < 3; ++k) out[4 + k] = sqrt_lambda * (x_m[k] - obs.x_m_init[k]);
    }
  }

  /// Fills `out`; rows outside `part` are left untouched.
  void residuals(const Eigen::VectorXd& p, const BundleProblem& problem, std::span<const double> sqrt_lambda,
                 Eigen::VectorXd& out, unsigned part = kAllRows) {
    load(p);
    out.resize(7 * static_cast<Eigen::Index>(problem.nodes.size()));
    for (std::size_t i = 0; i < problem.nodes.size(); ++i) {
      residual(p, static_cast<int>(i), problem.nodes[i], sqrt_lambda[i], out.data() + 7 * i, part);
    }
  }

 private:
  ParameterLayout layout_;
  Device camera_;
  Device projector_;
  Mat3 R_cp_;
  Vec3 t_cp_;
  std::vector<Mat3> R_;
  std::vector<Vec3> t_;
};

// Jacobian of one node's residuals restricted to its nonzero columns.
// cam: [K_c d_c (8) | pose (6) | point (3)], proj: [K_p d_p r_cp t_cp (14) | pose (6) | point (3)].
struct NodeJacobian {
  Eigen::Matrix<double, 2, 17> cam;
  Eigen::Matrix<double, 2, 23> proj;
  Vec3 scale;
};

struct ColumnMask {
  bool global[ParameterLayout::kGlobal];
  bool poses;
  bool points;
};

ColumnMask mask_from(const BundleOptions& o) {
  ColumnMask m{};
  for (int c = 0; c < 16; ++c) m.global[c] = o.optimize_intrinsics;
  for (int c = 16; c < 22; ++c) m.global[c] = o.optimize_stereo;
  m.poses = o.optimize_poses;
  m.points = o.optimize_points;
  return m;
}

ColumnMask all_columns() {
  ColumnMask m{};
  std::fill(std::begin(m.global), std::end(m.global), true);
  m.poses = true;
  m.points = true;
  return m;
}

double fd_step(double value) { return 1e-7 * std::max(1.0, std::abs(value)); }

// Forward differences with column grouping: each global column alone, one
// evaluation per pose component across all poses, one per point component
// across all points.
void block_jacobian(const Eigen::VectorXd& p, const Eigen::VectorXd& r, const BundleProblem& problem,
                    std::span<const double> sqrt_lambda, const ColumnMask& mask, Evaluator& eval,
                    std::vector<NodeJacobian>& J) {
  const ParameterLayout L = layout_for(problem);
  const std::size_t n = problem.nodes.size();
  J.resize(n);
  for (NodeJacobian& nj : J) {
    nj.cam.setZero();
    nj.proj.setZero();
    nj.scale.setZero();
  }
  Eigen::VectorXd q;
  Eigen::VectorXd rp;

  for (int c = 0; c < ParameterLayout::kGlobal; ++c) {
    if (!mask.global[c]) continue;
    const double h = fd_step(p[c]);
    q = p;
    q[c] += h;
    eval.residuals(q, problem, sqrt_lambda, rp, c < 8 ? Evaluator::kCameraRows : Evaluator::kProjectorRows);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = static_cast<Eigen::Index>(7 * i);
      if (c < 8) {
        J[i].cam.col(c) = (rp.segment<2>(row) - r.segment<2>(row)) / h;
      } else {
        J[i].proj.col(c - 8) = (rp.segment<2>(row + 2) - r.segment<2>(row + 2)) / h;
      }
    }
  }

  if (mask.poses) {
    std::vector<double> steps(static_cast<std::size_t>(L.pose_count));
    for (int k = 0; k < 6; ++k) {
      q = p;
      for (int j = 0; j < L.pose_count; ++j) {
        const int c = L.pose_offset(j) + k;
        steps[static_cast<std::size_t>(j)] = fd_step(p[c]);
        q[c] += steps[static_cast<std::size_t>(j)];
      }
      eval.residuals(q, problem, sqrt_lambda, rp, Evaluator::kCameraRows | Evaluator::kProjectorRows);
      for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(7 * i);
        const double h = steps[static_cast<std::size_t>(problem.nodes[i].pose)];
        J[i].cam.col(8 + k) = (rp.segment<2>(row) - r.segment<2>(row)) / h;
        J[i].proj.col(14 + k) = (rp.segment<2>(row + 2) - r.segment<2>(row + 2)) / h;
      }
    }
  }

  if (mask.points) {
    std::vector<double> steps(n);
    for (int k = 0; k < 3; ++k) {
      q = p;
      for (std::size_t i = 0; i < n; ++i) {
        const int c = L.point_offset(static_cast<int>(i)) + k;
        steps[i] = fd_step(p[c]);
        q[c] += steps[i];
      }
      eval.residuals(q, problem, sqrt_lambda, rp);
      for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(7 * i);
        const double h = steps[i];
        J[i].cam.col(14 + k) = (rp.segment<2>(row) - r.segment<2>(row)) / h;
        J[i].proj.col(20 + k) = (rp.segment<2>(row + 2) - r.segment<2>(row + 2)) / h;
        J[i].scale[k] = (rp[row + 4 + k] - r[row + 4 + k]) / h;
      }
    }
  }
}

// Local column index (0..30) -> global parameter index for node i.
std::array<int, kLocalCols> local_columns(const ParameterLayout& L, int pose, int point) {
  std::array<int, kLocalCols> cols{};
  for (int c = 0; c < ParameterLayout::kGlobal; ++c) cols[static_cast<std::size_t>(c)] = c;
  for (int k = 0; k < 6; ++k) cols[static_cast<std::size_t>(22 + k)] = L.pose_offset(pose) + k;
  for (int k = 0; k < 3; ++k) cols[static_cast<std::size_t>(28 + k)] = L.point_offset(point) + k;
  return cols;
}

// Dense 7×31 local Jacobian of one node.
Eigen::Matrix<double, 7, kLocalCols> local_jacobian(const NodeJacobian& nj) {
  Eigen::Matrix<double, 7, kLocalCols> Jl = Eigen::Matrix<double, 7, kLocalCols>::Zero();
  Jl.block<2, 8>(0, 0) = nj.cam.leftCols<8>();
  Jl.block<2, 6>(0, 22) = nj.cam.middleCols<6>(8);
  Jl.block<2, 3>(0, 28) = nj.cam.rightCols<3>();
  Jl.block<2, 14>(2, 8) = nj.proj.leftCols<14>();
  Jl.block<2, 6>(2, 22) = nj.proj.middleCols<6>(14);
  Jl.block<2, 3>(2, 28) = nj.proj.rightCols<3>();
  for (int k = 0; k < 3; ++k) Jl(4 + k, 28 + k) = nj.scale[k];
  return Jl;
}

// Damped normal equations with the point blocks eliminated: every point couples
// only to the 22 global columns, its pose and itself, so the system reduces to
// a dense (22 + 6N) Schur complement plus one 3×3 back-substitution per point.
class NormalEquations {
 public:
  explicit NormalEquations(const BundleProblem& problem)
      : layout_(layout_for(problem)), reduced_(ParameterLayout::kGlobal + 6 * layout_.pose_count) {
    point_pose_.reserve(problem.nodes.size());
    for (const NodeObservation& n : problem.nodes) point_pose_.push_back(n.pose);
    W_.resize(problem.nodes.size());
    V_.resize(problem.nodes.size());
    V_inv_.resize(problem.nodes.size());
  }

  void assemble(std::span<const NodeJacobian> J, const Eigen::VectorXd& r, const std::vector<bool>& free) {
    g_ = Eigen::VectorXd::Zero(layout_.size());
    Eigen::Matrix<double, 22, 22> G = Eigen::Matrix<double, 22, 22>::Zero();
    std::vector<Eigen::Matrix<double, 28, 6>> pose_blocks(static_cast<std::size_t>(layout_.pose_count),
                                                          Eigen::Matrix<double, 28, 6>::Zero());
    for (std::size_t i = 0; i < J.size(); ++i) {
      const NodeJacobian& nj = J[i];
      const auto row = 7 * static_cast<Eigen::Index>(i);
      const Eigen::Matrix<double, 17, 17> Hc = nj.cam.transpose() * nj.cam;
      const Eigen::Matrix<double, 23, 23> Hp = nj.proj.transpose() * nj.proj;
      const Eigen::Matrix<double, 17, 1> gc = nj.cam.transpose() * r.segment<2>(row);
      const Eigen::Matrix<double, 23, 1> gp = nj.proj.transpose() * r.segment<2>(row + 2);
      const int pose = point_pose_[i];

      G.topLeftCorner<8, 8>() += Hc.topLeftCorner<8, 8>();
      G.bottomRightCorner<14, 14>() += Hp.topLeftCorner<14, 14>();
      auto& B = pose_blocks[static_cast<std::size_t>(pose)];
      B.topRows<8>() += Hc.block<8, 6>(0, 8);
      B.middleRows<14>(8) += Hp.block<14, 6>(0, 14);
      B.bottomRows<6>() += Hc.block<6, 6>(8, 8) + Hp.block<6, 6>(14, 14);

      auto& W = W_[i];
      W.topRows<8>() = Hc.block<8, 3>(0, 14);
      W.middleRows<14>(8) = Hp.block<14, 3>(0, 20);
      W.bottomRows<6>() = Hc.block<6, 3>(8, 14) + Hp.block<6, 3>(14, 20);
      V_[i] = Hc.bottomRightCorner<3, 3>() + Hp.bottomRightCorner<3, 3>();
      V_[i].diagonal() += nj.scale.cwiseAbs2();

      const int po = layout_.point_offset(static_cast<int>(i));
      g_.head<8>() += gc.head<8>();
      g_.segment<14>(8) += gp.head<14>();
      g_.segment<6>(layout_.pose_offset(pose)) += gc.segment<6>(8) + gp.segment<6>(14);
      g_.segment<3>(po) += gc.tail<3>() + gp.tail<3>() + nj.scale.cwiseProduct(r.segment<3>(row + 4));
    }

    U_ = Eigen::MatrixXd::Zero(reduced_, reduced_);
    U_.topLeftCorner<22, 22>() = G;
    for (int j = 0; j < layout_.pose_count; ++j) {
      const auto& B = pose_blocks[static_cast<std::size_t>(j)];
      const int o = layout_.pose_offset(j);
      U_.block<22, 6>(0, o) = B.topRows<22>();
      U_.block<6, 22>(o, 0) = B.topRows<22>().transpose();
      U_.block<6, 6>(o, o) = B.bottomRows<6>();
    }

    // Frozen columns: identity row/column, zero gradient.
    free_ = free;
    for (int c = 0; c < reduced_; ++c) {
      if (free[static_cast<std::size_t>(c)]) continue;
      U_.row(c).setZero();
      U_.col(c).setZero();
      U_(c, c) = 1.0;
      g_[c] = 0.0;
    }
    for (std::size_t i = 0; i < W_.size(); ++i) {
      const int po = layout_.point_offset(static_cast<int>(i));
      const int pose_o = layout_.pose_offset(point_pose_[i]);
      for (int k = 0; k < 28; ++k) {
        const int c = k < 22 ? k : pose_o + (k - 22);
        if (!free[static_cast<std::size_t>(c)]) W_[i].row(k).setZero();
      }
      for (int k = 0; k < 3; ++k) {
        if (free[static_cast<std::size_t>(po + k)]) continue;
        W_[i].col(k).setZero();
        V_[i].row(k).setZero();
        V_[i].col(k).setZero();
        V_[i](k, k) = 1.0;
        g_[po + k] = 0.0;
      }
    }
  }

  /// Solves (A + μ diag(A)) δ = -g; false when the damped system is not positive definite.
  bool solve(double mu, Eigen::VectorXd& delta) {
    const auto damp = [mu](double d) { return d + mu * std::max(d, 1e-9); };
    Eigen::MatrixXd S = U_;
    for (int c = 0; c < reduced_; ++c) S(c, c) = damp(U_(c, c));
    Eigen::VectorXd b = -g_.head(reduced_);

    std::vector<Eigen::Matrix<double, 28, 28>> pose_sums(static_cast<std::size_t>(layout_.pose_count),
                                                         Eigen::Matrix<double, 28, 28>::Zero());
    std::vector<Eigen::Matrix<double, 28, 1>> pose_rhs(static_cast<std::size_t>(layout_.pose_count),
                                                       Eigen::Matrix<double, 28, 1>::Zero());
    for (std::size_t i = 0; i < W_.size(); ++i) {
      Mat3 Vd = V_[i];
      for (int k = 0; k < 3; ++k) Vd(k, k) = damp(V_[i](k, k));
      const Eigen::LLT<Mat3> llt(Vd);
      if (llt.info() != Eigen::Success) return false;
      V_inv_[i] = llt.solve(Mat3::Identity());
      const Eigen::Matrix<double, 28, 3> WV = W_[i] * V_inv_[i];
      const auto j = static_cast<std::size_t>(point_pose_[i]);
      pose_sums[j].noalias() += WV * W_[i].transpose();
      pose_rhs[j].noalias() += WV * g_.segment<3>(layout_.point_offset(static_cast<int>(i)));
    }
    for (int j = 0; j < layout_.pose_count; ++j) {
      const auto& T = pose_sums[static_cast<std::size_t>(j)];
      const auto& t = pose_rhs[static_cast<std::size_t>(j)];
      const int o = layout_.pose_offset(j);
      S.topLeftCorner<22, 22>() -= T.topLeftCorner<22, 22>();
      S.block<22, 6>(0, o) -= T.topRightCorner<22, 6>();
      S.block<6, 22>(o, 0) -= T.bottomLeftCorner<6, 22>();
      S.block<6, 6>(o, o) -= T.bottomRightCorner<6, 6>();
      b.head<22>() += t.head<22>();
      b.segment<6>(o) += t.tail<6>();
    }

    const Eigen::LLT<Eigen::MatrixXd> reduced(S);
    if (reduced.info() != Eigen::Success) return false;
    const Eigen::VectorXd dr = reduced.solve(b);

    delta.resize(layout_.size());
    delta.head(reduced_) = dr;
    for (std::size_t i = 0; i < W_.size(); ++i) {
      const int po = layout_.point_offset(static_cast<int>(i));
      const int pose_o = layout_.pose_offset(point_pose_[i]);
      Eigen::Matrix<double, 28, 1> d_local;
      d_local.head<22>() = dr.head<22>();
      d_local.tail<6>() = dr.segment<6>(pose_o);
      delta.segment<3>(po) = -V_inv_[i] * (g_.segment<3>(po) + W_[i].transpose() * d_local);
    }
    for (int c = 0; c < layout_.size(); ++c) {
      if (!free_[static_cast<std::size_t>(c)]) delta[c] = 0.0;
    }
    return delta.allFinite();
  }

  [[nodiscard]] const Eigen::VectorXd& gradient() const { return g_; }

 private:
  ParameterLayout layout_;
  int reduced_;
  Eigen::MatrixXd U_;
  std::vector<Eigen::Matrix<double, 28, 3>> W_;
  std::vector<Mat3> V_;
  std::vector<Mat3> V_inv_;
  std::vector<int> point_pose_;
  std::vector<bool> free_;
  Eigen::VectorXd g_;
};

std::vector<double> sqrt_all(std::span<const double> lambda) {
  std::vector<double> s(lambda.size());
  for (std::size_t i = 0; i < lambda.size(); ++i) s[i] = std::sqrt(lambda[i]);
  return s;
}

void throw_on_nan(const Eigen::VectorXd& r, const BundleProblem& problem) {
  for (Eigen::Index k = 0; k < r.size(); ++k) {
    if (std::isnan(r[k])) {
      const auto& node = problem.nodes[static_cast<std::size_t>(k / 7)];
      throw Error("numerical failure at node " + std::to_string(node.node_id) + " of pose " +
                  std::to_string(node.pose));
    }
  }
}

}  // namespace

Eigen::VectorXd pack(const SystemParams& s) {
  ParameterLayout L{static_cast<int>(s.poses.size()), static_cast<int>(s.points.size())};
  Eigen::VectorXd p(L.size());
  const auto put_device = [&](int o, const Device& d) {
    p.segment<8>(o) << d.intrinsics.fx, d.intrinsics.fy, d.intrinsics.cx, d.intrinsics.cy, d.distortion.k1,
        d.distortion.k2, d.distortion.p1, d.distortion.p2;
  };
  put_device(ParameterLayout::kCamera, s.camera);
  put_device(ParameterLayout::kProjector, s.projector);
  p.segment<3>(16) = s.stereo.r;
  p.segment<3>(19) = s.stereo.t;
  for (int j = 0; j < L.pose_count; ++j) {
    p.segment<3>(L.pose_offset(j)) = s.poses[static_cast<std::size_t>(j)].r;
    p.segment<3>(L.pose_offset(j) + 3) = s.poses[static_cast<std::size_t>(j)].t;
  }
  for (int i = 0; i < L.point_count; ++i) p.segment<3>(L.point_offset(i)) = s.points[static_cast<std::size_t>(i)];
  return p;
}

SystemParams unpack(const Eigen::VectorXd& p, int pose_count, int point_count) {
  const ParameterLayout L{pose_count, point_count};
  if (p.size() != L.size()) throw Error("parameter vector length does not match the layout");
  SystemParams s;
  const auto get_device = [&](int o) {
    Device d;
    d.intrinsics = {p[o], p[o + 1], p[o + 2], p[o + 3]};
    d.distortion = {p[o + 4], p[o + 5], p[o + 6], p[o + 7]};
    return d;
  };
  s.camera = get_device(ParameterLayout::kCamera);
  s.projector = get_device(ParameterLayout::kProjector);
  s.stereo = {p.segment<3>(16), p.segment<3>(19)};
  s.poses.reserve(static_cast<std::size_t>(pose_count));
  for (int j = 0; j < pose_count; ++j) s.poses.push_back({p.segment<3>(L.pose_offset(j)), p.segment<3>(L.pose_offset(j) + 3)});
  s.points.reserve(static_cast<std::size_t>(point_count));
  for (int i = 0; i < point_count; ++i) s.points.emplace_back(p.segment<3>(L.point_offset(i)));
  return s;
}

Eigen::VectorXd compute_residuals(const Eigen::VectorXd& params, const BundleProblem& problem,
                                  std::span<const double> lambda) {
  check_problem(params, problem);
  if (lambda.size() != problem.nodes.size()) throw Error("one λ weight per node required");
  Evaluator eval(layout_for(problem));
  Eigen::VectorXd r;
  const auto s = sqrt_all(lambda);
  eval.residuals(params, problem, s, r);
  return r;
}

std::vector<double> lambda_weights(std::span<const double> delta_m) {
  std::vector<double> w(delta_m.size());
  for (std::size_t i = 0; i < delta_m.size(); ++i) w[i] = std::exp(-delta_m[i]);
  return w;
}

std::vector<double> scale_deltas(const Eigen::VectorXd& params, const BundleProblem& problem) {
  check_problem(params, problem);
  const ParameterLayout L = layout_for(problem);
  std::vector<double> d(problem.nodes.size());
  for (std::size_t i = 0; i < problem.nodes.size(); ++i) {
    d[i] = (params.segment<3>(L.point_offset(static_cast<int>(i))) - problem.nodes[i].x_m_init).squaredNorm();
  }
  return d;
}

double bundle_cost(const Eigen::VectorXd& params, const BundleProblem& problem) {
  const auto lambda = lambda_weights(scale_deltas(params, problem));
  return compute_residuals(params, problem, lambda).squaredNorm();
}

bool SparsityPattern::depends(int row, int col) const {
  const auto& cols_of_row = row_cols[static_cast<std::size_t>(row)];
  return std::binary_search(cols_of_row.begin(), cols_of_row.end(), col);
}

std::size_t SparsityPattern::nonzeros() const {
  std::size_t n = 0;
  for (const auto& r : row_cols) n += r.size();
  return n;
}

SparsityPattern build_sparsity(const BundleProblem& problem) {
  if (problem.pose_count < 1 || problem.nodes.empty()) throw Error("sparsity needs at least one pose and node");
  const ParameterLayout L = layout_for(problem);
  SparsityPattern sp;
  sp.rows = 7 * L.point_count;
  sp.cols = L.size();
  sp.row_cols.resize(static_cast<std::size_t>(sp.rows));
  for (int i = 0; i < L.point_count; ++i) {
    const int pose = problem.nodes[static_cast<std::size_t>(i)].pose;
    std::vector<int> cam;
    std::vector<int> proj;
    cam.reserve(17);
    proj.reserve(23);
    for (int c = 0; c < 8; ++c) cam.push_back(ParameterLayout::kCamera + c);
    for (int c = 0; c < 14; ++c) proj.push_back(ParameterLayout::kProjector + c);
    for (int k = 0; k < 6; ++k) {
      cam.push_back(L.pose_offset(pose) + k);
      proj.push_back(L.pose_offset(pose) + k);
    }
    for (int k = 0; k < 3; ++k) {
      cam.push_back(L.point_offset(i) + k);
      proj.push_back(L.point_offset(i) + k);
    }

    const auto base = static_cast<std::size_t>(7 * i);
    sp.row_cols[base] = cam;
    sp.row_cols[base + 1] = cam;
    sp.row_cols[base + 2] = proj;
    sp.row_cols[base + 3] = proj;
    const std::vector<int> point = {L.point_offset(i), L.point_offset(i) + 1, L.point_offset(i) + 2};
    for (std::size_t k = 0; k < 3; ++k) sp.row_cols[base + 4 + k] = point;
  }
  return sp;
}

SparsityPattern build_sparsity(int pose_count, std::span<const int> node_counts) {
  if (pose_count < 1 || static_cast<int>(node_counts.size()) != pose_count) throw Error("one node count per pose required");
  BundleProblem problem;
  problem.pose_count = pose_count;
  for (int j = 0; j < pose_count; ++j) {
    if (node_counts[static_cast<std::size_t>(j)] < 1) throw Error("every pose needs at least one node");
    for (int i = 0; i < node_counts[static_cast<std::size_t>(j)]; ++i) {
      problem.nodes.push_back({j, i, Vec2::Zero(), Vec2::Zero(), Vec3::Zero()});
    }
  }
  return build_sparsity(problem);
}

Eigen::SparseMatrix<double> numeric_jacobian(const Eigen::VectorXd& params, const BundleProblem& problem,
                                             std::span<const double> lambda) {
  check_problem(params, problem);
  const ParameterLayout L = layout_for(problem);
  Evaluator eval(L);
  const auto s = sqrt_all(lambda);
  Eigen::VectorXd r;
  eval.residuals(params, problem, s, r);
  std::vector<NodeJacobian> J;
  block_jacobian(params, r, problem, s, all_columns(), eval, J);

  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t i = 0; i < J.size(); ++i) {
    const auto Jl = local_jacobian(J[i]);
    const auto cols = local_columns(L, problem.nodes[i].pose, static_cast<int>(i));
    for (int rr = 0; rr < 7; ++rr) {
      for (int c = 0; c < kLocalCols; ++c) {
        const bool structural = (rr < 2 && (c < 8 || c >= 22)) || (rr >= 2 && rr < 4 && c >= 8) ||
                                (rr >= 4 && c == 28 + (rr - 4));
        if (structural) {
          triplets.emplace_back(static_cast<int>(7 * i) + rr, cols[static_cast<std::size_t>(c)], Jl(rr, c));
        }
      }
    }
  }
  Eigen::SparseMatrix<double> out(7 * L.point_count, L.size());
  out.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

BundleResult solve(const Eigen::VectorXd& initial, const BundleProblem& problem, const BundleOptions& options) {
  check_problem(initial, problem);
  if (problem.nodes.empty()) throw Error("bundle adjustment needs at least one node");
  const ParameterLayout L = layout_for(problem);
  const ColumnMask mask = mask_from(options);
  std::vector<bool> free(static_cast<std::size_t>(L.size()), false);
  for (int c = 0; c < ParameterLayout::kGlobal; ++c) free[static_cast<std::size_t>(c)] = mask.global[c];
  for (int c = ParameterLayout::kGlobal; c < L.point_offset(0); ++c) free[static_cast<std::size_t>(c)] = mask.poses;
  for (int c = L.point_offset(0); c < L.size(); ++c) free[static_cast<std::size_t>(c)] = mask.points;

  Evaluator eval(L);
  NormalEquations normal(problem);
  std::vector<NodeJacobian> J;

  Eigen::VectorXd p = initial;
  std::vector<double> lambda = lambda_weights(scale_deltas(p, problem));

  BundleResult result;
  ConvergenceReport& report = result.report;
  report.initial_cost = bundle_cost(p, problem);
  Eigen::VectorXd best = p;
  double best_cost = report.initial_cost;
  std::vector<double> best_lambda = lambda;
  throw_on_nan(compute_residuals(p, problem, lambda), problem);

  bool any_cap = false;
  for (int outer = 0; outer < options.max_outer_iterations; ++outer) {
    ++report.outer_iterations;
    const auto sl = sqrt_all(lambda);
    Eigen::VectorXd r;
    eval.residuals(p, problem, sl, r);
    double cost = r.squaredNorm();
    double mu = 1e-3;
    bool inner_done = false;
    int inner = 0;
    for (; inner < options.max_inner_iterations && !inner_done; ++inner) {
      ++report.iterations;
      if (cost == 0.0) {
        report.termination = "zero cost";
        inner_done = true;
        break;
      }
      block_jacobian(p, r, problem, sl, mask, eval, J);
      normal.assemble(J, r, free);
      report.gradient_norm = normal.gradient().cwiseAbs().maxCoeff();
      if (report.gradient_norm < 1e-10) {
        report.termination = "gradient tolerance";
        inner_done = true;
        break;
      }
      bool accepted = false;
      while (!accepted) {
        Eigen::VectorXd delta;
        if (normal.solve(mu, delta)) {
          const Eigen::VectorXd q = p + delta;
          Eigen::VectorXd rq;
          eval.residuals(q, problem, sl, rq);
          const double new_cost = rq.squaredNorm();
          if (std::isfinite(new_cost) && new_cost < cost) {
            const double rel = (cost - new_cost) / cost;
            p = q;
            r = rq;
            cost = new_cost;
            mu = std::max(mu / 10.0, 1e-12);
            accepted = true;
            if (rel < options.relative_tolerance) {
              report.termination = "relative cost change";
              inner_done = true;
            }
            continue;
          }
          if (delta.norm() <= 1e-14 * (p.norm() + 1e-14)) {
            report.termination = "step tolerance";
            inner_done = true;
            break;
          }
        }
        mu *= 10.0;
        if (mu > 1e16) {
          report.termination = "damping limit";
          inner_done = true;
          break;
        }
      }
    }
    if (!inner_done) any_cap = true;

    const double self_consistent = bundle_cost(p, problem);
    if (self_consistent <= best_cost) {
      best = p;
      best_cost = self_consistent;
      best_lambda = lambda;
    }
    if (options.lambda_mode == LambdaMode::frozen) break;
    std::vector<double> next = lambda_weights(scale_deltas(p, problem));
    double change = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) change = std::max(change, std::abs(next[i] - lambda[i]));
    lambda = std::move(next);
    if (change < 1e-8) break;
  }

  result.params = best;
  result.lambda = best_lambda;
  report.final_cost = best_cost;
  report.converged = !any_cap;
  if (any_cap) report.termination = "iteration cap";
  return result;
}

}  // namespace procam
