#pragma once

#include "procam/geometry.hpp"

#include <Eigen/SparseCore>

#include <span>
#include <string>
#include <vector>

namespace procam {

/// One structured-light node seen at one board pose.
struct NodeObservation {
  int pose = 0;      // index into the pose list of the problem
  int node_id = 0;   // pattern grid id (row * m + col)
  Vec2 x_c;          // camera pixel
  Vec2 x_p;          // projector pixel
  Vec3 x_m_init;     // warped board point ẋ_m (z = 0)
};

struct BundleProblem {
  int pose_count = 0;
  std::vector<NodeObservation> nodes;
};

/// Unpacked form of the joint unknowns.
struct SystemParams {
  Device camera;
  Device projector;
  Pose stereo;                 // camera -> projector
  std::vector<Pose> poses;     // board -> camera, one per pose
  std::vector<Vec3> points;    // refined board points x̂_m, one per node
};

/// Layout of the packed parameter vector:
/// [K_c(4) d_c(4) K_p(4) d_p(4) r_cp t_cp(6) | (r_mc, t_mc) × N | x_m × n_p].
struct ParameterLayout {
  static constexpr int kCamera = 0;
  static constexpr int kProjector = 8;
  static constexpr int kStereo = 16;
  static constexpr int kGlobal = 22;

  int pose_count = 0;
  int point_count = 0;

  [[nodiscard]] int pose_offset(int j) const { return kGlobal + 6 * j; }
  [[nodiscard]] int point_offset(int i) const { return kGlobal + 6 * pose_count + 3 * i; }
  [[nodiscard]] int size() const { return kGlobal + 6 * pose_count + 3 * point_count; }
};

[[nodiscard]] Eigen::VectorXd pack(const SystemParams& params);
[[nodiscard]] SystemParams unpack(const Eigen::VectorXd& packed, int pose_count, int point_count);

/// Seven residuals per node: camera (2, px), projector (2, px), scale (3, mm, times √λ).
/// Observed minus predicted. A point behind either device yields 1e6 px on that pair.
[[nodiscard]] Eigen::VectorXd compute_residuals(const Eigen::VectorXd& params, const BundleProblem& problem,
                                                std::span<const double> lambda);

/// λ_i = exp(-δ_m(i)).
[[nodiscard]] std::vector<double> lambda_weights(std::span<const double> delta_m);

/// δ_m(i) = ‖x̂_m(i) - ẋ_m(i)‖² at the given parameters.
[[nodiscard]] std::vector<double> scale_deltas(const Eigen::VectorXd& params, const BundleProblem& problem);

/// Incidence of residual rows on parameter columns.
struct SparsityPattern {
  int rows = 0;
  int cols = 0;
  std::vector<std::vector<int>> row_cols;  // sorted column indices per row

  [[nodiscard]] bool depends(int row, int col) const;
  [[nodiscard]] std::size_t nonzeros() const;
};

/// `node_counts[j]` nodes at pose j, nodes ordered by pose.
[[nodiscard]] SparsityPattern build_sparsity(int pose_count, std::span<const int> node_counts);
/// Pattern for an arbitrary node-to-pose assignment.
[[nodiscard]] SparsityPattern build_sparsity(const BundleProblem& problem);

/// Forward-difference Jacobian of `compute_residuals`, evaluated only on the
/// sparsity pattern (columns that never share a row are perturbed together).
[[nodiscard]] Eigen::SparseMatrix<double> numeric_jacobian(const Eigen::VectorXd& params, const BundleProblem& problem,
                                                           std::span<const double> lambda);

enum class LambdaMode { frozen, irls };

struct BundleOptions {
  LambdaMode lambda_mode = LambdaMode::irls;
  int max_outer_iterations = 5;
  int max_inner_iterations = 100;
  double relative_tolerance = 1e-10;
  bool optimize_intrinsics = true;  // K and d of both devices
  bool optimize_stereo = true;
  bool optimize_poses = true;
  bool optimize_points = true;
};

struct ConvergenceReport {
  int iterations = 0;
  int outer_iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  double gradient_norm = 0.0;
  std::string termination;
  bool converged = false;
};

struct BundleResult {
  Eigen::VectorXd params;
  std::vector<double> lambda;
  ConvergenceReport report;
};

/// Cost with self-consistent weights λ_i = exp(-δ_m(i)).
[[nodiscard]] double bundle_cost(const Eigen::VectorXd& params, const BundleProblem& problem);

/// Sparse Levenberg-Marquardt over the pattern with λ reweighting between outer
/// iterations. The returned parameters never have a higher `bundle_cost` than the start.
[[nodiscard]] BundleResult solve(const Eigen::VectorXd& initial, const BundleProblem& problem,
                                 const BundleOptions& options = {});

}  // namespace procam
