#include "procam/bundle_adjustment.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace procam;
using testing::uniform;

namespace {

struct Scene {
  SystemParams truth;
  BundleProblem problem;
};

Pose look_at_board(std::mt19937_64& rng) {
  const Vec3 axis(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -0.3, 0.3));
  const Mat3 R = testing::axis_rotation(axis, uniform(rng, 0.25, 0.5));
  const Vec3 centre(uniform(rng, 300, 500), uniform(rng, -40, 40), uniform(rng, 1400, 1700));
  return Pose::from_matrix(R, centre - R * Vec3(150, 100, 0));
}

// Small camera-projector scene. `bump_mm` lifts the true points off the board plane
// while the warped points x_m_init stay planar.
Scene make_scene(std::uint64_t seed, int poses = 4, int cols = 6, int rows = 5, double bump_mm = 0.0) {
  std::mt19937_64 rng(seed);
  Scene s;
  s.truth.camera = {{600, 605, 320, 240}, {-0.1, 0.02, 0.001, -0.0005}};
  s.truth.projector = {{1100, 1095, 400, 550}, {-0.08, 0.01, -0.0008, 0.0004}};
  s.truth.stereo = Pose::from_matrix(testing::axis_rotation(Vec3::UnitY(), -0.64), Vec3(-1200, 0, 600));
  s.problem.pose_count = poses;
  std::normal_distribution<double> bump(0.0, 1.0);
  for (int j = 0; j < poses; ++j) {
    s.truth.poses.push_back(look_at_board(rng));
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const Vec3 planar(60.0 * c, 50.0 * r, 0.0);
        const Vec3 x_m = planar + Vec3(0, 0, bump_mm * bump(rng));
        NodeObservation n;
        n.pose = j;
        n.node_id = r * cols + c;
        n.x_c = project(x_m, s.truth.poses.back(), s.truth.camera);
        n.x_p = project(x_m, s.truth.poses.back(), s.truth.projector, s.truth.stereo);
        n.x_m_init = planar;
        s.problem.nodes.push_back(n);
        s.truth.points.push_back(x_m);
      }
    }
  }
  return s;
}

int point_count(const BundleProblem& p) { return static_cast<int>(p.nodes.size()); }

// Direct transcription of the cost, one term at a time.
Vec2 naive_pixel(const Vec3& x, const Device& d) {
  const double a = x.x() / x.z();
  const double b = x.y() / x.z();
  const double r2 = a * a + b * b;
  const double k = 1 + d.distortion.k1 * r2 + d.distortion.k2 * r2 * r2;
  const double u = a * k + 2 * d.distortion.p1 * a * b + d.distortion.p2 * (r2 + 2 * a * a);
  const double v = b * k + d.distortion.p1 * (r2 + 2 * b * b) + 2 * d.distortion.p2 * a * b;
  return {d.intrinsics.fx * u + d.intrinsics.cx, d.intrinsics.fy * v + d.intrinsics.cy};
}

double naive_cost(const SystemParams& s, const BundleProblem& problem, const std::vector<double>& lambda) {
  double cost = 0.0;
  const Mat3 R_cp = testing::axis_rotation(s.stereo.r, s.stereo.r.norm());
  for (std::size_t i = 0; i < problem.nodes.size(); ++i) {
    const NodeObservation& n = problem.nodes[i];
    const Pose& pose = s.poses[static_cast<std::size_t>(n.pose)];
    const Mat3 R = pose.r.norm() > 0 ? testing::axis_rotation(pose.r, pose.r.norm()) : Mat3::Identity();
    const Vec3 xc = R * s.points[i] + pose.t;
    const Vec3 xp = R_cp * xc + s.stereo.t;
    const double delta_c = (n.x_c - naive_pixel(xc, s.camera)).squaredNorm();
    const double delta_p = (n.x_p - naive_pixel(xp, s.projector)).squaredNorm();
    const double delta_m = (s.points[i] - n.x_m_init).squaredNorm();
    cost += delta_c + delta_p + lambda[i] * delta_m;
  }
  return cost;
}

Eigen::VectorXd perturbed(const Eigen::VectorXd& p, std::mt19937_64& rng, double rel) {
  Eigen::VectorXd q = p;
  for (Eigen::Index k = 0; k < q.size(); ++k) q[k] += rel * std::max(1.0, std::abs(q[k])) * uniform(rng, -1, 1);
  return q;
}

}  // namespace

TEST_CASE("pack and unpack") {
  const Scene s = make_scene(1);
  const Eigen::VectorXd p = pack(s.truth);
  const ParameterLayout L{4, point_count(s.problem)};
  CHECK(p.size() == 22 + 6 * 4 + 3 * point_count(s.problem));
  CHECK(p.size() == L.size());
  CHECK(pack(unpack(p, 4, point_count(s.problem))) == p);
  CHECK(p[0] == 600);
  CHECK(p[8] == 1100);
  CHECK(p.segment<3>(L.pose_offset(2)) == s.truth.poses[2].r);
  CHECK(p.segment<3>(L.point_offset(7)) == s.truth.points[7]);
  CHECK_THROWS_AS((void)unpack(p, 3, point_count(s.problem)), Error);
}

TEST_CASE("residuals vanish at the truth") {
  const Scene s = make_scene(2);
  const Eigen::VectorXd p = pack(s.truth);
  const std::vector<double> ones(s.problem.nodes.size(), 1.0);
  const Eigen::VectorXd r = compute_residuals(p, s.problem, ones);
  CHECK(r.size() == 7 * point_count(s.problem));
  CHECK(r.cwiseAbs().maxCoeff() < 1e-9);
  CHECK(bundle_cost(p, s.problem) < 1e-18);
}

TEST_CASE("single point perturbation is local") {
  const Scene s = make_scene(3);
  const Eigen::VectorXd p = pack(s.truth);
  const std::vector<double> ones(s.problem.nodes.size(), 1.0);
  const Eigen::VectorXd r0 = compute_residuals(p, s.problem, ones);
  Eigen::VectorXd q = p;
  const int node = 11;
  q.segment<3>(ParameterLayout{4, point_count(s.problem)}.point_offset(node)) += Vec3(1, 0, 0);
  const Eigen::VectorXd r1 = compute_residuals(q, s.problem, ones);
  CHECK(r1.segment<3>(7 * node + 4).norm() == doctest::Approx(1.0).epsilon(1e-12));
  for (Eigen::Index k = 0; k < r0.size(); ++k) {
    if (k / 7 != node) CHECK(r1[k] == r0[k]);
  }
  CHECK(r1.segment<4>(7 * node).norm() > 0.1);
}

TEST_CASE("cost agrees with naive evaluation") {
  const Scene s = make_scene(4, 3, 5, 4, 0.5);
  std::mt19937_64 rng(40);
  const Eigen::VectorXd p0 = pack(s.truth);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd p = perturbed(p0, rng, 1e-3);
    std::vector<double> lambda;
    for (std::size_t i = 0; i < s.problem.nodes.size(); ++i) lambda.push_back(uniform(rng, 0.05, 1.0));
    const double got = compute_residuals(p, s.problem, lambda).squaredNorm();
    const double want = naive_cost(unpack(p, s.problem.pose_count, point_count(s.problem)), s.problem, lambda);
    CHECK(std::abs(got - want) <= 1e-12 * want);

    const auto self = lambda_weights(scale_deltas(p, s.problem));
    const double got_self = bundle_cost(p, s.problem);
    const double want_self = naive_cost(unpack(p, s.problem.pose_count, point_count(s.problem)), s.problem, self);
    CHECK(std::abs(got_self - want_self) <= 1e-12 * want_self);
  }
}

TEST_CASE("points behind a device get the sentinel") {
  Scene s = make_scene(5, 3, 3, 3);
  Eigen::VectorXd p = pack(s.truth);
  const ParameterLayout L{3, point_count(s.problem)};
  p.segment<3>(L.point_offset(0)) = Vec3(0, 0, -1e5);  // far behind the board, behind both devices
  const std::vector<double> ones(s.problem.nodes.size(), 1.0);
  const Eigen::VectorXd r = compute_residuals(p, s.problem, ones);
  CHECK(r.allFinite());
  CHECK(r.segment<2>(0).cwiseAbs().minCoeff() == 1e6);
  CHECK(r.segment<2>(2).cwiseAbs().minCoeff() == 1e6);
}

TEST_CASE("lambda weights") {
  const std::vector<double> d = {0.0, 1.0};
  const auto w = lambda_weights(d);
  CHECK(w[0] == 1.0);
  CHECK(w[1] == doctest::Approx(0.367879).epsilon(1e-6));
  std::vector<double> grid;
  for (int i = 0; i <= 100; ++i) grid.push_back(0.1 * i);
  const auto g = lambda_weights(grid);
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] < g[i - 1]);
}

TEST_CASE("smallest sparsity pattern") {
  const std::vector<int> one = {1};
  const SparsityPattern sp = build_sparsity(1, one);
  CHECK(sp.rows == 7);
  CHECK(sp.cols == 31);
  for (int row = 0; row < 7; ++row) {
    for (int col = 0; col < 31; ++col) {
      bool expected = false;
      const bool pose = col >= 22 && col < 28;
      const bool point = col >= 28;
      if (row < 2) expected = col < 8 || pose || point;
      else if (row < 4) expected = (col >= 8 && col < 22) || pose || point;
      else expected = point;
      CHECK(sp.depends(row, col) == expected);
    }
  }
  CHECK(sp.nonzeros() == 2 * 17 + 2 * 23 + 3 * 3);
}

TEST_CASE("sparsity of larger problems") {
  const std::vector<int> counts = {3, 1, 4};
  const SparsityPattern sp = build_sparsity(3, counts);
  const int n = 8;
  CHECK(sp.rows == 7 * n);
  CHECK(sp.cols == 22 + 18 + 3 * n);
  for (int row = 0; row < sp.rows; ++row) {
    const auto& cols = sp.row_cols[static_cast<std::size_t>(row)];
    const std::size_t expected = row % 7 < 2 ? 17 : row % 7 < 4 ? 23 : 3;
    CHECK(cols.size() == expected);
    CHECK(static_cast<double>(cols.size()) / sp.cols <= 31.0 / sp.cols);
  }
  // Node 4 belongs to pose 1; its camera rows touch pose 1's block only.
  CHECK(sp.depends(7 * 3, 22 + 6));
  CHECK(!sp.depends(7 * 3, 22));
  CHECK(!sp.depends(7 * 3, 22 + 12));

  const Scene s = make_scene(6, 3, 2, 2);
  const SparsityPattern from_problem = build_sparsity(s.problem);
  const std::vector<int> four = {4, 4, 4};
  const SparsityPattern from_counts = build_sparsity(3, four);
  CHECK(from_problem.row_cols == from_counts.row_cols);
}

TEST_CASE("numeric jacobian respects the pattern") {
  const Scene s = make_scene(7, 3, 4, 3, 0.3);
  std::mt19937_64 rng(70);
  const SparsityPattern sp = build_sparsity(s.problem);
  const int n = point_count(s.problem);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd p = perturbed(pack(s.truth), rng, 1e-3);
    std::vector<double> lambda(static_cast<std::size_t>(n));
    for (double& l : lambda) l = uniform(rng, 0.1, 1.0);
    const Eigen::VectorXd r0 = compute_residuals(p, s.problem, lambda);

    // Dense one-column-at-a-time oracle.
    for (int col = 0; col < p.size(); ++col) {
      Eigen::VectorXd q = p;
      const double h = 1e-7 * std::max(1.0, std::abs(p[col]));
      q[col] += h;
      const Eigen::VectorXd d = (compute_residuals(q, s.problem, lambda) - r0) / h;
      for (int row = 0; row < d.size(); ++row) {
        if (!sp.depends(row, col)) CHECK(std::abs(d[row]) < 1e-10);
      }
    }

    const Eigen::SparseMatrix<double> J = numeric_jacobian(p, s.problem, lambda);
    CHECK(J.rows() == 7 * n);
    CHECK(J.cols() == p.size());
    for (int k = 0; k < J.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(J, k); it; ++it) {
        if (!sp.depends(static_cast<int>(it.row()), static_cast<int>(it.col()))) CHECK(std::abs(it.value()) < 1e-8);
      }
    }
  }
}

TEST_CASE("directional derivatives match central differences") {
  const Scene s = make_scene(8, 3, 4, 3, 0.3);
  std::mt19937_64 rng(80);
  const int n = point_count(s.problem);
  const Eigen::VectorXd p = perturbed(pack(s.truth), rng, 1e-4);
  std::vector<double> lambda(static_cast<std::size_t>(n), 0.7);
  const Eigen::SparseMatrix<double> J = numeric_jacobian(p, s.problem, lambda);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd v(p.size());
    for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = uniform(rng, -1, 1) * std::max(1.0, std::abs(p[k])) * 1e-3;
    const double h = 1e-3;
    const Eigen::VectorXd central =
        (compute_residuals(p + h * v, s.problem, lambda) - compute_residuals(p - h * v, s.problem, lambda)) / (2 * h);
    const Eigen::VectorXd forward = J * v;
    for (int cls = 0; cls < 3; ++cls) {
      const int begin = cls == 0 ? 0 : cls == 1 ? 2 : 4;
      const int len = cls == 2 ? 3 : 2;
      double diff = 0.0;
      double ref = 0.0;
      for (int i = 0; i < n; ++i) {
        diff += (forward.segment(7 * i + begin, len) - central.segment(7 * i + begin, len)).squaredNorm();
        ref += central.segment(7 * i + begin, len).squaredNorm();
      }
      CHECK(std::sqrt(diff) <= 1e-5 * std::sqrt(ref));
    }
  }
}

TEST_CASE("solve at the truth stops immediately") {
  const Scene s = make_scene(9);
  const BundleResult res = solve(pack(s.truth), s.problem);
  CHECK(res.report.iterations <= 2);
  CHECK(res.report.final_cost < 1e-16);
  CHECK(res.report.converged);
}

TEST_CASE("solve recovers perturbed intrinsics") {
  const Scene s = make_scene(10, 5, 7, 6);
  Eigen::VectorXd start = pack(s.truth);
  std::mt19937_64 rng(100);
  for (int o : {0, 1, 2, 3, 8, 9, 10, 11}) start[o] *= 1.0 + (rng() % 2 ? 0.01 : -0.01);
  const BundleResult res = solve(start, s.problem);
  const Eigen::VectorXd truth = pack(s.truth);
  for (int o : {0, 1, 2, 3, 8, 9, 10, 11}) CHECK(std::abs(res.params[o] - truth[o]) <= 1e-6 * std::abs(truth[o]));
  CHECK(res.report.final_cost < res.report.initial_cost);
}

TEST_CASE("cost never increases") {
  const Scene s = make_scene(11, 3, 4, 4, 0.5);
  std::mt19937_64 rng(110);
  BundleOptions opts;
  opts.max_inner_iterations = 15;
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::VectorXd start = perturbed(pack(s.truth), rng, 2e-3);
    const BundleResult res = solve(start, s.problem, opts);
    CHECK(res.report.final_cost <= res.report.initial_cost);
    CHECK(bundle_cost(res.params, s.problem) == doctest::Approx(res.report.final_cost).epsilon(1e-12));
    CHECK(res.report.initial_cost == doctest::Approx(bundle_cost(start, s.problem)).epsilon(1e-12));
  }
}

TEST_CASE("frozen columns stay put") {
  const Scene s = make_scene(12, 3, 4, 4, 0.5);
  std::mt19937_64 rng(120);
  const Eigen::VectorXd start = perturbed(pack(s.truth), rng, 1e-3);
  BundleOptions opts;
  opts.optimize_intrinsics = false;
  opts.optimize_stereo = false;
  opts.optimize_points = false;
  const BundleResult res = solve(start, s.problem, opts);
  const ParameterLayout L{3, point_count(s.problem)};
  CHECK(res.params.head<22>() == start.head<22>());
  CHECK(res.params.tail(3 * L.point_count) == start.tail(3 * L.point_count));
  CHECK(res.params.segment(22, 18) != start.segment(22, 18));

  opts.lambda_mode = LambdaMode::frozen;
  const BundleResult frozen = solve(start, s.problem, opts);
  CHECK(frozen.report.outer_iterations == 1);
}

TEST_CASE("iteration cap is reported") {
  const Scene s = make_scene(13, 3, 4, 4, 0.5);
  std::mt19937_64 rng(130);
  BundleOptions opts;
  opts.max_inner_iterations = 1;
  opts.max_outer_iterations = 1;
  const BundleResult res = solve(perturbed(pack(s.truth), rng, 1e-2), s.problem, opts);
  CHECK(res.report.termination == "iteration cap");
  CHECK(!res.report.converged);
  CHECK(res.report.final_cost <= res.report.initial_cost);
}

TEST_CASE("nan input is a numerical failure") {
  const Scene s = make_scene(14, 3, 2, 2);
  Eigen::VectorXd p = pack(s.truth);
  p[ParameterLayout{3, point_count(s.problem)}.point_offset(5)] = std::nan("");
  CHECK_THROWS_WITH_AS((void)solve(p, s.problem), "numerical failure at node 1 of pose 1", Error);
}

TEST_CASE("rigid board-frame change leaves reprojection unchanged without the scale term") {
  const Scene s = make_scene(15, 3, 4, 4, 0.5);
  std::mt19937_64 rng(150);
  const Eigen::VectorXd p = perturbed(pack(s.truth), rng, 1e-3);
  SystemParams a = unpack(p, 3, point_count(s.problem));
  const std::vector<double> zero(s.problem.nodes.size(), 0.0);
  const double before = compute_residuals(p, s.problem, zero).squaredNorm();

  // x_m -> Q x_m + q with compensating poses.
  const Mat3 Q = testing::axis_rotation(Vec3(0.3, -0.2, 0.9), 0.4);
  const Vec3 q(25, -10, 7);
  SystemParams b = a;
  for (Vec3& x : b.points) x = Q * x + q;
  for (Pose& pose : b.poses) {
    const Mat3 R = pose.rotation() * Q.transpose();
    pose = Pose::from_matrix(R, pose.t - R * q);
  }
  const double after = compute_residuals(pack(b), s.problem, zero).squaredNorm();
  CHECK(after == doctest::Approx(before).epsilon(1e-9));

  // Uniform scale of the world, including the stereo baseline.
  SystemParams c = a;
  for (Vec3& x : c.points) x *= 3.0;
  for (Pose& pose : c.poses) pose.t *= 3.0;
  c.stereo.t *= 3.0;
  CHECK(compute_residuals(pack(c), s.problem, zero).squaredNorm() == doctest::Approx(before).epsilon(1e-9));

  // With the scale term active the same change costs something.
  const std::vector<double> ones(s.problem.nodes.size(), 1.0);
  CHECK(compute_residuals(pack(b), s.problem, ones).squaredNorm() >
        compute_residuals(p, s.problem, ones).squaredNorm());
}

TEST_CASE("refined points move toward the non-planar truth") {
  const Scene s = make_scene(16, 5, 7, 6, 0.5);
  SystemParams start = s.truth;
  for (std::size_t i = 0; i < start.points.size(); ++i) start.points[i] = s.problem.nodes[i].x_m_init;
  const BundleResult res = solve(pack(start), s.problem);
  const SystemParams out = unpack(res.params, 5, point_count(s.problem));
  double before = 0.0;
  double after = 0.0;
  for (std::size_t i = 0; i < s.truth.points.size(); ++i) {
    before += (start.points[i] - s.truth.points[i]).squaredNorm();
    after += (out.points[i] - s.truth.points[i]).squaredNorm();
  }
  CHECK(after < before);
}
