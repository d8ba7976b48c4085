#include "procam/zhang.hpp"
#include "support.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <doctest.h>

#include <algorithm>
#include <vector>

using namespace procam;
using testing::uniform;

namespace {

const Intrinsics kTrueK{600.0, 610.0, 322.0, 238.0};

std::vector<Pose> random_poses(std::mt19937_64& rng, int count) {
  std::vector<Pose> poses;
  for (int i = 0; i < count; ++i) {
    // Board of 240×180 mm centred on the optical axis, tilted 15-40 degrees.
    const Vec3 axis(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -0.2, 0.2));
    const Mat3 R = testing::axis_rotation(axis, uniform(rng, 0.26, 0.7));
    const Vec3 centre(uniform(rng, -30, 30), uniform(rng, -30, 30), uniform(rng, 700, 900));
    poses.push_back(Pose::from_matrix(R, centre - R * Vec3(120, 90, 0)));
  }
  return poses;
}

std::vector<Vec2> board_grid() {
  std::vector<Vec2> pts;
  for (int r = 0; r < 7; ++r) {
    for (int c = 0; c < 9; ++c) pts.emplace_back(30.0 * c, 30.0 * r);
  }
  return pts;
}

std::vector<PlanarObservation> synthesize(const Device& dev, const std::vector<Pose>& poses, double sigma = 0.0,
                                          std::mt19937_64* rng = nullptr) {
  std::vector<PlanarObservation> obs;
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t j = 0; j < poses.size(); ++j) {
    PlanarObservation o;
    o.pose_id = static_cast<int>(j);
    for (const Vec2& b : board_grid()) {
      Vec2 px = project(Vec3(b.x(), b.y(), 0), poses[j], dev);
      if (sigma > 0) px += sigma * Vec2(noise(*rng), noise(*rng));
      o.pairs.push_back({b, px});
    }
    obs.push_back(std::move(o));
  }
  return obs;
}

Mat3 scale_free(const Mat3& h) { return h / h.norm() * (h(2, 2) < 0 ? -1.0 : 1.0); }

}  // namespace

TEST_CASE("homography of identity mapping") {
  const std::vector<PointPair> pairs = {{{0, 0}, {0, 0}}, {{1, 0}, {1, 0}}, {{1, 1}, {1, 1}}, {{0, 1}, {0, 1}}};
  const Homography H = estimate_homography_dlt(pairs);
  CHECK((H.h / H.h(2, 2) - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("homography recovery") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    Mat3 truth;
    truth << uniform(rng, 0.5, 2), uniform(rng, -0.3, 0.3), uniform(rng, -100, 100), uniform(rng, -0.3, 0.3),
        uniform(rng, 0.5, 2), uniform(rng, -100, 100), uniform(rng, -1e-3, 1e-3), uniform(rng, -1e-3, 1e-3), 1.0;
    std::vector<PointPair> pairs;
    for (int i = 0; i < 30; ++i) {
      const Vec2 b(uniform(rng, 0, 300), uniform(rng, 0, 200));
      const Vec3 q = truth * Vec3(b.x(), b.y(), 1);
      pairs.push_back({b, q.hnormalized()});
    }
    const Mat3 est = estimate_homography_dlt(pairs).h;
    CHECK((scale_free(est) - scale_free(truth)).norm() < 1e-9);
  }
}

TEST_CASE("homography degenerate input") {
  const std::vector<PointPair> collinear = {{{0, 0}, {1, 1}}, {{1, 1}, {2, 2}}, {{2, 2}, {3, 3}}};
  CHECK_THROWS_WITH_AS((void)estimate_homography_dlt(collinear), "degenerate configuration", Error);
  const std::vector<PointPair> line4 = {{{0, 0}, {0, 0}}, {{1, 0}, {1, 0}}, {{2, 0}, {2, 0}}, {{3, 0}, {3, 0}}};
  CHECK_THROWS_WITH_AS((void)estimate_homography_dlt(line4), "degenerate configuration", Error);
}

TEST_CASE("intrinsics from homographies") {
  std::mt19937_64 rng(22);
  const auto poses = random_poses(rng, 5);
  std::vector<Homography> hs;
  for (const Pose& p : poses) hs.push_back(homography_from_pose(kTrueK, p));
  const Intrinsics K = intrinsics_from_homographies(hs);
  CHECK(K.fx == doctest::Approx(kTrueK.fx).epsilon(1e-6));
  CHECK(K.fy == doctest::Approx(kTrueK.fy).epsilon(1e-6));
  CHECK(K.cx == doctest::Approx(kTrueK.cx).epsilon(1e-6));
  CHECK(K.cy == doctest::Approx(kTrueK.cy).epsilon(1e-6));

  std::vector<Homography> scaled = hs;
  for (Homography& h : scaled) h.h *= 7.0;
  const Intrinsics K7 = intrinsics_from_homographies(scaled);
  CHECK(K7.fx == doctest::Approx(K.fx).epsilon(1e-9));
  CHECK(K7.fy == doctest::Approx(K.fy).epsilon(1e-9));
  CHECK(K7.cx == doctest::Approx(K.cx).epsilon(1e-9));
  CHECK(K7.cy == doctest::Approx(K.cy).epsilon(1e-9));

  const std::vector<Homography> two(hs.begin(), hs.begin() + 2);
  CHECK_THROWS_WITH_AS((void)intrinsics_from_homographies(two), "insufficient poses", Error);

  std::vector<Homography> fronto;
  for (int i = 0; i < 4; ++i) {
    fronto.push_back(homography_from_pose(kTrueK, Pose{Vec3::Zero(), Vec3(10.0 * i, -5.0 * i, 800 + 50.0 * i)}));
  }
  CHECK_THROWS_WITH_AS((void)intrinsics_from_homographies(fronto), "degenerate pose set", Error);
}

TEST_CASE("extrinsics from homography") {
  const Pose unit = extrinsics_from_homography(Intrinsics{}, Homography{});
  CHECK(unit.r.norm() < 1e-12);
  CHECK((unit.t - Vec3(0, 0, 1)).norm() < 1e-12);

  std::mt19937_64 rng(23);
  for (const Pose& truth : random_poses(rng, 50)) {
    Homography H = homography_from_pose(kTrueK, truth);
    H.h *= -3.0;  // sign and scale of H are arbitrary
    const Pose est = extrinsics_from_homography(kTrueK, H);
    CHECK((est.r - truth.r).norm() < 1e-8);
    CHECK((est.t - truth.t).norm() < 1e-8 * truth.t.norm());
    const Mat3 R = est.rotation();
    CHECK((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(est.t.z() > 0);
  }
}

TEST_CASE("noiseless calibration without distortion") {
  std::mt19937_64 rng(24);
  const Device truth{kTrueK, {}};
  const auto poses = random_poses(rng, 6);
  const auto obs = synthesize(truth, poses);
  const DeviceCalibration cal = calibrate_device(obs);
  CHECK(cal.device.intrinsics.fx == doctest::Approx(kTrueK.fx).epsilon(1e-6));
  CHECK(cal.device.intrinsics.fy == doctest::Approx(kTrueK.fy).epsilon(1e-6));
  CHECK(cal.device.intrinsics.cx == doctest::Approx(kTrueK.cx).epsilon(1e-6));
  CHECK(cal.device.intrinsics.cy == doctest::Approx(kTrueK.cy).epsilon(1e-6));
  REQUIRE(cal.poses.size() == poses.size());
  for (std::size_t j = 0; j < poses.size(); ++j) {
    CHECK((cal.poses[j].r - poses[j].r).norm() < 1e-6);
    CHECK((cal.poses[j].t - poses[j].t).norm() < 1e-6 * poses[j].t.norm());
  }
  CHECK(cal.rms < 1e-8);
  CHECK(cal.rms <= cal.initial_rms);
}

TEST_CASE("noiseless calibration with radial distortion") {
  std::mt19937_64 rng(25);
  const Device truth{kTrueK, {-0.1, 0.0, 0.0, 0.0}};
  const auto obs = synthesize(truth, random_poses(rng, 8));
  const DeviceCalibration cal = calibrate_device(obs);
  const Distortion& d = cal.device.distortion;
  CHECK(std::abs(d.k1 - -0.1) < 1e-4);
  CHECK(std::abs(d.k2) < 1e-4);
  CHECK(std::abs(d.p1) < 1e-4);
  CHECK(std::abs(d.p2) < 1e-4);
  CHECK(cal.rms < 1e-6);
  CHECK(cal.rms <= cal.initial_rms);
  CHECK(cal.converged);
  CHECK(reprojection_rms(obs, cal.device, cal.poses) == doctest::Approx(cal.rms).epsilon(1e-9));
}

TEST_CASE("refinement without distortion keeps it at zero") {
  std::mt19937_64 rng(26);
  const Device truth{kTrueK, {-0.05, 0.0, 0.0, 0.0}};
  const auto obs = synthesize(truth, random_poses(rng, 5));
  ZhangOptions opts;
  opts.refine_distortion = false;
  const DeviceCalibration cal = calibrate_device(obs, opts);
  CHECK(cal.device.distortion.is_zero());
  CHECK(cal.rms <= cal.initial_rms);
}

TEST_CASE("calibration preconditions") {
  std::mt19937_64 rng(27);
  const auto obs = synthesize(Device{kTrueK, {}}, random_poses(rng, 2));
  CHECK_THROWS_WITH_AS((void)calibrate_device(obs), "insufficient poses", Error);
}

TEST_CASE("reprojection rms by hand") {
  PlanarObservation o;
  o.pairs = {{{0, 0}, {3, 4}}, {{0, 0}, {0, 0}}};
  const Device dev{{1, 1, 0, 0}, {}};
  const std::vector<PlanarObservation> obs = {o};
  const std::vector<Pose> poses = {Pose{Vec3::Zero(), Vec3(0, 0, 1)}};
  CHECK(reprojection_rms(obs, dev, poses) == doctest::Approx(std::sqrt(12.5)));
}

TEST_CASE("rms grows with pixel noise") {
  const Device truth{kTrueK, {-0.1, 0.0, 0.0, 0.0}};
  const std::vector<double> sigmas = {0.0, 0.25, 0.5, 1.0};
  std::vector<double> medians;
  for (double sigma : sigmas) {
    std::vector<double> rms;
    for (int trial = 0; trial < 50; ++trial) {
      std::mt19937_64 scene(1000 + static_cast<std::uint64_t>(trial));
      const auto poses = random_poses(scene, 5);
      std::mt19937_64 noise(5000 + static_cast<std::uint64_t>(trial));
      const auto cal = calibrate_device(synthesize(truth, poses, sigma, &noise));
      CHECK(cal.rms <= cal.initial_rms + 1e-12);
      rms.push_back(cal.rms);
    }
    medians.push_back(median(rms));
  }
  for (std::size_t i = 1; i < medians.size(); ++i) CHECK(medians[i] >= medians[i - 1]);
}
