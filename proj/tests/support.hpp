#pragma once

#include "procam/geometry.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace testing {

using procam::Vec2;
using procam::Vec3;

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(g(rng), g(rng), g(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline procam::Mat3 axis_rotation(const Vec3& axis, double angle) {
  // Plain Rodrigues formula, independent of the library's implementation.
  const Vec3 a = axis.normalized();
  procam::Mat3 K;
  K << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
  return procam::Mat3::Identity() + std::sin(angle) * K + (1.0 - std::cos(angle)) * K * K;
}

}  // namespace testing
