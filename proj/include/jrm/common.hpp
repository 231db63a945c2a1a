#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace jrm {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Error taxonomy. Every failure the library reports derives from jrm::Error so
// callers (the CLI in particular) can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define JRM_DEFINE_ERROR(name)          \
  class name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

JRM_DEFINE_ERROR(ParameterError);
JRM_DEFINE_ERROR(InputError);
JRM_DEFINE_ERROR(DimensionError);
JRM_DEFINE_ERROR(UnsupportedShapeError);
JRM_DEFINE_ERROR(PlacementError);
JRM_DEFINE_ERROR(DegeneracyError);
JRM_DEFINE_ERROR(CapacityError);
JRM_DEFINE_ERROR(ConfigError);
JRM_DEFINE_ERROR(CalibrationError);
JRM_DEFINE_ERROR(MetricError);
JRM_DEFINE_ERROR(NonFiniteError);
JRM_DEFINE_ERROR(IoError);

#undef JRM_DEFINE_ERROR

/// Points with per-point unit normals. The two arrays always have equal size.
struct PointSet {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;

  [[nodiscard]] std::size_t size() const { return points.size(); }
  [[nodiscard]] bool empty() const { return points.empty(); }

  void push_back(const Vec3& p, const Vec3& n) {
    points.push_back(p);
    normals.push_back(n);
  }
  void append(const PointSet& other) {
    points.insert(points.end(), other.points.begin(), other.points.end());
    normals.insert(normals.end(), other.normals.begin(), other.normals.end());
  }
};

// splitmix64 finalizer; used to derive independent sub-seeds from a parent
// seed and a stream tag so that every random draw is addressable by index.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a,
                                 std::uint64_t b) {
  return mix_seed(mix_seed(seed, a), b);
}

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline Vec3 random_unit_vector(Rng& rng) {
  for (;;) {
    Vec3 v(normal(rng), normal(rng), normal(rng));
    const double len = v.norm();
    if (len > 1e-12) return v / len;
  }
}

/// Rotation about the vertical (+y) axis.
inline Mat3 yaw_rotation(double yaw) {
  return Eigen::AngleAxisd(yaw, Vec3::UnitY()).toRotationMatrix();
}

}  // namespace jrm
