#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "jrm/common.hpp"

namespace jrm {

/// x -> rotation * x + translation, rotation in SO(3).
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  [[nodiscard]] Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  [[nodiscard]] Vec3 rotate(const Vec3& n) const { return rotation * n; }

  [[nodiscard]] RigidTransform inverse() const {
    const Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  /// (*this) after `other`: x -> this(other(x)).
  [[nodiscard]] RigidTransform operator*(const RigidTransform& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  [[nodiscard]] PointSet apply(const PointSet& set) const {
    PointSet out;
    out.points.reserve(set.size());
    out.normals.reserve(set.size());
    for (std::size_t i = 0; i < set.size(); ++i)
      out.push_back(apply(set.points[i]), rotate(set.normals[i]));
    return out;
  }

  [[nodiscard]] std::vector<Vec3> apply(const std::vector<Vec3>& pts) const {
    std::vector<Vec3> out;
    out.reserve(pts.size());
    for (const Vec3& p : pts) out.push_back(apply(p));
    return out;
  }
};

/// Geodesic angle of a rotation matrix, robust near 0 and pi.
inline double rotation_angle(const Mat3& r) {
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  // atan2 form keeps precision for tiny angles where acos(c) loses digits.
  const Vec3 axis_sin(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(0.5 * axis_sin.norm(), c);
}

inline double rotation_distance(const Mat3& a, const Mat3& b) {
  return rotation_angle(a.transpose() * b);
}

}  // namespace jrm
