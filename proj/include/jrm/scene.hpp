#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "jrm/common.hpp"
#include "jrm/rigid.hpp"
#include "jrm/shapes.hpp"

namespace jrm {

inline constexpr double kPlacementStep = 0.05;
inline constexpr int kPlacementGuard = 10000;
inline constexpr double kVerticalOffsetLo = -0.5;
inline constexpr double kVerticalOffsetHi = 0.2;
inline constexpr std::size_t kTrajectoryLength = 100;
inline constexpr std::size_t kMaxSceneObjects = 16;

struct SceneInstance {
  std::size_t shape_id = 0;
  double yaw = 0.0;
  Vec3 position = Vec3::Zero();  // y is vertical
  std::optional<double> theta;

  [[nodiscard]] RigidTransform pose() const { return {yaw_rotation(yaw), position}; }
};

struct Scene {
  std::vector<SceneInstance> instances;
  std::uint64_t seed = 0;
  std::vector<int> placement_iterations;  // N per instance
};

/// Axis-aligned rectangle in the top-down (x, z) plane.
struct Footprint {
  double x0 = 0, z0 = 0, x1 = 0, z1 = 0;

  [[nodiscard]] double short_side() const { return std::min(x1 - x0, z1 - z0); }
  [[nodiscard]] Footprint shifted(double dx, double dz) const {
    return {x0 + dx, z0 + dz, x1 + dx, z1 + dz};
  }
  // Open-interval overlap: rectangles that only touch do not intersect.
  [[nodiscard]] bool intersects(const Footprint& o) const {
    return x0 < o.x1 && o.x0 < x1 && z0 < o.z1 && o.z0 < z1;
  }
};

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void extend(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  [[nodiscard]] Vec3 center() const { return 0.5 * (lo + hi); }
  [[nodiscard]] Vec3 extent() const { return hi - lo; }

  /// True if the open segment a->b passes through the box (slab test).
  [[nodiscard]] bool hit_by_segment(const Vec3& a, const Vec3& b) const {
    double t0 = 0.0, t1 = 1.0;
    const Vec3 d = b - a;
    for (int k = 0; k < 3; ++k) {
      if (std::abs(d[k]) < 1e-15) {
        if (a[k] < lo[k] || a[k] > hi[k]) return false;
        continue;
      }
      double ta = (lo[k] - a[k]) / d[k];
      double tb = (hi[k] - a[k]) / d[k];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      if (t0 > t1) return false;
    }
    return t1 > 0.0 && t0 < 1.0;
  }
};

/// World-space box of a shape under a pose.
inline Aabb posed_bounds(const CanonicalShape& shape, const RigidTransform& pose) {
  Aabb box;
  for (const Face& f : shape.faces)
    for (const Vec3& c : f.corners()) box.extend(pose.apply(c));
  return box;
}

/// Footprint of the yaw-rotated shape relative to its placement position.
inline Footprint local_footprint(const CanonicalShape& shape, double yaw) {
  const Aabb b = posed_bounds(shape, {yaw_rotation(yaw), Vec3::Zero()});
  return {b.lo.x(), b.lo.z(), b.hi.x(), b.hi.z()};
}

inline Footprint instance_footprint(const CanonicalShape& shape, const SceneInstance& inst) {
  return local_footprint(shape, inst.yaw).shifted(inst.position.x(), inst.position.z());
}

/// Iterative non-overlapping layout. Each new shape starts at the mean of the
/// already placed positions (origin for the first), walks outward along a
/// random horizontal direction from the sum of placed short sides in 0.05
/// increments until its footprint is clear, then gets a vertical offset in
/// [-0.5, 0.2]. shape_id of instance i is i.
inline Scene place_objects(std::span<const CanonicalShape> shapes, std::uint64_t seed) {
  if (shapes.empty() || shapes.size() > kMaxSceneObjects)
    throw InputError("place_objects: need between 1 and 16 shapes");
  Rng rng(mix_seed(seed, 0x91ACE));
  Scene scene;
  scene.seed = seed;
  std::vector<Footprint> placed;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    SceneInstance inst;
    inst.shape_id = i;
    inst.yaw = uniform(rng, 0.0, 2 * std::numbers::pi);
    const Footprint local = local_footprint(shapes[i], inst.yaw);

    Vec3 start = Vec3::Zero();
    double d0 = 0.0;
    for (std::size_t j = 0; j < placed.size(); ++j) {
      start += Vec3(scene.instances[j].position.x(), 0, scene.instances[j].position.z());
      d0 += placed[j].short_side();
    }
    if (!placed.empty()) start /= static_cast<double>(placed.size());
    const double phi = uniform(rng, 0.0, 2 * std::numbers::pi);
    const Vec3 dir(std::cos(phi), 0.0, std::sin(phi));

    int n = 0;
    Vec3 pos;
    for (;; ++n) {
      if (n >= kPlacementGuard) throw PlacementError("place_objects: no free position found");
      pos = (d0 + kPlacementStep * n) * dir + start;
      const Footprint fp = local.shifted(pos.x(), pos.z());
      if (std::none_of(placed.begin(), placed.end(),
                       [&](const Footprint& o) { return fp.intersects(o); }))
        break;
    }
    pos.y() = uniform(rng, kVerticalOffsetLo, kVerticalOffsetHi);
    inst.position = pos;
    placed.push_back(local.shifted(pos.x(), pos.z()));
    scene.instances.push_back(inst);
    scene.placement_iterations.push_back(n);
  }
  return scene;
}

/// Re-arrangements of the same shapes, each from a fresh layout seed. Shape
/// ids and articulation states are carried over from `scene`.
inline std::vector<Scene> make_rescans(const Scene& scene, std::span<const CanonicalShape> shapes,
                                       std::size_t count, std::uint64_t seed) {
  if (count < 1) throw InputError("make_rescans: count must be >= 1");
  if (shapes.size() != scene.instances.size())
    throw InputError("make_rescans: one shape per instance required");
  std::vector<Scene> out;
  for (std::size_t r = 0; r < count; ++r) {
    Scene s = place_objects(shapes, mix_seed(seed, 0x2E5C, r));
    for (std::size_t i = 0; i < s.instances.size(); ++i) {
      s.instances[i].shape_id = scene.instances[i].shape_id;
      s.instances[i].theta = scene.instances[i].theta;
    }
    out.push_back(std::move(s));
  }
  return out;
}

struct Viewpoint {
  Vec3 position;
  Vec3 lookat;
};

struct CameraTrajectory {
  std::vector<Viewpoint> viewpoints;
  std::vector<double> control_radii;
  Vec3 center = Vec3::Zero();
};

inline Aabb scene_bounds(const Scene& scene, std::span<const CanonicalShape> shapes) {
  Aabb box;
  for (std::size_t i = 0; i < scene.instances.size(); ++i)
    box.extend(posed_bounds(shapes[i], scene.instances[i].pose()));
  return box;
}

/// 2-4 control viewpoints at radius (max scene extent + U[0.5, 1]) around the
/// scene centre, interpolated in cylindrical coordinates to 100 viewpoints.
/// The look-at target sweeps over instance centres in placement order.
inline CameraTrajectory camera_trajectory(const Scene& scene,
                                          std::span<const CanonicalShape> shapes,
                                          std::uint64_t seed) {
  if (scene.instances.empty()) throw InputError("camera_trajectory: empty scene");
  if (shapes.size() != scene.instances.size())
    throw InputError("camera_trajectory: one shape per instance required");
  Rng rng(mix_seed(seed, 0xCA3E8A));
  const Aabb bounds = scene_bounds(scene, shapes);
  const double extent = bounds.extent().maxCoeff();

  CameraTrajectory traj;
  traj.center = Vec3(bounds.center().x(), 0.0, bounds.center().z());
  const auto controls = static_cast<std::size_t>(std::uniform_int_distribution<int>(2, 4)(rng));
  const double turn = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
  std::vector<double> azimuth, height;
  double a = uniform(rng, 0.0, 2 * std::numbers::pi);
  for (std::size_t c = 0; c < controls; ++c) {
    if (c > 0) a += turn * uniform(rng, std::numbers::pi / 6, std::numbers::pi / 2);
    azimuth.push_back(a);
    traj.control_radii.push_back(extent + uniform(rng, 0.5, 1.0));
    height.push_back(uniform(rng, 0.2, 1.2));
  }

  std::vector<Vec3> centers;
  for (std::size_t i = 0; i < scene.instances.size(); ++i)
    centers.push_back(posed_bounds(shapes[i], scene.instances[i].pose()).center());

  auto lerp = [](double x, double y, double f) { return x + (y - x) * f; };
  for (std::size_t j = 0; j < kTrajectoryLength; ++j) {
    const double u = static_cast<double>(j) / static_cast<double>(kTrajectoryLength - 1);
    const double s = u * static_cast<double>(controls - 1);
    const std::size_t k = std::min(static_cast<std::size_t>(s), controls - 2);
    const double f = s - static_cast<double>(k);
    const double az = lerp(azimuth[k], azimuth[k + 1], f);
    const double r = lerp(traj.control_radii[k], traj.control_radii[k + 1], f);
    const double h = lerp(height[k], height[k + 1], f);

    Vec3 look = centers.front();
    if (centers.size() > 1) {
      const double t = u * static_cast<double>(centers.size() - 1);
      const std::size_t m = std::min(static_cast<std::size_t>(t), centers.size() - 2);
      look = centers[m] + (centers[m + 1] - centers[m]) * (t - static_cast<double>(m));
    }
    traj.viewpoints.push_back(
        {traj.center + Vec3(r * std::cos(az), h, r * std::sin(az)), look});
  }
  return traj;
}

struct Observation {
  std::size_t instance_id = 0;
  PointSet cloud;                          // world frame
  std::vector<int> visibility_count;       // viewpoints that saw each point
  std::vector<std::size_t> sample_index;   // source index into the shape samples
  bool empty_warning = false;
};

inline constexpr double kDefaultNoiseSigma = 0.005;
inline constexpr double kDefaultDropout = 0.3;

namespace detail {

// Counter-based uniform in [0, 1): per-point randomness that does not depend
// on how many other points were visible.
inline double hashed_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                             std::uint64_t c) {
  return static_cast<double>(mix_seed(mix_seed(seed, a, b), c) >> 11) * 0x1.0p-53;
}

inline double hashed_normal(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                            std::uint64_t c) {
  const double u1 = 1.0 - hashed_uniform(seed, a, b, 2 * c);
  const double u2 = hashed_uniform(seed, a, b, 2 * c + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace detail

/// Partial observations of every instance. A surface sample is visible from a
/// viewpoint when its normal faces the camera and the camera ray misses every
/// other instance's box. Visible samples are pooled over the trajectory,
/// jittered by isotropic Gaussian noise and thinned by dropout.
inline std::vector<Observation> observe(const Scene& scene, std::span<const CanonicalShape> shapes,
                                        const CameraTrajectory& traj, double noise_sigma,
                                        double dropout, std::uint64_t seed) {
  if (!(noise_sigma >= 0.0)) throw InputError("observe: noise_sigma must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InputError("observe: dropout must be in [0, 1)");
  if (shapes.size() != scene.instances.size())
    throw InputError("observe: one shape per instance required");

  const std::size_t k_count = scene.instances.size();
  std::vector<Aabb> boxes;
  for (std::size_t k = 0; k < k_count; ++k)
    boxes.push_back(posed_bounds(shapes[k], scene.instances[k].pose()));

  std::vector<Observation> out;
  for (std::size_t k = 0; k < k_count; ++k) {
    const RigidTransform pose = scene.instances[k].pose();
    const CanonicalShape& shape = shapes[k];
    Observation obs;
    obs.instance_id = k;
    for (std::size_t i = 0; i < shape.points.size(); ++i) {
      const Vec3 p = pose.apply(shape.points[i]);
      const Vec3 n = pose.rotate(shape.normals[i]);
      int seen = 0;
      for (const Viewpoint& vp : traj.viewpoints) {
        if (n.dot(vp.position - p) <= 0.0) continue;
        bool blocked = false;
        for (std::size_t o = 0; o < k_count && !blocked; ++o)
          blocked = o != k && boxes[o].hit_by_segment(vp.position, p);
        if (!blocked) ++seen;
      }
      if (seen == 0) continue;
      if (detail::hashed_uniform(seed, k, i, 0xD0) < dropout) continue;
      Vec3 jitter = Vec3::Zero();
      if (noise_sigma > 0.0)
        for (int a = 0; a < 3; ++a)
          jitter[a] = noise_sigma * detail::hashed_normal(seed, k, i, 0x100 + a);
      obs.cloud.push_back(p + jitter, n);
      obs.visibility_count.push_back(seen);
      obs.sample_index.push_back(i);
    }
    obs.empty_warning = obs.cloud.empty();
    out.push_back(std::move(obs));
  }
  return out;
}

}  // namespace jrm
