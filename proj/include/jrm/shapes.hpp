#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "jrm/common.hpp"
#include "jrm/io.hpp"

namespace jrm {

enum class ShapeFamily { Box, Table, Chair, Sofa, Lamp, Pillow, Cabinet };

inline constexpr std::size_t kFamilyCount = 7;
inline constexpr std::size_t kShapeParamCount = 6;
inline constexpr std::size_t kDefaultShapeSamples = 1024;
inline constexpr std::size_t kDescriptorDim = 64;

inline constexpr std::array<ShapeFamily, kFamilyCount> kAllFamilies = {
    ShapeFamily::Box,  ShapeFamily::Table,  ShapeFamily::Chair,  ShapeFamily::Sofa,
    ShapeFamily::Lamp, ShapeFamily::Pillow, ShapeFamily::Cabinet};

inline std::string_view family_name(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::Box: return "box";
    case ShapeFamily::Table: return "table";
    case ShapeFamily::Chair: return "chair";
    case ShapeFamily::Sofa: return "sofa";
    case ShapeFamily::Lamp: return "lamp";
    case ShapeFamily::Pillow: return "pillow";
    case ShapeFamily::Cabinet: return "cabinet";
  }
  return "unknown";
}

inline ShapeFamily parse_family(std::string_view name) {
  for (ShapeFamily f : kAllFamilies)
    if (family_name(f) == name) return f;
  throw ParameterError("unknown shape family '" + std::string(name) + "'");
}

using ShapeParams = std::array<double, kShapeParamCount>;

struct ShapeSpec {
  ShapeFamily family = ShapeFamily::Box;
  ShapeParams params{};
  std::uint64_t seed = 0;
};

struct ParamRange {
  double lo, hi;
};

// Documented per-family proportions. Unused slots accept all of (0, 1] and are
// ignored by the generator.
inline std::array<ParamRange, kShapeParamCount> param_ranges(ShapeFamily f) {
  constexpr ParamRange any{1e-9, 1.0};
  switch (f) {
    case ShapeFamily::Box:  // width, height, depth
      return {{{0.5, 1.0}, {0.5, 1.0}, {0.5, 1.0}, any, any, any}};
    case ShapeFamily::Table:  // top width, top depth, height, top thickness, leg size
      return {{{0.6, 1.0}, {0.4, 1.0}, {0.4, 0.9}, {0.03, 0.1}, {0.04, 0.12}, any}};
    case ShapeFamily::Chair:  // seat w, seat d, seat h, back h, leg size, seat thickness
      return {{{0.4, 0.6}, {0.4, 0.6}, {0.35, 0.5}, {0.3, 0.6}, {0.03, 0.08}, {0.04, 0.1}}};
    case ShapeFamily::Sofa:  // width, depth, seat h, back h, arm width, back thickness
      return {{{0.9, 1.0}, {0.35, 0.5}, {0.15, 0.25}, {0.2, 0.35}, {0.05, 0.15}, {0.08, 0.15}}};
    case ShapeFamily::Lamp:  // base size, base thickness, pole h, pole size, shade w, shade h
      return {{{0.15, 0.3}, {0.02, 0.06}, {0.5, 1.0}, {0.02, 0.05}, {0.2, 0.45}, {0.15, 0.3}}};
    case ShapeFamily::Pillow:  // width, depth, thickness
      return {{{0.4, 0.7}, {0.3, 0.6}, {0.08, 0.18}, any, any, any}};
    case ShapeFamily::Cabinet:  // width, height, depth, panel, joint selector (<0.5 hinge)
      return {{{0.4, 0.9}, {0.5, 1.0}, {0.3, 0.6}, {0.02, 0.05}, any, any}};
  }
  throw ParameterError("unknown shape family");
}

/// Uniform draw of a valid spec for a family.
inline ShapeSpec random_spec(ShapeFamily family, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x5EC));
  ShapeSpec spec{family, {}, seed};
  const auto ranges = param_ranges(family);
  for (std::size_t i = 0; i < kShapeParamCount; ++i)
    spec.params[i] = uniform(rng, std::max(ranges[i].lo, 1e-3), ranges[i].hi);
  return spec;
}

/// Planar rectangle: center +- half_u +- half_v, outward normal.
struct Face {
  Vec3 center;
  Vec3 half_u;
  Vec3 half_v;
  Vec3 normal;
  bool moving = false;  // belongs to the articulated part

  [[nodiscard]] double area() const { return 4.0 * half_u.norm() * half_v.norm(); }
  [[nodiscard]] std::array<Vec3, 4> corners() const {
    return {center + half_u + half_v, center + half_u - half_v,
            center - half_u + half_v, center - half_u - half_v};
  }
};

enum class JointKind { Hinge, Prismatic };

inline std::string_view joint_kind_name(JointKind k) {
  return k == JointKind::Hinge ? "hinge" : "prismatic";
}

struct Joint {
  Vec3 axis = Vec3::UnitY();
  Vec3 pivot = Vec3::Zero();
  JointKind kind = JointKind::Hinge;
  std::vector<bool> part_mask;  // per point of CanonicalShape::points

  [[nodiscard]] ParamRange range() const {
    return kind == JointKind::Hinge ? ParamRange{0.0, std::numbers::pi / 2}
                                    : ParamRange{0.0, 0.4};
  }
};

struct CanonicalShape {
  ShapeSpec spec;
  std::vector<Face> faces;
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  Vec3 bbox_min = Vec3::Zero();
  Vec3 bbox_max = Vec3::Zero();
  std::optional<Joint> joint;

  [[nodiscard]] double bbox_diagonal() const { return (bbox_max - bbox_min).norm(); }
  [[nodiscard]] PointSet point_set() const { return {points, normals}; }
};

namespace detail {

inline void add_box(std::vector<Face>& faces, const Vec3& center, const Vec3& half,
                    bool moving = false) {
  const Vec3 ex(half.x(), 0, 0), ey(0, half.y(), 0), ez(0, 0, half.z());
  faces.push_back({center + ex, ey, ez, Vec3::UnitX(), moving});
  faces.push_back({center - ex, ey, ez, -Vec3::UnitX(), moving});
  faces.push_back({center + ey, ex, ez, Vec3::UnitY(), moving});
  faces.push_back({center - ey, ex, ez, -Vec3::UnitY(), moving});
  faces.push_back({center + ez, ex, ey, Vec3::UnitZ(), moving});
  faces.push_back({center - ez, ex, ey, -Vec3::UnitZ(), moving});
}

// Box given by min corner and size.
inline void add_block(std::vector<Face>& faces, const Vec3& lo, const Vec3& size,
                      bool moving = false) {
  add_box(faces, lo + 0.5 * size, 0.5 * size, moving);
}

inline void face_bbox(std::span<const Face> faces, Vec3& lo, Vec3& hi) {
  lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  hi = -lo;
  for (const Face& f : faces)
    for (const Vec3& c : f.corners()) {
      lo = lo.cwiseMin(c);
      hi = hi.cwiseMax(c);
    }
}

// Builds un-normalised faces for a family; y is up, +z is the front.
inline std::vector<Face> build_faces(const ShapeSpec& s, std::optional<Joint>& joint) {
  const auto& p = s.params;
  std::vector<Face> f;
  switch (s.family) {
    case ShapeFamily::Box:
      add_block(f, {0, 0, 0}, {p[0], p[1], p[2]});
      break;
    case ShapeFamily::Table: {
      const double w = p[0], d = p[1], h = p[2], top = p[3], leg = p[4];
      add_block(f, {0, h - top, 0}, {w, top, d});
      for (double x : {0.0, w - leg})
        for (double z : {0.0, d - leg}) add_block(f, {x, 0, z}, {leg, h - top, leg});
      break;
    }
    case ShapeFamily::Chair: {
      const double w = p[0], d = p[1], h = p[2], back = p[3], leg = p[4], seat = p[5];
      add_block(f, {0, h - seat, 0}, {w, seat, d});
      for (double x : {0.0, w - leg})
        for (double z : {0.0, d - leg}) add_block(f, {x, 0, z}, {leg, h - seat, leg});
      add_block(f, {0, h, 0}, {w, back, seat});
      break;
    }
    case ShapeFamily::Sofa: {
      const double w = p[0], d = p[1], h = p[2], back = p[3], arm = p[4], bt = p[5];
      add_block(f, {0, 0, 0}, {w, h, d});
      add_block(f, {0, h, 0}, {w, back, bt});
      add_block(f, {0, h, bt}, {arm, 0.5 * back, d - bt});
      add_block(f, {w - arm, h, bt}, {arm, 0.5 * back, d - bt});
      break;
    }
    case ShapeFamily::Lamp: {
      const double base = p[0], bt = p[1], pole = p[2], ps = p[3], sw = p[4], sh = p[5];
      add_block(f, {-base, 0, -base}, {2 * base, bt, 2 * base});
      add_block(f, {-ps, bt, -ps}, {2 * ps, pole, 2 * ps});
      add_block(f, {-0.5 * sw, bt + pole - 0.5 * sh, -0.5 * sw}, {sw, sh, sw});
      break;
    }
    case ShapeFamily::Pillow: {
      const double w = p[0], d = p[1], h = p[2];
      add_block(f, {0, 0, 0}, {w, h, d});
      add_block(f, {0.1 * w, h, 0.1 * d}, {0.8 * w, 0.3 * h, 0.8 * d});
      break;
    }
    case ShapeFamily::Cabinet: {
      const double w = p[0], h = p[1], d = p[2], t = p[3];
      add_block(f, {0, 0, 0}, {t, h, d});           // left side
      add_block(f, {w - t, 0, 0}, {t, h, d});       // right side
      add_block(f, {t, h - t, 0}, {w - 2 * t, t, d});  // top
      add_block(f, {t, 0, 0}, {w - 2 * t, t, d});      // bottom
      add_block(f, {t, t, 0}, {w - 2 * t, h - 2 * t, t});  // back
      Joint j;
      if (p[4] < 0.5) {
        // Door over the whole front, hinged on its left edge, swinging outwards.
        j.kind = JointKind::Hinge;
        j.axis = -Vec3::UnitY();
        j.pivot = Vec3(0, 0, d + t);
        add_block(f, {0, 0, d}, {w, h, t}, true);
      } else {
        // Drawer in the upper half sliding along +z.
        j.kind = JointKind::Prismatic;
        j.axis = Vec3::UnitZ();
        j.pivot = Vec3(0.5 * w, 0.75 * h, d);
        add_block(f, {t, t, 0}, {w - 2 * t, 0.5 * h - 1.5 * t, d});  // fixed front of lower half
        add_block(f, {0, 0.5 * h, d - t}, {w, 0.5 * h, t}, true);     // drawer front
        add_block(f, {1.5 * t, 0.5 * h + t, t}, {w - 3 * t, 0.5 * h - 2.5 * t, d - 2 * t},
                  true);  // drawer body
      }
      joint = j;
      break;
    }
  }
  return f;
}

// Area-weighted centroid of all face rectangles.
inline Vec3 surface_centroid(std::span<const Face> faces) {
  Vec3 acc = Vec3::Zero();
  double area = 0;
  for (const Face& f : faces) {
    acc += f.area() * f.center;
    area += f.area();
  }
  return acc / area;
}

struct SurfaceDraw {
  PointSet set;
  std::vector<std::size_t> face;
};

inline SurfaceDraw sample_faces(std::span<const Face> faces, std::size_t count,
                                std::uint64_t seed) {
  std::vector<double> cum(faces.size());
  double total = 0;
  for (std::size_t i = 0; i < faces.size(); ++i) cum[i] = (total += faces[i].area());
  Rng rng(mix_seed(seed, 0x5A3));
  SurfaceDraw out;
  out.set.points.reserve(count);
  out.set.normals.reserve(count);
  out.face.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double r = uniform(rng, 0.0, total);
    auto it = std::upper_bound(cum.begin(), cum.end(), r);
    const std::size_t k =
        std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), faces.size() - 1);
    const double a = uniform(rng, -1.0, 1.0), b = uniform(rng, -1.0, 1.0);
    const Face& f = faces[k];
    out.set.push_back(f.center + a * f.half_u + b * f.half_v, f.normal);
    out.face.push_back(k);
  }
  return out;
}

}  // namespace detail

inline void validate_spec(const ShapeSpec& spec) {
  const auto ranges = param_ranges(spec.family);
  for (std::size_t i = 0; i < kShapeParamCount; ++i) {
    const double v = spec.params[i];
    if (!(v > 0.0 && v <= 1.0) || v < ranges[i].lo || v > ranges[i].hi)
      throw ParameterError("shape parameter " + std::to_string(i) + " of family " +
                           std::string(family_name(spec.family)) + " out of range: " +
                           io::fmt_double(v));
  }
}

/// Area-weighted uniform samples of the shape surface.
inline PointSet sample_surface(const CanonicalShape& shape, std::size_t count,
                               std::uint64_t seed) {
  if (count < 1) throw InputError("sample_surface: count must be >= 1");
  return detail::sample_faces(shape.faces, count, seed).set;
}

/// Builds the shape, rescales so the bounding-box diagonal is 1 and moves the
/// surface centroid to the origin, then draws `samples` surface points.
inline CanonicalShape generate_shape(const ShapeSpec& spec,
                                     std::size_t samples = kDefaultShapeSamples) {
  validate_spec(spec);
  CanonicalShape shape;
  shape.spec = spec;
  shape.faces = detail::build_faces(spec, shape.joint);

  Vec3 lo, hi;
  detail::face_bbox(shape.faces, lo, hi);
  const double scale = 1.0 / (hi - lo).norm();
  for (Face& f : shape.faces) {
    f.center *= scale;
    f.half_u *= scale;
    f.half_v *= scale;
  }
  const Vec3 c = detail::surface_centroid(shape.faces);
  for (Face& f : shape.faces) f.center -= c;
  if (shape.joint) shape.joint->pivot = shape.joint->pivot * scale - c;
  detail::face_bbox(shape.faces, shape.bbox_min, shape.bbox_max);

  auto draw = detail::sample_faces(shape.faces, samples, spec.seed);
  shape.points = std::move(draw.set.points);
  shape.normals = std::move(draw.set.normals);
  if (shape.joint) {
    shape.joint->part_mask.resize(draw.face.size());
    for (std::size_t i = 0; i < draw.face.size(); ++i)
      shape.joint->part_mask[i] = shape.faces[draw.face[i]].moving;
  }
  return shape;
}

inline Vec3 surface_centroid(const CanonicalShape& shape) {
  return detail::surface_centroid(shape.faces);
}

/// Moves the articulated part by `theta` (radians for hinges, shape units for
/// prismatic joints). The result is not re-normalised.
inline CanonicalShape articulate(const CanonicalShape& shape, double theta) {
  if (!shape.joint) throw UnsupportedShapeError("articulate: shape has no joint");
  const Joint& j = *shape.joint;
  const ParamRange range = j.range();
  if (!(theta >= range.lo && theta <= range.hi))
    throw ParameterError("articulate: theta " + io::fmt_double(theta) + " outside joint range");

  CanonicalShape out = shape;
  if (theta == 0.0) return out;

  const Mat3 rot = j.kind == JointKind::Hinge
                       ? Mat3(Eigen::AngleAxisd(theta, j.axis.normalized()))
                       : Mat3::Identity();
  const Vec3 shift = j.kind == JointKind::Prismatic ? Vec3(theta * j.axis) : Vec3::Zero();
  auto move_point = [&](const Vec3& p) -> Vec3 { return rot * (p - j.pivot) + j.pivot + shift; };

  for (Face& f : out.faces) {
    if (!f.moving) continue;
    f.center = move_point(f.center);
    f.half_u = rot * f.half_u;
    f.half_v = rot * f.half_v;
    f.normal = rot * f.normal;
  }
  for (std::size_t i = 0; i < out.points.size(); ++i) {
    if (!j.part_mask[i]) continue;
    out.points[i] = move_point(out.points[i]);
    out.normals[i] = rot * out.normals[i];
  }
  detail::face_bbox(out.faces, out.bbox_min, out.bbox_max);
  return out;
}

struct Descriptor {
  std::array<double, kDescriptorDim> vec{};

  [[nodiscard]] double cosine(const Descriptor& other) const {
    double dot = 0;
    for (std::size_t i = 0; i < kDescriptorDim; ++i) dot += vec[i] * other.vec[i];
    return dot;
  }
};

inline constexpr std::size_t kDistanceBins = 48;
inline constexpr std::size_t kElevationBins = kDescriptorDim - kDistanceBins;
inline constexpr double kDistanceRange = 1.2;

namespace detail {

// Unit mass, square root (Hellinger map), unit length.
inline void finish_histogram(std::span<double> h) {
  double mass = 0.0;
  for (double v : h) mass += v;
  double len = 0.0;
  for (double& v : h) {
    v = std::sqrt(v / mass);
    len += v * v;
  }
  len = std::sqrt(len);
  for (double& v : h) v /= len;
}

}  // namespace detail

/// Pairwise-distance histogram concatenated with a normal-elevation histogram.
/// Each part is taken to unit mass, square-rooted and scaled to unit length so
/// the few occupied elevation bins of box-like shapes do not swamp the
/// distance profile; the whole is then L2-normalised. Both parts are
/// order-free and invariant to rotation about the vertical axis.
inline Descriptor descriptor(std::span<const Vec3> points, std::span<const Vec3> normals) {
  if (points.size() < 32) throw InputError("descriptor: need at least 32 points");
  if (normals.size() != points.size()) throw InputError("descriptor: normal count mismatch");
  Descriptor out;
  std::span<double> dist(out.vec.data(), kDistanceBins);
  std::span<double> elev(out.vec.data() + kDistanceBins, kElevationBins);
  const std::size_t n = points.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = (points[i] - points[j]).norm();
      auto bin = static_cast<std::size_t>(d / kDistanceRange * kDistanceBins);
      dist[std::min(bin, kDistanceBins - 1)] += 1.0;
    }
  for (const Vec3& nrm : normals) {
    const double s = std::clamp(nrm.y() / std::max(nrm.norm(), 1e-12), -1.0, 1.0);
    const double t = (std::asin(s) + std::numbers::pi / 2) / std::numbers::pi;
    auto bin = static_cast<std::size_t>(t * kElevationBins);
    elev[std::min(bin, kElevationBins - 1)] += 1.0;
  }
  detail::finish_histogram(dist);
  detail::finish_histogram(elev);
  for (double& v : out.vec) v /= std::sqrt(2.0);
  return out;
}

inline Descriptor descriptor(const CanonicalShape& shape) {
  return descriptor(shape.points, shape.normals);
}

inline Descriptor descriptor(const PointSet& set) { return descriptor(set.points, set.normals); }

// ---------------------------------------------------------------------------
// Corpus export: <dir>/meta.txt and <dir>/points.bin per shape.

inline io::KeyValues shape_metadata(const CanonicalShape& shape) {
  io::KeyValues kv;
  kv.set("family", std::string(family_name(shape.spec.family)));
  std::string params;
  for (std::size_t i = 0; i < kShapeParamCount; ++i)
    params += (i ? " " : "") + io::fmt_double(shape.spec.params[i]);
  kv.set("params", params);
  kv.set("seed", shape.spec.seed);
  kv.set("points", static_cast<std::uint64_t>(shape.points.size()));
  if (shape.joint) {
    const Joint& j = *shape.joint;
    kv.set("joint", std::string(joint_kind_name(j.kind)));
    kv.set("joint_axis", io::fmt_double(j.axis.x()) + " " + io::fmt_double(j.axis.y()) + " " +
                             io::fmt_double(j.axis.z()));
    kv.set("joint_pivot", io::fmt_double(j.pivot.x()) + " " + io::fmt_double(j.pivot.y()) +
                              " " + io::fmt_double(j.pivot.z()));
  } else {
    kv.set("joint", std::string("none"));
  }
  return kv;
}

inline ShapeSpec parse_spec(const io::KeyValues& kv) {
  ShapeSpec spec;
  spec.family = parse_family(kv.get("family"));
  std::istringstream ps(kv.get("params"));
  for (std::size_t i = 0; i < kShapeParamCount; ++i)
    if (!(ps >> spec.params[i])) throw ConfigError("malformed shape params");
  spec.seed = kv.get_u64("seed");
  return spec;
}

inline void export_shape(const std::filesystem::path& dir, const CanonicalShape& shape) {
  shape_metadata(shape).save(dir / "meta.txt");
  io::write_point_rows(dir / "points.bin", shape.point_set());
}

}  // namespace jrm
