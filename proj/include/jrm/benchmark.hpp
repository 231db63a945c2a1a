#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "jrm/align.hpp"
#include "jrm/corpus.hpp"
#include "jrm/io.hpp"
#include "jrm/pairing.hpp"
#include "jrm/scene.hpp"

namespace jrm {

enum class BenchmarkKind { Spatial, Temporal, Articulated };

inline std::string_view benchmark_name(BenchmarkKind k) {
  switch (k) {
    case BenchmarkKind::Spatial: return "spatial";
    case BenchmarkKind::Temporal: return "temporal";
    case BenchmarkKind::Articulated: return "articulated";
  }
  return "unknown";
}

inline BenchmarkKind parse_benchmark(std::string_view s) {
  for (auto k : {BenchmarkKind::Spatial, BenchmarkKind::Temporal, BenchmarkKind::Articulated})
    if (benchmark_name(k) == s) return k;
  throw ConfigError("unknown benchmark '" + std::string(s) + "'");
}

inline constexpr std::size_t kDenseGroundTruth = 2048;
inline constexpr std::size_t kTemporalArrangements = 4;

/// One physical object of a benchmark scene; it appears once per arrangement.
struct BenchObject {
  std::size_t shape_id = 0;  // corpus index
  std::string role;          // target, identical, similar, negative, occluder, object, copy<i>
  double theta = 0.0;
  bool articulated = false;
};

struct BenchScene {
  BenchmarkKind kind = BenchmarkKind::Spatial;
  std::size_t id = 0;
  std::uint64_t seed = 0;
  std::vector<BenchObject> objects;
  std::vector<Scene> arrangements;                  // instance shape_id = corpus index
  std::vector<std::vector<std::size_t>> object_of;  // [arrangement][instance] -> object
  std::vector<std::vector<PointSet>> observations;  // world frame
  std::vector<std::vector<PointSet>> ground_truth;  // world frame, dense

  [[nodiscard]] std::size_t instance_count() const { return objects.size(); }

  /// Instance of `arrangement` showing the same object as instance `k` of
  /// arrangement 0.
  [[nodiscard]] std::size_t matched_instance(std::size_t arrangement, std::size_t k) const {
    const auto& row = object_of[arrangement];
    return static_cast<std::size_t>(std::find(row.begin(), row.end(), object_of[0][k]) -
                                    row.begin());
  }

  /// Ground-truth matching table from arrangement 0 to `arrangement`.
  [[nodiscard]] Matching matching_table(std::size_t arrangement) const {
    Matching m;
    for (std::size_t k = 0; k < instance_count(); ++k) {
      m.pairs.emplace_back(k, matched_instance(arrangement, k));
      m.scores.push_back(1.0);
    }
    return m;
  }

  [[nodiscard]] std::size_t instance_with_role(std::string_view role, std::size_t arrangement = 0) const {
    for (std::size_t k = 0; k < instance_count(); ++k)
      if (objects[object_of[arrangement][k]].role == role) return k;
    throw InputError("scene has no instance with role '" + std::string(role) + "'");
  }

  [[nodiscard]] const SceneInstance& instance(std::size_t arrangement, std::size_t k) const {
    return arrangements[arrangement].instances[k];
  }

  /// Observation and ground truth of one instance in its own object frame.
  [[nodiscard]] PointSet local_observation(std::size_t arrangement, std::size_t k) const {
    return to_instance_frame(observations[arrangement][k], instance(arrangement, k));
  }
  [[nodiscard]] PointSet local_ground_truth(std::size_t arrangement, std::size_t k) const {
    return to_instance_frame(ground_truth[arrangement][k], instance(arrangement, k));
  }
};

struct BenchOptions {
  double noise_sigma = kDefaultNoiseSigma;
  double dropout = kDefaultDropout;
  int max_resample = 64;
};

namespace detail {

inline CanonicalShape posed_shape(const Corpus& corpus, const BenchObject& obj) {
  const CanonicalShape& s = corpus.shapes[obj.shape_id];
  return obj.articulated ? articulate(s, obj.theta) : s;
}

/// Places the objects in `order`, renders the trajectory and fills one
/// arrangement of `scene`.
inline void realize(BenchScene& scene, const Corpus& corpus, const std::vector<std::size_t>& order,
                    const Scene* layout, std::uint64_t seed, const BenchOptions& opt) {
  std::vector<CanonicalShape> shapes;
  for (std::size_t o : order) shapes.push_back(posed_shape(corpus, scene.objects[o]));
  Scene s = layout ? *layout : place_objects(shapes, mix_seed(seed, 1));
  for (std::size_t k = 0; k < order.size(); ++k) {
    s.instances[k].shape_id = scene.objects[order[k]].shape_id;
    if (scene.objects[order[k]].articulated) s.instances[k].theta = scene.objects[order[k]].theta;
  }
  const CameraTrajectory traj = camera_trajectory(s, shapes, mix_seed(seed, 2));
  const auto obs = observe(s, shapes, traj, opt.noise_sigma, opt.dropout, mix_seed(seed, 3));
  std::vector<PointSet> clouds, gts;
  for (std::size_t k = 0; k < order.size(); ++k) {
    clouds.push_back(obs[k].cloud);
    gts.push_back(
        s.instances[k].pose().apply(sample_surface(shapes[k], kDenseGroundTruth, mix_seed(seed, 4, k))));
  }
  scene.arrangements.push_back(std::move(s));
  scene.object_of.push_back(order);
  scene.observations.push_back(std::move(clouds));
  scene.ground_truth.push_back(std::move(gts));
}

inline std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  std::shuffle(v.begin(), v.end(), rng);
  return v;
}

}  // namespace detail

/// Target and identical source share a held-out shape; the similar source is
/// another shape of the target's family above similar_thr; the negative comes
/// from another family below it; two occluders are drawn from the rest.
inline BenchScene build_spatial_scene(const Corpus& corpus, const PairingThresholds& th,
                                      std::size_t id, std::uint64_t seed,
                                      const BenchOptions& opt = {}) {
  Rng rng(mix_seed(seed, 0x5BA, id));
  const auto held = corpus.held_out_ids();
  if (held.empty()) throw ConfigError("spatial benchmark: corpus has no held-out shapes");
  for (int attempt = 0; attempt < opt.max_resample; ++attempt) {
    const std::size_t target = held[uniform_index(rng, held.size())];
    const Descriptor& dt = corpus.descriptors[target];
    std::vector<std::size_t> similar, negative;
    for (std::size_t j = 0; j < corpus.size(); ++j) {
      if (j == target) continue;
      const double c = dt.cosine(corpus.descriptors[j]);
      if (corpus.family(j) == corpus.family(target) && c > th.similar_thr) similar.push_back(j);
      if (corpus.family(j) != corpus.family(target) && c < th.similar_thr) negative.push_back(j);
    }
    if (similar.empty() || negative.empty()) continue;  // resample target
    BenchScene scene;
    scene.kind = BenchmarkKind::Spatial;
    scene.id = id;
    scene.seed = seed;
    const std::size_t sim = similar[uniform_index(rng, similar.size())];
    const std::size_t neg = negative[uniform_index(rng, negative.size())];
    scene.objects = {{target, "target"}, {target, "identical"}, {sim, "similar"}, {neg, "negative"}};
    for (int o = 0; o < 2; ++o) {
      std::size_t pick;
      do pick = uniform_index(rng, corpus.size());
      while (pick == target || pick == sim || pick == neg);
      scene.objects.push_back({pick, "occluder"});
    }
    detail::realize(scene, corpus, detail::shuffled(scene.objects.size(), rng), nullptr,
                    mix_seed(seed, 0x5BB, id), opt);
    return scene;
  }
  throw ConfigError("spatial benchmark: no target with similar and negative candidates");
}

/// 4..8 held-out shapes observed in 4 arrangements; later arrangements re-run
/// the layout and list instances in a fresh random order.
inline BenchScene build_temporal_scene(const Corpus& corpus, std::size_t id, std::uint64_t seed,
                                       const BenchOptions& opt = {}) {
  Rng rng(mix_seed(seed, 0x7E3, id));
  auto held = corpus.held_out_ids();
  if (held.size() < 8) throw ConfigError("temporal benchmark: need at least 8 held-out shapes");
  const std::size_t count = 4 + uniform_index(rng, 5);
  std::shuffle(held.begin(), held.end(), rng);
  BenchScene scene;
  scene.kind = BenchmarkKind::Temporal;
  scene.id = id;
  scene.seed = seed;
  for (std::size_t k = 0; k < count; ++k) scene.objects.push_back({held[k], "object"});
  const auto order0 = detail::shuffled(count, rng);
  const std::uint64_t s0 = mix_seed(seed, 0x7E4, id);
  detail::realize(scene, corpus, order0, nullptr, s0, opt);

  std::vector<CanonicalShape> shapes;
  for (std::size_t o : order0) shapes.push_back(detail::posed_shape(corpus, scene.objects[o]));
  const auto rescans =
      make_rescans(scene.arrangements[0], shapes, kTemporalArrangements - 1, mix_seed(s0, 9));
  for (std::size_t r = 0; r < rescans.size(); ++r) {
    const auto perm = detail::shuffled(count, rng);
    Scene layout;
    layout.seed = rescans[r].seed;
    std::vector<std::size_t> order;
    for (std::size_t k : perm) {
      layout.instances.push_back(rescans[r].instances[k]);
      layout.placement_iterations.push_back(rescans[r].placement_iterations[k]);
      order.push_back(order0[k]);
    }
    detail::realize(scene, corpus, order, &layout, mix_seed(seed, 0x7E5, id * 8 + r), opt);
  }
  return scene;
}

/// Three copies of one held-out jointed shape (copy 0 at rest, the others at
/// random joint values) plus two occluders.
inline BenchScene build_articulated_scene(const Corpus& corpus, std::size_t id, std::uint64_t seed,
                                          const BenchOptions& opt = {}) {
  Rng rng(mix_seed(seed, 0xA27, id));
  std::vector<std::size_t> jointed;
  for (std::size_t i : corpus.held_out_ids())
    if (corpus.shapes[i].joint) jointed.push_back(i);
  if (jointed.empty()) throw ConfigError("articulated benchmark: no held-out jointed shape");
  const std::size_t base = jointed[uniform_index(rng, jointed.size())];
  const ParamRange range = corpus.shapes[base].joint->range();
  BenchScene scene;
  scene.kind = BenchmarkKind::Articulated;
  scene.id = id;
  scene.seed = seed;
  for (int c = 0; c < 3; ++c) {
    const double theta = c == 0 ? 0.0 : uniform(rng, range.lo, range.hi);
    scene.objects.push_back({base, "copy" + std::to_string(c), theta, true});
  }
  for (int o = 0; o < 2; ++o) {
    std::size_t pick;
    do pick = uniform_index(rng, corpus.size());
    while (pick == base);
    scene.objects.push_back({pick, "occluder"});
  }
  detail::realize(scene, corpus, detail::shuffled(scene.objects.size(), rng), nullptr,
                  mix_seed(seed, 0xA28, id), opt);
  return scene;
}

inline BenchScene build_scene(BenchmarkKind kind, const Corpus& corpus,
                              const PairingThresholds& th, std::size_t id, std::uint64_t seed,
                              const BenchOptions& opt = {}) {
  switch (kind) {
    case BenchmarkKind::Spatial: return build_spatial_scene(corpus, th, id, seed, opt);
    case BenchmarkKind::Temporal: return build_temporal_scene(corpus, id, seed, opt);
    case BenchmarkKind::Articulated: return build_articulated_scene(corpus, id, seed, opt);
  }
  throw ConfigError("unknown benchmark kind");
}

// ---------------------------------------------------------------------------
// Dataset layout: <dir>/scenes/<id>/{scene.meta, obs_<k>.bin, gt_<k>.bin}
// with k = arrangement * instances + instance.

inline std::string fmt_vec(const Vec3& v) {
  return io::fmt_double(v.x()) + " " + io::fmt_double(v.y()) + " " + io::fmt_double(v.z());
}

inline Vec3 parse_vec(const std::string& s) {
  std::istringstream in(s);
  Vec3 v;
  if (!(in >> v.x() >> v.y() >> v.z())) throw ConfigError("malformed vector '" + s + "'");
  return v;
}

inline io::KeyValues scene_metadata(const BenchScene& scene, const Corpus& corpus) {
  io::KeyValues kv;
  kv.set("kind", std::string(benchmark_name(scene.kind)));
  kv.set("id", static_cast<std::uint64_t>(scene.id));
  kv.set("seed", scene.seed);
  kv.set("arrangements", static_cast<std::uint64_t>(scene.arrangements.size()));
  kv.set("instances", static_cast<std::uint64_t>(scene.instance_count()));
  for (std::size_t o = 0; o < scene.objects.size(); ++o) {
    const BenchObject& obj = scene.objects[o];
    const std::string p = "object." + std::to_string(o) + ".";
    kv.set(p + "shape", static_cast<std::uint64_t>(obj.shape_id));
    kv.set(p + "family", std::string(family_name(corpus.family(obj.shape_id))));
    kv.set(p + "role", obj.role);
    kv.set(p + "articulated", obj.articulated ? 1 : 0);
    kv.set(p + "theta", obj.theta);
  }
  for (std::size_t r = 0; r < scene.arrangements.size(); ++r) {
    const Scene& s = scene.arrangements[r];
    kv.set("layout." + std::to_string(r) + ".seed", s.seed);
    for (std::size_t k = 0; k < s.instances.size(); ++k) {
      const std::string p = "inst." + std::to_string(r) + "." + std::to_string(k) + ".";
      kv.set(p + "object", static_cast<std::uint64_t>(scene.object_of[r][k]));
      kv.set(p + "shape", static_cast<std::uint64_t>(s.instances[k].shape_id));
      kv.set(p + "yaw", s.instances[k].yaw);
      kv.set(p + "position", fmt_vec(s.instances[k].position));
      if (s.instances[k].theta) kv.set(p + "theta", *s.instances[k].theta);
      kv.set(p + "placement_iterations", s.placement_iterations[k]);
      kv.set(p + "observed_points", static_cast<std::uint64_t>(scene.observations[r][k].size()));
      kv.set(p + "empty_warning", scene.observations[r][k].empty() ? 1 : 0);
    }
    if (r > 0) {
      std::string table;
      for (const auto& [a, b] : scene.matching_table(r).pairs)
        table += (table.empty() ? "" : " ") + std::to_string(a) + ":" + std::to_string(b);
      kv.set("match." + std::to_string(r), table);
    }
  }
  return kv;
}

/// Writes one scene; returns the files written relative to `root`.
inline std::vector<std::filesystem::path> write_scene(const std::filesystem::path& root,
                                                      const BenchScene& scene,
                                                      const Corpus& corpus) {
  const std::filesystem::path rel = std::filesystem::path("scenes") / std::to_string(scene.id);
  std::vector<std::filesystem::path> files{rel / "scene.meta"};
  scene_metadata(scene, corpus).save(root / rel / "scene.meta");
  const std::size_t n = scene.instance_count();
  for (std::size_t r = 0; r < scene.arrangements.size(); ++r)
    for (std::size_t k = 0; k < n; ++k) {
      const std::string idx = std::to_string(r * n + k);
      io::write_point_rows(root / rel / ("obs_" + idx + ".bin"), scene.observations[r][k]);
      io::write_point_rows(root / rel / ("gt_" + idx + ".bin"), scene.ground_truth[r][k]);
      files.push_back(rel / ("obs_" + idx + ".bin"));
      files.push_back(rel / ("gt_" + idx + ".bin"));
    }
  return files;
}

inline BenchScene read_scene(const std::filesystem::path& dir) {
  const auto kv = io::KeyValues::load(dir / "scene.meta");
  BenchScene scene;
  scene.kind = parse_benchmark(kv.get("kind"));
  scene.id = static_cast<std::size_t>(kv.get_u64("id"));
  scene.seed = kv.get_u64("seed");
  const auto arrangements = static_cast<std::size_t>(kv.get_u64("arrangements"));
  const auto n = static_cast<std::size_t>(kv.get_u64("instances"));
  for (std::size_t o = 0; o < n; ++o) {
    const std::string p = "object." + std::to_string(o) + ".";
    BenchObject obj;
    obj.shape_id = static_cast<std::size_t>(kv.get_u64(p + "shape"));
    obj.role = kv.get(p + "role");
    obj.articulated = kv.get_int(p + "articulated") != 0;
    obj.theta = kv.get_double(p + "theta");
    scene.objects.push_back(obj);
  }
  for (std::size_t r = 0; r < arrangements; ++r) {
    Scene s;
    s.seed = kv.get_u64("layout." + std::to_string(r) + ".seed");
    std::vector<std::size_t> order;
    std::vector<PointSet> obs, gt;
    for (std::size_t k = 0; k < n; ++k) {
      const std::string p = "inst." + std::to_string(r) + "." + std::to_string(k) + ".";
      SceneInstance inst;
      inst.shape_id = static_cast<std::size_t>(kv.get_u64(p + "shape"));
      inst.yaw = kv.get_double(p + "yaw");
      inst.position = parse_vec(kv.get(p + "position"));
      if (kv.has(p + "theta")) inst.theta = kv.get_double(p + "theta");
      s.instances.push_back(inst);
      s.placement_iterations.push_back(static_cast<int>(kv.get_int(p + "placement_iterations")));
      order.push_back(static_cast<std::size_t>(kv.get_u64(p + "object")));
      const std::string idx = std::to_string(r * n + k);
      obs.push_back(io::read_point_rows(dir / ("obs_" + idx + ".bin")));
      gt.push_back(io::read_point_rows(dir / ("gt_" + idx + ".bin")));
    }
    scene.arrangements.push_back(std::move(s));
    scene.object_of.push_back(std::move(order));
    scene.observations.push_back(std::move(obs));
    scene.ground_truth.push_back(std::move(gt));
  }
  return scene;
}

/// Scene directories under <root>/scenes in numeric order.
inline std::vector<BenchScene> read_benchmark(const std::filesystem::path& root) {
  std::vector<std::size_t> ids;
  if (!std::filesystem::is_directory(root / "scenes"))
    throw IoError("no benchmark at " + (root / "scenes").string());
  for (const auto& e : std::filesystem::directory_iterator(root / "scenes"))
    if (e.is_directory()) ids.push_back(std::stoul(e.path().filename().string()));
  std::sort(ids.begin(), ids.end());
  std::vector<BenchScene> out;
  for (std::size_t id : ids) out.push_back(read_scene(root / "scenes" / std::to_string(id)));
  return out;
}

}  // namespace jrm
