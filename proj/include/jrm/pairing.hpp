#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "jrm/corpus.hpp"
#include "jrm/denoiser.hpp"
#include "jrm/flow.hpp"
#include "jrm/rigid.hpp"
#include "jrm/scene.hpp"

namespace jrm {

/// Ground-truth latent of a shape: farthest-point subsample of a fresh
/// surface draw, in the shape's own frame.
inline LatentTokens shape_tokens(const CanonicalShape& shape, std::size_t tokens,
                                 std::uint64_t seed) {
  return points_to_tokens(farthest_point_sample(sample_surface(shape, 8 * tokens, seed), tokens));
}

/// Expresses a world-frame observation in the frame of its instance.
inline PointSet to_instance_frame(const PointSet& world, const SceneInstance& inst) {
  return inst.pose().inverse().apply(world);
}

struct ViewOptions {
  std::size_t occluders = 2;
  double noise_sigma = kDefaultNoiseSigma;
  double dropout = kDefaultDropout;
};

/// Observes `shape` inside its own small scene of random occluders drawn from
/// `occluder_pool` and returns the cloud in the shape's frame.
inline PointSet isolated_view(const Corpus& corpus, const CanonicalShape& shape,
                              const std::vector<std::size_t>& occluder_pool, std::uint64_t seed,
                              const ViewOptions& opt = {}) {
  Rng rng(mix_seed(seed, 0x0CC1));
  std::vector<CanonicalShape> shapes{shape};
  for (std::size_t o = 0; o < opt.occluders && !occluder_pool.empty(); ++o)
    shapes.push_back(corpus.shapes[occluder_pool[uniform_index(rng, occluder_pool.size())]]);
  const Scene scene = place_objects(shapes, mix_seed(seed, 0x0CC2));
  const CameraTrajectory traj = camera_trajectory(scene, shapes, mix_seed(seed, 0x0CC3));
  const auto obs =
      observe(scene, shapes, traj, opt.noise_sigma, opt.dropout, mix_seed(seed, 0x0CC4));
  return to_instance_frame(obs[0].cloud, scene.instances[0]);
}

// ---------------------------------------------------------------------------
// Threshold calibration

struct PairingThresholds {
  double positive_thr = 0.0;
  double similar_thr = 0.0;
  // diagnostics, reported with every run
  double same_shape_pass = 0.0;   // same-shape pairs >= positive_thr
  double cross_family_pass = 0.0; // cross-family pairs >= positive_thr
  double cross_family_similar_pass = 0.0;
  double same_family_similar_pass = 0.0;
  std::size_t same_shape_pairs = 0;
  std::size_t cross_family_pairs = 0;
  std::size_t same_family_pairs = 0;

  [[nodiscard]] io::KeyValues to_kv() const {
    io::KeyValues kv;
    kv.set("pairing.positive_thr", positive_thr);
    kv.set("pairing.similar_thr", similar_thr);
    kv.set("pairing.same_shape_pass", same_shape_pass);
    kv.set("pairing.cross_family_pass", cross_family_pass);
    kv.set("pairing.cross_family_similar_pass", cross_family_similar_pass);
    kv.set("pairing.same_family_similar_pass", same_family_similar_pass);
    return kv;
  }
};

inline double pass_fraction(const std::vector<double>& scores, double thr) {
  if (scores.empty()) return 0.0;
  const auto n = std::count_if(scores.begin(), scores.end(), [&](double s) { return s >= thr; });
  return static_cast<double>(n) / static_cast<double>(scores.size());
}

/// positive_thr: largest value passing >= 99% of same-shape pairs (canonical
/// samples against a noisy independent resample). similar_thr: smallest value
/// passing <= 1% of cross-family pairs.
inline PairingThresholds calibrate_thresholds(const Corpus& corpus, std::uint64_t seed = 0) {
  if (corpus.size() < 100) throw CalibrationError("calibrate_thresholds: need >= 100 shapes");
  std::vector<double> same, cross, family;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    Rng rng(mix_seed(seed, 0xCA1, i));
    PointSet s = sample_surface(corpus.shapes[i], corpus.shapes[i].points.size(),
                                mix_seed(seed, 0xCA2, i));
    const Mat3 r = yaw_rotation(uniform(rng, 0.0, 2 * std::numbers::pi));
    for (std::size_t p = 0; p < s.size(); ++p) {
      s.points[p] = r * s.points[p] +
                    Vec3(normal(rng), normal(rng), normal(rng)) * kDefaultNoiseSigma;
      s.normals[p] = r * s.normals[p];
    }
    same.push_back(corpus.descriptors[i].cosine(descriptor(s)));
    for (std::size_t j = i + 1; j < corpus.size(); ++j) {
      const double c = corpus.descriptors[i].cosine(corpus.descriptors[j]);
      (corpus.family(i) == corpus.family(j) ? family : cross).push_back(c);
    }
  }
  std::sort(same.begin(), same.end());
  std::sort(cross.begin(), cross.end());

  PairingThresholds th;
  const auto lo_idx = static_cast<std::size_t>(std::floor(0.01 * static_cast<double>(same.size())));
  th.positive_thr = same[lo_idx];
  const auto hi_idx =
      static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(cross.size()))) - 1;
  th.similar_thr = std::nextafter(cross[hi_idx], 2.0);

  th.same_shape_pairs = same.size();
  th.cross_family_pairs = cross.size();
  th.same_family_pairs = family.size();
  th.same_shape_pass = pass_fraction(same, th.positive_thr);
  th.cross_family_pass = pass_fraction(cross, th.positive_thr);
  th.cross_family_similar_pass = pass_fraction(cross, th.similar_thr);
  th.same_family_similar_pass = pass_fraction(family, th.similar_thr);
  if (th.positive_thr < th.similar_thr || th.cross_family_pass > 0.01)
    throw CalibrationError(
        "descriptor space does not separate same-shape from cross-family pairs: positive_thr=" +
        io::fmt_double(th.positive_thr) + " similar_thr=" + io::fmt_double(th.similar_thr) +
        " cross_family_pass=" + io::fmt_double(th.cross_family_pass) +
        " same_shape_min=" + io::fmt_double(same.front()) +
        " cross_family_max=" + io::fmt_double(cross.back()));
  return th;
}

// ---------------------------------------------------------------------------
// Pair sampling

enum class PairLabel { Positive, Negative };

inline std::string_view label_name(PairLabel l) {
  return l == PairLabel::Positive ? "positive" : "negative";
}

struct TrainingPair {
  PointSet obs_a, obs_b;          // each in its own object frame
  LatentTokens gt_a, gt_b;
  PairLabel label = PairLabel::Positive;
  std::size_t shape_a = 0, shape_b = 0;
  double cosine = 0.0;
  [[nodiscard]] bool same_asset() const { return shape_a == shape_b; }
};

struct PairOptions {
  bool include_same_asset = true;  // the shape itself counts as a positive partner
  double articulation_prob = 0.5;  // chance a jointed shape is posed off its rest state
  std::size_t tokens = 64;
  ViewOptions view;
};

/// Stateless stream: pair i is a pure function of (corpus, options, seed, i),
/// so a run can resume at any index.
class PairStream {
 public:
  PairStream(const Corpus& corpus, double neg_ratio, const PairingThresholds& thresholds,
             std::uint64_t seed, PairOptions opt = {})
      : corpus_(corpus), neg_ratio_(neg_ratio), seed_(seed), opt_(opt) {
    if (!(neg_ratio >= 0.0 && neg_ratio <= 1.0))
      throw ConfigError("pair_stream: neg_ratio must lie in [0, 1]");
    train_ = corpus.train_ids();
    if (train_.empty()) throw ConfigError("pair_stream: corpus has no training shapes");
    for (std::size_t a : train_) {
      std::vector<std::size_t> pos, neg;
      for (std::size_t b : train_) {
        if (corpus.family(a) != corpus.family(b)) neg.push_back(b);
        if (a == b && !opt.include_same_asset) continue;
        if (corpus.descriptors[a].cosine(corpus.descriptors[b]) >= thresholds.positive_thr)
          pos.push_back(b);
      }
      if (!pos.empty()) anchors_.push_back(a);
      positives_.push_back(std::move(pos));
      negatives_.push_back(std::move(neg));
    }
    if (anchors_.empty()) throw ConfigError("pair_stream: corpus has no positive candidates");
  }

  [[nodiscard]] PairLabel label_at(std::uint64_t index) const {
    Rng rng(mix_seed(seed_, 0x9A1, index));
    return uniform(rng, 0.0, 1.0) < neg_ratio_ ? PairLabel::Negative : PairLabel::Positive;
  }

  [[nodiscard]] TrainingPair at(std::uint64_t index) const {
    Rng rng(mix_seed(seed_, 0x9A1, index));
    TrainingPair pair;
    pair.label = uniform(rng, 0.0, 1.0) < neg_ratio_ ? PairLabel::Negative : PairLabel::Positive;
    const std::size_t slot = index_of(anchors_[uniform_index(rng, anchors_.size())]);
    pair.shape_a = train_[slot];
    const auto& pool = pair.label == PairLabel::Positive ? positives_[slot] : negatives_[slot];
    if (pool.empty()) throw ConfigError("pair_stream: shape has no partner of the drawn label");
    pair.shape_b = pool[uniform_index(rng, pool.size())];
    pair.cosine = corpus_.descriptors[pair.shape_a].cosine(corpus_.descriptors[pair.shape_b]);
    const std::uint64_t base = mix_seed(seed_, 0x9A2, index);
    make_object(pair.shape_a, mix_seed(base, 1), pair.obs_a, pair.gt_a);
    make_object(pair.shape_b, mix_seed(base, 2), pair.obs_b, pair.gt_b);
    return pair;
  }

  /// Fraction of positive partners that are the anchor itself, averaged over
  /// anchors (the positive mix reported in training logs).
  [[nodiscard]] double same_asset_share() const {
    double acc = 0.0;
    for (std::size_t a : anchors_) {
      const auto& pos = positives_[index_of(a)];
      acc += std::count(pos.begin(), pos.end(), a) / static_cast<double>(pos.size());
    }
    return acc / static_cast<double>(anchors_.size());
  }

  [[nodiscard]] double neg_ratio() const { return neg_ratio_; }

 private:
  [[nodiscard]] std::size_t index_of(std::size_t shape) const {
    return static_cast<std::size_t>(std::lower_bound(train_.begin(), train_.end(), shape) -
                                    train_.begin());
  }

  void make_object(std::size_t id, std::uint64_t seed, PointSet& obs, LatentTokens& gt) const {
    Rng rng(seed);
    const CanonicalShape* shape = &corpus_.shapes[id];
    CanonicalShape posed;
    if (shape->joint && uniform(rng, 0.0, 1.0) < opt_.articulation_prob) {
      const ParamRange r = shape->joint->range();
      posed = articulate(*shape, uniform(rng, r.lo, r.hi));
      shape = &posed;
    }
    obs = isolated_view(corpus_, *shape, train_, mix_seed(seed, 0x0B5), opt_.view);
    gt = shape_tokens(*shape, opt_.tokens, mix_seed(seed, 0x6E7));
  }

  const Corpus& corpus_;
  double neg_ratio_;
  std::uint64_t seed_;
  PairOptions opt_;
  std::vector<std::size_t> train_;
  std::vector<std::size_t> anchors_;
  std::vector<std::vector<std::size_t>> positives_, negatives_;
};

inline JointExample to_example(const TrainingPair& p) {
  return {{p.obs_a, p.obs_b}, {p.gt_a, p.gt_b}};
}

}  // namespace jrm
