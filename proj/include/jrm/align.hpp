#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "jrm/common.hpp"
#include "jrm/kdtree.hpp"
#include "jrm/rigid.hpp"
#include "jrm/shapes.hpp"

namespace jrm {

// ---------------------------------------------------------------------------
// Instance matching

struct Matching {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (target, source)
  std::vector<double> scores;

  [[nodiscard]] double total_score() const {
    return std::accumulate(scores.begin(), scores.end(), 0.0);
  }
  [[nodiscard]] std::optional<std::size_t> source_of(std::size_t target) const {
    for (const auto& [t, s] : pairs)
      if (t == target) return s;
    return std::nullopt;
  }
  [[nodiscard]] bool injective() const {
    for (std::size_t i = 0; i < pairs.size(); ++i)
      for (std::size_t j = i + 1; j < pairs.size(); ++j)
        if (pairs[i].first == pairs[j].first || pairs[i].second == pairs[j].second) return false;
    return true;
  }
};

enum class MatchMode { Oracle, Predicted };

/// Minimum-cost assignment of every row of an r x c cost matrix (r <= c) to a
/// distinct column. Shortest augmenting path with potentials, O(r^2 c).
inline std::vector<std::size_t> hungarian_min_cost(const Eigen::MatrixXd& cost) {
  const auto rows = static_cast<std::size_t>(cost.rows());
  const auto cols = static_cast<std::size_t>(cost.cols());
  if (rows > cols) throw DimensionError("hungarian: more rows than columns");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is a virtual start.
  std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
  std::vector<std::size_t> owner(cols + 1, 0), way(cols + 1, 0);
  for (std::size_t i = 1; i <= rows; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(cols + 1, inf);
    std::vector<bool> used(cols + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = owner[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) -
                           u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= cols; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assign(rows, 0);
  for (std::size_t j = 1; j <= cols; ++j)
    if (owner[j] != 0) assign[owner[j] - 1] = j - 1;
  return assign;
}

/// Maximum total-cosine one-to-one assignment; min(|targets|, |sources|) pairs.
inline Matching match_predicted(std::span<const Descriptor> targets,
                                std::span<const Descriptor> sources) {
  Matching m;
  if (targets.empty() || sources.empty()) return m;
  const bool transpose = targets.size() > sources.size();
  const std::size_t r = transpose ? sources.size() : targets.size();
  const std::size_t c = transpose ? targets.size() : sources.size();
  Eigen::MatrixXd cost(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const Descriptor& t = transpose ? targets[j] : targets[i];
      const Descriptor& s = transpose ? sources[i] : sources[j];
      cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = -t.cosine(s);
    }
  const auto assign = hungarian_min_cost(cost);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t t = transpose ? assign[i] : i;
    const std::size_t s = transpose ? i : assign[i];
    m.pairs.emplace_back(t, s);
  }
  std::sort(m.pairs.begin(), m.pairs.end());
  for (const auto& [t, s] : m.pairs) m.scores.push_back(targets[t].cosine(sources[s]));
  return m;
}

/// Oracle mode returns `truth` (validated, scored); Predicted ignores it.
inline Matching match_instances(std::span<const Descriptor> targets,
                                std::span<const Descriptor> sources, MatchMode mode,
                                const Matching* truth = nullptr) {
  if (mode == MatchMode::Predicted) return match_predicted(targets, sources);
  if (!truth) throw InputError("match_instances: oracle mode needs a ground-truth table");
  if (truth->pairs.size() > std::min(targets.size(), sources.size()))
    throw DimensionError("match_instances: oracle table larger than the instance sets");
  Matching m;
  for (const auto& [t, s] : truth->pairs) {
    if (t >= targets.size() || s >= sources.size())
      throw DimensionError("match_instances: oracle table index out of range");
    m.pairs.emplace_back(t, s);
    m.scores.push_back(targets[t].cosine(sources[s]));
  }
  if (!m.injective()) throw DimensionError("match_instances: oracle table is not one-to-one");
  return m;
}

/// Re-pairs exactly `n_wrong` randomly chosen targets with wrong sources. For
/// two or more the chosen sources are cyclically shifted (a derangement); a
/// single wrong pair needs an unmatched source among [0, source_count).
inline Matching corrupt_matching(const Matching& matching, std::size_t n_wrong,
                                 std::uint64_t seed, std::size_t source_count = 0) {
  if (n_wrong > matching.pairs.size())
    throw InputError("corrupt_matching: n_wrong exceeds the number of pairs");
  Matching out = matching;
  if (n_wrong == 0) return out;
  Rng rng(mix_seed(seed, 0xDE7));
  std::vector<std::size_t> idx(matching.pairs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n_wrong);
  std::sort(idx.begin(), idx.end());
  if (n_wrong == 1) {
    std::vector<std::size_t> spare;
    for (std::size_t s = 0; s < source_count; ++s) {
      const bool used = std::any_of(matching.pairs.begin(), matching.pairs.end(),
                                    [&](const auto& p) { return p.second == s; });
      if (!used) spare.push_back(s);
    }
    if (spare.empty())
      throw InputError("corrupt_matching: one wrong pair needs an unmatched source");
    out.pairs[idx[0]].second = spare[uniform_index(rng, spare.size())];
  } else {
    // Sattolo shuffle: a single cycle, so no element keeps its place.
    std::vector<std::size_t> perm(n_wrong);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n_wrong - 1; i > 0; --i) std::swap(perm[i], perm[uniform_index(rng, i)]);
    for (std::size_t k = 0; k < n_wrong; ++k)
      out.pairs[idx[k]].second = matching.pairs[idx[perm[k]]].second;
  }
  for (std::size_t k : idx) out.scores[k] = std::numeric_limits<double>::quiet_NaN();
  return out;
}

// ---------------------------------------------------------------------------
// Registration

inline constexpr int kIcpMaxIterations = 50;
inline constexpr double kIcpTolerance = 1e-6;

/// Closed-form least-squares rigid fit (no scale) with src[i] <-> dst[i].
inline RigidTransform fit_rigid(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size()) throw DimensionError("fit_rigid: correspondence count mismatch");
  if (src.size() < 3) throw DegeneracyError("fit_rigid: need at least 3 points");
  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(dst.size());
  Mat3 h = Mat3::Zero(), spread = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    h += (src[i] - cs) * (dst[i] - cd).transpose();
    spread += (src[i] - cs) * (src[i] - cs).transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Mat3> es(spread);
  const Vec3 ev = es.eigenvalues();  // ascending
  if (!(ev(2) > 0.0) || ev(1) <= 1e-12 * ev(2))
    throw DegeneracyError("fit_rigid: source points are collinear or coincident");
  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
  RigidTransform out;
  out.rotation = svd.matrixV() * d * svd.matrixU().transpose();
  out.translation = cd - out.rotation * cs;
  return out;
}

struct IcpResult {
  RigidTransform transform;
  bool converged = false;
  int iterations = 0;
  double error = 0.0;           // RMS nearest-neighbour distance at `transform`
  std::vector<double> history;  // error after each re-association
};

/// Point-to-point ICP with full nearest-neighbour re-association. The error is
/// the RMS nearest-neighbour distance, which cannot increase between
/// iterations; convergence is a change below `tol`. Without convergence the
/// best transform seen is returned with converged = false.
inline IcpResult icp(std::span<const Vec3> src, std::span<const Vec3> dst,
                     const RigidTransform& initial = RigidTransform::identity(),
                     int max_iterations = kIcpMaxIterations, double tol = kIcpTolerance) {
  if (src.size() < 3 || dst.empty()) throw DegeneracyError("icp: too few points");
  const KdTree tree(dst);
  IcpResult res;
  res.error = std::numeric_limits<double>::infinity();
  RigidTransform cur = initial;
  std::vector<Vec3> matched(src.size());
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it <= max_iterations; ++it) {
    double sq = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      const Neighbor nn = tree.nearest(cur.apply(src[i]));
      matched[i] = dst[nn.index];
      sq += nn.dist2;
    }
    const double err = std::sqrt(sq / static_cast<double>(src.size()));
    res.history.push_back(err);
    if (err < res.error) {
      res.error = err;
      res.transform = cur;
    }
    res.iterations = it;
    if (std::abs(prev - err) < tol) {
      res.converged = true;
      break;
    }
    if (it == max_iterations) break;
    prev = err;
    cur = fit_rigid(src, matched);
  }
  return res;
}

/// With correspondences: closed-form fit over the listed (src, dst) index
/// pairs (or index-aligned when `correspondences` is empty but sizes match).
/// Without: ICP from identity.
inline RigidTransform register_rigid(
    std::span<const Vec3> src, std::span<const Vec3> dst,
    const std::optional<std::vector<std::pair<std::size_t, std::size_t>>>& correspondences) {
  if (!correspondences) return icp(src, dst).transform;
  if (correspondences->empty()) return fit_rigid(src, dst);
  std::vector<Vec3> a, b;
  for (const auto& [i, j] : *correspondences) {
    if (i >= src.size() || j >= dst.size())
      throw DimensionError("register_rigid: correspondence index out of range");
    a.push_back(src[i]);
    b.push_back(dst[j]);
  }
  return fit_rigid(a, b);
}

/// Registration robust to the large yaw differences between scans: centroids
/// are aligned, ICP runs from `yaw_starts` headings about the vertical axis,
/// and the lowest-error result wins.
inline IcpResult register_multistart(std::span<const Vec3> src, std::span<const Vec3> dst,
                                     int yaw_starts = 8) {
  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (const Vec3& p : src) cs += p;
  for (const Vec3& p : dst) cd += p;
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(dst.size());
  IcpResult best;
  best.error = std::numeric_limits<double>::infinity();
  for (int k = 0; k < yaw_starts; ++k) {
    RigidTransform init;
    init.rotation = yaw_rotation(2.0 * std::numbers::pi * k / yaw_starts);
    init.translation = cd - init.rotation * cs;
    IcpResult r = icp(src, dst, init);
    if (r.error < best.error) best = std::move(r);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Fusion and error injection

/// Target points followed by each source mapped by its transform.
inline PointSet fuse_observations(const PointSet& target, const std::vector<PointSet>& sources,
                                  const std::vector<RigidTransform>& transforms) {
  if (sources.size() != transforms.size())
    throw InputError("fuse_observations: one transform per source required");
  PointSet out = target;
  for (std::size_t k = 0; k < sources.size(); ++k) out.append(transforms[k].apply(sources[k]));
  return out;
}

/// T followed (in the source frame) by a rotation of exactly `rot_err_deg`
/// about a random axis and a shift of norm exactly `trans_err`:
/// rotation_distance(T, T') = rot_err_deg and |t' - t| = trans_err.
inline RigidTransform perturb_transform(const RigidTransform& t, double rot_err_deg,
                                        double trans_err, std::uint64_t seed) {
  if (!(rot_err_deg >= 0.0) || !(trans_err >= 0.0))
    throw InputError("perturb_transform: errors must be non-negative");
  if (rot_err_deg == 0.0 && trans_err == 0.0) return t;
  Rng rng(mix_seed(seed, 0xAE7));
  const Vec3 axis = random_unit_vector(rng);
  const Vec3 dir = random_unit_vector(rng);
  RigidTransform err;
  err.rotation = Eigen::AngleAxisd(rot_err_deg * std::numbers::pi / 180.0, axis).toRotationMatrix();
  // Expressed so that T * err moves the translation by exactly trans_err.
  err.translation = t.rotation.transpose() * (trans_err * dir);
  return t * err;
}

}  // namespace jrm
