#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "jrm/common.hpp"
#include "jrm/metrics.hpp"
#include "jrm/nn/tape.hpp"

namespace jrm {

/// n x L latent of one object. Each row is a token: xyz position followed by
/// a normal (L = 6 in the default configuration).
using LatentTokens = nn::Matrix<double>;

inline void require_same_shape(const LatentTokens& a, const LatentTokens& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(op) + ": token shapes differ");
}

/// Straight path between data (t = 0) and noise (t = 1).
inline LatentTokens interpolate(const LatentTokens& z0, const LatentTokens& eps, double t) {
  require_same_shape(z0, eps, "interpolate");
  if (!(t >= 0.0 && t <= 1.0)) throw InputError("interpolate: t must lie in [0, 1]");
  return (1.0 - t) * z0 + t * eps;
}

/// Regression target z0 - eps. This is the negative of d(interpolate)/dt; the
/// sampler compensates by adding it while t decreases.
inline LatentTokens target_velocity(const LatentTokens& z0, const LatentTokens& eps) {
  require_same_shape(z0, eps, "target_velocity");
  return z0 - eps;
}

/// Sum over objects of the per-object mean squared error.
template <typename M>
double joint_loss(std::span<const M> preds, std::span<const M> targets) {
  if (preds.empty()) throw InputError("joint_loss: empty object list");
  if (preds.size() != targets.size()) throw DimensionError("joint_loss: list lengths differ");
  double loss = 0.0;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    if (preds[k].rows() != targets[k].rows() || preds[k].cols() != targets[k].cols())
      throw DimensionError("joint_loss: token shapes differ");
    loss += static_cast<double>((preds[k] - targets[k]).squaredNorm()) /
            static_cast<double>(preds[k].size());
  }
  return loss;
}

inline double joint_loss(const std::vector<LatentTokens>& preds,
                         const std::vector<LatentTokens>& targets) {
  return joint_loss<LatentTokens>(std::span<const LatentTokens>(preds),
                                  std::span<const LatentTokens>(targets));
}

inline LatentTokens gaussian_tokens(Eigen::Index n, Eigen::Index width, Rng& rng) {
  LatentTokens z(n, width);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = normal(rng);
  return z;
}

/// Euler integration of a velocity field from t = 1 (standard normal) to
/// t = 0 in `steps` uniform steps: z <- z + dt * v(z, t).
/// `velocity(const std::vector<LatentTokens>&, double t)` returns one
/// velocity per object.
template <typename VelocityField>
std::vector<LatentTokens> sample_joint(VelocityField&& velocity, std::size_t objects,
                                       Eigen::Index tokens, Eigen::Index width, int steps,
                                       std::uint64_t seed) {
  if (steps < 1) throw InputError("sample_joint: steps must be >= 1");
  if (objects < 1) throw InputError("sample_joint: need at least one object");
  Rng rng(mix_seed(seed, 0x5A3B1E));
  std::vector<LatentTokens> z;
  for (std::size_t k = 0; k < objects; ++k) z.push_back(gaussian_tokens(tokens, width, rng));
  const double dt = 1.0 / static_cast<double>(steps);
  for (int s = 0; s < steps; ++s) {
    const double t = 1.0 - static_cast<double>(s) / static_cast<double>(steps);
    const std::vector<LatentTokens> v = velocity(static_cast<const std::vector<LatentTokens>&>(z), t);
    if (v.size() != z.size()) throw DimensionError("sample_joint: velocity count mismatch");
    for (std::size_t k = 0; k < z.size(); ++k) {
      require_same_shape(z[k], v[k], "sample_joint");
      z[k] += dt * v[k];
    }
  }
  return z;
}

/// Splits token rows into positions (first three columns) and normals (next
/// three).
inline PointSet tokens_to_points(const LatentTokens& z) {
  if (z.cols() < 6) throw DimensionError("tokens_to_points: need 6 columns");
  PointSet out;
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    out.push_back(Vec3(z(i, 0), z(i, 1), z(i, 2)), Vec3(z(i, 3), z(i, 4), z(i, 5)));
  return out;
}

inline LatentTokens points_to_tokens(const PointSet& set) {
  LatentTokens z(static_cast<Eigen::Index>(set.size()), 6);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    z.block<1, 3>(r, 0) = set.points[i].transpose();
    z.block<1, 3>(r, 3) = set.normals[i].transpose();
  }
  return z;
}

inline MetricsReport evaluate_reconstruction(const LatentTokens& gen, const PointSet& gt_dense,
                                             double tau = kDefaultTau) {
  return evaluate_points(tokens_to_points(gen), gt_dense, tau);
}

/// Farthest-point subsample starting from index `start`.
inline PointSet farthest_point_sample(const PointSet& set, std::size_t count,
                                      std::size_t start = 0) {
  if (set.empty()) throw InputError("farthest_point_sample: empty input");
  count = std::min(count, set.size());
  std::vector<double> dist(set.size(), std::numeric_limits<double>::infinity());
  PointSet out;
  std::size_t cur = start % set.size();
  for (std::size_t s = 0; s < count; ++s) {
    out.push_back(set.points[cur], set.normals[cur]);
    std::size_t next = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      dist[i] = std::min(dist[i], (set.points[i] - set.points[cur]).squaredNorm());
      if (dist[i] > best) {
        best = dist[i];
        next = i;
      }
    }
    cur = next;
  }
  return out;
}

}  // namespace jrm
