#pragma once

#include <cmath>
#include <iomanip>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "jrm/common.hpp"
#include "jrm/kdtree.hpp"

namespace jrm {

/// Reconstruction quality of one object. cd is scaled by 100 (centimetres
/// for unit-scale objects); nc and f1 are percentages.
struct MetricsReport {
  double cd = 0.0;
  double nc = 0.0;
  double f1 = 0.0;
  double tau = 0.0;
  std::size_t sample_count = 0;
};

inline constexpr double kDefaultTau = 0.05;

namespace detail {

inline void require_nonempty(std::span<const Vec3> a, std::span<const Vec3> b,
                             const char* what) {
  if (a.empty() || b.empty())
    throw MetricError(std::string(what) + ": undefined for an empty point set");
}

inline void require_unit(std::span<const Vec3> normals, std::size_t expected) {
  if (normals.size() != expected)
    throw InputError("normal_consistency: normal count does not match points");
  for (const Vec3& n : normals)
    if (!(std::abs(n.norm() - 1.0) <= 1e-6))
      throw InputError("normal_consistency: normals must be unit length");
}

// Nearest neighbour in `to` for every point of `from`.
inline std::vector<Neighbor> nearest_all(std::span<const Vec3> from,
                                         std::span<const Vec3> to) {
  const KdTree tree(to);
  std::vector<Neighbor> out(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) out[i] = tree.nearest(from[i]);
  return out;
}

}  // namespace detail

/// 100 * (mean_a min_b |a-b| + mean_b min_a |a-b|) / 2
inline double chamfer(std::span<const Vec3> a, std::span<const Vec3> b) {
  detail::require_nonempty(a, b, "chamfer");
  double ab = 0.0, ba = 0.0;
  for (const Neighbor& nn : detail::nearest_all(a, b)) ab += std::sqrt(nn.dist2);
  for (const Neighbor& nn : detail::nearest_all(b, a)) ba += std::sqrt(nn.dist2);
  return 100.0 * 0.5 *
         (ab / static_cast<double>(a.size()) + ba / static_cast<double>(b.size()));
}

/// Orientation-agnostic normal agreement in [0, 100].
inline double normal_consistency(std::span<const Vec3> a,
                                 std::span<const Vec3> na,
                                 std::span<const Vec3> b,
                                 std::span<const Vec3> nb) {
  detail::require_nonempty(a, b, "normal_consistency");
  detail::require_unit(na, a.size());
  detail::require_unit(nb, b.size());
  double ab = 0.0, ba = 0.0;
  const auto nn_ab = detail::nearest_all(a, b);
  for (std::size_t i = 0; i < a.size(); ++i)
    ab += std::abs(na[i].dot(nb[nn_ab[i].index]));
  const auto nn_ba = detail::nearest_all(b, a);
  for (std::size_t i = 0; i < b.size(); ++i)
    ba += std::abs(nb[i].dot(na[nn_ba[i].index]));
  return 100.0 * 0.5 *
         (ab / static_cast<double>(a.size()) + ba / static_cast<double>(b.size()));
}

/// Harmonic mean of precision (a near b) and recall (b near a) at distance tau.
inline double fscore(std::span<const Vec3> a, std::span<const Vec3> b,
                     double tau) {
  if (!(tau > 0.0)) throw InputError("fscore: tau must be positive");
  detail::require_nonempty(a, b, "fscore");
  const double tau2 = tau * tau;
  std::size_t hits_a = 0, hits_b = 0;
  for (const Neighbor& nn : detail::nearest_all(a, b)) hits_a += nn.dist2 <= tau2;
  for (const Neighbor& nn : detail::nearest_all(b, a)) hits_b += nn.dist2 <= tau2;
  const double precision = static_cast<double>(hits_a) / static_cast<double>(a.size());
  const double recall = static_cast<double>(hits_b) / static_cast<double>(b.size());
  if (precision + recall == 0.0) return 0.0;
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

/// Metrics of a generated point set (already split from tokens) against
/// dense ground truth. Generated normals are re-normalised; zero-length
/// normals fall back to +y so NC stays defined.
inline MetricsReport evaluate_points(const PointSet& gen, const PointSet& gt,
                                     double tau = kDefaultTau) {
  PointSet g = gen;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!g.points[i].allFinite())
      throw InputError("evaluate_reconstruction: non-finite generated position");
    const double len = g.normals[i].norm();
    g.normals[i] = (std::isfinite(len) && len > 1e-12) ? Vec3(g.normals[i] / len)
                                                       : Vec3::UnitY();
  }
  MetricsReport r;
  r.tau = tau;
  r.sample_count = g.size();
  r.cd = chamfer(g.points, gt.points);
  r.nc = normal_consistency(g.points, g.normals, gt.points, gt.normals);
  r.f1 = fscore(g.points, gt.points, tau);
  return r;
}

inline constexpr const char* kMetricsCsvHeader = "cd,nc,f1,tau,sample_count";

inline std::string to_csv_fields(const MetricsReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << r.cd << ',' << r.nc << ',' << r.f1
     << ',' << r.tau << ',' << r.sample_count;
  return os.str();
}

}  // namespace jrm
