#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "jrm/align.hpp"
#include "jrm/shapes.hpp"

using namespace jrm;

namespace {

RigidTransform random_transform(Rng& rng, double max_deg = 180.0, double max_t = 2.0) {
  RigidTransform t;
  t.rotation = Eigen::AngleAxisd(uniform(rng, 0.0, max_deg) * std::numbers::pi / 180.0,
                                 random_unit_vector(rng))
                   .toRotationMatrix();
  t.translation = random_unit_vector(rng) * uniform(rng, 0.0, max_t);
  return t;
}

double brute_min_cost(const Eigen::MatrixXd& cost) {
  std::vector<std::size_t> cols(static_cast<std::size_t>(cost.cols()));
  std::iota(cols.begin(), cols.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0;
    for (Eigen::Index r = 0; r < cost.rows(); ++r) c += cost(r, static_cast<Eigen::Index>(cols[r]));
    best = std::min(best, c);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

std::vector<Vec3> shape_points(std::uint64_t seed, std::size_t n = 400) {
  return sample_surface(generate_shape(random_spec(ShapeFamily::Chair, seed), 512), n, seed).points;
}

}  // namespace

TEST(Hungarian, MatchesBruteForce) {
  Rng rng(1);
  for (int trial = 0; trial < 60; ++trial) {
    const auto r = static_cast<Eigen::Index>(1 + trial % 7);
    const auto c = r + static_cast<Eigen::Index>(trial % 2);
    if (c > 7) continue;
    Eigen::MatrixXd cost(r, c);
    for (Eigen::Index i = 0; i < cost.size(); ++i) cost.data()[i] = uniform(rng, -1.0, 1.0);
    const auto assign = hungarian_min_cost(cost);
    ASSERT_EQ(assign.size(), static_cast<std::size_t>(r));
    double total = 0;
    for (Eigen::Index i = 0; i < r; ++i) total += cost(i, static_cast<Eigen::Index>(assign[i]));
    std::vector<std::size_t> sorted = assign;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
    EXPECT_NEAR(total, brute_min_cost(cost), 1e-12);
  }
}

TEST(MatchInstances, PredictedRecoversShuffledShapes) {
  std::vector<Descriptor> targets, sources;
  for (std::uint64_t i = 0; i < 6; ++i)
    targets.push_back(descriptor(generate_shape(random_spec(kAllFamilies[i], 40 + i), 512)));
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  for (std::size_t p : perm) sources.push_back(targets[p]);
  const Matching m = match_instances(targets, sources, MatchMode::Predicted);
  ASSERT_EQ(m.pairs.size(), 6u);
  EXPECT_TRUE(m.injective());
  for (const auto& [t, s] : m.pairs) EXPECT_EQ(perm[s], t);
  EXPECT_NEAR(m.total_score(), 6.0, 1e-9);
  // Unequal sizes give min(|T|, |S|) pairs.
  EXPECT_EQ(match_instances(std::span(targets).first(4), sources, MatchMode::Predicted).pairs.size(), 4u);
  EXPECT_TRUE(match_instances({}, sources, MatchMode::Predicted).pairs.empty());
}

TEST(MatchInstances, OracleValidatesTruth) {
  std::vector<Descriptor> d;
  for (std::uint64_t i = 0; i < 3; ++i)
    d.push_back(descriptor(generate_shape(random_spec(ShapeFamily::Box, i), 256)));
  Matching truth;
  truth.pairs = {{0, 2}, {1, 0}};
  const Matching m = match_instances(d, d, MatchMode::Oracle, &truth);
  EXPECT_EQ(m.pairs, truth.pairs);
  EXPECT_EQ(m.scores.size(), 2u);
  EXPECT_THROW((void)match_instances(d, d, MatchMode::Oracle), InputError);
  truth.pairs = {{0, 2}, {1, 2}};
  EXPECT_THROW((void)match_instances(d, d, MatchMode::Oracle, &truth), DimensionError);
  truth.pairs = {{0, 5}};
  EXPECT_THROW((void)match_instances(d, d, MatchMode::Oracle, &truth), DimensionError);
}

TEST(CorruptMatching, ExactlyNWrong) {
  Matching m;
  for (std::size_t i = 0; i < 5; ++i) {
    m.pairs.emplace_back(i, 4 - i);
    m.scores.push_back(1.0);
  }
  for (std::size_t n = 0; n <= 5; ++n) {
    if (n == 1) continue;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Matching c = corrupt_matching(m, n, seed);
      EXPECT_TRUE(c.injective());
      std::size_t wrong = 0;
      for (std::size_t i = 0; i < 5; ++i) wrong += c.pairs[i].second != m.pairs[i].second;
      EXPECT_EQ(wrong, n);
    }
  }
  EXPECT_THROW((void)corrupt_matching(m, 1, 0), InputError);
  const Matching one = corrupt_matching(m, 1, 0, 6);
  EXPECT_EQ(one.pairs.size(), 5u);
  EXPECT_TRUE(one.injective());
  EXPECT_THROW((void)corrupt_matching(m, 6, 0), InputError);
  EXPECT_EQ(corrupt_matching(m, 3, 9).pairs, corrupt_matching(m, 3, 9).pairs);
}

TEST(FitRigid, RecoversRandomTransforms) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const RigidTransform truth = random_transform(rng);
    std::vector<Vec3> src;
    for (int i = 0; i < 20; ++i) src.push_back(Vec3(normal(rng), normal(rng), normal(rng)));
    const RigidTransform est = fit_rigid(src, truth.apply(src));
    EXPECT_LT(rotation_distance(est.rotation, truth.rotation), 1e-9);
    EXPECT_LT((est.translation - truth.translation).norm(), 1e-9);
    EXPECT_NEAR(est.rotation.determinant(), 1.0, 1e-12);
  }
}

TEST(FitRigid, RejectsDegenerateInput) {
  const std::vector<Vec3> line{Vec3::Zero(), Vec3::UnitX(), 2 * Vec3::UnitX(), 3 * Vec3::UnitX()};
  EXPECT_THROW((void)fit_rigid(line, line), DegeneracyError);
  const std::vector<Vec3> two{Vec3::Zero(), Vec3::UnitX()};
  EXPECT_THROW((void)fit_rigid(two, two), DegeneracyError);
  EXPECT_THROW((void)fit_rigid(line, two), DimensionError);
}

TEST(RegisterRigid, CorrespondenceModes) {
  Rng rng(4);
  const RigidTransform truth = random_transform(rng);
  const std::vector<Vec3> src = shape_points(1, 50);
  std::vector<Vec3> dst = truth.apply(src);
  std::reverse(dst.begin(), dst.end());
  std::vector<std::pair<std::size_t, std::size_t>> corr;
  for (std::size_t i = 0; i < src.size(); ++i) corr.emplace_back(i, src.size() - 1 - i);
  const RigidTransform est = register_rigid(src, dst, corr);
  EXPECT_LT(rotation_distance(est.rotation, truth.rotation), 1e-9);
  corr.emplace_back(0, 999);
  EXPECT_THROW((void)register_rigid(src, dst, corr), DimensionError);
}

TEST(Icp, ErrorNeverIncreasesAndSmallPerturbationsConverge) {
  Rng rng(5);
  std::size_t ok = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<Vec3> src = shape_points(100 + trial);
    const RigidTransform truth = random_transform(rng, 10.0, 0.05);
    const IcpResult r = icp(src, truth.apply(src));
    for (std::size_t i = 1; i < r.history.size(); ++i) EXPECT_LE(r.history[i], r.history[i - 1] + 1e-12);
    ok += r.converged && rotation_distance(r.transform.rotation, truth.rotation) < 1e-3;
  }
  EXPECT_GE(ok, 19u);
  EXPECT_THROW((void)icp(std::vector<Vec3>{Vec3::Zero()}, shape_points(1)), DegeneracyError);
}

TEST(Icp, MultistartHandlesLargeYaw) {
  const std::vector<Vec3> src = shape_points(7);
  RigidTransform truth;
  truth.rotation = yaw_rotation(2.4);
  truth.translation = Vec3(0.7, 0.0, -1.2);
  const IcpResult r = register_multistart(src, truth.apply(src));
  EXPECT_LT(r.error, 1e-6);
  EXPECT_LT(rotation_distance(r.transform.rotation, truth.rotation), 1e-4);
}

TEST(FuseObservations, ConcatenatesMappedSources) {
  PointSet target, source;
  target.push_back(Vec3::Zero(), Vec3::UnitY());
  source.push_back(Vec3::UnitX(), Vec3::UnitX());
  RigidTransform t;
  t.rotation = yaw_rotation(std::numbers::pi / 2);
  t.translation = Vec3(0, 1, 0);
  const PointSet f = fuse_observations(target, {source, source}, {t, RigidTransform::identity()});
  ASSERT_EQ(f.size(), 3u);
  EXPECT_LT((f.points[1] - t.apply(Vec3::UnitX())).norm(), 1e-12);
  EXPECT_LT((f.normals[1] - t.rotate(Vec3::UnitX())).norm(), 1e-12);
  EXPECT_EQ(f.points[2], Vec3::UnitX());
  EXPECT_THROW((void)fuse_observations(target, {source}, {}), InputError);
}

TEST(PerturbTransform, ExactMagnitudes) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const RigidTransform t = random_transform(rng);
    const double deg = uniform(rng, 0.0, 45.0), tr = uniform(rng, 0.0, 0.3);
    const RigidTransform p = perturb_transform(t, deg, tr, trial);
    EXPECT_NEAR(rotation_distance(t.rotation, p.rotation) * 180.0 / std::numbers::pi, deg, 1e-9);
    EXPECT_NEAR((p.translation - t.translation).norm(), tr, 1e-9);
  }
  const RigidTransform t = random_transform(rng);
  const RigidTransform same = perturb_transform(t, 0.0, 0.0, 3);
  EXPECT_EQ(same.rotation, t.rotation);
  EXPECT_EQ(same.translation, t.translation);
  EXPECT_THROW((void)perturb_transform(t, -1.0, 0.0, 0), InputError);
}
