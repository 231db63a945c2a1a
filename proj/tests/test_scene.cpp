#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "jrm/align.hpp"
#include "jrm/benchmark.hpp"
#include "jrm/corpus.hpp"
#include "jrm/pairing.hpp"
#include "jrm/scene.hpp"

using namespace jrm;

namespace {

std::vector<CanonicalShape> random_shapes(std::uint64_t seed, std::size_t n) {
  std::vector<CanonicalShape> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(generate_shape(random_spec(kAllFamilies[(seed + i) % kFamilyCount], seed * 31 + i), 256));
  return out;
}

// Independent footprint: AABB of the 8 rotated bbox-corner-free face corners.
bool overlap_oracle(const Scene& s, const std::vector<CanonicalShape>& shapes) {
  struct R { double x0, z0, x1, z1; };
  std::vector<R> rects;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    R r{1e300, 1e300, -1e300, -1e300};
    for (const Face& f : shapes[i].faces)
      for (const Vec3& c : f.corners()) {
        const Vec3 w = s.instances[i].pose().apply(c);
        r.x0 = std::min(r.x0, w.x());
        r.x1 = std::max(r.x1, w.x());
        r.z0 = std::min(r.z0, w.z());
        r.z1 = std::max(r.z1, w.z());
      }
    rects.push_back(r);
  }
  for (std::size_t i = 0; i < rects.size(); ++i)
    for (std::size_t j = i + 1; j < rects.size(); ++j) {
      const double ox = std::min(rects[i].x1, rects[j].x1) - std::max(rects[i].x0, rects[j].x0);
      const double oz = std::min(rects[i].z1, rects[j].z1) - std::max(rects[i].z0, rects[j].z0);
      if (ox > 1e-9 && oz > 1e-9) return true;
    }
  return false;
}

CameraTrajectory single_camera(const Vec3& pos) {
  CameraTrajectory t;
  t.viewpoints.push_back({pos, Vec3::Zero()});
  return t;
}

}  // namespace

TEST(PlaceObjects, SingleShapeAtOrigin) {
  const auto shapes = random_shapes(1, 1);
  const Scene s = place_objects(shapes, 3);
  EXPECT_EQ(s.instances[0].position.x(), 0.0);
  EXPECT_EQ(s.instances[0].position.z(), 0.0);
  EXPECT_GE(s.instances[0].position.y(), kVerticalOffsetLo);
  EXPECT_LE(s.instances[0].position.y(), kVerticalOffsetHi);
}

TEST(PlaceObjects, TwoUnitBoxesDisjoint) {
  const ShapeSpec box{ShapeFamily::Box, {1, 1, 1, 0.5, 0.5, 0.5}, 1};
  const std::vector<CanonicalShape> shapes{generate_shape(box), generate_shape(box)};
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    EXPECT_FALSE(overlap_oracle(place_objects(shapes, seed), shapes));
}

TEST(PlaceObjects, HundredSeedsEightShapes) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto shapes = random_shapes(seed, 8);
    const Scene s = place_objects(shapes, seed);
    ASSERT_FALSE(overlap_oracle(s, shapes)) << seed;
    for (int n : s.placement_iterations) ASSERT_LT(n, 200);
    for (const auto& inst : s.instances) {
      ASSERT_GE(inst.position.y(), kVerticalOffsetLo);
      ASSERT_LE(inst.position.y(), kVerticalOffsetHi);
    }
  }
}

TEST(PlaceObjects, RejectsBadCounts) {
  EXPECT_THROW((void)place_objects(std::vector<CanonicalShape>{}, 1), InputError);
  EXPECT_THROW((void)place_objects(random_shapes(2, 17), 1), InputError);
}

TEST(MakeRescans, SameShapesDifferentPoses) {
  const auto shapes = random_shapes(4, 5);
  const Scene base = place_objects(shapes, 4);
  const auto rescans = make_rescans(base, shapes, 3, 99);
  ASSERT_EQ(rescans.size(), 3u);
  for (const Scene& r : rescans) {
    std::multiset<std::size_t> a, b;
    for (std::size_t k = 0; k < 5; ++k) {
      a.insert(base.instances[k].shape_id);
      b.insert(r.instances[k].shape_id);
    }
    EXPECT_EQ(a, b);
    EXPECT_NE(r.instances[1].position, base.instances[1].position);
  }
  EXPECT_THROW((void)make_rescans(base, shapes, 0, 1), InputError);
}

TEST(MakeRescans, InstanceMotionIsRecoverableRigidTransform) {
  const auto shapes = random_shapes(6, 4);
  const Scene base = place_objects(shapes, 6);
  const Scene r = make_rescans(base, shapes, 1, 7)[0];
  for (std::size_t k = 0; k < 4; ++k) {
    const auto before = base.instances[k].pose().apply(shapes[k].points);
    const auto after = r.instances[k].pose().apply(shapes[k].points);
    const RigidTransform fit = register_rigid(before, after, std::vector<std::pair<std::size_t, std::size_t>>{});
    const RigidTransform truth = r.instances[k].pose() * base.instances[k].pose().inverse();
    EXPECT_LT(rotation_distance(fit.rotation, truth.rotation), 1e-9);
    EXPECT_LT((fit.translation - truth.translation).norm(), 1e-9);
  }
}

TEST(CameraTrajectory, RadiiLengthAndSeed) {
  const auto shapes = random_shapes(8, 6);
  const Scene s = place_objects(shapes, 8);
  const CameraTrajectory a = camera_trajectory(s, shapes, 5), b = camera_trajectory(s, shapes, 5);
  ASSERT_EQ(a.viewpoints.size(), 100u);
  const double extent = scene_bounds(s, shapes).extent().maxCoeff();
  for (double r : a.control_radii) {
    EXPECT_GE(r, extent + 0.5);
    EXPECT_LE(r, extent + 1.0);
  }
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(a.viewpoints[i].position, b.viewpoints[i].position);
  // Cameras sit outside every footprint.
  for (const auto& vp : a.viewpoints)
    for (std::size_t k = 0; k < shapes.size(); ++k) {
      const Footprint f = instance_footprint(shapes[k], s.instances[k]);
      const bool inside = vp.position.x() > f.x0 && vp.position.x() < f.x1 && vp.position.z() > f.z0 &&
                          vp.position.z() < f.z1;
      EXPECT_FALSE(inside);
    }
}

TEST(CameraTrajectory, ExtentTwoGivesRadiiInRange) {
  // Two unit-diagonal boxes pushed apart so the scene's largest extent is 2.
  const ShapeSpec spec{ShapeFamily::Box, {1, 1, 1, 0.5, 0.5, 0.5}, 1};
  const std::vector<CanonicalShape> shapes{generate_shape(spec), generate_shape(spec)};
  const double half = shapes[0].bbox_max.x();
  Scene s;
  s.instances = {{0, 0.0, Vec3(0, 0, 0), {}}, {1, 0.0, Vec3(2.0 - 2 * half, 0, 0), {}}};
  ASSERT_NEAR(scene_bounds(s, shapes).extent().maxCoeff(), 2.0, 1e-12);
  for (double r : camera_trajectory(s, shapes, 3).control_radii) {
    EXPECT_GE(r, 2.5);
    EXPECT_LE(r, 3.0);
  }
}

TEST(Observe, SingleCameraSeesFrontFacingHemisphere) {
  const auto shapes = random_shapes(10, 1);
  Scene s;
  s.instances = {{0, 0.3, Vec3::Zero(), {}}};
  const Vec3 cam(3, 1, 2);
  const auto obs = observe(s, shapes, single_camera(cam), 0.0, 0.0, 1);
  std::vector<std::size_t> expect;
  for (std::size_t i = 0; i < shapes[0].points.size(); ++i) {
    const Vec3 p = s.instances[0].pose().apply(shapes[0].points[i]);
    if (s.instances[0].pose().rotate(shapes[0].normals[i]).dot(cam - p) > 0) expect.push_back(i);
  }
  EXPECT_EQ(obs[0].sample_index, expect);
}

TEST(Observe, PointBehindOccluderExcluded) {
  const ShapeSpec box{ShapeFamily::Box, {1, 1, 1, 0.5, 0.5, 0.5}, 1};
  const std::vector<CanonicalShape> shapes{generate_shape(box), generate_shape(box)};
  Scene s;
  s.instances = {{0, 0.0, Vec3::Zero(), {}}, {1, 0.0, Vec3(2, 0, 0), {}}};
  // Camera on the far side of box 1 along +x: box 0's +x face is hidden.
  const auto obs = observe(s, shapes, single_camera(Vec3(5, 0, 0)), 0.0, 0.0, 1);
  EXPECT_TRUE(obs[0].cloud.empty());
  EXPECT_TRUE(obs[0].empty_warning);
  EXPECT_FALSE(obs[1].cloud.empty());
}

TEST(Observe, NoiselessPointsAreSurfaceSamplesAndMonotone) {
  const auto shapes = random_shapes(12, 3);
  const Scene s = place_objects(shapes, 12);
  const CameraTrajectory full = camera_trajectory(s, shapes, 2);
  CameraTrajectory half = full;
  half.viewpoints.resize(50);
  const auto a = observe(s, shapes, full, 0.0, 0.0, 3), b = observe(s, shapes, half, 0.0, 0.0, 3);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t j = 0; j < a[k].cloud.size(); ++j) {
      const Vec3 expect = s.instances[k].pose().apply(shapes[k].points[a[k].sample_index[j]]);
      EXPECT_EQ(a[k].cloud.points[j], expect);
    }
    const std::set<std::size_t> seen_full(a[k].sample_index.begin(), a[k].sample_index.end());
    for (std::size_t i : b[k].sample_index) EXPECT_TRUE(seen_full.count(i));
  }
}

TEST(Observe, ValidatesArguments) {
  const auto shapes = random_shapes(1, 1);
  const Scene s = place_objects(shapes, 1);
  const CameraTrajectory t = camera_trajectory(s, shapes, 1);
  EXPECT_THROW((void)observe(s, shapes, t, -1.0, 0.0, 1), InputError);
  EXPECT_THROW((void)observe(s, shapes, t, 0.0, 1.0, 1), InputError);
}

class BenchmarkTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    corpus_ = new Corpus(build_corpus(17));
    th_ = new PairingThresholds(calibrate_thresholds(*corpus_, 3));
  }
  static void TearDownTestSuite() {
    delete corpus_;
    delete th_;
  }
  static Corpus* corpus_;
  static PairingThresholds* th_;
};
Corpus* BenchmarkTest::corpus_ = nullptr;
PairingThresholds* BenchmarkTest::th_ = nullptr;

TEST_F(BenchmarkTest, SpatialStructure) {
  for (std::size_t i = 0; i < 5; ++i) {
    const BenchScene s = build_spatial_scene(*corpus_, *th_, i, 100 + i);
    ASSERT_EQ(s.instance_count(), 6u);
    const auto& t = s.objects[s.object_of[0][s.instance_with_role("target")]];
    const auto& id = s.objects[s.object_of[0][s.instance_with_role("identical")]];
    const auto& sim = s.objects[s.object_of[0][s.instance_with_role("similar")]];
    const auto& neg = s.objects[s.object_of[0][s.instance_with_role("negative")]];
    EXPECT_TRUE(corpus_->held_out[t.shape_id]);
    EXPECT_EQ(id.shape_id, t.shape_id);
    EXPECT_EQ(corpus_->family(sim.shape_id), corpus_->family(t.shape_id));
    EXPECT_GT(corpus_->descriptors[sim.shape_id].cosine(corpus_->descriptors[t.shape_id]), th_->similar_thr);
    EXPECT_NE(corpus_->family(neg.shape_id), corpus_->family(t.shape_id));
  }
}

TEST_F(BenchmarkTest, TemporalStructure) {
  for (std::size_t i = 0; i < 5; ++i) {
    const BenchScene s = build_temporal_scene(*corpus_, i, 200 + i);
    ASSERT_EQ(s.arrangements.size(), 4u);
    EXPECT_GE(s.instance_count(), 4u);
    EXPECT_LE(s.instance_count(), 8u);
    for (std::size_t r = 1; r < 4; ++r) {
      const Matching m = s.matching_table(r);
      EXPECT_EQ(m.pairs.size(), s.instance_count());
      EXPECT_TRUE(m.injective());
      for (const auto& [t, src] : m.pairs)
        EXPECT_EQ(s.object_of[0][t], s.object_of[r][src]);
    }
  }
}

TEST_F(BenchmarkTest, ArticulatedStructure) {
  for (std::size_t i = 0; i < 5; ++i) {
    const BenchScene s = build_articulated_scene(*corpus_, i, 300 + i);
    ASSERT_EQ(s.instance_count(), 5u);
    const auto& c0 = s.objects[s.object_of[0][s.instance_with_role("copy0")]];
    const auto& c1 = s.objects[s.object_of[0][s.instance_with_role("copy1")]];
    const auto& c2 = s.objects[s.object_of[0][s.instance_with_role("copy2")]];
    EXPECT_EQ(c0.theta, 0.0);
    EXPECT_EQ(c0.shape_id, c1.shape_id);
    EXPECT_EQ(c1.shape_id, c2.shape_id);
    EXPECT_NE(c1.theta, c2.theta);
  }
}

TEST_F(BenchmarkTest, WriteReadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "jrm_test_bench";
  std::filesystem::remove_all(dir);
  const BenchScene s = build_temporal_scene(*corpus_, 3, 77);
  const auto files = write_scene(dir, s, *corpus_);
  EXPECT_EQ(files.size(), 1 + 2 * 4 * s.instance_count());
  const BenchScene r = read_benchmark(dir)[0];
  EXPECT_EQ(r.id, s.id);
  EXPECT_EQ(r.object_of, s.object_of);
  ASSERT_EQ(r.observations[2][1].size(), s.observations[2][1].size());
  EXPECT_NEAR(r.instance(1, 2).yaw, s.instance(1, 2).yaw, 1e-12);
  EXPECT_EQ(r.matching_table(3).pairs, s.matching_table(3).pairs);
  std::filesystem::remove_all(dir);
}
