// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#include "covren/procedural.hpp"
#include "covren/synthesis.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace covren {
namespace {

using testing::random_pose;
using testing::random_vec;
using testing::uniform;

const AxisAlignedBox kCube{Vec3::Constant(-0.05), Vec3::Constant(0.05)};

VolumeLibrary small_library(int count = 4) {
  VolumeLibrary lib;
  for (ProceduralObject& o : make_procedural_library(count, 11, 16)) {
    lib.add(o.name, std::move(o.volume), "procedural");
  }
  return lib;
}

RigidPose at(const Vec3& t) { return {Mat3::Identity(), t}; }

TEST(Separate, DisjointBoxesHaveNegativePenetration) {
  const OrientedBox a = OrientedBox::from(kCube, at(Vec3::Zero()));
  const OrientedBox b = OrientedBox::from(kCube, at(Vec3(0.3, 0, 0)));
  EXPECT_NEAR(separate(a, b).penetration, -0.2, 1e-12);
}

TEST(Separate, OverlapAlongZPointsUp) {
  const OrientedBox a = OrientedBox::from(kCube, at(Vec3::Zero()));
  const OrientedBox b = OrientedBox::from(kCube, at(Vec3(0.0, 0.0, 0.08)));
  const Separation s = separate(a, b);
  EXPECT_NEAR(s.penetration, 0.02, 1e-12);
  EXPECT_NEAR((s.axis - Vec3::UnitZ()).norm(), 0.0, 1e-12);
}

TEST(Separate, MovingAlongAxisResolvesOverlap) {
  std::mt19937_64 rng(40);
  for (int rep = 0; rep < 500; ++rep) {
    const OrientedBox a = OrientedBox::from(kCube, random_pose(rng, 0.05));
    OrientedBox b = OrientedBox::from(kCube, random_pose(rng, 0.05));
    const Separation s = separate(a, b);
    if (s.penetration <= 0.0) continue;
    b.center += s.axis * (s.penetration + 1e-9);
    ASSERT_LE(separate(a, b).penetration, 1e-7);
  }
}

TEST(OrientedBox, RadiusMatchesWorldAabb) {
  std::mt19937_64 rng(41);
  for (int rep = 0; rep < 200; ++rep) {
    const OrientedBox b = OrientedBox::from(kCube, random_pose(rng, 1.0));
    const AxisAlignedBox w = b.world_aabb();
    ASSERT_NEAR(w.max_corner.z() - w.min_corner.z(), 2.0 * b.radius_along(Vec3::UnitZ()), 1e-12);
    ASSERT_NEAR(b.lowest_z(), w.min_corner.z(), 1e-12);
  }
}

TEST(Settle, SingleBoxRestsOnTheFloor) {
  const std::vector<SettleBody> bodies{{kCube, at(Vec3(0.0, 0.0, 0.4))}};
  const SettleResult r = settle(bodies, 0.0, 1000);
  ASSERT_EQ(r.poses.size(), 1u);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.poses[0].translation.z(), 0.05, 1e-3);
  EXPECT_NEAR(r.poses[0].translation.x(), 0.0, 1e-9);
}

TEST(Settle, StackedBoxesDoNotInterpenetrate) {
  const std::vector<SettleBody> bodies{{kCube, at(Vec3(0.0, 0.0, 0.3))},
                                       {kCube, at(Vec3(0.0, 0.0, 0.6))}};
  const SettleResult r = settle(bodies, 0.0, 1000);
  std::vector<SettleBody> out = bodies;
  for (std::size_t i = 0; i < out.size(); ++i) out[i].pose = r.poses[i];
  const PlausibilityReport p = check_plausibility(out, 0.0);
  EXPECT_LE(p.pair_penetration, 1e-2);
  EXPECT_LE(p.floor_penetration, 1e-3);
  EXPECT_EQ(p.floating, 0);
  EXPECT_GT(r.poses[1].translation.z(), r.poses[0].translation.z() + 0.09);
}

TEST(Settle, NoBodiesGiveEmptyResult) {
  const SettleResult r = settle(std::vector<SettleBody>{}, 0.0, 100);
  EXPECT_TRUE(r.poses.empty());
}

TEST(Settle, TiltedBodyEndsUpright) {
  const Mat3 tilt = Eigen::AngleAxisd(0.7, Vec3(1, 1, 0).normalized()).toRotationMatrix();
  const std::vector<SettleBody> bodies{{kCube, {tilt, Vec3(0, 0, 0.3)}}};
  const SettleResult r = settle(bodies, 0.0, 1000);
  EXPECT_NEAR(std::abs(r.poses[0].rotation(2, 2)), 1.0, 1e-6);
  EXPECT_NEAR(OrientedBox::from(kCube, r.poses[0]).lowest_z(), 0.0, 1e-3);
}

TEST(Settle, WallsKeepBodiesInside) {
  const AxisAlignedBox walls{Vec3(-0.1, -0.1, 0.0), Vec3(0.1, 0.1, 1.0)};
  const std::vector<SettleBody> bodies{{kCube, at(Vec3(0.3, -0.4, 0.3))}};
  const SettleResult r = settle(bodies, 0.0, 1000, SettleConfig{}, walls);
  const AxisAlignedBox w = OrientedBox::from(kCube, r.poses[0]).world_aabb();
  EXPECT_GE(w.min_corner.x(), -0.1 - 1e-9);
  EXPECT_LE(w.max_corner.x(), 0.1 + 1e-9);
  EXPECT_GE(w.min_corner.y(), -0.1 - 1e-9);
}

TEST(InitialPose, DrawsStayInsideTheBin) {
  const AxisAlignedBox bin{Vec3(-0.25, -0.25, 0.0), Vec3(0.25, 0.25, 0.6)};
  const AxisAlignedBox obj{Vec3(-0.08, -0.03, -0.02), Vec3(0.06, 0.04, 0.05)};
  std::mt19937_64 rng(42);
  for (int i = 0; i < 1000; ++i) {
    const double stack = uniform(rng, 0.0, 0.3);
    const RigidPose p = sample_initial_pose(bin, obj, stack, rng);
    const AxisAlignedBox w = OrientedBox::from(obj, p).world_aabb();
    ASSERT_GE(w.min_corner.x(), bin.min_corner.x() - 1e-9);
    ASSERT_LE(w.max_corner.x(), bin.max_corner.x() + 1e-9);
    ASSERT_GE(w.min_corner.y(), bin.min_corner.y() - 1e-9);
    ASSERT_LE(w.max_corner.y(), bin.max_corner.y() + 1e-9);
    ASSERT_GE(w.min_corner.z(), stack - 1e-9);
  }
}

TEST(InitialPose, BinSizedObjectIsCentered) {
  const AxisAlignedBox bin{Vec3(-0.2, -0.1, 0.0), Vec3(0.2, 0.1, 0.5)};
  const AxisAlignedBox obj{Vec3(-0.2, -0.1, -0.05), Vec3(0.2, 0.1, 0.05)};
  std::mt19937_64 rng(43);
  for (int i = 0; i < 20; ++i) {
    const RigidPose p = sample_initial_pose(bin, obj, 0.0, rng);
    EXPECT_NEAR(p.translation.x(), 0.0, 1e-9);
    EXPECT_NEAR(p.translation.y(), 0.0, 1e-9);
  }
}

TEST(InitialPose, OversizedObjectIsPlacementError) {
  const AxisAlignedBox bin{Vec3(-0.1, -0.1, 0.0), Vec3(0.1, 0.1, 0.5)};
  const AxisAlignedBox obj{Vec3(-0.2, -0.05, -0.05), Vec3(0.2, 0.05, 0.05)};
  std::mt19937_64 rng(44);
  try {
    sample_initial_pose(bin, obj, 0.0, rng, false, "plank");
    FAIL() << "expected PlacementError";
  } catch (const PlacementError& e) {
    EXPECT_NE(std::string(e.what()).find("plank"), std::string::npos);
  }
}

TEST(GenerationConfig, ValidateRejectsBadRanges) {
  GenerationConfig c;
  EXPECT_NO_THROW(c.validate());
  c.objects_min = 5;
  c.objects_max = 2;
  EXPECT_THROW(c.validate(), DomainError);
  c = GenerationConfig{};
  c.num_scenes = -1;
  EXPECT_THROW(c.validate(), DomainError);
}

TEST(Generate, ZeroObjectsGiveEmptyScenes) {
  GenerationConfig c;
  c.num_scenes = 2;
  c.objects_min = c.objects_max = 0;
  const std::vector<ComposedScene> scenes = generate(small_library(), c);
  ASSERT_EQ(scenes.size(), 2u);
  for (const ComposedScene& s : scenes) {
    EXPECT_TRUE(s.objects.empty());
    EXPECT_EQ(s.cameras.size(), 2u);
  }
}

TEST(Generate, CamerasLookAtTheBin) {
  GenerationConfig c;
  c.cameras.count_min = 3;
  c.cameras.count_max = 5;
  const ComposedScene s = generate_scene(small_library(), c, 0);
  ASSERT_GE(s.cameras.size(), 3u);
  ASSERT_LE(s.cameras.size(), 5u);
  for (const Camera& cam : s.cameras) {
    const Vec3 eye = cam.pose.translation;
    const Vec3 forward = cam.pose.rotation.col(2);
    const Vec3 to_floor = (Vec3(0, 0, 0.05) - eye).normalized();
    EXPECT_GT(forward.dot(to_floor), 0.99);
    EXPECT_GE(eye.norm(), 0.8 - 0.05);
    EXPECT_LE(eye.norm(), 1.0 + 0.1);
  }
}

TEST(Generate, IsDeterministicAcrossThreadCounts) {
  const VolumeLibrary lib = small_library();
  GenerationConfig c;
  c.num_scenes = 4;
  c.seed = 99;
  const std::vector<ComposedScene> a = generate(lib, c);
  c.threads = 3;
  const std::vector<ComposedScene> b = generate(lib, c);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].objects.size(), b[i].objects.size());
    for (std::size_t k = 0; k < a[i].objects.size(); ++k) {
      EXPECT_EQ(a[i].objects[k].library_index, b[i].objects[k].library_index);
      EXPECT_EQ(a[i].objects[k].pose.translation, b[i].objects[k].pose.translation);
      EXPECT_EQ(a[i].objects[k].pose.rotation, b[i].objects[k].pose.rotation);
    }
  }
  c.seed = 100;
  EXPECT_NE(generate(lib, c)[0].objects[0].pose.translation, a[0].objects[0].pose.translation);
}

TEST(Generate, ScenesArePlausible) {
  const VolumeLibrary lib = small_library(6);
  GenerationConfig c;
  c.num_scenes = 10;
  c.seed = 5;
  for (const ComposedScene& s : generate(lib, c)) {
    ASSERT_GE(s.objects.size(), 3u);
    ASSERT_LE(s.objects.size(), 8u);
    const PlausibilityReport p = check_plausibility(scene_bodies(s, lib), c.bin.min_corner.z());
    EXPECT_LE(p.floor_penetration, 1e-3) << "scene " << s.index;
    EXPECT_LE(p.pair_penetration, 1e-2) << "scene " << s.index;
    EXPECT_EQ(p.floating, 0) << "scene " << s.index;
  }
}

TEST(ComposedScene, RenderViewKeepsIdsAndPoses) {
  const VolumeLibrary lib = small_library();
  const ComposedScene s = generate_scene(lib, GenerationConfig{}, 0);
  const Scene r = to_render_scene(s, lib, nullptr);
  ASSERT_EQ(r.objects.size(), s.objects.size());
  for (std::size_t i = 0; i < r.objects.size(); ++i) {
    EXPECT_EQ(r.objects[i].id, s.objects[i].id);
    EXPECT_EQ(r.objects[i].pose.translation, s.objects[i].pose.translation);
  }
}

}  // namespace
}  // namespace covren
