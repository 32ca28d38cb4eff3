// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#include "covren/procedural.hpp"
#include "covren/scene_io.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <fstream>

namespace covren {
namespace {

namespace fs = std::filesystem;
using testing::random_pose;
using testing::TempDir;

TEST(PoseJson, RoundTripPreservesTheTransform) {
  std::mt19937_64 rng(60);
  for (int rep = 0; rep < 200; ++rep) {
    const RigidPose p = random_pose(rng, 2.0);
    const RigidPose back = pose_from_json(Json::parse(pose_to_json(p).dump()));
    ASSERT_LE((back.rotation - p.rotation).norm(), 1e-12);
    ASSERT_EQ(back.translation, p.translation);
  }
}

TEST(PoseJson, QuaternionIsNormalisedOnRead) {
  const Json j = {{"quat_wxyz", {2.0, 0.0, 0.0, 0.0}}, {"t", {1.0, 2.0, 3.0}}};
  const RigidPose p = pose_from_json(j);
  EXPECT_LE((p.rotation - Mat3::Identity()).norm(), 1e-15);
  EXPECT_EQ(p.translation, Vec3(1, 2, 3));
}

TEST(PoseJson, ZeroQuaternionAndShortArraysAreFormatErrors) {
  EXPECT_THROW(pose_from_json({{"quat_wxyz", {0.0, 0.0, 0.0, 0.0}}, {"t", {0.0, 0.0, 0.0}}}),
               FormatError);
  EXPECT_THROW(pose_from_json({{"quat_wxyz", {1.0, 0.0, 0.0, 0.0}}, {"t", {0.0, 0.0}}}), FormatError);
  EXPECT_THROW(pose_from_json({{"t", {0.0, 0.0, 0.0}}}), FormatError);
}

TEST(CameraJson, RoundTrip) {
  std::mt19937_64 rng(61);
  Camera cam;
  cam.intrinsics = {100.5, 99.0, 31.5, 24.25, 64, 48};
  cam.pose = random_pose(rng, 1.0);
  const Camera back = camera_from_json(camera_to_json(cam));
  EXPECT_EQ(back.intrinsics.fx, 100.5);
  EXPECT_EQ(back.intrinsics.cy, 24.25);
  EXPECT_EQ(back.intrinsics.width, 64);
  EXPECT_EQ(back.intrinsics.height, 48);
  EXPECT_LE((back.pose.rotation - cam.pose.rotation).norm(), 1e-12);
}

TEST(ConfigJson, KeysOverrideOnlyWhatTheyName) {
  RenderConfig base;
  base.samples_per_object = 7;
  const RenderConfig r = render_config_from_json({{"t_far", 3.5}, {"stratified", true}}, base);
  EXPECT_EQ(r.samples_per_object, 7);
  EXPECT_EQ(r.t_far, 3.5);
  EXPECT_TRUE(r.stratified);

  const FitConfig f = fit_config_from_json(
      {{"iterations", 12}, {"weights", {{"mask", 0.25}}}, {"render", {{"samples_background", 5}}}});
  EXPECT_EQ(f.iterations, 12);
  EXPECT_EQ(f.weights.mask, 0.25);
  EXPECT_EQ(f.weights.color, FitConfig{}.weights.color);
  EXPECT_EQ(f.render.samples_background, 5);
}

TEST(ConfigJson, GenerationRoundTrip) {
  GenerationConfig c;
  c.num_scenes = 9;
  c.objects_min = 1;
  c.bin = {Vec3(-1, -2, 0.5), Vec3(1, 2, 3)};
  c.cameras.count_max = 6;
  c.cameras.horizontal_fov_deg = 70.0;
  c.seed = 12345678901234ULL;
  const GenerationConfig back = generation_config_from_json(generation_config_to_json(c));
  EXPECT_EQ(generation_config_to_json(back), generation_config_to_json(c));
  EXPECT_EQ(back.bin.min_corner, c.bin.min_corner);
  EXPECT_EQ(back.seed, c.seed);
}

TEST(ConfigJson, WrongTypeIsFormatError) {
  EXPECT_THROW(render_config_from_json({{"samples_per_object", "many"}}), FormatError);
}

TEST(SceneFile, SaveLoadResolvesRelativeVolumePaths) {
  TempDir dir("scene");
  fs::create_directories(dir.path() / "vols");
  save_volume(make_uniform_volume({2, 2, 2}, testing::unit_box(), 1.0, Vec3::Constant(0.5)),
              dir.path() / "vols" / "cube.covv");
  std::mt19937_64 rng(62);
  SceneFile s;
  s.objects.push_back({1, "vols/cube.covv", random_pose(rng, 0.5)});
  s.objects.push_back({4, "vols/cube.covv", random_pose(rng, 0.5)});
  s.cameras.push_back(Camera{});
  s.cameras[0].intrinsics = {10, 10, 4, 4, 8, 8};
  save_scene_file(s, dir.path() / "scene.json");

  const SceneFile back = load_scene_file(dir.path() / "scene.json");
  ASSERT_EQ(back.objects.size(), 2u);
  EXPECT_EQ(back.objects[1].id, 4);
  EXPECT_EQ(back.objects[0].volume, dir.path() / "vols" / "cube.covv");
  EXPECT_TRUE(back.background.empty());
  ASSERT_EQ(back.cameras.size(), 1u);

  const Scene scene = load_scene_volumes(back);
  ASSERT_EQ(scene.objects.size(), 2u);
  EXPECT_EQ(scene.objects[0].volume, scene.objects[1].volume);
}

TEST(SceneFile, MissingIdsCountUp) {
  TempDir dir("scene");
  std::ofstream(dir.path() / "s.json")
      << R"({"objects": [{"volume": "a.covv", "pose": {"quat_wxyz": [1,0,0,0], "t": [0,0,0]}},
                        {"volume": "b.covv", "pose": {"quat_wxyz": [1,0,0,0], "t": [0,0,0]}}]})";
  const SceneFile s = load_scene_file(dir.path() / "s.json");
  EXPECT_EQ(s.objects[0].id, 1);
  EXPECT_EQ(s.objects[1].id, 2);
}

TEST(SceneFile, ErrorsNameTheFile) {
  TempDir dir("scene");
  std::ofstream(dir.path() / "bad.json") << "{ not json";
  try {
    load_scene_file(dir.path() / "bad.json");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.json"), std::string::npos);
  }
  std::ofstream(dir.path() / "noobj.json") << "{}";
  EXPECT_THROW(load_scene_file(dir.path() / "noobj.json"), FormatError);
  EXPECT_THROW(load_scene_file(dir.path() / "absent.json"), IoError);
}

}  // namespace
}  // namespace covren
