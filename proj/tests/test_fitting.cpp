// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#include "covren/errors.hpp"
#include "covren/fitting.hpp"
#include "fitting_fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace covren {
namespace {

using namespace covren::testing;

FitConfig small_config() {
  FitConfig c;
  c.render.samples_per_object = 12;
  c.render.samples_background = 12;
  return c;
}

TEST(Activations, SoftplusInverseAndSigmoid) {
  for (double y : {1e-6, 0.01, 0.5, 3.0, 40.0}) EXPECT_NEAR(softplus(inverse_softplus(y)), y, 1e-9 * std::max(1.0, y));
  EXPECT_NEAR(sigmoid(0.0), 0.5, 1e-15);
  EXPECT_NEAR(sigmoid(logit(0.3)), 0.3, 1e-12);
  EXPECT_GE(softplus(-800.0), 0.0);
  EXPECT_NEAR(softplus(800.0), 800.0, 1e-9);
}

TEST(RayLoss, EmptySceneWithBlackTargetIsOptimal) {
  LatentScene s;
  s.objects.push_back({1, LatentVolume(VoxelGrid{{4, 4, 4}, unit_box()}, 1e-30, Vec3::Constant(0.5)),
                       RigidPose::identity()});
  RayTargets t;
  const RayLossResult r =
      ray_loss_and_gradients(s, {Vec3(0, 0, -2), Vec3::UnitZ()}, t, small_config());
  EXPECT_LT(r.terms.total, 1e-20);
  for (const GradEntry& g : r.gradients) EXPECT_LT(std::abs(g.value), 1e-12);
}

TEST(RayLoss, SingleSampleDensityGradient) {
  std::mt19937_64 rng(20);
  LatentScene s;
  s.objects.push_back({1, random_latent(rng, {2, 2, 2}, unit_box()), RigidPose::identity()});
  FitConfig cfg = small_config();
  cfg.render.samples_per_object = 1;
  RayTargets t;
  t.color = Vec3(0.9, 0.1, 0.4);
  const Ray ray{Vec3(0.1, -0.05, -2.0), Vec3::UnitZ()};
  const auto grads = summed_gradients(ray_loss_and_gradients(s, ray, t, cfg));
  int checked = 0;
  for (const auto& [key, g] : grads) {
    if (std::get<2>(key) != kDensityLatent) continue;
    const double fd = finite_difference(s, ray, t, cfg, key, 1e-3);
    EXPECT_TRUE(gradient_close(g, fd, 1e-4, 1e-9)) << g << " vs " << fd;
    ++checked;
  }
  EXPECT_GT(checked, 0);
}

TEST(RayLoss, RadianceGradientMatchesClosedForm) {
  std::mt19937_64 rng(21);
  LatentScene s;
  s.objects.push_back({1, random_latent(rng, {2, 2, 2}, unit_box()), RigidPose::identity()});
  FitConfig cfg = small_config();
  cfg.weights.depth = cfg.weights.mask = 0.0;
  cfg.render.samples_per_object = 1;
  RayTargets t;
  t.color = Vec3(0.2, 0.7, 0.3);
  const Ray ray{Vec3(0.0, 0.0, -2.0), Vec3::UnitZ()};
  const RayLossResult r = ray_loss_and_gradients(s, ray, t, cfg);
  // One sample at the box center: each voxel gets weight 1/8.
  const double weight = r.composite.total_opacity;
  const auto grads = summed_gradients(r);
  const ObjectVolume decoded = s.objects[0].volume.decode();
  for (std::size_t v = 0; v < 8; ++v) {
    for (int c = 0; c < 3; ++c) {
      const double lat = s.objects[0].volume.param(kRed + c, v);
      const double expect = 2.0 * (r.composite.color[c] - t.color[c]) * weight * 0.125 *
                            sigmoid(lat) * (1.0 - sigmoid(lat));
      const double g = grads.at({1, v, kRed + c});
      EXPECT_TRUE(gradient_close(g, expect, 1e-9, 1e-12)) << g << " vs " << expect;
      const double fd = finite_difference(s, ray, t, cfg, {1, v, kRed + c}, 1e-3);
      EXPECT_TRUE(gradient_close(g, fd, 1e-4, 1e-9)) << g << " vs " << fd;
    }
  }
}

TEST(RayLoss, RandomScenesMatchFiniteDifferences) {
  std::mt19937_64 rng(22);
  const FitConfig cfg = small_config();
  int checked = 0;
  for (int rep = 0; rep < 12; ++rep) {
    const LatentScene s = random_latent_scene(rng);
    const Ray ray = random_scene_ray(rng);
    const RayTargets t = random_targets(rng);
    const RayLossResult r = ray_loss_and_gradients(s, ray, t, cfg);
    if (std::abs(r.composite.total_opacity - cfg.weights.depth_opacity_threshold) < 1e-3) continue;
    const auto grads = summed_gradients(r);
    int k = 0;
    for (const auto& [key, g] : grads) {
      if (k++ % 7 != 0) continue;
      const double fd = finite_difference(s, ray, t, cfg, key, 1e-3);
      ASSERT_TRUE(gradient_close(g, fd, 1e-3, 1e-6))
          << "owner " << std::get<0>(key) << " voxel " << std::get<1>(key) << " channel "
          << std::get<2>(key) << ": " << g << " vs " << fd;
      ++checked;
    }
  }
  EXPECT_GT(checked, 100);
}

TEST(RayLoss, NonFiniteTargetIsSkippedAndFlagged) {
  std::mt19937_64 rng(23);
  const LatentScene s = random_latent_scene(rng);
  RayTargets t = random_targets(rng);
  t.depth = std::nan("");
  const RayLossResult r = ray_loss_and_gradients(s, random_scene_ray(rng), t, small_config());
  EXPECT_TRUE(r.skipped_nonfinite);
  EXPECT_EQ(r.terms.depth, 0.0);
  EXPECT_TRUE(std::isfinite(r.terms.total));
}

TEST(OccupancyLoss, ZeroLogitsAllOccupied) {
  LatentVolume v(VoxelGrid{{3, 3, 3}, unit_box()}, 1.0, Vec3::Constant(0.5), 0.0);
  const OccupancyLoss l = occupancy_loss_and_gradients(v, OccupancyLabels(27, 1));
  EXPECT_NEAR(l.loss, std::log(2.0), 1e-12);
  EXPECT_EQ(l.labeled, 27u);
}

TEST(OccupancyLoss, SaturatedLogitHasTinyLoss) {
  LatentVolume v(VoxelGrid{{2, 2, 2}, unit_box()}, 1.0, Vec3::Constant(0.5), 20.0);
  EXPECT_LE(occupancy_loss_and_gradients(v, OccupancyLabels(8, 1)).loss, 1e-8);
}

TEST(OccupancyLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(24);
  LatentVolume v = random_latent(rng, {4, 4, 4}, unit_box());
  OccupancyLabels labels(v.voxel_count());
  for (auto& l : labels) l = static_cast<std::int8_t>(static_cast<int>(rng() % 3) - 1);
  const OccupancyLoss base = occupancy_loss_and_gradients(v, labels);
  for (std::size_t i = 0; i < v.voxel_count(); ++i) {
    const double h = 1e-5;
    const double x = v.param(kOccupancyLogit, i);
    v.param(kOccupancyLogit, i) = x + h;
    const double plus = occupancy_loss_and_gradients(v, labels).loss;
    v.param(kOccupancyLogit, i) = x - h;
    const double minus = occupancy_loss_and_gradients(v, labels).loss;
    v.param(kOccupancyLogit, i) = x;
    ASSERT_NEAR(base.gradients[i], (plus - minus) / (2 * h), 1e-6);
    if (labels[i] < 0) ASSERT_EQ(base.gradients[i], 0.0);
  }
}

TEST(OccupancyLoss, ShapeMismatchIsContractError) {
  LatentVolume v(VoxelGrid{{2, 2, 2}, unit_box()}, 1.0, Vec3::Constant(0.5));
  EXPECT_THROW(occupancy_loss_and_gradients(v, OccupancyLabels(7, 1)), ContractError);
}

TEST(FitConfig, ValidateRejectsBadOptimizerSettings) {
  FitConfig c;
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ContractError);
  c = FitConfig{};
  c.beta2 = 1.0;
  EXPECT_THROW(c.validate(), ContractError);
  c = FitConfig{};
  c.weights.mask = -1.0;
  EXPECT_THROW(c.validate(), ContractError);
}

TEST(FitConfig, DefaultsAreAdamDefaults) {
  const FitConfig c;
  EXPECT_EQ(c.learning_rate, 1e-3);
  EXPECT_EQ(c.beta1, 0.9);
  EXPECT_EQ(c.beta2, 0.999);
}

TrainView constant_view(const Vec3& color) {
  TrainView v;
  v.camera.intrinsics = {16.0, 16.0, 8.0, 8.0, 16, 16};
  v.camera.pose = look_at(Vec3(0, -1.2, 0.1), Vec3::Zero());
  v.rgb = Image(16, 16, 3);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      for (int c = 0; c < 3; ++c) v.rgb.at(x, y, c) = static_cast<float>(color[c]);
    }
  }
  return v;
}

TEST(Fit, LossDecreasesAndFrozenBackgroundStays) {
  LatentScene s;
  s.objects.push_back({1, LatentVolume(VoxelGrid{{6, 6, 6}, unit_box()}, 0.5, Vec3::Constant(0.5)),
                       RigidPose::identity()});
  s.background = LatentVolume(VoxelGrid{{4, 4, 4}, {Vec3::Constant(-3), Vec3::Constant(3)}}, 0.01,
                              Vec3::Constant(0.2));
  const std::vector<TrainView> views{constant_view(Vec3(0.9, 0.2, 0.1))};
  FitConfig cfg = small_config();
  cfg.iterations = 60;
  cfg.rays_per_iteration = 64;
  cfg.learning_rate = 0.05;
  cfg.freeze_background = true;
  const FitResult r = fit(s, views, cfg, 7);
  ASSERT_EQ(r.loss_curve.size(), 60u);
  double head = 0.0;
  double tail = 0.0;
  for (int i = 0; i < 10; ++i) {
    head += r.loss_curve[static_cast<std::size_t>(i)].color;
    tail += r.loss_curve[r.loss_curve.size() - 1 - static_cast<std::size_t>(i)].color;
  }
  EXPECT_LT(tail, 0.5 * head);
  EXPECT_EQ(r.scene.background->params, s.background->params);
  EXPECT_NE(r.scene.objects[0].volume.params, s.objects[0].volume.params);
}

TEST(Fit, NeedsAView) {
  EXPECT_THROW(fit(LatentScene{}, {}, FitConfig{}, 1), ContractError);
}

TEST(Fit, DecodedVolumeSatisfiesInvariants) {
  std::mt19937_64 rng(25);
  LatentVolume v = random_latent(rng, {5, 5, 5}, unit_box());
  v.param(kDensityLatent, 0) = -1e4;
  v.param(kRed, 1) = 1e4;
  EXPECT_NO_THROW(v.decode().validate());
}

}  // namespace
}  // namespace covren
