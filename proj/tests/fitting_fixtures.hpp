// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "covren/fitting.hpp"
#include "test_support.hpp"

#include <cmath>
#include <map>
#include <tuple>

namespace covren::testing {

inline LatentVolume random_latent(std::mt19937_64& rng, GridDims dims, AxisAlignedBox box) {
  LatentVolume v(VoxelGrid{dims, box}, 1.0, Vec3::Constant(0.5));
  const std::size_t n = v.voxel_count();
  for (std::size_t i = 0; i < n; ++i) {
    v.param(kDensityLatent, i) = uniform(rng, -2.0, 2.5);
    for (int c = kRed; c <= kBlue; ++c) v.param(c, i) = uniform(rng, -3.0, 3.0);
    v.param(kOccupancyLogit, i) = uniform(rng, -3.0, 3.0);
  }
  return v;
}

/// Two overlapping 8^3 objects and an 8^3 background around the origin.
inline LatentScene random_latent_scene(std::mt19937_64& rng) {
  LatentScene s;
  const AxisAlignedBox obj{Vec3::Constant(-0.35), Vec3::Constant(0.35)};
  for (int k = 1; k <= 2; ++k) {
    s.objects.push_back({k, random_latent(rng, {8, 8, 8}, obj), random_pose(rng, 0.25)});
  }
  s.background = random_latent(rng, {8, 8, 8}, {Vec3::Constant(-1.0), Vec3::Constant(1.0)});
  for (std::size_t i = 0; i < s.background->voxel_count(); ++i) {
    s.background->param(kDensityLatent, i) -= 2.0;
  }
  return s;
}

inline Ray random_scene_ray(std::mt19937_64& rng) {
  const Vec3 origin = random_vec(rng, -1.0, 1.0).normalized() * 3.0;
  const Vec3 aim = random_vec(rng, -0.3, 0.3);
  return {origin, (aim - origin).normalized()};
}

inline RayTargets random_targets(std::mt19937_64& rng) {
  RayTargets t;
  t.color = random_vec(rng, 0.0, 1.0);
  t.depth = uniform(rng, 2.0, 4.0);
  t.depth_scale = uniform(rng, 0.6, 1.0);
  for (int k = 1; k <= 2; ++k) {
    t.modal[k] = uniform(rng, 0.05, 0.95);
    t.amodal[k] = uniform(rng, 0.05, 0.95);
  }
  return t;
}

using GradKey = std::tuple<int, std::size_t, int>;

inline std::map<GradKey, double> summed_gradients(const RayLossResult& r) {
  std::map<GradKey, double> out;
  for (const GradEntry& g : r.gradients) out[{g.volume, g.voxel, g.channel}] += g.value;
  return out;
}

/// Central difference of the ray loss along one latent parameter.
inline double finite_difference(LatentScene scene, const Ray& ray, const RayTargets& targets,
                                const FitConfig& config, const GradKey& key, double h) {
  auto [owner, voxel, channel] = key;
  LatentVolume* v = scene.find(owner);
  const double base = v->param(channel, voxel);
  v->param(channel, voxel) = base + h;
  const double plus = ray_loss_and_gradients(scene, ray, targets, config).terms.total;
  v->param(channel, voxel) = base - h;
  const double minus = ray_loss_and_gradients(scene, ray, targets, config).terms.total;
  return (plus - minus) / (2.0 * h);
}

/// Relative error < rel, or absolute error < abs_floor for tiny gradients.
inline bool gradient_close(double analytic, double fd, double rel, double abs_floor) {
  const double diff = std::abs(analytic - fd);
  return diff < abs_floor || diff < rel * std::max(std::abs(analytic), std::abs(fd));
}

}  // namespace covren::testing
