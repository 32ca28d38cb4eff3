// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#include "covren/procedural.hpp"

#include "covren/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace covren {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Occupancy logits saturate here instead of at +-inf.
constexpr double kOccupancyClamp = 1e-4;

Vec3 hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h, 1.0) * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Vec3 rgb;
  if (hp < 1) rgb = {c, x, 0};
  else if (hp < 2) rgb = {x, c, 0};
  else if (hp < 3) rgb = {0, c, x};
  else if (hp < 4) rgb = {0, x, c};
  else if (hp < 5) rgb = {x, 0, c};
  else rgb = {c, 0, x};
  return rgb + Vec3::Constant(v - c);
}

}  // namespace

ObjectVolume make_sdf_volume(const GridDims& dims, const AxisAlignedBox& box,
                             const SignedDistance& sdf, double density, const ColorField& color) {
  ObjectVolume vol(dims, box);
  const double h = vol.grid.voxel_size().minCoeff();
  for (int z = 0; z < dims.depth; ++z) {
    for (int y = 0; y < dims.height; ++y) {
      for (int x = 0; x < dims.width; ++x) {
        const std::size_t i = dims.index(z, y, x);
        const Vec3 p = vol.grid.voxel_center(z, y, x);
        const double occ = std::clamp(0.5 - sdf(p) / h, 0.0, 1.0);
        vol.density[i] = static_cast<float>(density * occ);
        vol.set_radiance(i, color(p).cwiseMax(0.0).cwiseMin(1.0));
        vol.occupancy_logit[i] =
            static_cast<float>(logit(std::clamp(occ, kOccupancyClamp, 1.0 - kOccupancyClamp)));
      }
    }
  }
  return vol;
}

ObjectVolume make_sphere_volume(const GridDims& dims, const AxisAlignedBox& box,
                                const Vec3& center, double radius, double density,
                                const ColorField& color) {
  return make_sdf_volume(
      dims, box, [&](const Vec3& p) { return (p - center).norm() - radius; }, density, color);
}

ObjectVolume make_cuboid_volume(const GridDims& dims, const AxisAlignedBox& box,
                                const Vec3& center, const Vec3& half, double density,
                                const ColorField& color) {
  return make_sdf_volume(
      dims, box,
      [&](const Vec3& p) {
        const Vec3 q = (p - center).cwiseAbs() - half;
        return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
      },
      density, color);
}

ObjectVolume make_uniform_volume(const GridDims& dims, const AxisAlignedBox& box, double density,
                                 const Vec3& color) {
  ObjectVolume vol(dims, box);
  std::fill(vol.density.begin(), vol.density.end(), static_cast<float>(density));
  for (std::size_t i = 0; i < vol.voxel_count(); ++i) vol.set_radiance(i, color);
  std::fill(vol.occupancy_logit.begin(), vol.occupancy_logit.end(),
            static_cast<float>(logit(1.0 - kOccupancyClamp)));
  return vol;
}

ObjectVolume make_floor_background(const GridDims& dims, const AxisAlignedBox& workspace,
                                   double floor_z, double density) {
  ObjectVolume vol = make_sdf_volume(
      dims, workspace, [&](const Vec3& p) { return p.z() - floor_z; }, density,
      [](const Vec3& p) {
        const int cx = static_cast<int>(std::floor(p.x() / 0.1));
        const int cy = static_cast<int>(std::floor(p.y() / 0.1));
        return ((cx + cy) & 1) ? Vec3(0.55, 0.5, 0.45) : Vec3(0.35, 0.32, 0.3);
      });
  vol.background = true;
  return vol;
}

std::vector<ProceduralObject> make_procedural_library(int count, std::uint64_t seed,
                                                      int resolution) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<ProceduralObject> out;
  const GridDims dims{resolution, resolution, resolution};
  for (int k = 0; k < count; ++k) {
    const int kind = k % 3;
    const double size = 0.04 + 0.04 * unit(rng);  // characteristic half size, meters
    const Vec3 base = hsv_to_rgb(unit(rng), 0.6 + 0.3 * unit(rng), 0.7 + 0.3 * unit(rng));
    const Vec3 accent = 0.6 * base;
    const double stripe = 0.02 + 0.02 * unit(rng);
    const ColorField color = [=](const Vec3& p) {
      const bool band = static_cast<int>(std::floor((p.z() + 1.0) / stripe)) % 2 == 0;
      return band ? base : accent;
    };
    ProceduralObject obj;
    if (kind == 0) {
      const AxisAlignedBox box{Vec3::Constant(-1.25 * size), Vec3::Constant(1.25 * size)};
      obj.name = "sphere" + std::to_string(k);
      obj.volume = make_sphere_volume(dims, box, Vec3::Zero(), size, 300.0, color);
    } else if (kind == 1) {
      const Vec3 half(size, size * (0.6 + 0.4 * unit(rng)), size * (0.5 + 0.5 * unit(rng)));
      const AxisAlignedBox box{-1.25 * half - Vec3::Constant(0.01),
                               1.25 * half + Vec3::Constant(0.01)};
      obj.name = "cuboid" + std::to_string(k);
      obj.volume = make_cuboid_volume(dims, box, Vec3::Zero(), half, 300.0, color);
    } else {
      const double radius = size * (0.6 + 0.3 * unit(rng));
      const double half_h = size * (0.8 + 0.6 * unit(rng));
      const AxisAlignedBox box{Vec3(-1.25 * radius, -1.25 * radius, -1.2 * half_h),
                               Vec3(1.25 * radius, 1.25 * radius, 1.2 * half_h)};
      obj.name = "cylinder" + std::to_string(k);
      obj.volume = make_sdf_volume(
          dims, box,
          [=](const Vec3& p) {
            const double dr = std::hypot(p.x(), p.y()) - radius;
            const double dz = std::abs(p.z()) - half_h;
            return std::min(std::max(dr, dz), 0.0) +
                   std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
          },
          300.0, [=](const Vec3& p) {
            const double a = std::atan2(p.y(), p.x());
            return static_cast<int>(std::floor((a + kPi) / (kPi / 4))) % 2 ? base : accent;
          });
    }
    out.push_back(std::move(obj));
  }
  return out;
}

}  // namespace covren
