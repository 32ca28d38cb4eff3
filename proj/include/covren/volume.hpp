// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "covren/geometry.hpp"

#include <array>
#include <cstddef>
#include <filesystem>
#include <vector>

namespace covren {

/// Voxel counts along z (depth), y (height), x (width). Linear voxel index is
/// (z * H + y) * W + x.
struct GridDims {
  int depth = 2;
  int height = 2;
  int width = 2;

  std::size_t count() const {
    return static_cast<std::size_t>(depth) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(width);
  }
  std::size_t index(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * static_cast<std::size_t>(height) +
            static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(width) +
           static_cast<std::size_t>(x);
  }
  bool operator==(const GridDims&) const = default;
};

/// The eight voxels (and weights) a trilinear lookup blends. Outside the box
/// every weight is zero.
struct Stencil {
  std::array<std::size_t, 8> index{};
  std::array<double, 8> weight{};
  bool inside = false;
};

/// Placement of a voxel grid inside its local box. Voxel (x, y, z) is
/// centered at min + (x + 0.5, y + 0.5, z + 0.5) / (W, H, D) * extent.
struct VoxelGrid {
  GridDims dims;
  AxisAlignedBox box;

  Vec3 voxel_center(int z, int y, int x) const;
  Vec3 voxel_size() const;
  Stencil stencil(const Vec3& local_point) const;
};

struct VolumeSample {
  double density = 0.0;
  Eigen::Vector3d radiance = Eigen::Vector3d::Zero();
};

/// Explicit per-object voxel volume: density (1/m, >= 0), direction-independent
/// RGB radiance in [0, 1], and an occupancy logit.
///
/// Radiance is stored channel-major: all red values, then green, then blue.
struct ObjectVolume {
  VoxelGrid grid;
  std::vector<float> density;
  std::vector<float> radiance;
  std::vector<float> occupancy_logit;
  bool background = false;

  ObjectVolume() = default;
  ObjectVolume(GridDims dims, AxisAlignedBox box);

  std::size_t voxel_count() const { return grid.dims.count(); }
  float& red(std::size_t i) { return radiance[i]; }
  float& green(std::size_t i) { return radiance[voxel_count() + i]; }
  float& blue(std::size_t i) { return radiance[2 * voxel_count() + i]; }
  void set_radiance(std::size_t i, const Eigen::Vector3d& c);

  /// Throws ContractError if any invariant (sizes, ranges, dims >= 2) fails.
  void validate() const;
};

VolumeSample sample_trilinear(const ObjectVolume& volume, const Vec3& local_point);

struct WeightedSample {
  VolumeSample sample;
  Stencil stencil;
};

WeightedSample sample_trilinear_with_weights(const ObjectVolume& volume, const Vec3& local_point);

/// `.covv` binary format, little-endian:
///   "COVV" | u32 version=1 | u32 D, H, W | f64 min[3], max[3]
///   | f32 density[N] | f32 radiance[3N] (channel-major) | f32 occupancy_logit[N]
void save_volume(const ObjectVolume& volume, const std::filesystem::path& path);
ObjectVolume load_volume(const std::filesystem::path& path);

}  // namespace covren
