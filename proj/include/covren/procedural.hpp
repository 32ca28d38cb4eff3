// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "covren/volume.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace covren {

using SignedDistance = std::function<double(const Vec3&)>;
using ColorField = std::function<Vec3(const Vec3&)>;

/// Voxelises a signed distance function (negative inside). Occupancy is the
/// indicator smoothed linearly over one voxel, density = `density` * occupancy.
ObjectVolume make_sdf_volume(const GridDims& dims, const AxisAlignedBox& box,
                             const SignedDistance& sdf, double density, const ColorField& color);

ObjectVolume make_sphere_volume(const GridDims& dims, const AxisAlignedBox& box,
                                const Vec3& center, double radius, double density,
                                const ColorField& color);

/// Solid axis-aligned box of half extents `half` centered at `center`.
ObjectVolume make_cuboid_volume(const GridDims& dims, const AxisAlignedBox& box,
                                const Vec3& center, const Vec3& half, double density,
                                const ColorField& color);

/// Uniform density and color over the whole grid.
ObjectVolume make_uniform_volume(const GridDims& dims, const AxisAlignedBox& box, double density,
                                 const Vec3& color);

/// Background with an opaque checkered floor slab below `floor_z`.
ObjectVolume make_floor_background(const GridDims& dims, const AxisAlignedBox& workspace,
                                   double floor_z, double density = 400.0);

struct ProceduralObject {
  std::string name;
  ObjectVolume volume;
};

/// A small deterministic set of spheres, cuboids and cylinders with varied
/// sizes and colors, each in its own object-local box.
std::vector<ProceduralObject> make_procedural_library(int count, std::uint64_t seed,
                                                      int resolution = 24);

}  // namespace covren
