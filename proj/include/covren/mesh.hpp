// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "covren/geometry.hpp"
#include "covren/volume.hpp"

#include <array>
#include <filesystem>
#include <span>
#include <vector>

namespace covren {

/// Indexed triangle mesh in object-local meters. Triangles wind
/// counter-clockwise when seen from outside.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;

  bool empty() const { return triangles.empty(); }
};

/// Iso-surface of a scalar field sampled at the voxel centers of `grid`.
/// Cells whose corners are all at or above `iso` count as inside; normals
/// point toward lower values.
TriangleMesh marching_cubes_field(const VoxelGrid& grid, std::span<const double> values, double iso);

/// Extracts the `iso` level of sigmoid(occupancy_logit).
TriangleMesh marching_cubes(const ObjectVolume& volume, double iso = 0.5);

/// Fallback for volumes whose occupancy was never supervised: extracts the
/// `density_threshold` level of the density field.
TriangleMesh marching_cubes_density(const ObjectVolume& volume, double density_threshold);

/// Every undirected edge shared by exactly two triangles.
bool is_watertight(const TriangleMesh& mesh);

struct MeshVolume {
  double volume = 0.0;  ///< signed, positive for outward winding
  bool reliable = false;  ///< false when the mesh is not watertight
};

MeshVolume mesh_volume(const TriangleMesh& mesh);
double mesh_area(const TriangleMesh& mesh);

/// Tight bounds. Throws ContractError for an empty mesh.
AxisAlignedBox mesh_aabb(const TriangleMesh& mesh);

/// Wavefront OBJ with "%.6f" coordinates and 1-based faces.
void export_obj(const TriangleMesh& mesh, const std::filesystem::path& path);
TriangleMesh load_obj(const std::filesystem::path& path);

}  // namespace covren
