// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "covren/compositor.hpp"
#include "covren/errors.hpp"
#include "covren/mesh.hpp"
#include "covren/volume.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace covren {

/// An object too large for the bin footprint.
class PlacementError : public DomainError {
 public:
  using DomainError::DomainError;
};

struct LibraryEntry {
  std::string name;
  std::shared_ptr<const ObjectVolume> volume;
  TriangleMesh mesh;  ///< extracted from `volume`
  std::string provenance;

  /// Object-local collision proxy: the mesh AABB, or the volume box when the
  /// mesh is empty.
  AxisAlignedBox proxy() const;
};

struct VolumeLibrary {
  std::vector<LibraryEntry> entries;

  /// Adds a volume and its occupancy iso-surface.
  void add(std::string name, ObjectVolume volume, std::string provenance, double iso = 0.5);

  /// Every `*.covv` file in `dir` except background.covv, in file-name order.
  /// The entry name is the file stem.
  static VolumeLibrary load_directory(const std::filesystem::path& dir);

  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }
};

/// Box proxy posed in the world. Columns of `axes` are the box axes.
struct OrientedBox {
  Vec3 center = Vec3::Zero();
  Mat3 axes = Mat3::Identity();
  Vec3 half = Vec3::Zero();

  static OrientedBox from(const AxisAlignedBox& local, const RigidPose& pose);

  /// Half extent of the projection onto a unit direction.
  double radius_along(const Vec3& dir) const;
  double lowest_z() const { return center.z() - radius_along(Vec3::UnitZ()); }
  AxisAlignedBox world_aabb() const;
};

struct Separation {
  /// Smallest overlap over all separating axis candidates; negative values are
  /// the largest gap found (a lower bound on the true distance).
  double penetration = 0.0;
  /// Unit direction that moves the second box out of the first.
  Vec3 axis = Vec3::UnitZ();
};

Separation separate(const OrientedBox& a, const OrientedBox& b);

struct SettleConfig {
  double dt = 1.0 / 120.0;
  double gravity = 9.81;
  int solver_iterations = 12;
  double tolerance = 1e-4;  ///< largest per-step displacement counted as settled
  double rotation_relax = 0.25;  ///< slerp fraction per step toward an upright pose
};

struct SettleBody {
  AxisAlignedBox proxy;  ///< object-local
  RigidPose pose;
};

struct SettleResult {
  std::vector<RigidPose> poses;
  int steps = 0;
  bool converged = false;  ///< false: the step budget ran out first
};

/// Drops the bodies under gravity onto the plane z = floor_z, resolving
/// proxy overlaps by position projection. `walls` confines proxies in x and y.
SettleResult settle(std::span<const SettleBody> bodies, double floor_z, int steps,
                    const SettleConfig& config = {},
                    const std::optional<AxisAlignedBox>& walls = std::nullopt);

struct PlausibilityReport {
  double floor_penetration = 0.0;  ///< deepest proxy point below the floor, >= 0
  double pair_penetration = 0.0;   ///< deepest pairwise overlap, >= 0
  int floating = 0;                ///< bodies farther than the contact tolerance from any support
};

PlausibilityReport check_plausibility(std::span<const SettleBody> bodies, double floor_z,
                                      double contact_tolerance = 1e-2);

/// Initial pose for an object with local proxy `object_box`: uniform yaw (or a
/// uniform rotation when `full_rotation`), footprint inside the bin, bottom
/// just above `stack_height`. Throws PlacementError naming `name` when no yaw
/// fits.
RigidPose sample_initial_pose(const AxisAlignedBox& bin, const AxisAlignedBox& object_box,
                              double stack_height, std::mt19937_64& rng,
                              bool full_rotation = false, const std::string& name = "object");

struct CameraSampling {
  int count_min = 2;
  int count_max = 2;
  double radius_min = 0.8;
  double radius_max = 1.0;
  double elevation_min_deg = 35.0;
  double elevation_max_deg = 65.0;
  double azimuth_min_deg = 0.0;
  double azimuth_max_deg = 360.0;
  double look_at_jitter = 0.03;
  double horizontal_fov_deg = 50.0;
  int width = 64;
  int height = 64;
};

struct GenerationConfig {
  int num_scenes = 1;
  int objects_min = 3;
  int objects_max = 8;
  AxisAlignedBox bin{Vec3(-0.25, -0.25, 0.0), Vec3(0.25, 0.25, 0.6)};  ///< floor at min z
  CameraSampling cameras;
  int settle_steps = 1000;
  SettleConfig settle;
  bool full_rotation = false;
  std::uint64_t seed = 0;
  int threads = 1;

  /// Throws DomainError on inconsistent ranges.
  void validate() const;
};

struct PlacedObject {
  int id = 1;  ///< owner id inside the scene
  int library_index = 0;
  RigidPose pose;
};

struct ComposedScene {
  int index = 0;
  std::vector<PlacedObject> objects;
  std::vector<Camera> cameras;
  bool settled = true;
  int settle_steps = 0;
  std::vector<std::string> warnings;
};

/// Scene `index` of a generation run; depends only on (library, config, index).
ComposedScene generate_scene(const VolumeLibrary& library, const GenerationConfig& config,
                             int index);

/// config.num_scenes scenes, parallel over scenes with config.threads.
std::vector<ComposedScene> generate(const VolumeLibrary& library, const GenerationConfig& config);

/// Renderable view of a composed scene.
Scene to_render_scene(const ComposedScene& scene, const VolumeLibrary& library,
                      std::shared_ptr<const ObjectVolume> background);

/// Settle bodies of a composed scene (proxies at the final poses).
std::vector<SettleBody> scene_bodies(const ComposedScene& scene, const VolumeLibrary& library);

/// Background box around a bin with room for objects near its walls.
AxisAlignedBox default_workspace(const AxisAlignedBox& bin);

}  // namespace covren
