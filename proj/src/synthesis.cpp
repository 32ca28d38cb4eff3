// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#include "covren/synthesis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

namespace covren {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDropGap = 0.005;

// Upright rotation nearest to r: the most vertical local axis snaps to +-z and
// the heading of the most horizontal remaining axis is kept.
Mat3 upright_target(const Mat3& r) {
  int k = 0;
  for (int i = 1; i < 3; ++i) {
    if (std::abs(r(2, i)) > std::abs(r(2, k))) k = i;
  }
  int j = (k + 1) % 3;
  const int other = (k + 2) % 3;
  if (std::hypot(r(0, other), r(1, other)) > std::hypot(r(0, j), r(1, j))) j = other;
  const int l = 3 - k - j;
  Mat3 t;
  t.col(k) = (r(2, k) < 0.0 ? -1.0 : 1.0) * Vec3::UnitZ();
  t.col(j) = Vec3(r(0, j), r(1, j), 0.0).normalized();
  t.col(l) = t.col((l + 1) % 3).cross(t.col((l + 2) % 3));
  return t;
}

bool is_upright(const Mat3& r) {
  for (int i = 0; i < 3; ++i) {
    const double z = std::abs(r(2, i));
    if (z > 1e-12 && std::abs(z - 1.0) > 1e-12) return false;
  }
  return true;
}

Vec3 footprint_half(const Mat3& rotation, const Vec3& half) {
  return rotation.cwiseAbs() * half;
}

bool fits(const Vec3& half, const AxisAlignedBox& bin) {
  const Vec3 bin_half = 0.5 * bin.extent();
  return half.x() <= bin_half.x() + 1e-9 && half.y() <= bin_half.y() + 1e-9;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (!(hi > lo)) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double deg(double d) { return d * kPi / 180.0; }

Camera sample_camera(const GenerationConfig& config, std::mt19937_64& rng) {
  const CameraSampling& cs = config.cameras;
  const double radius = uniform(rng, cs.radius_min, cs.radius_max);
  const double elevation = deg(uniform(rng, cs.elevation_min_deg, cs.elevation_max_deg));
  const double azimuth = deg(uniform(rng, cs.azimuth_min_deg, cs.azimuth_max_deg));
  const Vec3 jitter(uniform(rng, -cs.look_at_jitter, cs.look_at_jitter),
                    uniform(rng, -cs.look_at_jitter, cs.look_at_jitter),
                    uniform(rng, -cs.look_at_jitter, cs.look_at_jitter));
  const Vec3 bin_center = config.bin.center();
  const Vec3 target = Vec3(bin_center.x(), bin_center.y(), config.bin.min_corner.z() + 0.05) + jitter;
  const Vec3 eye = target + radius * Vec3(std::cos(elevation) * std::cos(azimuth),
                                          std::cos(elevation) * std::sin(azimuth),
                                          std::sin(elevation));
  Camera cam;
  cam.intrinsics.width = cs.width;
  cam.intrinsics.height = cs.height;
  cam.intrinsics.fx = 0.5 * cs.width / std::tan(0.5 * deg(cs.horizontal_fov_deg));
  cam.intrinsics.fy = cam.intrinsics.fx;
  cam.intrinsics.cx = 0.5 * cs.width;
  cam.intrinsics.cy = 0.5 * cs.height;
  cam.pose = look_at(eye, target);
  return cam;
}

}  // namespace

AxisAlignedBox LibraryEntry::proxy() const {
  return mesh.empty() ? volume->grid.box : mesh_aabb(mesh);
}

void VolumeLibrary::add(std::string name, ObjectVolume volume, std::string provenance,
                        double iso) {
  LibraryEntry entry;
  entry.name = std::move(name);
  entry.mesh = marching_cubes(volume, iso);
  entry.volume = std::make_shared<const ObjectVolume>(std::move(volume));
  entry.provenance = std::move(provenance);
  entries.push_back(std::move(entry));
}

VolumeLibrary VolumeLibrary::load_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("library directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& item : std::filesystem::directory_iterator(dir)) {
    // The file format carries no background flag; the name marks it.
    if (item.is_regular_file() && item.path().extension() == ".covv" &&
        item.path().stem() != "background") {
      files.push_back(item.path());
    }
  }
  std::sort(files.begin(), files.end());
  VolumeLibrary lib;
  for (const auto& file : files) {
    lib.add(file.stem().string(), load_volume(file), "file:" + file.filename().string());
  }
  return lib;
}

OrientedBox OrientedBox::from(const AxisAlignedBox& local, const RigidPose& pose) {
  return {pose.apply(local.center()), pose.rotation, 0.5 * local.extent()};
}

double OrientedBox::radius_along(const Vec3& dir) const {
  return std::abs(axes.col(0).dot(dir)) * half.x() + std::abs(axes.col(1).dot(dir)) * half.y() +
         std::abs(axes.col(2).dot(dir)) * half.z();
}

AxisAlignedBox OrientedBox::world_aabb() const {
  const Vec3 r = footprint_half(axes, half);
  return {center - r, center + r};
}

Separation separate(const OrientedBox& a, const OrientedBox& b) {
  std::array<Vec3, 15> candidates;
  int n = 0;
  for (int i = 0; i < 3; ++i) candidates[n++] = a.axes.col(i);
  for (int i = 0; i < 3; ++i) candidates[n++] = b.axes.col(i);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const Vec3 c = a.axes.col(i).cross(b.axes.col(j));
      if (c.norm() > 1e-6) candidates[n++] = c.normalized();
    }
  }
  const Vec3 d = b.center - a.center;
  Separation best;
  best.penetration = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const Vec3& axis = candidates[static_cast<std::size_t>(i)];
    const double proj = d.dot(axis);
    const double overlap = a.radius_along(axis) + b.radius_along(axis) - std::abs(proj);
    if (overlap < best.penetration) {
      best.penetration = overlap;
      best.axis = proj < 0.0 ? Vec3(-axis) : axis;
    }
  }
  return best;
}

SettleResult settle(std::span<const SettleBody> bodies, double floor_z, int steps,
                    const SettleConfig& config, const std::optional<AxisAlignedBox>& walls) {
  if (steps < 1) {
    throw DomainError("settle needs at least one step");
  }
  const std::size_t n = bodies.size();
  std::vector<Vec3> center(n), velocity(n, Vec3::Zero()), local_center(n), half(n);
  std::vector<Mat3> rotation(n), target(n);
  std::vector<bool> upright(n);
  for (std::size_t i = 0; i < n; ++i) {
    local_center[i] = bodies[i].proxy.center();
    half[i] = 0.5 * bodies[i].proxy.extent();
    rotation[i] = bodies[i].pose.rotation;
    center[i] = bodies[i].pose.apply(local_center[i]);
    upright[i] = is_upright(rotation[i]);
    target[i] = upright[i] ? rotation[i] : upright_target(rotation[i]);
  }
  auto box = [&](std::size_t i) { return OrientedBox{center[i], rotation[i], half[i]}; };

  SettleResult result;
  for (int step = 1; step <= steps; ++step) {
    const std::vector<Vec3> previous = center;
    for (std::size_t i = 0; i < n; ++i) {
      velocity[i].z() -= config.gravity * config.dt;
      center[i] += velocity[i] * config.dt;
      if (!upright[i]) {
        const Eigen::Quaterniond q(rotation[i]);
        const Eigen::Quaterniond goal(target[i]);
        if (q.angularDistance(goal) < 1e-6) {
          rotation[i] = target[i];
          upright[i] = true;
        } else {
          rotation[i] = q.slerp(config.rotation_relax, goal).normalized().toRotationMatrix();
        }
      }
    }
    for (int it = 0; it < config.solver_iterations; ++it) {
      for (std::size_t i = 0; i < n; ++i) {
        const OrientedBox b = box(i);
        if (walls) {
          for (int axis = 0; axis < 2; ++axis) {
            const double r = b.radius_along(Vec3::Unit(axis));
            const double lo = walls->min_corner[axis] + r;
            const double hi = walls->max_corner[axis] - r;
            center[i][axis] = lo > hi ? 0.5 * (lo + hi) : std::clamp(center[i][axis], lo, hi);
          }
        }
        const double below = floor_z - b.lowest_z();
        if (below > 0.0) center[i].z() += below;
      }
      // Bottom-up order lets a vertical contact settle a whole stack in one sweep.
      std::vector<std::pair<double, std::pair<std::size_t, std::size_t>>> pairs;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
          pairs.push_back({std::min(box(i).lowest_z(), box(j).lowest_z()), {i, j}});
        }
      }
      std::stable_sort(pairs.begin(), pairs.end(),
                       [](const auto& x, const auto& y) { return x.first < y.first; });
      for (const auto& [key, ij] : pairs) {
        const auto [i, j] = ij;
        const Separation sep = separate(box(i), box(j));
        if (sep.penetration <= 0.0) continue;
        const Vec3 push = sep.penetration * sep.axis;
        if (std::abs(sep.axis.z()) > 0.7) {
          // Only the upper body moves, so contacts never drive a body into the floor.
          if (sep.axis.z() > 0.0) center[j] += push;
          else center[i] -= push;
        } else {
          center[i] -= 0.5 * push;
          center[j] += 0.5 * push;
        }
      }
    }
    double moved = 0.0;
    bool all_upright = true;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 step_delta = center[i] - previous[i];
      moved = std::max(moved, step_delta.norm());
      velocity[i] = step_delta / config.dt;
      velocity[i].x() *= 0.5;
      velocity[i].y() *= 0.5;
      velocity[i].z() = std::min(velocity[i].z(), 0.0);
      all_upright = all_upright && upright[i];
    }
    result.steps = step;
    if (step >= 2 && all_upright && moved < config.tolerance) {
      result.converged = true;
      break;
    }
  }
  if (n == 0) result.converged = true;
  result.poses.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    result.poses[i].rotation = rotation[i];
    result.poses[i].translation = center[i] - rotation[i] * local_center[i];
  }
  return result;
}

PlausibilityReport check_plausibility(std::span<const SettleBody> bodies, double floor_z,
                                      double contact_tolerance) {
  PlausibilityReport report;
  std::vector<OrientedBox> boxes;
  for (const SettleBody& b : bodies) boxes.push_back(OrientedBox::from(b.proxy, b.pose));
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const double floor_gap = boxes[i].lowest_z() - floor_z;
    report.floor_penetration = std::max(report.floor_penetration, -floor_gap);
    double gap = floor_gap;
    for (std::size_t j = 0; j < boxes.size(); ++j) {
      if (i == j) continue;
      const double pen = separate(boxes[i], boxes[j]).penetration;
      report.pair_penetration = std::max(report.pair_penetration, pen);
      gap = std::min(gap, -pen);
    }
    if (gap > contact_tolerance) ++report.floating;
  }
  return report;
}

RigidPose sample_initial_pose(const AxisAlignedBox& bin, const AxisAlignedBox& object_box,
                              double stack_height, std::mt19937_64& rng, bool full_rotation,
                              const std::string& name) {
  const Vec3 half = 0.5 * object_box.extent();
  Mat3 rotation = Mat3::Identity();
  bool placed = false;
  if (full_rotation) {
    std::normal_distribution<double> normal;
    Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
    rotation = q.normalized().toRotationMatrix();
    placed = fits(footprint_half(rotation, half), bin);
  }
  if (!placed) {
    rotation = Eigen::AngleAxisd(uniform(rng, 0.0, 2.0 * kPi), Vec3::UnitZ()).toRotationMatrix();
    placed = fits(footprint_half(rotation, half), bin);
  }
  if (!placed) {
    std::vector<Mat3> quarter_turns;
    for (int k = 0; k < 4; ++k) {
      const Mat3 r = Eigen::AngleAxisd(k * 0.5 * kPi, Vec3::UnitZ()).toRotationMatrix();
      if (fits(footprint_half(r, half), bin)) quarter_turns.push_back(r);
    }
    if (quarter_turns.empty()) {
      throw PlacementError("object '" + name + "' does not fit the bin footprint");
    }
    rotation = quarter_turns[std::uniform_int_distribution<std::size_t>(
        0, quarter_turns.size() - 1)(rng)];
  }
  const Vec3 rotated = footprint_half(rotation, half);
  const Vec3 slack = (0.5 * bin.extent() - rotated).cwiseMax(0.0);
  const Vec3 bc = bin.center();
  const Vec3 world_center(bc.x() + uniform(rng, -slack.x(), slack.x()),
                          bc.y() + uniform(rng, -slack.y(), slack.y()),
                          std::max(stack_height, bin.min_corner.z()) + kDropGap + rotated.z());
  RigidPose pose;
  pose.rotation = rotation;
  pose.translation = world_center - rotation * object_box.center();
  return pose;
}

void GenerationConfig::validate() const {
  if (num_scenes < 0) throw DomainError("num_scenes must be >= 0");
  if (objects_min < 0 || objects_min > objects_max) {
    throw DomainError("objects per scene needs 0 <= min <= max");
  }
  if (settle_steps < 1) throw DomainError("settle_steps must be >= 1");
  if (!bin.is_valid()) throw DomainError("bin bounds are invalid");
  const CameraSampling& c = cameras;
  if (c.count_min < 1 || c.count_min > c.count_max) {
    throw DomainError("cameras per scene needs 1 <= min <= max");
  }
  if (c.radius_min <= 0.0 || c.radius_min > c.radius_max) {
    throw DomainError("camera radius range is invalid");
  }
  if (c.elevation_min_deg > c.elevation_max_deg || c.azimuth_min_deg > c.azimuth_max_deg) {
    throw DomainError("camera angle ranges are invalid");
  }
  if (c.width < 1 || c.height < 1 || !(c.horizontal_fov_deg > 0.0 && c.horizontal_fov_deg < 180.0)) {
    throw DomainError("camera image size or field of view is invalid");
  }
  if (threads < 1) throw DomainError("threads must be >= 1");
}

ComposedScene generate_scene(const VolumeLibrary& library, const GenerationConfig& config,
                             int index) {
  if (library.empty()) {
    throw DomainError("cannot generate scenes from an empty library");
  }
  std::mt19937_64 rng(splitmix64(splitmix64(config.seed) + static_cast<std::uint64_t>(index)));
  ComposedScene scene;
  scene.index = index;

  const int camera_count =
      std::uniform_int_distribution<int>(config.cameras.count_min, config.cameras.count_max)(rng);
  for (int c = 0; c < camera_count; ++c) scene.cameras.push_back(sample_camera(config, rng));

  const int count = std::uniform_int_distribution<int>(config.objects_min, config.objects_max)(rng);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(library.size()) - 1);
  std::vector<SettleBody> bodies;
  double stack = config.bin.min_corner.z();
  for (int k = 0; k < count; ++k) {
    const int idx = pick(rng);
    const LibraryEntry& entry = library.entries[static_cast<std::size_t>(idx)];
    const AxisAlignedBox proxy = entry.proxy();
    RigidPose pose;
    try {
      pose = sample_initial_pose(config.bin, proxy, stack, rng, config.full_rotation, entry.name);
    } catch (const PlacementError& e) {
      scene.warnings.push_back(e.what());
      continue;
    }
    stack = std::max(stack, OrientedBox::from(proxy, pose).world_aabb().max_corner.z());
    scene.objects.push_back({static_cast<int>(scene.objects.size()) + 1, idx, pose});
    bodies.push_back({proxy, pose});
  }

  const SettleResult settled = settle(bodies, config.bin.min_corner.z(), config.settle_steps,
                                      config.settle, config.bin);
  for (std::size_t i = 0; i < scene.objects.size(); ++i) scene.objects[i].pose = settled.poses[i];
  scene.settled = settled.converged;
  scene.settle_steps = settled.steps;
  if (!settled.converged) {
    scene.warnings.push_back("settling did not converge within " +
                             std::to_string(config.settle_steps) + " steps");
  }
  return scene;
}

std::vector<ComposedScene> generate(const VolumeLibrary& library, const GenerationConfig& config) {
  config.validate();
  if (library.empty()) {
    throw DomainError("cannot generate scenes from an empty library");
  }
  std::vector<ComposedScene> scenes(static_cast<std::size_t>(config.num_scenes));
  parallel_for(config.num_scenes, config.threads, [&](int begin, int end) {
    for (int i = begin; i < end; ++i) scenes[static_cast<std::size_t>(i)] = generate_scene(library, config, i);
  });
  return scenes;
}

Scene to_render_scene(const ComposedScene& scene, const VolumeLibrary& library,
                      std::shared_ptr<const ObjectVolume> background) {
  Scene out;
  out.background = std::move(background);
  for (const PlacedObject& obj : scene.objects) {
    out.objects.push_back(
        {obj.id, library.entries.at(static_cast<std::size_t>(obj.library_index)).volume, obj.pose});
  }
  return out;
}

std::vector<SettleBody> scene_bodies(const ComposedScene& scene, const VolumeLibrary& library) {
  std::vector<SettleBody> out;
  for (const PlacedObject& obj : scene.objects) {
    out.push_back({library.entries.at(static_cast<std::size_t>(obj.library_index)).proxy(), obj.pose});
  }
  return out;
}

AxisAlignedBox default_workspace(const AxisAlignedBox& bin) {
  const Vec3 margin(0.2, 0.2, 0.1);
  return {bin.min_corner - margin, Vec3(bin.max_corner.x() + margin.x(),
                                        bin.max_corner.y() + margin.y(), bin.max_corner.z())};
}

}  // namespace covren
