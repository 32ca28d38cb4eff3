// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "covren/geometry.hpp"
#include "covren/image.hpp"
#include "covren/volume.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <vector>

namespace covren {

/// Owner id of background samples.
inline constexpr int kBackgroundOwner = 0;

/// One point sample on a ray. `delta` is the length of ray the sample stands
/// for: the width of its stratum inside its owner's own sampling interval.
struct RaySample {
  double t = 0.0;
  double delta = 0.0;
  int owner = kBackgroundOwner;
  double density = 0.0;
  Vec3 radiance = Vec3::Zero();
};

/// Samples from every owner merged into one list ordered by (t, owner).
struct RaySampleBatch {
  std::vector<RaySample> entries;

  /// Stable sort by (t, owner).
  void sort();
  bool is_sorted() const;
};

struct ObjectWeights {
  int owner = kBackgroundOwner;
  double modal = 0.0;      ///< sum of T_i * alpha_i over the owner's samples, scene transmittance
  double amodal = 0.0;     ///< same, with transmittance from the owner's own samples only
  double alpha_sum = 0.0;  ///< plain sum of the owner's alphas
  double depth = 0.0;      ///< the owner's share of CompositeResult::depth
};

struct CompositeResult {
  Vec3 color = Vec3::Zero();
  double depth = 0.0;  ///< expected ray distance, sum of T_i * alpha_i * t_i
  double total_opacity = 0.0;
  std::vector<ObjectWeights> per_object;  ///< ascending by owner

  const ObjectWeights* find(int owner) const;
};

/// Throws ContractError when the batch is not ordered by (t, owner) or holds
/// negative t, delta or density.
CompositeResult composite(const RaySampleBatch& batch);

/// Upstream derivatives of a scalar loss with respect to the composite outputs.
struct CompositeUpstream {
  Vec3 d_color = Vec3::Zero();
  double d_depth = 0.0;
  std::map<int, double> d_modal;
  std::map<int, double> d_amodal;
};

/// d loss / d density and d loss / d radiance for each batch entry, in batch order.
struct CompositeGradients {
  std::vector<double> d_density;
  std::vector<Vec3> d_radiance;
};

CompositeGradients composite_backward(const RaySampleBatch& batch,
                                      const CompositeUpstream& upstream);

enum class SamplingMode { kDeterministic, kStratified };

/// n ordered ray distances inside [t_enter, t_exit]: stratum midpoints, or one
/// uniform draw per stratum. A degenerate interval yields its midpoint only.
std::vector<double> sample_ts(double t_enter, double t_exit, int n, SamplingMode mode,
                              std::mt19937_64* rng = nullptr);

struct RenderConfig {
  int samples_per_object = 64;
  int samples_background = 64;
  double t_far = 10.0;
  bool stratified = false;
  std::uint64_t seed = 0;
  /// Report depth as ray distance instead of camera-frame z.
  bool ray_distance_depth = false;
  int threads = 1;
};

struct SceneObject {
  int id = 1;  ///< owner id, must be >= 1 and unique in a scene
  std::shared_ptr<const ObjectVolume> volume;
  RigidPose pose;
};

struct Scene {
  std::vector<SceneObject> objects;
  std::shared_ptr<const ObjectVolume> background;  ///< posed at the world origin; may be null

  void validate() const;
};

/// A posed voxel grid the tracer can sample; the values live elsewhere.
struct VolumeSlot {
  int owner = kBackgroundOwner;
  const VoxelGrid* grid = nullptr;
  RigidPose pose;
};

/// Sample position and trilinear stencil before any volume values are read.
struct SampleSite {
  double t = 0.0;
  double delta = 0.0;
  int owner = kBackgroundOwner;
  int slot = 0;
  Stencil stencil;
};

/// Draw samples for every slot the ray hits and return them ordered by
/// (t, owner). Background slots (owner 0) use samples_background.
std::vector<SampleSite> trace_samples(std::span<const VolumeSlot> slots, const Ray& ray,
                                      const RenderConfig& config, std::uint64_t ray_seed);

/// Stateless 64-bit mixer used to derive independent seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Per-pixel seed used by render_scene for stratified sampling.
std::uint64_t pixel_seed(std::uint64_t seed, int u, int v);

/// Samples of every volume the ray crosses, merged and ordered for composite().
RaySampleBatch gather_samples(const Scene& scene, const Ray& ray, const RenderConfig& config,
                              std::uint64_t ray_seed = 0);

CompositeResult render_ray(const Scene& scene, const Ray& ray, const RenderConfig& config,
                           std::uint64_t ray_seed = 0);

struct RenderOutput {
  Image rgb;      ///< 3 channels
  Image depth;    ///< camera-z (or ray distance) in meters
  Image opacity;
  std::map<int, Image> modal_masks;   ///< by object id, background excluded
  std::map<int, Image> amodal_masks;
};

RenderOutput render_scene(const Scene& scene, const Camera& camera, const RenderConfig& config);

/// Runs fn(begin, end) over [0, n) split into contiguous chunks on up to
/// `threads` threads. Chunk boundaries never affect the values computed.
void parallel_for(int n, int threads, const std::function<void(int, int)>& fn);

}  // namespace covren
