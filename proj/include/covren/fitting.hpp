// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "covren/compositor.hpp"
#include "covren/image.hpp"
#include "covren/volume.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace covren {

struct LossWeights {
  double color = 1.0;
  double depth = 0.1;
  double mask = 0.1;
  double occupancy = 0.01;
  /// Depth L1 only applies to rays whose current opacity exceeds this.
  double depth_opacity_threshold = 0.1;
};

struct FitConfig {
  int iterations = 1000;
  int rays_per_iteration = 1024;
  // Adam defaults.
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  LossWeights weights;
  RenderConfig render;
  bool freeze_background = false;
  bool freeze_density = false;
  /// Self-supervised occupancy labels: density above this counts as occupied.
  double occupancy_density_threshold = 1.0;
  int threads = 1;

  void validate() const;
};

/// Latent channels per voxel. Parameter (channel, voxel) lives at
/// channel * N + voxel in LatentVolume::params.
enum LatentChannel : int {
  kDensityLatent = 0,  ///< density = softplus(latent)
  kRed = 1,            ///< radiance = sigmoid(latent)
  kGreen = 2,
  kBlue = 3,
  kOccupancyLogit = 4,
};
inline constexpr int kLatentChannels = 5;

double softplus(double x);
double inverse_softplus(double y);
double sigmoid(double x);
double logit(double p);

/// Optimizer-side shadow of an ObjectVolume. Decoding always yields density
/// >= 0 and radiance in [0, 1].
struct LatentVolume {
  VoxelGrid grid;
  std::vector<double> params;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::int64_t steps = 0;

  LatentVolume() = default;
  /// Uniform initialisation.
  LatentVolume(const VoxelGrid& grid, double density, const Vec3& radiance,
               double occupancy_logit = 0.0);
  static LatentVolume from_volume(const ObjectVolume& volume);

  std::size_t voxel_count() const { return grid.dims.count(); }
  double& param(int channel, std::size_t voxel) {
    return params[static_cast<std::size_t>(channel) * voxel_count() + voxel];
  }
  double param(int channel, std::size_t voxel) const {
    return params[static_cast<std::size_t>(channel) * voxel_count() + voxel];
  }
  ObjectVolume decode() const;
};

struct LatentObject {
  int id = 1;
  LatentVolume volume;
  RigidPose pose;
};

struct LatentScene {
  std::vector<LatentObject> objects;
  std::optional<LatentVolume> background;

  Scene decode() const;
  /// Owner id 0 is the background.
  const LatentVolume* find(int owner) const;
  LatentVolume* find(int owner);
};

struct RayTargets {
  Vec3 color = Vec3::Zero();
  /// Camera-frame z in meters; NaN or nullopt means unsupervised.
  std::optional<double> depth;
  /// Camera-frame z per unit of ray distance for this ray.
  double depth_scale = 1.0;
  std::map<int, double> modal;   ///< object id -> target modal mask value
  std::map<int, double> amodal;  ///< object id -> target amodal mask value
};

struct LossTerms {
  double total = 0.0;
  double color = 0.0;
  double depth = 0.0;
  double mask = 0.0;
  double occupancy = 0.0;

  LossTerms& operator+=(const LossTerms& o);
  LossTerms& operator*=(double s);
};

struct GradEntry {
  int volume = 0;  ///< owner id, 0 = background
  std::size_t voxel = 0;
  int channel = kDensityLatent;
  double value = 0.0;
};

struct RayLossResult {
  LossTerms terms;
  std::vector<GradEntry> gradients;  ///< may repeat (volume, voxel, channel) keys; sum them
  CompositeResult composite;
  bool skipped_nonfinite = false;
};

/// Squared color error, L1 depth (gated on opacity), and mask cross-entropy
/// for one ray, with exact gradients w.r.t. every latent the ray touches.
RayLossResult ray_loss_and_gradients(const LatentScene& scene, const Ray& ray,
                                     const RayTargets& targets, const FitConfig& config,
                                     std::uint64_t ray_seed = 0);

/// Per-voxel labels: 1 occupied, 0 free, -1 unlabeled (skipped).
using OccupancyLabels = std::vector<std::int8_t>;

struct OccupancyLoss {
  double loss = 0.0;               ///< mean BCE over labeled voxels
  std::vector<double> gradients;   ///< d loss / d occupancy_logit, one per voxel
  std::size_t labeled = 0;
};

OccupancyLoss occupancy_loss_and_gradients(const LatentVolume& volume,
                                           const OccupancyLabels& labels);

OccupancyLabels occupancy_targets_from_density(const ObjectVolume& volume,
                                               double density_threshold);

struct TrainView {
  Camera camera;
  Image rgb;                          ///< 3 channels
  std::optional<Image> depth;         ///< camera-z meters, NaN = unsupervised
  std::map<int, Image> modal_masks;   ///< object id -> 1-channel probability map
  std::map<int, Image> amodal_masks;

  void validate() const;
};

struct TrainRay {
  Ray ray;
  RayTargets targets;
  std::uint64_t seed = 0;
};

std::vector<TrainRay> sample_train_rays(std::span<const TrainView> views, int count,
                                        std::mt19937_64& rng);

/// Holds the latent scene and runs one optimizer update per step.
class Fitter {
 public:
  Fitter(LatentScene scene, FitConfig config);

  /// Labels for an object's occupancy term; objects without labels fall back
  /// to occupancy_targets_from_density on the current decoded density.
  void set_occupancy_labels(int owner, OccupancyLabels labels);

  /// Accumulates gradients over `rays` (mean loss), adds the occupancy term,
  /// and applies one Adam update to every non-frozen latent tensor.
  LossTerms step(std::span<const TrainRay> rays);

  /// Loss over `rays` without updating anything.
  LossTerms evaluate(std::span<const TrainRay> rays) const;

  const LatentScene& scene() const { return scene_; }
  const FitConfig& config() const { return config_; }

 private:
  LatentScene scene_;
  FitConfig config_;
  std::map<int, OccupancyLabels> labels_;
};

struct FitResult {
  LatentScene scene;
  std::vector<LossTerms> loss_curve;  ///< one entry per iteration
};

FitResult fit(LatentScene scene, std::span<const TrainView> views, const FitConfig& config,
              std::uint64_t seed, const std::map<int, OccupancyLabels>& occupancy_labels = {});

}  // namespace covren
