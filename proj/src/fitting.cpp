// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#include "covren/fitting.hpp"

#include "covren/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

namespace covren {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double inverse_softplus(double y) {
  if (!(y > 0.0)) {
    return -30.0;
  }
  return y > 30.0 ? y : std::log(std::expm1(y));
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) {
  p = std::clamp(p, 1e-9, 1.0 - 1e-9);
  return std::log(p / (1.0 - p));
}

void FitConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ContractError("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ContractError("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ContractError("epsilon must be > 0");
  if (weights.color < 0.0 || weights.depth < 0.0 || weights.mask < 0.0 ||
      weights.occupancy < 0.0) {
    throw ContractError("loss weights must be non-negative");
  }
  if (iterations < 0 || rays_per_iteration < 1) {
    throw ContractError("iterations must be >= 0 and rays_per_iteration >= 1");
  }
}

LossTerms& LossTerms::operator+=(const LossTerms& o) {
  total += o.total;
  color += o.color;
  depth += o.depth;
  mask += o.mask;
  occupancy += o.occupancy;
  return *this;
}

LossTerms& LossTerms::operator*=(double s) {
  total *= s;
  color *= s;
  depth *= s;
  mask *= s;
  occupancy *= s;
  return *this;
}

LatentVolume::LatentVolume(const VoxelGrid& g, double density, const Vec3& radiance,
                           double occupancy_logit)
    : grid(g) {
  const std::size_t n = voxel_count();
  params.resize(kLatentChannels * n);
  first_moment.assign(params.size(), 0.0);
  second_moment.assign(params.size(), 0.0);
  std::fill_n(params.begin(), n, inverse_softplus(density));
  for (int c = 0; c < 3; ++c) {
    std::fill_n(params.begin() + static_cast<std::ptrdiff_t>((kRed + c) * n), n,
                logit(radiance[c]));
  }
  std::fill_n(params.begin() + static_cast<std::ptrdiff_t>(kOccupancyLogit * n), n,
              occupancy_logit);
}

LatentVolume LatentVolume::from_volume(const ObjectVolume& volume) {
  LatentVolume out;
  out.grid = volume.grid;
  const std::size_t n = volume.voxel_count();
  out.params.resize(kLatentChannels * n);
  out.first_moment.assign(out.params.size(), 0.0);
  out.second_moment.assign(out.params.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    out.param(kDensityLatent, i) = inverse_softplus(volume.density[i]);
    for (int c = 0; c < 3; ++c) {
      out.param(kRed + c, i) = logit(volume.radiance[c * n + i]);
    }
    out.param(kOccupancyLogit, i) = volume.occupancy_logit[i];
  }
  return out;
}

ObjectVolume LatentVolume::decode() const {
  ObjectVolume out(grid.dims, grid.box);
  const std::size_t n = voxel_count();
  for (std::size_t i = 0; i < n; ++i) {
    out.density[i] = static_cast<float>(softplus(param(kDensityLatent, i)));
    for (int c = 0; c < 3; ++c) {
      out.radiance[c * n + i] = static_cast<float>(sigmoid(param(kRed + c, i)));
    }
    out.occupancy_logit[i] = static_cast<float>(param(kOccupancyLogit, i));
  }
  return out;
}

Scene LatentScene::decode() const {
  Scene scene;
  if (background) {
    auto bg = std::make_shared<ObjectVolume>(background->decode());
    bg->background = true;
    scene.background = std::move(bg);
  }
  for (const LatentObject& o : objects) {
    scene.objects.push_back(
        SceneObject{o.id, std::make_shared<ObjectVolume>(o.volume.decode()), o.pose});
  }
  return scene;
}

const LatentVolume* LatentScene::find(int owner) const {
  if (owner == kBackgroundOwner) {
    return background ? &*background : nullptr;
  }
  for (const LatentObject& o : objects) {
    if (o.id == owner) return &o.volume;
  }
  return nullptr;
}

LatentVolume* LatentScene::find(int owner) {
  return const_cast<LatentVolume*>(std::as_const(*this).find(owner));
}

namespace {

// Activated values and their derivatives, computed once per optimizer step.
struct DecodedVolume {
  std::size_t n = 0;
  std::vector<double> density, d_density;
  std::vector<double> radiance, d_radiance;  // channel-major

  explicit DecodedVolume(const LatentVolume& lv) : n(lv.voxel_count()) {
    density.resize(n);
    d_density.resize(n);
    radiance.resize(3 * n);
    d_radiance.resize(3 * n);
    for (std::size_t i = 0; i < n; ++i) {
      const double l = lv.param(kDensityLatent, i);
      density[i] = softplus(l);
      d_density[i] = sigmoid(l);
    }
    for (std::size_t k = 0; k < 3 * n; ++k) {
      const double s = sigmoid(lv.params[n + k]);
      radiance[k] = s;
      d_radiance[k] = s * (1.0 - s);
    }
  }
};

struct DecodedScene {
  std::vector<VolumeSlot> slots;
  std::vector<DecodedVolume> volumes;  // parallel to slots
  std::vector<bool> frozen;            // whole slot frozen
  bool freeze_density = false;

  DecodedScene(const LatentScene& scene, const FitConfig& config) {
    if (scene.background) {
      slots.push_back(VolumeSlot{kBackgroundOwner, &scene.background->grid, RigidPose::identity()});
      volumes.emplace_back(*scene.background);
      frozen.push_back(config.freeze_background);
    }
    for (const LatentObject& o : scene.objects) {
      slots.push_back(VolumeSlot{o.id, &o.volume.grid, o.pose});
      volumes.emplace_back(o.volume);
      frozen.push_back(false);
    }
    freeze_density = config.freeze_density;
  }
};

// Receives d loss / d param for (slot, flat param index).
class GradientSink {
 public:
  virtual ~GradientSink() = default;
  virtual void add(std::size_t slot, std::size_t param, double value) = 0;
};

class DenseSink final : public GradientSink {
 public:
  explicit DenseSink(std::vector<std::vector<double>>& buffers) : buffers_(buffers) {}
  void add(std::size_t slot, std::size_t param, double value) override {
    buffers_[slot][param] += value;
  }

 private:
  std::vector<std::vector<double>>& buffers_;
};

class SparseSink final : public GradientSink {
 public:
  void add(std::size_t slot, std::size_t param, double value) override {
    entries_[(static_cast<std::uint64_t>(slot) << 40) | param] += value;
  }
  void merge_into(std::vector<std::vector<double>>& buffers) const {
    for (const auto& [key, value] : entries_) {
      buffers[key >> 40][key & ((std::uint64_t{1} << 40) - 1)] += value;
    }
  }

 private:
  std::unordered_map<std::uint64_t, double> entries_;
};

class ListSink final : public GradientSink {
 public:
  ListSink(std::vector<GradEntry>& out, const DecodedScene& scene) : out_(out), scene_(scene) {}
  void add(std::size_t slot, std::size_t param, double value) override {
    const std::size_t n = scene_.volumes[slot].n;
    out_.push_back(GradEntry{scene_.slots[slot].owner, param % n, static_cast<int>(param / n),
                             value});
  }

 private:
  std::vector<GradEntry>& out_;
  const DecodedScene& scene_;
};

double clamp_probability(double m) { return std::clamp(m, 1e-6, 1.0 - 1e-6); }

// Cross-entropy of predicted probability m against target g, plus d/dm.
std::pair<double, double> cross_entropy(double m, double g) {
  const double mc = clamp_probability(m);
  const double loss = -(g * std::log(mc) + (1.0 - g) * std::log(1.0 - mc));
  const double grad = (m == mc) ? (-g / mc + (1.0 - g) / (1.0 - mc)) : 0.0;
  return {loss, grad};
}

RayLossResult ray_loss_impl(const DecodedScene& scene, const Ray& ray, const RayTargets& targets,
                            const FitConfig& config, std::uint64_t ray_seed, GradientSink& sink) {
  const LossWeights& w = config.weights;
  RayLossResult result;

  const std::vector<SampleSite> sites = trace_samples(scene.slots, ray, config.render, ray_seed);
  RaySampleBatch batch;
  batch.entries.reserve(sites.size());
  for (const SampleSite& site : sites) {
    RaySample s;
    s.t = site.t;
    s.delta = site.delta;
    s.owner = site.owner;
    if (site.stencil.inside) {
      const DecodedVolume& vol = scene.volumes[static_cast<std::size_t>(site.slot)];
      for (int c = 0; c < 8; ++c) {
        const std::size_t i = site.stencil.index[c];
        const double wt = site.stencil.weight[c];
        s.density += wt * vol.density[i];
        s.radiance += wt * Vec3(vol.radiance[i], vol.radiance[vol.n + i], vol.radiance[2 * vol.n + i]);
      }
    }
    batch.entries.push_back(s);
  }
  result.composite = composite(batch);
  const CompositeResult& out = result.composite;

  CompositeUpstream up;
  if (targets.color.allFinite()) {
    const Vec3 diff = out.color - targets.color;
    result.terms.color = w.color * diff.squaredNorm();
    up.d_color = 2.0 * w.color * diff;
  } else {
    result.skipped_nonfinite = true;
  }

  if (targets.depth) {
    if (std::isfinite(*targets.depth) && std::isfinite(targets.depth_scale)) {
      if (w.depth > 0.0 && out.total_opacity > w.depth_opacity_threshold) {
        const double diff = out.depth * targets.depth_scale - *targets.depth;
        result.terms.depth = w.depth * std::abs(diff);
        const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        up.d_depth = w.depth * sign * targets.depth_scale;
      }
    } else {
      result.skipped_nonfinite = true;
    }
  }

  auto mask_terms = [&](const std::map<int, double>& mask_targets, bool amodal) {
    for (const auto& [owner, g] : mask_targets) {
      if (!std::isfinite(g)) {
        result.skipped_nonfinite = true;
        continue;
      }
      const ObjectWeights* ow = out.find(owner);
      const double m = ow ? (amodal ? ow->amodal : ow->modal) : 0.0;
      const auto [loss, grad] = cross_entropy(m, g);
      result.terms.mask += w.mask * loss;
      (amodal ? up.d_amodal : up.d_modal)[owner] += w.mask * grad;
    }
  };
  mask_terms(targets.modal, false);
  mask_terms(targets.amodal, true);

  result.terms.total = result.terms.color + result.terms.depth + result.terms.mask;

  const CompositeGradients grads = composite_backward(batch, up);
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const SampleSite& site = sites[i];
    const std::size_t slot = static_cast<std::size_t>(site.slot);
    if (!site.stencil.inside || scene.frozen[slot]) continue;
    const DecodedVolume& vol = scene.volumes[slot];
    const double g_density = scene.freeze_density ? 0.0 : grads.d_density[i];
    const Vec3& g_rad = grads.d_radiance[i];
    for (int c = 0; c < 8; ++c) {
      const std::size_t v = site.stencil.index[c];
      const double wt = site.stencil.weight[c];
      if (wt == 0.0) continue;
      if (g_density != 0.0) {
        sink.add(slot, kDensityLatent * vol.n + v, g_density * wt * vol.d_density[v]);
      }
      for (int ch = 0; ch < 3; ++ch) {
        if (g_rad[ch] == 0.0) continue;
        const std::size_t k = static_cast<std::size_t>(ch) * vol.n + v;
        sink.add(slot, (kRed + ch) * vol.n + v, g_rad[ch] * wt * vol.d_radiance[k]);
      }
    }
  }
  return result;
}

}  // namespace

RayLossResult ray_loss_and_gradients(const LatentScene& scene, const Ray& ray,
                                     const RayTargets& targets, const FitConfig& config,
                                     std::uint64_t ray_seed) {
  const DecodedScene decoded(scene, config);
  std::vector<GradEntry> entries;
  ListSink sink(entries, decoded);
  RayLossResult result = ray_loss_impl(decoded, ray, targets, config, ray_seed, sink);
  result.gradients = std::move(entries);
  return result;
}

OccupancyLoss occupancy_loss_and_gradients(const LatentVolume& volume,
                                           const OccupancyLabels& labels) {
  const std::size_t n = volume.voxel_count();
  if (labels.size() != n) {
    throw ContractError("occupancy labels have " + std::to_string(labels.size()) +
                        " entries, volume has " + std::to_string(n) + " voxels");
  }
  OccupancyLoss out;
  out.gradients.assign(n, 0.0);
  for (std::int8_t y : labels) {
    if (y >= 0) ++out.labeled;
  }
  if (out.labeled == 0) {
    return out;
  }
  const double inv = 1.0 / static_cast<double>(out.labeled);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0) continue;
    const double l = volume.param(kOccupancyLogit, i);
    const double y = labels[i] > 0 ? 1.0 : 0.0;
    // BCE(sigmoid(l), y) = softplus(l) - y * l
    out.loss += (softplus(l) - y * l) * inv;
    out.gradients[i] = (sigmoid(l) - y) * inv;
  }
  return out;
}

OccupancyLabels occupancy_targets_from_density(const ObjectVolume& volume,
                                               double density_threshold) {
  if (!(density_threshold > 0.0)) {
    throw ContractError("density threshold must be > 0");
  }
  OccupancyLabels labels(volume.voxel_count());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = volume.density[i] > density_threshold ? 1 : 0;
  }
  return labels;
}

void TrainView::validate() const {
  camera.intrinsics.validate();
  const int w = camera.intrinsics.width;
  const int h = camera.intrinsics.height;
  if (rgb.width != w || rgb.height != h || rgb.channels != 3) {
    throw ContractError("train view rgb must be " + std::to_string(w) + "x" +
                        std::to_string(h) + "x3");
  }
  if (depth && (depth->width != w || depth->height != h || depth->channels != 1)) {
    throw ContractError("train view depth does not match the camera size");
  }
  for (const auto* masks : {&modal_masks, &amodal_masks}) {
    for (const auto& [id, m] : *masks) {
      if (m.width != w || m.height != h || m.channels != 1) {
        throw ContractError("train view mask for object " + std::to_string(id) +
                            " does not match the camera size");
      }
    }
  }
}

std::vector<TrainRay> sample_train_rays(std::span<const TrainView> views, int count,
                                        std::mt19937_64& rng) {
  if (views.empty()) {
    throw ContractError("sample_train_rays needs at least one view");
  }
  std::vector<TrainRay> rays;
  rays.reserve(static_cast<std::size_t>(std::max(count, 0)));
  std::uniform_int_distribution<std::size_t> pick_view(0, views.size() - 1);
  for (int r = 0; r < count; ++r) {
    const TrainView& view = views[pick_view(rng)];
    const CameraIntrinsics& K = view.camera.intrinsics;
    const int u = std::uniform_int_distribution<int>(0, K.width - 1)(rng);
    const int v = std::uniform_int_distribution<int>(0, K.height - 1)(rng);

    TrainRay tr;
    tr.ray = ray_for_pixel(K, view.camera.pose, u, v);
    tr.seed = rng();
    tr.targets.color = Vec3(view.rgb.at(u, v, 0), view.rgb.at(u, v, 1), view.rgb.at(u, v, 2));
    tr.targets.depth_scale = view.camera.pose.rotation.col(2).dot(tr.ray.direction);
    if (view.depth) {
      tr.targets.depth = view.depth->at(u, v);
    }
    for (const auto& [id, m] : view.modal_masks) tr.targets.modal[id] = m.at(u, v);
    for (const auto& [id, m] : view.amodal_masks) tr.targets.amodal[id] = m.at(u, v);
    rays.push_back(std::move(tr));
  }
  return rays;
}

Fitter::Fitter(LatentScene scene, FitConfig config)
    : scene_(std::move(scene)), config_(std::move(config)) {
  config_.validate();
  auto prepare = [](LatentVolume& v) {
    v.first_moment.resize(v.params.size(), 0.0);
    v.second_moment.resize(v.params.size(), 0.0);
  };
  if (scene_.background) prepare(*scene_.background);
  for (LatentObject& o : scene_.objects) prepare(o.volume);
}

void Fitter::set_occupancy_labels(int owner, OccupancyLabels labels) {
  const LatentVolume* v = scene_.find(owner);
  if (v == nullptr) {
    throw ContractError("no latent volume for owner " + std::to_string(owner));
  }
  if (labels.size() != v->voxel_count()) {
    throw ContractError("occupancy labels do not match volume size");
  }
  labels_[owner] = std::move(labels);
}

LossTerms Fitter::evaluate(std::span<const TrainRay> rays) const {
  const DecodedScene decoded(scene_, config_);
  LossTerms sum;
  std::vector<GradEntry> unused;
  ListSink sink(unused, decoded);
  for (const TrainRay& r : rays) {
    unused.clear();
    sum += ray_loss_impl(decoded, r.ray, r.targets, config_, r.seed, sink).terms;
  }
  if (!rays.empty()) sum *= 1.0 / static_cast<double>(rays.size());
  return sum;
}

LossTerms Fitter::step(std::span<const TrainRay> rays) {
  const DecodedScene decoded(scene_, config_);
  const std::size_t num_slots = decoded.slots.size();

  std::vector<LatentVolume*> latents;
  if (scene_.background) latents.push_back(&*scene_.background);
  for (LatentObject& o : scene_.objects) latents.push_back(&o.volume);

  std::vector<std::vector<double>> grads(num_slots);
  for (std::size_t s = 0; s < num_slots; ++s) grads[s].assign(latents[s]->params.size(), 0.0);

  const int n = static_cast<int>(rays.size());
  const int threads = std::max(1, std::min(config_.threads, n));
  std::vector<LossTerms> partial(static_cast<std::size_t>(threads));
  if (threads == 1) {
    DenseSink sink(grads);
    for (const TrainRay& r : rays) {
      partial[0] += ray_loss_impl(decoded, r.ray, r.targets, config_, r.seed, sink).terms;
    }
  } else {
    // Per-thread sparse accumulation, merged in thread order.
    std::vector<SparseSink> sinks(static_cast<std::size_t>(threads));
    const int chunk = (n + threads - 1) / threads;
    parallel_for(threads, threads, [&](int t_begin, int t_end) {
      for (int t = t_begin; t < t_end; ++t) {
        const int begin = t * chunk;
        const int end = std::min(n, begin + chunk);
        for (int i = begin; i < end; ++i) {
          const TrainRay& r = rays[static_cast<std::size_t>(i)];
          partial[static_cast<std::size_t>(t)] +=
              ray_loss_impl(decoded, r.ray, r.targets, config_, r.seed,
                            sinks[static_cast<std::size_t>(t)])
                  .terms;
        }
      }
    });
    for (const SparseSink& s : sinks) s.merge_into(grads);
  }

  LossTerms terms;
  for (const LossTerms& p : partial) terms += p;
  if (n > 0) {
    const double inv = 1.0 / n;
    terms *= inv;
    for (auto& g : grads) {
      for (double& x : g) x *= inv;
    }
  }

  if (config_.weights.occupancy > 0.0) {
    for (std::size_t s = 0; s < num_slots; ++s) {
      const int owner = decoded.slots[s].owner;
      if (owner == kBackgroundOwner) continue;
      const LatentVolume& lv = *latents[s];
      OccupancyLabels self_labels;
      const OccupancyLabels* labels = nullptr;
      if (auto it = labels_.find(owner); it != labels_.end()) {
        labels = &it->second;
      } else {
        const DecodedVolume& dv = decoded.volumes[s];
        self_labels.resize(dv.n);
        for (std::size_t i = 0; i < dv.n; ++i) {
          self_labels[i] = dv.density[i] > config_.occupancy_density_threshold ? 1 : 0;
        }
        labels = &self_labels;
      }
      const OccupancyLoss occ = occupancy_loss_and_gradients(lv, *labels);
      terms.occupancy += config_.weights.occupancy * occ.loss;
      const std::size_t offset = kOccupancyLogit * lv.voxel_count();
      for (std::size_t i = 0; i < occ.gradients.size(); ++i) {
        grads[s][offset + i] += config_.weights.occupancy * occ.gradients[i];
      }
    }
    terms.total += terms.occupancy;
  }

  // Exclusive write phase: one Adam update per latent tensor.
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  for (std::size_t s = 0; s < num_slots; ++s) {
    if (decoded.frozen[s]) continue;
    LatentVolume& lv = *latents[s];
    ++lv.steps;
    const double bias1 = 1.0 - std::pow(b1, static_cast<double>(lv.steps));
    const double bias2 = 1.0 - std::pow(b2, static_cast<double>(lv.steps));
    const double step_size = config_.learning_rate / bias1;
    const std::size_t nvox = lv.voxel_count();
    const std::size_t begin = config_.freeze_density ? nvox : 0;
    const std::vector<double>& g = grads[s];
    for (std::size_t k = begin; k < lv.params.size(); ++k) {
      double& m = lv.first_moment[k];
      double& v = lv.second_moment[k];
      m = b1 * m + (1.0 - b1) * g[k];
      v = b2 * v + (1.0 - b2) * g[k] * g[k];
      if (m == 0.0) continue;
      lv.params[k] -= step_size * m / (std::sqrt(v / bias2) + config_.epsilon);
    }
  }
  return terms;
}

FitResult fit(LatentScene scene, std::span<const TrainView> views, const FitConfig& config,
              std::uint64_t seed, const std::map<int, OccupancyLabels>& occupancy_labels) {
  if (views.empty()) {
    throw ContractError("fit needs at least one training view");
  }
  for (const TrainView& v : views) v.validate();
  Fitter fitter(std::move(scene), config);
  for (const auto& [owner, labels] : occupancy_labels) {
    fitter.set_occupancy_labels(owner, labels);
  }

  FitResult result;
  result.loss_curve.reserve(static_cast<std::size_t>(config.iterations));
  std::mt19937_64 rng(seed);
  for (int it = 0; it < config.iterations; ++it) {
    const std::vector<TrainRay> rays = sample_train_rays(views, config.rays_per_iteration, rng);
    result.loss_curve.push_back(fitter.step(rays));
  }
  result.scene = fitter.scene();
  return result;
}

}  // namespace covren
