// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#include "covren/compositor.hpp"

#include "covren/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <string>
#include <exception>
#include <thread>

namespace covren {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

namespace {

bool sample_less(double ta, int oa, double tb, int ob) {
  return ta < tb || (ta == tb && oa < ob);
}

// Dense index for the owners present in a batch.
struct OwnerTable {
  std::vector<int> owners;

  explicit OwnerTable(const RaySampleBatch& batch) {
    for (const RaySample& s : batch.entries) owners.push_back(s.owner);
    std::sort(owners.begin(), owners.end());
    owners.erase(std::unique(owners.begin(), owners.end()), owners.end());
  }
  std::size_t slot(int owner) const {
    return static_cast<std::size_t>(std::lower_bound(owners.begin(), owners.end(), owner) -
                                    owners.begin());
  }
};

void check_batch(const RaySampleBatch& batch) {
  if (!batch.is_sorted()) {
    throw ContractError("ray sample batch is not sorted by (t, owner)");
  }
  for (const RaySample& s : batch.entries) {
    if (!(s.t >= 0.0) || !(s.delta >= 0.0) || !(s.density >= 0.0)) {
      throw ContractError("ray sample batch holds negative or NaN t, delta or density");
    }
  }
}

}  // namespace

void RaySampleBatch::sort() {
  std::stable_sort(entries.begin(), entries.end(), [](const RaySample& a, const RaySample& b) {
    return sample_less(a.t, a.owner, b.t, b.owner);
  });
}

bool RaySampleBatch::is_sorted() const {
  for (std::size_t i = 1; i < entries.size(); ++i) {
    const RaySample& a = entries[i - 1];
    const RaySample& b = entries[i];
    if (sample_less(b.t, b.owner, a.t, a.owner)) {
      return false;
    }
  }
  return true;
}

const ObjectWeights* CompositeResult::find(int owner) const {
  for (const ObjectWeights& w : per_object) {
    if (w.owner == owner) return &w;
  }
  return nullptr;
}

CompositeResult composite(const RaySampleBatch& batch) {
  check_batch(batch);
  CompositeResult out;
  const OwnerTable table(batch);
  out.per_object.resize(table.owners.size());
  for (std::size_t k = 0; k < table.owners.size(); ++k) out.per_object[k].owner = table.owners[k];
  std::vector<double> own_extinction(table.owners.size(), 0.0);

  double extinction = 0.0;
  for (const RaySample& s : batch.entries) {
    const double e = s.delta * s.density;
    const double alpha = -std::expm1(-e);
    const double weight = std::exp(-extinction) * alpha;
    out.color += weight * s.radiance;
    out.depth += weight * s.t;
    out.total_opacity += weight;

    const std::size_t k = table.slot(s.owner);
    ObjectWeights& ow = out.per_object[k];
    ow.modal += weight;
    ow.amodal += std::exp(-own_extinction[k]) * alpha;
    ow.alpha_sum += alpha;
    ow.depth += weight * s.t;

    extinction += e;
    own_extinction[k] += e;
  }
  return out;
}

CompositeGradients composite_backward(const RaySampleBatch& batch,
                                      const CompositeUpstream& upstream) {
  check_batch(batch);
  const std::size_t n = batch.entries.size();
  CompositeGradients grads;
  grads.d_density.assign(n, 0.0);
  grads.d_radiance.assign(n, Vec3::Zero());
  if (n == 0) {
    return grads;
  }

  const OwnerTable table(batch);
  std::vector<double> d_modal(table.owners.size(), 0.0);
  std::vector<double> d_amodal(table.owners.size(), 0.0);
  for (const auto& [owner, g] : upstream.d_modal) {
    const std::size_t k = table.slot(owner);
    if (k < table.owners.size() && table.owners[k] == owner) d_modal[k] = g;
  }
  for (const auto& [owner, g] : upstream.d_amodal) {
    const std::size_t k = table.slot(owner);
    if (k < table.owners.size() && table.owners[k] == owner) d_amodal[k] = g;
  }

  // Forward pass: transmittance after each sample and each owner's total
  // extinction (the amodal output only depends on that total).
  std::vector<double> weight(n), trans_after(n), g(n);
  std::vector<double> own_total(table.owners.size(), 0.0);
  std::vector<std::size_t> owner_slot(n);
  double extinction = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const RaySample& s = batch.entries[i];
    const double e = s.delta * s.density;
    const double before = std::exp(-extinction);
    weight[i] = before * -std::expm1(-e);
    extinction += e;
    trans_after[i] = std::exp(-extinction);
    owner_slot[i] = table.slot(s.owner);
    own_total[owner_slot[i]] += e;
    g[i] = upstream.d_color.dot(s.radiance) + upstream.d_depth * s.t + d_modal[owner_slot[i]];
  }

  // d w_i / d e_j = T_{j+1} if i == j, -w_i if i > j, 0 otherwise.
  double suffix = 0.0;
  for (std::size_t j = n; j-- > 0;) {
    const RaySample& s = batch.entries[j];
    double d_e = trans_after[j] * g[j] - suffix;
    d_e += d_amodal[owner_slot[j]] * std::exp(-own_total[owner_slot[j]]);
    grads.d_density[j] = d_e * s.delta;
    grads.d_radiance[j] = weight[j] * upstream.d_color;
    suffix += weight[j] * g[j];
  }
  return grads;
}

std::vector<double> sample_ts(double t_enter, double t_exit, int n, SamplingMode mode,
                              std::mt19937_64* rng) {
  if (n < 1) {
    throw ContractError("sample_ts needs n >= 1");
  }
  if (!(t_enter >= 0.0) || !(t_exit >= t_enter)) {
    throw ContractError("sample_ts needs 0 <= t_enter <= t_exit");
  }
  const double length = t_exit - t_enter;
  if (length < 1e-9) {
    return {0.5 * (t_enter + t_exit)};
  }
  if (mode == SamplingMode::kStratified && rng == nullptr) {
    throw ContractError("stratified sampling needs an rng");
  }
  const double stride = length / n;
  std::vector<double> ts(static_cast<std::size_t>(n));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    double offset = 0.5;
    if (mode == SamplingMode::kStratified) {
      offset = uniform(*rng);
      if (offset <= 0.0) offset = 0.5;
    }
    ts[static_cast<std::size_t>(i)] = t_enter + (i + offset) * stride;
  }
  return ts;
}

void Scene::validate() const {
  std::set<int> ids;
  for (const SceneObject& o : objects) {
    if (o.id < 1) {
      throw ContractError("scene object ids must be >= 1, got " + std::to_string(o.id));
    }
    if (!ids.insert(o.id).second) {
      throw ContractError("duplicate scene object id " + std::to_string(o.id));
    }
    if (!o.volume) {
      throw ContractError("scene object " + std::to_string(o.id) + " has no volume");
    }
  }
}

std::vector<SampleSite> trace_samples(std::span<const VolumeSlot> slots, const Ray& ray,
                                      const RenderConfig& config, std::uint64_t ray_seed) {
  std::vector<SampleSite> sites;
  const SamplingMode mode =
      config.stratified ? SamplingMode::kStratified : SamplingMode::kDeterministic;
  for (std::size_t s = 0; s < slots.size(); ++s) {
    const VolumeSlot& slot = slots[s];
    const int n =
        slot.owner == kBackgroundOwner ? config.samples_background : config.samples_per_object;
    if (n <= 0) continue;
    const auto hit = intersect_ray_box(ray, slot.grid->box, slot.pose);
    if (!hit) continue;
    const double t0 = hit->t_enter;
    const double t1 = std::min(hit->t_exit, config.t_far);
    if (t0 >= t1) continue;

    std::mt19937_64 rng(splitmix64(ray_seed ^ splitmix64(static_cast<std::uint64_t>(slot.owner))));
    const std::vector<double> ts = sample_ts(t0, t1, n, mode, &rng);
    const double delta = (t1 - t0) / static_cast<double>(ts.size());
    const Vec3 local_origin = world_to_object(ray.origin, slot.pose);
    const Vec3 local_dir = slot.pose.rotation.transpose() * ray.direction;
    for (double t : ts) {
      SampleSite site;
      site.t = t;
      site.delta = delta;
      site.owner = slot.owner;
      site.slot = static_cast<int>(s);
      site.stencil = slot.grid->stencil(local_origin + t * local_dir);
      sites.push_back(site);
    }
  }
  std::stable_sort(sites.begin(), sites.end(), [](const SampleSite& a, const SampleSite& b) {
    return sample_less(a.t, a.owner, b.t, b.owner);
  });
  return sites;
}

std::uint64_t pixel_seed(std::uint64_t seed, int u, int v) {
  return splitmix64(seed ^ splitmix64((static_cast<std::uint64_t>(v) << 32) |
                                      static_cast<std::uint32_t>(u)));
}

RaySampleBatch gather_samples(const Scene& scene, const Ray& ray, const RenderConfig& config,
                              std::uint64_t ray_seed) {
  std::vector<VolumeSlot> slots;
  std::vector<const ObjectVolume*> volumes;
  slots.reserve(scene.objects.size() + 1);
  if (scene.background) {
    slots.push_back(VolumeSlot{kBackgroundOwner, &scene.background->grid, RigidPose::identity()});
    volumes.push_back(scene.background.get());
  }
  for (const SceneObject& o : scene.objects) {
    slots.push_back(VolumeSlot{o.id, &o.volume->grid, o.pose});
    volumes.push_back(o.volume.get());
  }

  const std::vector<SampleSite> sites = trace_samples(slots, ray, config, ray_seed);
  RaySampleBatch batch;
  batch.entries.reserve(sites.size());
  for (const SampleSite& site : sites) {
    const ObjectVolume& vol = *volumes[static_cast<std::size_t>(site.slot)];
    const std::size_t nvox = vol.voxel_count();
    RaySample s;
    s.t = site.t;
    s.delta = site.delta;
    s.owner = site.owner;
    if (site.stencil.inside) {
      for (int c = 0; c < 8; ++c) {
        const std::size_t i = site.stencil.index[c];
        const double w = site.stencil.weight[c];
        s.density += w * vol.density[i];
        s.radiance += w * Vec3(vol.radiance[i], vol.radiance[nvox + i], vol.radiance[2 * nvox + i]);
      }
    }
    batch.entries.push_back(s);
  }
  return batch;
}

CompositeResult render_ray(const Scene& scene, const Ray& ray, const RenderConfig& config,
                           std::uint64_t ray_seed) {
  return composite(gather_samples(scene, ray, config, ray_seed));
}

void parallel_for(int n, int threads, const std::function<void(int, int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads <= 1) {
    if (n > 0) fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  const int chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int begin = t * chunk;
    const int end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, &errors, t, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (std::thread& th : pool) th.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

RenderOutput render_scene(const Scene& scene, const Camera& camera, const RenderConfig& config) {
  scene.validate();
  camera.intrinsics.validate();
  const int w = camera.intrinsics.width;
  const int h = camera.intrinsics.height;

  RenderOutput out;
  out.rgb = Image(w, h, 3);
  out.depth = Image(w, h, 1);
  out.opacity = Image(w, h, 1);
  for (const SceneObject& o : scene.objects) {
    out.modal_masks.emplace(o.id, Image(w, h, 1));
    out.amodal_masks.emplace(o.id, Image(w, h, 1));
  }

  // Buffers are pre-sized above; each pixel is written by exactly one thread.
  parallel_for(h, config.threads, [&](int row_begin, int row_end) {
    for (int v = row_begin; v < row_end; ++v) {
      for (int u = 0; u < w; ++u) {
        const Ray ray = ray_for_pixel(camera.intrinsics, camera.pose, u, v);
        const CompositeResult r = render_ray(scene, ray, config, pixel_seed(config.seed, u, v));
        for (int c = 0; c < 3; ++c) out.rgb.at(u, v, c) = static_cast<float>(r.color[c]);
        double depth = r.depth;
        if (!config.ray_distance_depth) {
          depth *= camera.pose.rotation.col(2).dot(ray.direction);
        }
        out.depth.at(u, v) = static_cast<float>(depth);
        out.opacity.at(u, v) = static_cast<float>(r.total_opacity);
        for (const ObjectWeights& ow : r.per_object) {
          if (ow.owner == kBackgroundOwner) continue;
          out.modal_masks.at(ow.owner).at(u, v) = static_cast<float>(ow.modal);
          out.amodal_masks.at(ow.owner).at(u, v) = static_cast<float>(ow.amodal);
        }
      }
    }
  });
  return out;
}

}  // namespace covren
