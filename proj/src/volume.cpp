// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#include "covren/volume.hpp"

#include "covren/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

namespace covren {

static_assert(std::endian::native == std::endian::little,
              "covv IO assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'C', 'O', 'V', 'V'};
constexpr std::uint32_t kVersion = 1;
// 2^28 voxels is ~7 GiB of payload; anything larger is treated as corrupt.
constexpr std::uint64_t kMaxVoxels = std::uint64_t{1} << 28;

// Continuous voxel coordinate along one axis, clamped to the outermost
// voxel centers so boundary half-voxels take edge values.
inline void axis_lerp(double p, double lo, double hi, int n, int& i0, double& frac) {
  double g = (p - lo) / (hi - lo) * n - 0.5;
  g = std::clamp(g, 0.0, static_cast<double>(n - 1));
  i0 = std::min(static_cast<int>(std::floor(g)), n - 2);
  frac = g - i0;
}

template <class T>
void write_pod(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
void write_array(std::ofstream& out, const std::vector<T>& values) {
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(T)));
}

class Reader {
 public:
  Reader(std::ifstream& in, const std::filesystem::path& path) : in_(in), path_(path) {}

  template <class T>
  T pod(const char* what) {
    T value{};
    read(reinterpret_cast<char*>(&value), sizeof(T), what);
    return value;
  }

  template <class T>
  void array(std::vector<T>& values, std::size_t n, const char* what) {
    values.resize(n);
    read(reinterpret_cast<char*>(values.data()), n * sizeof(T), what);
  }

  void read(char* dst, std::size_t bytes, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in_.gcount()) != bytes) {
      throw FormatError(path_.string() + ": truncated covv file while reading " + what);
    }
  }

 private:
  std::ifstream& in_;
  const std::filesystem::path& path_;
};

}  // namespace

Vec3 VoxelGrid::voxel_size() const {
  const Vec3 e = box.extent();
  return Vec3(e.x() / dims.width, e.y() / dims.height, e.z() / dims.depth);
}

Vec3 VoxelGrid::voxel_center(int z, int y, int x) const {
  const Vec3 s = voxel_size();
  return box.min_corner + Vec3((x + 0.5) * s.x(), (y + 0.5) * s.y(), (z + 0.5) * s.z());
}

Stencil VoxelGrid::stencil(const Vec3& p) const {
  Stencil st;
  if (!box.contains(p)) {
    return st;
  }
  st.inside = true;
  int x0, y0, z0;
  double fx, fy, fz;
  axis_lerp(p.x(), box.min_corner.x(), box.max_corner.x(), dims.width, x0, fx);
  axis_lerp(p.y(), box.min_corner.y(), box.max_corner.y(), dims.height, y0, fy);
  axis_lerp(p.z(), box.min_corner.z(), box.max_corner.z(), dims.depth, z0, fz);
  for (int corner = 0; corner < 8; ++corner) {
    const int dx = corner & 1;
    const int dy = (corner >> 1) & 1;
    const int dz = (corner >> 2) & 1;
    st.index[corner] = dims.index(z0 + dz, y0 + dy, x0 + dx);
    st.weight[corner] = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy) * (dz ? fz : 1.0 - fz);
  }
  return st;
}

ObjectVolume::ObjectVolume(GridDims dims, AxisAlignedBox box)
    : grid{dims, box},
      density(dims.count(), 0.0f),
      radiance(3 * dims.count(), 0.0f),
      occupancy_logit(dims.count(), 0.0f) {}

void ObjectVolume::set_radiance(std::size_t i, const Eigen::Vector3d& c) {
  red(i) = static_cast<float>(c.x());
  green(i) = static_cast<float>(c.y());
  blue(i) = static_cast<float>(c.z());
}

void ObjectVolume::validate() const {
  const GridDims& d = grid.dims;
  if (d.depth < 2 || d.height < 2 || d.width < 2) {
    throw ContractError("volume dims must be >= 2 along every axis");
  }
  if (!grid.box.is_valid()) {
    throw ContractError("volume box must satisfy min < max componentwise");
  }
  const std::size_t n = d.count();
  if (density.size() != n || radiance.size() != 3 * n || occupancy_logit.size() != n) {
    throw ContractError("volume channel lengths do not match D*H*W");
  }
  for (float s : density) {
    if (!(s >= 0.0f) || !std::isfinite(s)) {
      throw ContractError("volume density must be finite and non-negative");
    }
  }
  for (float c : radiance) {
    if (!(c >= 0.0f && c <= 1.0f)) {
      throw ContractError("volume radiance must lie in [0, 1]");
    }
  }
}

WeightedSample sample_trilinear_with_weights(const ObjectVolume& volume, const Vec3& local_point) {
  WeightedSample out;
  out.stencil = volume.grid.stencil(local_point);
  if (!out.stencil.inside) {
    return out;
  }
  const std::size_t n = volume.voxel_count();
  for (int c = 0; c < 8; ++c) {
    const std::size_t i = out.stencil.index[c];
    const double w = out.stencil.weight[c];
    out.sample.density += w * volume.density[i];
    out.sample.radiance += w * Eigen::Vector3d(volume.radiance[i], volume.radiance[n + i],
                                               volume.radiance[2 * n + i]);
  }
  return out;
}

VolumeSample sample_trilinear(const ObjectVolume& volume, const Vec3& local_point) {
  return sample_trilinear_with_weights(volume, local_point).sample;
}

void save_volume(const ObjectVolume& volume, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint32_t>(volume.grid.dims.depth));
  write_pod(out, static_cast<std::uint32_t>(volume.grid.dims.height));
  write_pod(out, static_cast<std::uint32_t>(volume.grid.dims.width));
  for (int i = 0; i < 3; ++i) write_pod(out, volume.grid.box.min_corner[i]);
  for (int i = 0; i < 3; ++i) write_pod(out, volume.grid.box.max_corner[i]);
  write_array(out, volume.density);
  write_array(out, volume.radiance);
  write_array(out, volume.occupancy_logit);
  if (!out) {
    throw IoError("failed writing " + path.string());
  }
}

ObjectVolume load_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  Reader reader(in, path);
  char magic[4];
  reader.read(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(path.string() + ": bad magic '" + std::string(magic, 4) +
                      "', expected 'COVV'");
  }
  const auto version = reader.pod<std::uint32_t>("version");
  if (version != kVersion) {
    throw FormatError(path.string() + ": unsupported covv version " + std::to_string(version));
  }
  const auto d = reader.pod<std::uint32_t>("dims");
  const auto h = reader.pod<std::uint32_t>("dims");
  const auto w = reader.pod<std::uint32_t>("dims");
  const std::uint64_t n = std::uint64_t{d} * h * w;
  if (d < 2 || h < 2 || w < 2 || d > kMaxVoxels || h > kMaxVoxels || w > kMaxVoxels ||
      n > kMaxVoxels) {
    throw FormatError(path.string() + ": invalid or overflowing dims " + std::to_string(d) +
                      "x" + std::to_string(h) + "x" + std::to_string(w));
  }
  AxisAlignedBox box;
  for (int i = 0; i < 3; ++i) box.min_corner[i] = reader.pod<double>("box");
  for (int i = 0; i < 3; ++i) box.max_corner[i] = reader.pod<double>("box");
  if (!box.is_valid()) {
    throw FormatError(path.string() + ": invalid box");
  }

  ObjectVolume volume;
  volume.grid.dims = GridDims{static_cast<int>(d), static_cast<int>(h), static_cast<int>(w)};
  volume.grid.box = box;
  reader.array(volume.density, n, "density");
  reader.array(volume.radiance, 3 * n, "radiance");
  reader.array(volume.occupancy_logit, n, "occupancy");
  return volume;
}

}  // namespace covren
