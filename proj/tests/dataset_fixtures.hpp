// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "covren/dataset.hpp"
#include "covren/procedural.hpp"
#include "covren/synthesis.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <vector>

namespace covren::testing {

inline VolumeLibrary procedural_library(int count, std::uint64_t seed, int resolution) {
  VolumeLibrary lib;
  for (ProceduralObject& o : make_procedural_library(count, seed, resolution)) {
    lib.add(o.name, std::move(o.volume), "procedural");
  }
  return lib;
}

inline std::shared_ptr<const ObjectVolume> floor_background(const AxisAlignedBox& bin, int resolution) {
  return std::make_shared<const ObjectVolume>(make_floor_background(
      {resolution, resolution, resolution}, default_workspace(bin), bin.min_corner.z()));
}

/// Small scenes with few samples so a dataset renders in about a second.
inline DatasetGenerationOptions quick_options(int scenes, std::uint64_t seed) {
  DatasetGenerationOptions o;
  o.generation.num_scenes = scenes;
  o.generation.seed = seed;
  o.generation.objects_min = 2;
  o.generation.objects_max = 4;
  o.generation.cameras.width = 24;
  o.generation.cameras.height = 24;
  o.render.samples_per_object = 24;
  o.render.samples_background = 24;
  return o;
}

inline std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Relative paths of every regular file under `root`, sorted.
inline std::vector<std::string> tree(const std::filesystem::path& root) {
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.push_back(std::filesystem::relative(e.path(), root).generic_string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Empty when both trees hold the same files with the same bytes; otherwise
/// the first difference.
inline std::string tree_difference(const std::filesystem::path& a, const std::filesystem::path& b) {
  const std::vector<std::string> ta = tree(a);
  const std::vector<std::string> tb = tree(b);
  if (ta != tb) return "file lists differ";
  for (const std::string& f : ta) {
    if (file_bytes(a / f) != file_bytes(b / f)) return f;
  }
  return {};
}

}  // namespace covren::testing
