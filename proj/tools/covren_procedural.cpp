// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
//
// Writes a library of procedural object volumes (spheres, cuboids, cylinders)
// plus a floor background, ready for `covren compose` or `covren generate`.
#include "covren/procedural.hpp"
#include "covren/synthesis.hpp"
#include "covren/volume.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace covren;

int main(int argc, char** argv) {
  CLI::App app{"covren-procedural: write a procedural object library"};
  int count = 6;
  std::uint64_t seed = 0;
  int resolution = 24;
  int background_resolution = 32;
  bool no_background = false;
  std::string out;
  app.add_option("--count", count, "Objects to write")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--seed", seed, "Seed for sizes and colors")->capture_default_str();
  app.add_option("--resolution", resolution, "Cubic grid resolution")
      ->check(CLI::Range(2, 512))
      ->capture_default_str();
  app.add_option("--background-resolution", background_resolution, "Floor background resolution")
      ->check(CLI::Range(2, 512))
      ->capture_default_str();
  app.add_flag("--no-background", no_background, "Skip background.covv");
  app.add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "covren-procedural: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    fs::create_directories(out);
    for (const ProceduralObject& o : make_procedural_library(count, seed, resolution)) {
      save_volume(o.volume, fs::path(out) / (o.name + ".covv"));
      std::cout << o.name << ".covv\n";
    }
    if (!no_background) {
      const AxisAlignedBox bin = GenerationConfig{}.bin;
      const int n = background_resolution;
      save_volume(make_floor_background({n, n, n}, default_workspace(bin), bin.min_corner.z()),
                  fs::path(out) / "background.covv");
      std::cout << "background.covv\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "covren-procedural: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
