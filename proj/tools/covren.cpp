// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver: fit volumes from posed views, extract meshes, compose
// and render scenes, generate datasets, and score images.
#include "covren/dataset.hpp"
#include "covren/errors.hpp"
#include "covren/fitting.hpp"
#include "covren/image_io.hpp"
#include "covren/mesh.hpp"
#include "covren/metrics.hpp"
#include "covren/procedural.hpp"
#include "covren/scene_io.hpp"
#include "covren/synthesis.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace covren;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;  ///< overrides config-file seeds when given
  int threads = 1;
  bool verbose = false;
};

std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

/// Subdirectories of `dir` holding a camera.json, in name order; `dir` itself
/// when it is one view.
std::vector<fs::path> view_dirs(const fs::path& dir) {
  if (fs::exists(dir / "camera.json")) return {dir};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / "camera.json")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IoError("no views (directories with camera.json) under " + dir.string());
  return out;
}

/// Background used when none is given: <library>/background.covv if present,
/// otherwise a procedural floor around the bin.
std::shared_ptr<const ObjectVolume> resolve_background(const std::string& path, bool none,
                                                       const fs::path& library,
                                                       const AxisAlignedBox& bin) {
  if (none) return nullptr;
  if (!path.empty()) return std::make_shared<const ObjectVolume>(load_volume(path));
  if (fs::exists(library / "background.covv")) {
    return std::make_shared<const ObjectVolume>(load_volume(library / "background.covv"));
  }
  return std::make_shared<const ObjectVolume>(
      make_floor_background({32, 32, 32}, default_workspace(bin), bin.min_corner.z()));
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  std::string scene;
  std::string views;
  std::string out;
  std::string config;
  std::optional<int> iterations;
  std::optional<int> rays;
  std::optional<double> lr;
  int resolution = 0;
  double init_density = 1.0;
  bool init_from_volumes = false;
  bool freeze_background = false;
};

int run_fit(const FitArgs& a, const Globals& g) {
  FitConfig cfg;
  if (!a.config.empty()) cfg = fit_config_from_json(read_json_file(a.config));
  if (a.iterations) cfg.iterations = *a.iterations;
  if (a.rays) cfg.rays_per_iteration = *a.rays;
  if (a.lr) cfg.learning_rate = *a.lr;
  if (a.freeze_background) cfg.freeze_background = true;
  cfg.threads = g.threads;
  cfg.render.threads = g.threads;
  cfg.validate();

  const SceneFile scene_file = load_scene_file(a.scene);
  std::vector<TrainView> views;
  for (const fs::path& d : view_dirs(a.views)) views.push_back(load_view(d));

  LatentScene latent;
  for (const SceneFile::Object& o : scene_file.objects) {
    const ObjectVolume reference = load_volume(o.volume);
    LatentObject obj;
    obj.id = o.id;
    obj.pose = o.pose;
    if (a.init_from_volumes) {
      obj.volume = LatentVolume::from_volume(reference);
    } else {
      GridDims dims = reference.grid.dims;
      if (a.resolution > 0) dims = {a.resolution, a.resolution, a.resolution};
      obj.volume = LatentVolume(VoxelGrid{dims, reference.grid.box}, a.init_density, Vec3::Constant(0.5));
    }
    latent.objects.push_back(std::move(obj));
  }
  if (!scene_file.background.empty()) {
    latent.background = LatentVolume::from_volume(load_volume(scene_file.background));
  }

  const FitResult result = fit(std::move(latent), views, cfg, g.seed.value_or(0));

  fs::create_directories(a.out);
  SceneFile fitted = scene_file;
  for (std::size_t i = 0; i < result.scene.objects.size(); ++i) {
    const LatentObject& o = result.scene.objects[i];
    const std::string name = "object_" + std::to_string(o.id) + ".covv";
    save_volume(o.volume.decode(), fs::path(a.out) / name);
    fitted.objects[i].volume = name;
  }
  if (result.scene.background) {
    save_volume(result.scene.background->decode(), fs::path(a.out) / "background.covv");
    fitted.background = "background.covv";
  }
  save_scene_file(fitted, fs::path(a.out) / "scene.json");

  std::ofstream csv(fs::path(a.out) / "loss.csv");
  csv << "iteration,total,color,depth,mask,occupancy\n";
  for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
    const LossTerms& l = result.loss_curve[i];
    csv << i << ',' << l.total << ',' << l.color << ',' << l.depth << ',' << l.mask << ','
        << l.occupancy << '\n';
  }
  if (!csv) throw IoError("failed writing " + (fs::path(a.out) / "loss.csv").string());

  if (!result.loss_curve.empty()) {
    std::cout << "iterations " << result.loss_curve.size() << "\n"
              << "initial_loss " << result.loss_curve.front().total << "\n"
              << "final_loss " << result.loss_curve.back().total << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- mesh

struct MeshArgs {
  std::string volume;
  std::string out;
  double iso = 0.5;
  std::optional<double> density_threshold;
};

int run_mesh(const MeshArgs& a, const Globals&) {
  const ObjectVolume v = load_volume(a.volume);
  const TriangleMesh mesh =
      a.density_threshold ? marching_cubes_density(v, *a.density_threshold) : marching_cubes(v, a.iso);
  export_obj(mesh, a.out);
  const MeshVolume mv = mesh_volume(mesh);
  std::cout << "vertices " << mesh.vertices.size() << "\n"
            << "triangles " << mesh.triangles.size() << "\n"
            << "watertight " << (is_watertight(mesh) ? "yes" : "no") << "\n"
            << "volume " << mv.volume << (mv.reliable ? "" : " (unreliable)") << "\n";
  return 0;
}

// ---------------------------------------------------------------- compose

struct SceneArgs {
  std::string library;
  std::string out;
  std::string config;
  std::string render_config;
  std::string background;
  bool no_background = false;
  std::optional<int> num_scenes;
  std::optional<int> objects_min;
  std::optional<int> objects_max;
  std::optional<int> cameras;
  std::optional<int> size;
  std::optional<int> samples;
  bool overwrite = false;
};

GenerationConfig generation_config(const SceneArgs& a, const Globals& g) {
  GenerationConfig cfg;
  if (!a.config.empty()) cfg = generation_config_from_json(read_json_file(a.config));
  if (a.num_scenes) cfg.num_scenes = *a.num_scenes;
  if (a.objects_min) cfg.objects_min = *a.objects_min;
  if (a.objects_max) cfg.objects_max = *a.objects_max;
  if (a.cameras) cfg.cameras.count_min = cfg.cameras.count_max = *a.cameras;
  if (a.size) cfg.cameras.width = cfg.cameras.height = *a.size;
  if (g.seed) cfg.seed = *g.seed;
  cfg.threads = g.threads;
  cfg.validate();
  return cfg;
}

RenderConfig render_config(const std::string& path, std::optional<int> samples, const Globals& g) {
  RenderConfig cfg;
  if (!path.empty()) cfg = render_config_from_json(read_json_file(path));
  if (samples) cfg.samples_per_object = cfg.samples_background = *samples;
  if (cfg.samples_per_object < 1 || cfg.samples_background < 1) {
    throw DomainError("sample counts must be >= 1");
  }
  if (g.seed) cfg.seed = *g.seed;
  cfg.threads = g.threads;
  return cfg;
}

VolumeLibrary load_library(const std::string& dir) {
  VolumeLibrary lib = VolumeLibrary::load_directory(dir);
  if (lib.empty()) throw DomainError("no object volumes (*.covv) in " + dir);
  return lib;
}

int run_compose(const SceneArgs& a, const Globals& g) {
  const GenerationConfig cfg = generation_config(a, g);
  const VolumeLibrary lib = load_library(a.library);
  const auto background = resolve_background(a.background, a.no_background, a.library, cfg.bin);

  fs::create_directories(a.out);
  const fs::path out = fs::absolute(a.out);
  const fs::path library = fs::absolute(a.library);
  if (background) save_volume(*background, out / "background.covv");
  int unsettled = 0;
  for (const ComposedScene& s : generate(lib, cfg)) {
    SceneFile file;
    if (background) file.background = "background.covv";
    for (const PlacedObject& o : s.objects) {
      const std::string& name = lib.entries[static_cast<std::size_t>(o.library_index)].name;
      file.objects.push_back({o.id, fs::relative(library / (name + ".covv"), out), o.pose});
    }
    file.cameras = s.cameras;
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%06d.json", s.index);
    save_scene_file(file, out / name);
    if (!s.settled) ++unsettled;
    for (const std::string& w : s.warnings) std::cerr << "scene " << s.index << ": " << w << "\n";
    if (g.verbose) std::cerr << "composed " << name << " (" << s.objects.size() << " objects)\n";
  }
  std::cout << "scenes " << cfg.num_scenes << "\n" << "unsettled " << unsettled << "\n";
  return 0;
}

// ---------------------------------------------------------------- render

struct RenderArgs {
  std::string scene;
  std::string out;
  std::string config;
  std::optional<int> samples;
  std::optional<int> camera;
};

int run_render(const RenderArgs& a, const Globals& g) {
  const RenderConfig cfg = render_config(a.config, a.samples, g);
  const SceneFile file = load_scene_file(a.scene);
  if (file.cameras.empty()) throw DomainError(a.scene + " has no cameras");
  if (a.camera && (*a.camera < 0 || *a.camera >= static_cast<int>(file.cameras.size()))) {
    throw DomainError("camera " + std::to_string(*a.camera) + " out of range (scene has " +
                      std::to_string(file.cameras.size()) + ")");
  }
  const Scene scene = load_scene_volumes(file);
  for (std::size_t k = 0; k < file.cameras.size(); ++k) {
    if (a.camera && static_cast<int>(k) != *a.camera) continue;
    const RenderOutput r = render_scene(scene, file.cameras[k], cfg);
    write_view(fs::path(a.out) / ("cam" + std::to_string(k)), file.cameras[k], r);
    if (g.verbose) std::cerr << "rendered cam" << k << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- generate

int run_generate(const SceneArgs& a, const Globals& g) {
  DatasetGenerationOptions opts;
  opts.generation = generation_config(a, g);
  opts.render = render_config(a.render_config, a.samples, g);
  opts.overwrite = a.overwrite;
  opts.progress = [](int done, int total) {
    std::cerr << "generated " << done << "/" << total << " scenes\n";
  };
  const VolumeLibrary lib = load_library(a.library);
  const auto background =
      resolve_background(a.background, a.no_background, a.library, opts.generation.bin);
  const DatasetGenerationSummary s = generate_dataset(a.out, lib, background, opts);
  for (const std::string& w : s.warnings) std::cerr << w << "\n";
  std::cout << "scenes " << s.scenes << "\n"
            << "cameras " << s.cameras << "\n"
            << "unsettled " << s.unsettled << "\n";
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string pred;
  std::string gt;
};

int run_eval(const EvalArgs& a, const Globals& g) {
  std::vector<std::pair<fs::path, fs::path>> pairs;
  if (fs::is_directory(a.pred) != fs::is_directory(a.gt)) {
    throw DomainError("--pred and --gt must both be files or both be directories");
  }
  if (fs::is_directory(a.pred)) {
    for (const auto& e : fs::directory_iterator(a.pred)) {
      if (e.path().extension() != ".png") continue;
      const fs::path other = fs::path(a.gt) / e.path().filename();
      if (fs::exists(other)) pairs.emplace_back(e.path(), other);
    }
    std::sort(pairs.begin(), pairs.end());
    if (pairs.empty()) throw DomainError("no PNG file names shared by " + a.pred + " and " + a.gt);
  } else {
    pairs.emplace_back(a.pred, a.gt);
  }

  double psnr_sum = 0.0;
  double ssim_sum = 0.0;
  bool ssim_ok = true;
  for (const auto& [p, r] : pairs) {
    const Image pred = read_png_image(p);
    const Image ref = read_png_image(r);
    if (!pred.same_shape(ref)) {
      throw DomainError(p.string() + " and " + r.string() + " differ in size or channels");
    }
    const double ps = psnr(pred, ref);
    const SsimConfig sc;
    const bool fits = pred.width >= sc.window && pred.height >= sc.window;
    const double ss = fits ? ssim(pred, ref, sc) : 0.0;
    ssim_ok = ssim_ok && fits;
    psnr_sum += ps;
    ssim_sum += ss;
    if (g.verbose && pairs.size() > 1) {
      std::cout << p.filename().string() << " psnr " << format_metric(ps) << " ssim "
                << (fits ? format_metric(ss) : "n/a") << "\n";
    }
  }
  const double n = static_cast<double>(pairs.size());
  std::cout << "psnr " << format_metric(psnr_sum / n) << "\n";
  std::cout << "ssim " << (ssim_ok ? format_metric(ssim_sum / n) : "n/a (image smaller than the 11x11 window)")
            << "\n";
  return 0;
}

// ---------------------------------------------------------------- validate

struct ValidateArgs {
  std::string root;
  double min_agreement = 0.99;
  bool skip_coherence = false;
};

int run_validate(const ValidateArgs& a, const Globals& g) {
  ValidateOptions opts;
  opts.min_agreement = a.min_agreement;
  opts.check_coherence = !a.skip_coherence;
  opts.threads = g.threads;
  const DatasetReport r = validate_dataset(a.root, opts);
  for (const DatasetFinding& f : r.findings) {
    if (f.scene_id >= 0) std::cout << "scene " << f.scene_id << ": ";
    std::cout << f.message << "\n";
  }
  std::cout << "scenes " << r.scenes << "\n"
            << "cameras " << r.cameras << "\n"
            << "agreement " << format_metric(r.agreement()) << " over " << r.checked_pixels
            << " pixels\n"
            << "findings " << r.findings.size() << "\n";
  if (!r.clean()) {
    std::cerr << "covren: dataset " << a.root << " has " << r.findings.size() << " finding(s)\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"covren: voxel radiance fields for object-centric scene synthesis"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random draw (default 0 or the config's)");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::Range(1, 1024))->capture_default_str();
  app.add_flag("--verbose,-v", g.verbose, "Per-item progress on stderr");

  FitArgs fit_args;
  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit object volumes to posed views");
  fit_cmd->add_option("--scene", fit_args.scene, "Scene JSON with object poses and volume boxes")
      ->required()
      ->check(CLI::ExistingFile);
  fit_cmd->add_option("--views", fit_args.views, "Directory of view folders (camera.json, rgb.png, ...)")
      ->required()
      ->check(CLI::ExistingDirectory);
  fit_cmd->add_option("--out", fit_args.out, "Output directory")->required();
  fit_cmd->add_option("--config", fit_args.config, "Fit config JSON; flags override it")
      ->check(CLI::ExistingFile);
  fit_cmd->add_option("--iters", fit_args.iterations, "Optimizer iterations")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--rays-per-iter", fit_args.rays, "Rays per iteration")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--lr", fit_args.lr, "Learning rate")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--resolution", fit_args.resolution, "Cubic latent resolution (0: keep the scene volume's)")
      ->check(CLI::NonNegativeNumber);
  fit_cmd->add_option("--init-density", fit_args.init_density, "Initial density of fresh latents")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  fit_cmd->add_flag("--init-from-volumes", fit_args.init_from_volumes, "Start from the scene's volumes");
  fit_cmd->add_flag("--freeze-background", fit_args.freeze_background, "Keep the background fixed");

  MeshArgs mesh_args;
  CLI::App* mesh_cmd = app.add_subcommand("mesh", "Extract a mesh from a volume");
  mesh_cmd->add_option("--volume", mesh_args.volume, "Input .covv")->required()->check(CLI::ExistingFile);
  mesh_cmd->add_option("--out", mesh_args.out, "Output .obj")->required();
  mesh_cmd->add_option("--iso", mesh_args.iso, "Occupancy level")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  mesh_cmd->add_option("--density-threshold", mesh_args.density_threshold,
                       "Extract density at this level instead of occupancy")
      ->check(CLI::PositiveNumber);

  SceneArgs compose_args;
  SceneArgs generate_args;
  auto add_scene_options = [](CLI::App* cmd, SceneArgs& a) {
    cmd->add_option("--library", a.library, "Directory of object .covv files")
        ->required()
        ->check(CLI::ExistingDirectory);
    cmd->add_option("--out", a.out, "Output directory")->required();
    cmd->add_option("--config", a.config, "Generation config JSON; flags override it")
        ->check(CLI::ExistingFile);
    cmd->add_option("--num-scenes", a.num_scenes, "Scenes to produce")->check(CLI::NonNegativeNumber);
    cmd->add_option("--min-objects", a.objects_min, "Fewest objects per scene")->check(CLI::NonNegativeNumber);
    cmd->add_option("--max-objects", a.objects_max, "Most objects per scene")->check(CLI::NonNegativeNumber);
    cmd->add_option("--cameras", a.cameras, "Cameras per scene")->check(CLI::PositiveNumber);
    cmd->add_option("--size", a.size, "Image width and height")->check(CLI::PositiveNumber);
    cmd->add_option("--background", a.background, "Background .covv (default: library or procedural floor)")
        ->check(CLI::ExistingFile);
    cmd->add_flag("--no-background", a.no_background, "Render without a background volume");
  };
  CLI::App* compose_cmd = app.add_subcommand("compose", "Compose settled scenes as scene JSON files");
  add_scene_options(compose_cmd, compose_args);
  CLI::App* generate_cmd = app.add_subcommand("generate", "Compose, render and write a dataset");
  add_scene_options(generate_cmd, generate_args);
  generate_cmd->add_option("--render-config", generate_args.render_config, "Render config JSON")
      ->check(CLI::ExistingFile);
  generate_cmd->add_option("--samples", generate_args.samples, "Samples per volume per ray")
      ->check(CLI::PositiveNumber);
  generate_cmd->add_flag("--overwrite", generate_args.overwrite, "Replace existing scenes");

  RenderArgs render_args;
  CLI::App* render_cmd = app.add_subcommand("render", "Render a scene JSON to image folders");
  render_cmd->add_option("--scene", render_args.scene, "Scene JSON")->required()->check(CLI::ExistingFile);
  render_cmd->add_option("--out", render_args.out, "Output directory (one folder per camera)")->required();
  render_cmd->add_option("--config", render_args.config, "Render config JSON")->check(CLI::ExistingFile);
  render_cmd->add_option("--samples", render_args.samples, "Samples per volume per ray")
      ->check(CLI::PositiveNumber);
  render_cmd->add_option("--camera", render_args.camera, "Render only this camera index");

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "PSNR and SSIM of predicted images");
  eval_cmd->add_option("--pred", eval_args.pred, "Predicted PNG or directory")->required()->check(CLI::ExistingPath);
  eval_cmd->add_option("--gt", eval_args.gt, "Reference PNG or directory")->required()->check(CLI::ExistingPath);

  ValidateArgs validate_args;
  CLI::App* validate_cmd = app.add_subcommand("validate", "Check a dataset for consistency");
  validate_cmd->add_option("--root", validate_args.root, "Dataset root")->required()->check(CLI::ExistingDirectory);
  validate_cmd->add_option("--min-agreement", validate_args.min_agreement, "Required mask/depth agreement")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  validate_cmd->add_flag("--skip-coherence", validate_args.skip_coherence, "Skip the re-render check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "covren: " << e.what() << "\n\n";
    const std::vector<CLI::App*> used = app.get_subcommands();
    std::cerr << (used.empty() ? app.help() : used.front()->help());
    return 2;
  }

  try {
    if (fit_cmd->parsed()) return run_fit(fit_args, g);
    if (mesh_cmd->parsed()) return run_mesh(mesh_args, g);
    if (compose_cmd->parsed()) return run_compose(compose_args, g);
    if (render_cmd->parsed()) return run_render(render_args, g);
    if (generate_cmd->parsed()) return run_generate(generate_args, g);
    if (eval_cmd->parsed()) return run_eval(eval_args, g);
    if (validate_cmd->parsed()) return run_validate(validate_args, g);
  } catch (const std::exception& e) {
    std::cerr << "covren: error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
