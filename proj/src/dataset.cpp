// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#include "covren/dataset.hpp"

#include "covren/image_io.hpp"
#include "covren/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>

namespace covren {

namespace fs = std::filesystem;

namespace {

std::mutex& manifest_mutex() {
  static std::mutex m;
  return m;
}

std::string rel(const fs::path& p) { return p.generic_string(); }

bool is_string(const Json& j, const char* key) { return j.contains(key) && j.at(key).is_string(); }

bool is_number_array(const Json& j, std::size_t n) {
  if (!j.is_array() || j.size() != n) return false;
  return std::all_of(j.begin(), j.end(), [](const Json& x) { return x.is_number(); });
}

void check_pose(const Json& pose, const std::string& where, std::vector<std::string>& out) {
  if (!pose.is_object() || !pose.contains("quat_wxyz") || !pose.contains("t") ||
      !is_number_array(pose.at("quat_wxyz"), 4) || !is_number_array(pose.at("t"), 3)) {
    out.push_back(where + ": pose needs quat_wxyz[4] and t[3]");
  }
}

void check_mask_map(const Json& cam, const char* key, const std::string& where,
                    std::vector<std::string>& out) {
  if (!cam.contains(key) || !cam.at(key).is_object()) {
    out.push_back(where + ": '" + key + "' must be an object");
    return;
  }
  for (const auto& [id, path] : cam.at(key).items()) {
    if (id.empty() || !std::all_of(id.begin(), id.end(), ::isdigit) || !path.is_string()) {
      out.push_back(where + ": '" + key + "' maps object ids to file paths");
    }
  }
}

Image load_png_checked(const fs::path& path) {
  if (!fs::exists(path)) throw MissingFileError("missing file: " + path.string());
  return read_png_image(path);
}

Image load_pfm_checked(const fs::path& path) {
  if (!fs::exists(path)) throw MissingFileError("missing file: " + path.string());
  return read_pfm(path);
}

// Every file an entry references, relative to the root.
std::vector<std::string> referenced_files(const Json& entry) {
  std::vector<std::string> files;
  if (entry.at("background").is_string()) files.push_back(entry.at("background"));
  for (const Json& o : entry.at("objects")) {
    files.push_back(o.at("mesh"));
    files.push_back(o.at("volume"));
  }
  for (const Json& c : entry.at("cameras")) {
    for (const char* key : {"rgb", "depth", "depth_preview", "camera"}) files.push_back(c.at(key));
    for (const char* key : {"modal", "amodal"}) {
      for (const auto& [id, path] : c.at(key).items()) files.push_back(path);
    }
  }
  return files;
}

struct PixelTally {
  long long checked = 0;
  long long agreeing = 0;
  long long depth_mismatch = 0;
};

PixelTally coherence(const Scene& scene, const LoadedCamera& cam, const RenderConfig& render,
                     const ValidateOptions& options) {
  const int w = cam.camera.intrinsics.width;
  const int h = cam.camera.intrinsics.height;
  std::vector<PixelTally> rows(static_cast<std::size_t>(h));
  parallel_for(h, options.threads, [&](int begin, int end) {
    for (int v = begin; v < end; ++v) {
      PixelTally& tally = rows[static_cast<std::size_t>(v)];
      for (int u = 0; u < w; ++u) {
        const Ray ray = ray_for_pixel(cam.camera.intrinsics, cam.camera.pose, u, v);
        const CompositeResult r = render_ray(scene, ray, render, pixel_seed(render.seed, u, v));
        double depth = r.depth;
        if (!render.ray_distance_depth) depth *= cam.camera.pose.rotation.col(2).dot(ray.direction);
        const double stored = cam.depth.at(u, v);
        if (std::abs(static_cast<float>(depth) - stored) > 1e-5 * std::max(1.0, std::abs(stored))) {
          ++tally.depth_mismatch;
        }
        if (r.total_opacity < options.opaque_threshold) continue;

        int depth_owner = kBackgroundOwner;
        double best_share = -1.0;
        for (const ObjectWeights& ow : r.per_object) {
          if (ow.depth > best_share) {
            best_share = ow.depth;
            depth_owner = ow.owner;
          }
        }
        double modal_sum = 0.0;
        for (const auto& [id, mask] : cam.modal) modal_sum += mask.at(u, v);
        int mask_owner = kBackgroundOwner;
        double best_mask = 1.0 - modal_sum;
        for (const auto& [id, mask] : cam.modal) {
          if (mask.at(u, v) > best_mask) {
            best_mask = mask.at(u, v);
            mask_owner = id;
          }
        }
        ++tally.checked;
        if (mask_owner == depth_owner) ++tally.agreeing;
      }
    }
  });
  PixelTally total;
  for (const PixelTally& t : rows) {
    total.checked += t.checked;
    total.agreeing += t.agreeing;
    total.depth_mismatch += t.depth_mismatch;
  }
  return total;
}

}  // namespace

Json write_view(const fs::path& dir, const Camera& camera, const RenderOutput& render) {
  fs::create_directories(dir);
  write_png8(dir / "rgb.png", render.rgb);
  write_pfm(dir / "depth.pfm", render.depth);
  write_png16(dir / "depth_preview.png", render.depth.width, render.depth.height,
              depth_preview_mm(render.depth));
  write_json_file(dir / "camera.json", camera_to_json(camera));
  Json files{{"rgb", "rgb.png"},
             {"depth", "depth.pfm"},
             {"depth_preview", "depth_preview.png"},
             {"camera", "camera.json"},
             {"modal", Json::object()},
             {"amodal", Json::object()}};
  for (const auto& [id, mask] : render.modal_masks) {
    const std::string name = "modal_" + std::to_string(id) + ".png";
    write_png8(dir / name, mask);
    files["modal"][std::to_string(id)] = name;
  }
  for (const auto& [id, mask] : render.amodal_masks) {
    const std::string name = "amodal_" + std::to_string(id) + ".png";
    write_png8(dir / name, mask);
    files["amodal"][std::to_string(id)] = name;
  }
  return files;
}

TrainView load_view(const fs::path& dir) {
  TrainView view;
  const fs::path camera_path = dir / "camera.json";
  if (!fs::exists(camera_path)) throw MissingFileError("missing file: " + camera_path.string());
  try {
    view.camera = camera_from_json(read_json_file(camera_path));
  } catch (const Json::exception& e) {
    throw FormatError(camera_path.string() + ": " + e.what());
  }
  view.rgb = load_png_checked(dir / "rgb.png");
  if (view.rgb.channels != 3) throw FormatError((dir / "rgb.png").string() + ": expected RGB");
  if (fs::exists(dir / "depth.pfm")) view.depth = load_pfm_checked(dir / "depth.pfm");
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    for (const auto& [prefix, masks] : {std::pair{std::string("modal_"), &view.modal_masks},
                                        std::pair{std::string("amodal_"), &view.amodal_masks}}) {
      if (name.rfind(prefix, 0) != 0 || e.path().extension() != ".png") continue;
      const std::string id = e.path().stem().string().substr(prefix.size());
      if (id.empty() || id.find_first_not_of("0123456789") != std::string::npos) continue;
      masks->emplace(std::stoi(id), load_png_checked(e.path()));
    }
  }
  try {
    view.validate();
  } catch (const ContractError& e) {
    throw FormatError(dir.string() + ": " + e.what());
  }
  return view;
}

fs::path scene_dir_name(int scene_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d", scene_id);
  return fs::path("scenes") / buf;
}

Json write_scene_record(const fs::path& root, const SceneRecordInput& input, bool overwrite) {
  if (input.renders.size() != input.cameras.size()) {
    throw ContractError("write_scene_record needs one render per camera");
  }
  if (input.cameras.empty()) {
    throw ContractError("write_scene_record needs at least one camera");
  }
  std::set<int> ids;
  for (const DatasetObject& o : input.objects) {
    if (o.id < 1 || !ids.insert(o.id).second || o.name.empty()) {
      throw ContractError("scene objects need unique ids >= 1 and names");
    }
  }
  for (std::size_t k = 0; k < input.cameras.size(); ++k) {
    const RenderOutput& r = input.renders[k];
    const CameraIntrinsics& in = input.cameras[k].intrinsics;
    if (r.rgb.width != in.width || r.rgb.height != in.height || !r.depth.same_shape(Image(in.width, in.height, 1))) {
      throw ContractError("render size does not match camera " + std::to_string(k));
    }
    std::set<int> modal_ids;
    std::set<int> amodal_ids;
    for (const auto& [id, m] : r.modal_masks) modal_ids.insert(id);
    for (const auto& [id, m] : r.amodal_masks) amodal_ids.insert(id);
    if (modal_ids != ids || amodal_ids != ids) {
      throw ContractError("render " + std::to_string(k) + " masks do not match the scene objects");
    }
  }

  const fs::path scene_rel = scene_dir_name(input.scene_id);
  const fs::path scene_dir = root / scene_rel;
  if (fs::exists(scene_dir)) {
    if (!overwrite) {
      throw DomainError("scene " + scene_rel.filename().string() + " already exists in " +
                        root.string() + " (use overwrite to replace it)");
    }
    fs::remove_all(scene_dir);
  }

  Json entry;
  entry["format"] = kManifestFormat;
  entry["scene_id"] = input.scene_id;
  entry["scene_dir"] = rel(scene_rel);
  entry["background"] =
      input.background.empty() ? Json(nullptr) : Json(rel(fs::path("volumes") / (input.background + ".covv")));
  entry["render"] = render_config_to_json(input.render);
  entry["objects"] = Json::array();
  for (const DatasetObject& o : input.objects) {
    entry["objects"].push_back({{"id", o.id},
                                {"name", o.name},
                                {"mesh", rel(fs::path("meshes") / (o.name + ".obj"))},
                                {"volume", rel(fs::path("volumes") / (o.name + ".covv"))},
                                {"pose", pose_to_json(o.pose)}});
  }
  entry["cameras"] = Json::array();

  try {
    fs::create_directories(scene_dir);
    for (std::size_t k = 0; k < input.cameras.size(); ++k) {
      const fs::path cam_rel = scene_rel / ("cam" + std::to_string(k));
      const Json files = write_view(root / cam_rel, input.cameras[k], input.renders[k]);
      Json cam{{"dir", rel(cam_rel)}, {"modal", Json::object()}, {"amodal", Json::object()}};
      for (const char* key : {"rgb", "depth", "depth_preview", "camera"}) {
        cam[key] = rel(cam_rel / files.at(key).get<std::string>());
      }
      for (const char* key : {"modal", "amodal"}) {
        for (const auto& [id, name] : files.at(key).items()) {
          cam[key][id] = rel(cam_rel / name.get<std::string>());
        }
      }
      entry["cameras"].push_back(std::move(cam));
    }
  } catch (...) {
    std::error_code ec;
    fs::remove_all(scene_dir, ec);
    throw;
  }
  return entry;
}

void write_library_assets(const fs::path& root, const VolumeLibrary& library,
                          const ObjectVolume* background) {
  fs::create_directories(root / "meshes");
  fs::create_directories(root / "volumes");
  for (const LibraryEntry& e : library.entries) {
    export_obj(e.mesh, root / "meshes" / (e.name + ".obj"));
    save_volume(*e.volume, root / "volumes" / (e.name + ".covv"));
  }
  if (background) save_volume(*background, root / "volumes" / "background.covv");
}

std::vector<Json> read_manifest(const fs::path& root) {
  const fs::path path = root / "manifest.jsonl";
  std::ifstream in(path);
  if (!in) throw MissingFileError("missing file: " + path.string());
  std::vector<Json> entries;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      entries.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw ManifestError(path.string() + " line " + std::to_string(number) + ": " + e.what());
    }
  }
  return entries;
}

void write_manifest(const fs::path& root, std::vector<Json> entries) {
  std::stable_sort(entries.begin(), entries.end(), [](const Json& a, const Json& b) {
    return a.value("scene_id", 0) < b.value("scene_id", 0);
  });
  std::lock_guard<std::mutex> lock(manifest_mutex());
  const fs::path path = root / "manifest.jsonl";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const Json& e : entries) out << e.dump() << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

void append_manifest(const fs::path& root, const Json& entry) {
  std::lock_guard<std::mutex> lock(manifest_mutex());
  const fs::path path = root / "manifest.jsonl";
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << entry.dump() << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::string> check_manifest_entry(const Json& entry) {
  std::vector<std::string> out;
  if (!entry.is_object()) return {"entry is not an object"};
  if (!entry.contains("format") || entry.at("format") != kManifestFormat) {
    out.push_back("format must be " + std::to_string(kManifestFormat));
  }
  if (!entry.contains("scene_id") || !entry.at("scene_id").is_number_integer() ||
      entry.at("scene_id").get<long long>() < 0) {
    out.push_back("scene_id must be a non-negative integer");
  }
  if (!is_string(entry, "scene_dir")) out.push_back("scene_dir must be a string");
  if (!entry.contains("background") ||
      !(entry.at("background").is_string() || entry.at("background").is_null())) {
    out.push_back("background must be a path or null");
  }
  if (!entry.contains("render") || !entry.at("render").is_object()) {
    out.push_back("render must be an object");
  }
  if (!entry.contains("objects") || !entry.at("objects").is_array()) {
    out.push_back("objects must be an array");
  } else {
    std::set<long long> ids;
    for (std::size_t i = 0; i < entry.at("objects").size(); ++i) {
      const Json& o = entry.at("objects")[i];
      const std::string where = "objects[" + std::to_string(i) + "]";
      if (!o.is_object()) {
        out.push_back(where + " is not an object");
        continue;
      }
      if (!o.contains("id") || !o.at("id").is_number_integer() || o.at("id").get<long long>() < 1) {
        out.push_back(where + ": id must be an integer >= 1");
      } else if (!ids.insert(o.at("id").get<long long>()).second) {
        out.push_back(where + ": duplicate id");
      }
      for (const char* key : {"name", "mesh", "volume"}) {
        if (!is_string(o, key)) out.push_back(where + ": '" + key + "' must be a string");
      }
      if (!o.contains("pose")) out.push_back(where + ": missing pose");
      else check_pose(o.at("pose"), where, out);
    }
  }
  if (!entry.contains("cameras") || !entry.at("cameras").is_array() || entry.at("cameras").empty()) {
    out.push_back("cameras must be a non-empty array");
  } else {
    for (std::size_t i = 0; i < entry.at("cameras").size(); ++i) {
      const Json& c = entry.at("cameras")[i];
      const std::string where = "cameras[" + std::to_string(i) + "]";
      if (!c.is_object()) {
        out.push_back(where + " is not an object");
        continue;
      }
      for (const char* key : {"dir", "rgb", "depth", "depth_preview", "camera"}) {
        if (!is_string(c, key)) out.push_back(where + ": '" + key + "' must be a string");
      }
      check_mask_map(c, "modal", where, out);
      check_mask_map(c, "amodal", where, out);
    }
  }
  return out;
}

SceneRecord load_scene_record(const fs::path& root, const Json& entry) {
  const std::vector<std::string> problems = check_manifest_entry(entry);
  if (!problems.empty()) throw ManifestError("manifest entry: " + problems.front());
  SceneRecord rec;
  rec.scene_id = entry.at("scene_id").get<int>();
  rec.background = entry.at("background").is_string() ? entry.at("background").get<std::string>() : "";
  rec.render = render_config_from_json(entry.at("render"));
  for (const Json& o : entry.at("objects")) {
    rec.objects.push_back({o.at("id").get<int>(), o.at("name").get<std::string>(),
                           pose_from_json(o.at("pose"))});
  }
  for (const Json& c : entry.at("cameras")) {
    LoadedCamera cam;
    const fs::path camera_path = root / c.at("camera").get<std::string>();
    if (!fs::exists(camera_path)) throw MissingFileError("missing file: " + camera_path.string());
    try {
      cam.camera = camera_from_json(read_json_file(camera_path));
    } catch (const Json::exception& e) {
      throw FormatError(camera_path.string() + ": " + e.what());
    }
    cam.rgb = load_png_checked(root / c.at("rgb").get<std::string>());
    cam.depth = load_pfm_checked(root / c.at("depth").get<std::string>());
    for (const auto& [id, path] : c.at("modal").items()) {
      cam.modal.emplace(std::stoi(id), load_png_checked(root / path.get<std::string>()));
    }
    for (const auto& [id, path] : c.at("amodal").items()) {
      cam.amodal.emplace(std::stoi(id), load_png_checked(root / path.get<std::string>()));
    }
    const int w = cam.camera.intrinsics.width;
    const int h = cam.camera.intrinsics.height;
    auto check_size = [&](const Image& img, const std::string& what) {
      if (img.width != w || img.height != h) {
        throw FormatError(what + " size does not match camera.json in " +
                          c.at("dir").get<std::string>());
      }
    };
    check_size(cam.rgb, "rgb");
    check_size(cam.depth, "depth");
    for (const auto& [id, m] : cam.modal) check_size(m, "modal mask " + std::to_string(id));
    for (const auto& [id, m] : cam.amodal) check_size(m, "amodal mask " + std::to_string(id));
    rec.cameras.push_back(std::move(cam));
  }
  return rec;
}

DatasetReport validate_dataset(const fs::path& root, const ValidateOptions& options) {
  DatasetReport report;
  const fs::path manifest = root / "manifest.jsonl";
  if (!fs::exists(manifest)) {
    report.findings.push_back({-1, "empty dataset: no manifest.jsonl in " + root.string()});
    return report;
  }
  std::vector<Json> entries;
  {
    std::ifstream in(manifest);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
      ++number;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        entries.push_back(Json::parse(line));
      } catch (const Json::parse_error& e) {
        report.findings.push_back({-1, "manifest line " + std::to_string(number) + ": " + e.what()});
      }
    }
  }
  if (entries.empty() && report.findings.empty()) {
    report.findings.push_back({-1, "empty dataset: manifest has no entries"});
    return report;
  }

  std::map<std::string, std::shared_ptr<const ObjectVolume>> volumes;
  auto volume = [&](const std::string& path) {
    auto it = volumes.find(path);
    if (it == volumes.end()) {
      it = volumes.emplace(path, std::make_shared<const ObjectVolume>(load_volume(root / path))).first;
    }
    return it->second;
  };

  std::set<int> seen;
  for (const Json& entry : entries) {
    const std::vector<std::string> problems = check_manifest_entry(entry);
    const int id = entry.is_object() && entry.contains("scene_id") && entry.at("scene_id").is_number_integer()
                       ? entry.at("scene_id").get<int>()
                       : -1;
    if (!problems.empty()) {
      for (const std::string& p : problems) report.findings.push_back({id, p});
      continue;
    }
    ++report.scenes;
    if (!seen.insert(id).second) report.findings.push_back({id, "duplicate scene id"});

    bool intact = true;
    for (const std::string& f : referenced_files(entry)) {
      if (!fs::exists(root / f)) {
        report.findings.push_back({id, "missing file: " + f});
        intact = false;
      }
    }
    std::set<std::string> object_ids;
    for (const Json& o : entry.at("objects")) object_ids.insert(std::to_string(o.at("id").get<int>()));
    for (const Json& c : entry.at("cameras")) {
      ++report.cameras;
      for (const char* key : {"modal", "amodal"}) {
        std::set<std::string> keys;
        for (const auto& [k, v] : c.at(key).items()) keys.insert(k);
        if (keys != object_ids) {
          report.findings.push_back(
              {id, c.at("dir").get<std::string>() + ": " + key + " mask ids differ from scene objects"});
          intact = false;
        }
      }
    }
    if (!intact) continue;

    SceneRecord rec;
    Scene scene;
    try {
      rec = load_scene_record(root, entry);
      for (const Json& o : entry.at("objects")) load_obj(root / o.at("mesh").get<std::string>());
      if (!rec.background.empty()) scene.background = volume(rec.background);
      for (std::size_t i = 0; i < rec.objects.size(); ++i) {
        const Json& o = entry.at("objects")[i];
        scene.objects.push_back({rec.objects[i].id, volume(o.at("volume").get<std::string>()),
                                 rec.objects[i].pose});
      }
    } catch (const std::exception& e) {
      report.findings.push_back({id, e.what()});
      continue;
    }
    if (!options.check_coherence) continue;
    RenderConfig render = rec.render;
    render.threads = 1;
    for (const LoadedCamera& cam : rec.cameras) {
      const PixelTally t = coherence(scene, cam, render, options);
      report.checked_pixels += t.checked;
      report.agreeing_pixels += t.agreeing;
      if (t.depth_mismatch > 0) {
        report.findings.push_back({id, std::to_string(t.depth_mismatch) +
                                           " depth pixels differ from the re-rendered volumes"});
      }
    }
  }
  if (options.check_coherence && report.agreement() < options.min_agreement) {
    std::ostringstream msg;
    msg << "modal argmax agrees with the depth owner on " << 100.0 * report.agreement()
        << "% of opaque pixels (need " << 100.0 * options.min_agreement << "%)";
    report.findings.push_back({-1, msg.str()});
  }
  return report;
}

DatasetGenerationSummary generate_dataset(const fs::path& root, const VolumeLibrary& library,
                                          std::shared_ptr<const ObjectVolume> background,
                                          const DatasetGenerationOptions& options) {
  options.generation.validate();
  const std::vector<ComposedScene> scenes = generate(library, options.generation);

  fs::create_directories(root);
  write_library_assets(root, library, background.get());

  std::vector<Json> entries;
  if (fs::exists(root / "manifest.jsonl")) entries = read_manifest(root);
  RenderConfig render = options.render;
  render.threads = std::max(render.threads, options.generation.threads);

  DatasetGenerationSummary summary;
  std::vector<int> written;
  try {
    for (const ComposedScene& scene : scenes) {
      SceneRecordInput input;
      input.scene_id = scene.index;
      input.render = render;
      input.background = background ? "background" : "";
      input.cameras = scene.cameras;
      for (const PlacedObject& o : scene.objects) {
        input.objects.push_back(
            {o.id, library.entries[static_cast<std::size_t>(o.library_index)].name, o.pose});
      }
      const Scene renderable = to_render_scene(scene, library, background);
      for (const Camera& cam : scene.cameras) {
        input.renders.push_back(render_scene(renderable, cam, render));
      }

      Json entry = write_scene_record(root, input, options.overwrite);
      written.push_back(scene.index);
      std::erase_if(entries, [&](const Json& e) {
        return e.contains("scene_id") && e.at("scene_id") == scene.index;
      });
      entries.push_back(std::move(entry));

      ++summary.scenes;
      summary.cameras += static_cast<int>(scene.cameras.size());
      if (!scene.settled) ++summary.unsettled;
      for (const std::string& w : scene.warnings) {
        summary.warnings.push_back("scene " + std::to_string(scene.index) + ": " + w);
      }
      if (options.progress) options.progress(summary.scenes, static_cast<int>(scenes.size()));
    }
  } catch (...) {
    // Leave no partially generated dataset behind.
    std::error_code ec;
    for (int id : written) fs::remove_all(root / scene_dir_name(id), ec);
    throw;
  }
  write_manifest(root, std::move(entries));
  return summary;
}

}  // namespace covren
