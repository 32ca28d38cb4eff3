// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "covren/compositor.hpp"
#include "covren/errors.hpp"
#include "covren/image.hpp"
#include "covren/scene_io.hpp"
#include "covren/synthesis.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <map>
#include <string>
#include <vector>

namespace covren {

inline constexpr int kManifestFormat = 1;

/// A referenced dataset file does not exist.
class MissingFileError : public IoError {
 public:
  using IoError::IoError;
};

/// A manifest line is not valid JSON or breaks the manifest schema.
class ManifestError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Object instance of a scene. Its mesh and volume live at
/// meshes/<name>.obj and volumes/<name>.covv under the dataset root.
struct DatasetObject {
  int id = 1;
  std::string name;
  RigidPose pose;
};

struct SceneRecordInput {
  int scene_id = 0;
  std::vector<DatasetObject> objects;
  std::vector<Camera> cameras;
  std::vector<RenderOutput> renders;  ///< one per camera
  RenderConfig render;
  std::string background = "background";  ///< volume name; empty for none
};

/// Writes one camera's artifacts into `dir`: rgb.png, depth.pfm,
/// depth_preview.png, camera.json, and modal_<id>.png / amodal_<id>.png for
/// every mask in `render`. Returns the written file names relative to `dir`,
/// keyed like a manifest camera entry.
Json write_view(const std::filesystem::path& dir, const Camera& camera, const RenderOutput& render);

/// Reads a directory laid out by write_view as training supervision. depth.pfm
/// and the mask files are optional; masks are found by file name.
TrainView load_view(const std::filesystem::path& dir);

/// Directory of a scene relative to the root: scenes/<id, 6 digits>.
std::filesystem::path scene_dir_name(int scene_id);

/// Writes every per-camera artifact of one scene and returns its manifest
/// entry (paths relative to `root`). Refuses an existing scene directory
/// unless `overwrite`. On failure the scene directory is removed.
Json write_scene_record(const std::filesystem::path& root, const SceneRecordInput& input,
                        bool overwrite = false);

/// meshes/<name>.obj and volumes/<name>.covv for every library entry, plus
/// volumes/background.covv when `background` is set.
void write_library_assets(const std::filesystem::path& root, const VolumeLibrary& library,
                          const ObjectVolume* background);

/// Entries of root/manifest.jsonl in file order. A line that fails to parse
/// raises ManifestError naming its 1-based line number.
std::vector<Json> read_manifest(const std::filesystem::path& root);

/// Rewrites the manifest with entries ordered by scene id.
void write_manifest(const std::filesystem::path& root, std::vector<Json> entries);

/// Appends one line; safe to call from several threads.
void append_manifest(const std::filesystem::path& root, const Json& entry);

/// Structural problems of one manifest entry; empty when it conforms.
std::vector<std::string> check_manifest_entry(const Json& entry);

struct DatasetGenerationOptions {
  GenerationConfig generation;  ///< threads also bound the per-image render pool
  RenderConfig render;
  bool overwrite = false;
  /// Called after each written scene with (written, total); serialized.
  std::function<void(int, int)> progress;
};

struct DatasetGenerationSummary {
  int scenes = 0;
  int cameras = 0;
  int unsettled = 0;  ///< scenes whose settle budget ran out
  std::vector<std::string> warnings;
};

/// Composes, renders and writes generation.num_scenes scenes plus library
/// assets under `root`, then rewrites the manifest in scene-id order. A scene
/// that fails leaves no directory behind and the error propagates.
DatasetGenerationSummary generate_dataset(const std::filesystem::path& root,
                                          const VolumeLibrary& library,
                                          std::shared_ptr<const ObjectVolume> background,
                                          const DatasetGenerationOptions& options);

struct LoadedCamera {
  Camera camera;
  Image rgb;
  Image depth;
  std::map<int, Image> modal;
  std::map<int, Image> amodal;
};

struct SceneRecord {
  int scene_id = 0;
  std::vector<DatasetObject> objects;
  std::string background;
  RenderConfig render;
  std::vector<LoadedCamera> cameras;
};

/// Decodes every artifact of a manifest entry. Throws ManifestError on a
/// schema violation, MissingFileError naming an absent file and FormatError
/// for an undecodable one.
SceneRecord load_scene_record(const std::filesystem::path& root, const Json& entry);

struct DatasetFinding {
  int scene_id = -1;  ///< -1: dataset-wide
  std::string message;
};

struct DatasetReport {
  std::vector<DatasetFinding> findings;
  int scenes = 0;
  int cameras = 0;
  long long checked_pixels = 0;
  long long agreeing_pixels = 0;

  bool clean() const { return findings.empty(); }
  double agreement() const {
    return checked_pixels == 0 ? 1.0 : static_cast<double>(agreeing_pixels) / checked_pixels;
  }
};

struct ValidateOptions {
  double min_agreement = 0.99;
  /// Pixels whose re-rendered opacity reaches this enter the coherence check.
  double opaque_threshold = 0.5;
  bool check_coherence = true;
  int threads = 1;
};

/// Checks manifest/file consistency, mask ids against scene objects, and
/// re-renders every camera from the stored volumes: the owner with the largest
/// share of the expected depth must match the argmax of the stored modal masks
/// (background = 1 - their sum) on at least min_agreement of opaque pixels,
/// and the stored depth must match the re-render.
DatasetReport validate_dataset(const std::filesystem::path& root,
                               const ValidateOptions& options = {});

}  // namespace covren
