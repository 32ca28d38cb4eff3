// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "covren/compositor.hpp"
#include "covren/fitting.hpp"
#include "covren/geometry.hpp"
#include "covren/synthesis.hpp"

#include <json.hpp>

#include <filesystem>
#include <vector>

namespace covren {

using Json = nlohmann::json;

/// {"quat_wxyz": [w, x, y, z], "t": [x, y, z]}. Quaternions are normalised on
/// read; a zero quaternion is a FormatError.
Json pose_to_json(const RigidPose& pose);
RigidPose pose_from_json(const Json& j);

/// {"fx", "fy", "cx", "cy", "width", "height", "pose"}.
Json camera_to_json(const Camera& camera);
Camera camera_from_json(const Json& j);

Json box_to_json(const AxisAlignedBox& box);
AxisAlignedBox box_from_json(const Json& j);

/// Keys present in `j` override fields of `base`.
RenderConfig render_config_from_json(const Json& j, RenderConfig base = {});
Json render_config_to_json(const RenderConfig& config);
GenerationConfig generation_config_from_json(const Json& j, GenerationConfig base = {});
Json generation_config_to_json(const GenerationConfig& config);
FitConfig fit_config_from_json(const Json& j, FitConfig base = {});

/// Scene description with volumes referenced by path.
struct SceneFile {
  struct Object {
    int id = 1;
    std::filesystem::path volume;
    RigidPose pose;
  };
  std::filesystem::path background;  ///< empty: no background
  std::vector<Object> objects;
  std::vector<Camera> cameras;
};

/// Relative volume paths are resolved against the file's directory.
SceneFile load_scene_file(const std::filesystem::path& path);
void save_scene_file(const SceneFile& scene, const std::filesystem::path& path);

/// Loads the referenced volumes; repeated paths share one volume.
Scene load_scene_volumes(const SceneFile& scene);

/// FormatError names the file and the parser message.
Json read_json_file(const std::filesystem::path& path);
/// Two-space indented, trailing newline.
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace covren
