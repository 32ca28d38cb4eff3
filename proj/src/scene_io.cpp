// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#include "covren/scene_io.hpp"

#include "covren/errors.hpp"

#include <fstream>
#include <map>
#include <memory>

namespace covren {

namespace {

Vec3 vec3_from_json(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) {
    throw FormatError(std::string(what) + " must be an array of 3 numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Json vec3_to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

const Json& require(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw FormatError(std::string("missing key '") + key + "'");
  }
  return j.at(key);
}

template <typename T>
void maybe(const Json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw FormatError(std::string("key '") + key + "': " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

Json pose_to_json(const RigidPose& pose) {
  const Eigen::Quaterniond q = pose.quaternion().normalized();
  return {{"quat_wxyz", Json::array({q.w(), q.x(), q.y(), q.z()})},
          {"t", vec3_to_json(pose.translation)}};
}

RigidPose pose_from_json(const Json& j) {
  const Json& q = require(j, "quat_wxyz");
  if (!q.is_array() || q.size() != 4) {
    throw FormatError("quat_wxyz must be an array of 4 numbers");
  }
  Eigen::Quaterniond quat(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                          q[3].get<double>());
  if (!(quat.norm() > 1e-12)) {
    throw FormatError("quat_wxyz has zero norm");
  }
  return RigidPose::from_quaternion(quat.normalized(), vec3_from_json(require(j, "t"), "t"));
}

Json camera_to_json(const Camera& camera) {
  const CameraIntrinsics& k = camera.intrinsics;
  return {{"fx", k.fx},       {"fy", k.fy},         {"cx", k.cx},
          {"cy", k.cy},       {"width", k.width},   {"height", k.height},
          {"pose", pose_to_json(camera.pose)}};
}

Camera camera_from_json(const Json& j) {
  Camera cam;
  cam.intrinsics.fx = require(j, "fx").get<double>();
  cam.intrinsics.fy = require(j, "fy").get<double>();
  cam.intrinsics.cx = require(j, "cx").get<double>();
  cam.intrinsics.cy = require(j, "cy").get<double>();
  cam.intrinsics.width = require(j, "width").get<int>();
  cam.intrinsics.height = require(j, "height").get<int>();
  cam.pose = pose_from_json(require(j, "pose"));
  return cam;
}

Json box_to_json(const AxisAlignedBox& box) {
  return {{"min", vec3_to_json(box.min_corner)}, {"max", vec3_to_json(box.max_corner)}};
}

AxisAlignedBox box_from_json(const Json& j) {
  return {vec3_from_json(require(j, "min"), "min"), vec3_from_json(require(j, "max"), "max")};
}

RenderConfig render_config_from_json(const Json& j, RenderConfig base) {
  maybe(j, "samples_per_object", base.samples_per_object);
  maybe(j, "samples_background", base.samples_background);
  maybe(j, "t_far", base.t_far);
  maybe(j, "stratified", base.stratified);
  maybe(j, "seed", base.seed);
  maybe(j, "ray_distance_depth", base.ray_distance_depth);
  return base;
}

Json render_config_to_json(const RenderConfig& c) {
  return {{"samples_per_object", c.samples_per_object},
          {"samples_background", c.samples_background},
          {"t_far", c.t_far},
          {"stratified", c.stratified},
          {"seed", c.seed},
          {"ray_distance_depth", c.ray_distance_depth}};
}

GenerationConfig generation_config_from_json(const Json& j, GenerationConfig base) {
  maybe(j, "num_scenes", base.num_scenes);
  maybe(j, "objects_min", base.objects_min);
  maybe(j, "objects_max", base.objects_max);
  if (j.contains("bin")) base.bin = box_from_json(j.at("bin"));
  maybe(j, "settle_steps", base.settle_steps);
  maybe(j, "full_rotation", base.full_rotation);
  maybe(j, "seed", base.seed);
  if (j.contains("cameras")) {
    const Json& c = j.at("cameras");
    CameraSampling& cs = base.cameras;
    maybe(c, "count_min", cs.count_min);
    maybe(c, "count_max", cs.count_max);
    maybe(c, "radius_min", cs.radius_min);
    maybe(c, "radius_max", cs.radius_max);
    maybe(c, "elevation_min_deg", cs.elevation_min_deg);
    maybe(c, "elevation_max_deg", cs.elevation_max_deg);
    maybe(c, "azimuth_min_deg", cs.azimuth_min_deg);
    maybe(c, "azimuth_max_deg", cs.azimuth_max_deg);
    maybe(c, "look_at_jitter", cs.look_at_jitter);
    maybe(c, "horizontal_fov_deg", cs.horizontal_fov_deg);
    maybe(c, "width", cs.width);
    maybe(c, "height", cs.height);
  }
  return base;
}

Json generation_config_to_json(const GenerationConfig& c) {
  const CameraSampling& cs = c.cameras;
  return {{"num_scenes", c.num_scenes},
          {"objects_min", c.objects_min},
          {"objects_max", c.objects_max},
          {"bin", box_to_json(c.bin)},
          {"settle_steps", c.settle_steps},
          {"full_rotation", c.full_rotation},
          {"seed", c.seed},
          {"cameras",
           {{"count_min", cs.count_min},
            {"count_max", cs.count_max},
            {"radius_min", cs.radius_min},
            {"radius_max", cs.radius_max},
            {"elevation_min_deg", cs.elevation_min_deg},
            {"elevation_max_deg", cs.elevation_max_deg},
            {"azimuth_min_deg", cs.azimuth_min_deg},
            {"azimuth_max_deg", cs.azimuth_max_deg},
            {"look_at_jitter", cs.look_at_jitter},
            {"horizontal_fov_deg", cs.horizontal_fov_deg},
            {"width", cs.width},
            {"height", cs.height}}}};
}

FitConfig fit_config_from_json(const Json& j, FitConfig base) {
  maybe(j, "iterations", base.iterations);
  maybe(j, "rays_per_iteration", base.rays_per_iteration);
  maybe(j, "learning_rate", base.learning_rate);
  maybe(j, "beta1", base.beta1);
  maybe(j, "beta2", base.beta2);
  maybe(j, "epsilon", base.epsilon);
  maybe(j, "freeze_background", base.freeze_background);
  maybe(j, "occupancy_density_threshold", base.occupancy_density_threshold);
  if (j.contains("weights")) {
    const Json& w = j.at("weights");
    maybe(w, "color", base.weights.color);
    maybe(w, "depth", base.weights.depth);
    maybe(w, "mask", base.weights.mask);
    maybe(w, "occupancy", base.weights.occupancy);
  }
  if (j.contains("render")) base.render = render_config_from_json(j.at("render"), base.render);
  return base;
}

SceneFile load_scene_file(const std::filesystem::path& path) {
  const Json j = read_json_file(path);
  const std::filesystem::path dir = path.parent_path();
  SceneFile out;
  try {
    if (j.contains("background") && !j.at("background").is_null()) {
      out.background = resolve(dir, j.at("background").get<std::string>());
    }
    int next_id = 1;
    for (const Json& o : require(j, "objects")) {
      SceneFile::Object obj;
      obj.id = o.contains("id") ? o.at("id").get<int>() : next_id;
      next_id = obj.id + 1;
      obj.volume = resolve(dir, require(o, "volume").get<std::string>());
      obj.pose = pose_from_json(require(o, "pose"));
      out.objects.push_back(std::move(obj));
    }
    if (j.contains("cameras")) {
      for (const Json& c : j.at("cameras")) out.cameras.push_back(camera_from_json(c));
    }
  } catch (const Json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return out;
}

void save_scene_file(const SceneFile& scene, const std::filesystem::path& path) {
  Json j;
  j["background"] = scene.background.empty() ? Json(nullptr) : Json(scene.background.string());
  j["objects"] = Json::array();
  for (const SceneFile::Object& o : scene.objects) {
    j["objects"].push_back(
        {{"id", o.id}, {"volume", o.volume.string()}, {"pose", pose_to_json(o.pose)}});
  }
  j["cameras"] = Json::array();
  for (const Camera& c : scene.cameras) j["cameras"].push_back(camera_to_json(c));
  write_json_file(path, j);
}

Scene load_scene_volumes(const SceneFile& scene) {
  std::map<std::filesystem::path, std::shared_ptr<const ObjectVolume>> cache;
  auto get = [&](const std::filesystem::path& p) {
    auto it = cache.find(p);
    if (it == cache.end()) {
      it = cache.emplace(p, std::make_shared<const ObjectVolume>(load_volume(p))).first;
    }
    return it->second;
  };
  Scene out;
  if (!scene.background.empty()) out.background = get(scene.background);
  for (const SceneFile::Object& o : scene.objects) out.objects.push_back({o.id, get(o.volume), o.pose});
  out.validate();
  return out;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  out << j.dump(2) << '\n';
  if (!out) {
    throw IoError("failed writing " + path.string());
  }
}

}  // namespace covren
