// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#include "covren/geometry.hpp"

#include "covren/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace covren {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw DomainError("camera focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw DomainError("camera image size must be positive");
  }
  if (!(cx > 0.0 && cx < width && cy > 0.0 && cy < height)) {
    throw DomainError("camera principal point must lie inside the image");
  }
}

RigidPose RigidPose::from_quaternion(const Eigen::Quaterniond& q, const Vec3& t) {
  RigidPose pose;
  pose.rotation = q.normalized().toRotationMatrix();
  pose.translation = t;
  return pose;
}

RigidPose RigidPose::inverse() const {
  RigidPose inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

RigidPose RigidPose::operator*(const RigidPose& rhs) const {
  RigidPose out;
  out.rotation = rotation * rhs.rotation;
  out.translation = rotation * rhs.translation + translation;
  return out;
}

bool RigidPose::is_valid(double tol) const {
  const Mat3 gram = rotation.transpose() * rotation;
  return (gram - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(rotation.determinant() - 1.0) <= tol && translation.allFinite();
}

bool AxisAlignedBox::contains(const Vec3& p) const {
  return (p.array() >= min_corner.array()).all() && (p.array() <= max_corner.array()).all();
}

bool AxisAlignedBox::is_valid() const {
  return min_corner.allFinite() && max_corner.allFinite() &&
         (min_corner.array() < max_corner.array()).all();
}

Vec3 world_to_object(const Vec3& point, const RigidPose& pose) {
  return pose.rotation.transpose() * (point - pose.translation);
}

Vec3 object_to_world(const Vec3& point, const RigidPose& pose) { return pose.apply(point); }

Ray ray_for_pixel(const CameraIntrinsics& intrinsics, const RigidPose& camera_pose, int u,
                  int v) {
  if (u < 0 || v < 0 || u >= intrinsics.width || v >= intrinsics.height) {
    throw DomainError("pixel (" + std::to_string(u) + ", " + std::to_string(v) +
                      ") outside " + std::to_string(intrinsics.width) + "x" +
                      std::to_string(intrinsics.height) + " image");
  }
  const Vec3 dir_cam((u + 0.5 - intrinsics.cx) / intrinsics.fx,
                     (v + 0.5 - intrinsics.cy) / intrinsics.fy, 1.0);
  Ray ray;
  ray.origin = camera_pose.translation;
  ray.direction = (camera_pose.rotation * dir_cam).normalized();
  return ray;
}

std::optional<Eigen::Vector2d> project_point(const CameraIntrinsics& intrinsics,
                                             const RigidPose& camera_pose,
                                             const Vec3& world_point) {
  const Vec3 p = world_to_object(world_point, camera_pose);
  if (p.z() <= 0.0) {
    return std::nullopt;
  }
  return Eigen::Vector2d(intrinsics.fx * p.x() / p.z() + intrinsics.cx,
                         intrinsics.fy * p.y() / p.z() + intrinsics.cy);
}

std::optional<RayInterval> intersect_ray_box(const Ray& ray, const AxisAlignedBox& box,
                                             const RigidPose& box_pose) {
  const Vec3 o = world_to_object(ray.origin, box_pose);
  const Vec3 d = box_pose.rotation.transpose() * ray.direction;

  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    if (d[axis] == 0.0) {
      if (o[axis] < box.min_corner[axis] || o[axis] > box.max_corner[axis]) {
        return std::nullopt;
      }
      continue;
    }
    const double inv = 1.0 / d[axis];
    double ta = (box.min_corner[axis] - o[axis]) * inv;
    double tb = (box.max_corner[axis] - o[axis]) * inv;
    if (ta > tb) {
      std::swap(ta, tb);
    }
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) {
      return std::nullopt;
    }
  }
  if (t1 < 0.0) {
    return std::nullopt;
  }
  return RayInterval{std::max(t0, 0.0), t1};
}

RigidPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) {
    right = forward.cross(Vec3::UnitX().dot(forward) > 0.9 ? Vec3::UnitY() : Vec3::UnitX());
  }
  right.normalize();
  const Vec3 down = forward.cross(right);
  RigidPose pose;
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = down;
  pose.rotation.col(2) = forward;
  pose.translation = eye;
  return pose;
}

}  // namespace covren
