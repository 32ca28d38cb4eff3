// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>

namespace covren {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole intrinsics. Image origin is the top-left corner and pixel (u, v)
/// has its center at (u + 0.5, v + 0.5).
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.5;
  double cy = 0.5;
  int width = 1;
  int height = 1;

  /// Throws DomainError unless fx, fy > 0 and the principal point is inside
  /// the image.
  void validate() const;
};

/// Rigid transform x -> rotation * x + translation.
///
/// For objects this maps object-local coordinates to the world; for cameras
/// it maps camera coordinates (+z forward, +x right, +y down) to the world.
struct RigidPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidPose identity() { return {}; }
  static RigidPose from_quaternion(const Eigen::Quaterniond& q, const Vec3& t);

  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(rotation); }
  RigidPose inverse() const;
  RigidPose operator*(const RigidPose& rhs) const;

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  bool is_valid(double tol = 1e-6) const;
};

/// Camera = intrinsics + camera-to-world pose.
struct Camera {
  CameraIntrinsics intrinsics;
  RigidPose pose;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();

  Vec3 at(double t) const { return origin + t * direction; }
};

struct AxisAlignedBox {
  Vec3 min_corner = Vec3::Zero();
  Vec3 max_corner = Vec3::Ones();

  Vec3 extent() const { return max_corner - min_corner; }
  Vec3 center() const { return 0.5 * (min_corner + max_corner); }
  double diagonal() const { return extent().norm(); }
  bool contains(const Vec3& p) const;
  bool is_valid() const;
};

struct RayInterval {
  double t_enter = 0.0;
  double t_exit = 0.0;
};

Vec3 world_to_object(const Vec3& point, const RigidPose& pose);
Vec3 object_to_world(const Vec3& point, const RigidPose& pose);

/// World-space ray through the center of pixel (u, v). Throws DomainError for
/// pixels outside the image.
Ray ray_for_pixel(const CameraIntrinsics& intrinsics, const RigidPose& camera_pose,
                  int u, int v);

/// Continuous image coordinates of a world point (no bounds check).
/// Returns nullopt for points at or behind the camera plane.
std::optional<Eigen::Vector2d> project_point(const CameraIntrinsics& intrinsics,
                                             const RigidPose& camera_pose,
                                             const Vec3& world_point);

/// Slab test against a box posed in the world. The returned interval is
/// clipped to t >= 0; nullopt when the ray misses or the box is behind it.
std::optional<RayInterval> intersect_ray_box(const Ray& ray, const AxisAlignedBox& box,
                                             const RigidPose& box_pose);

/// Rotation that points the camera +z axis from `eye` towards `target`,
/// with camera +y (image down) along -`up` as far as possible.
RigidPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());

}  // namespace covren
