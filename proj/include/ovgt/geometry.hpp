#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace ovgt {

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pinhole intrinsics in pixels.
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  std::size_t width = 0;
  std::size_t height = 0;

  Eigen::Matrix3d matrix() const;
};

/// World-to-camera rigid transform: x_cam = rotation * x_world + translation.
struct CameraPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static CameraPose identity() { return {}; }
  CameraPose inverse() const;
  /// (this * other)(x) = this(other(x)).
  CameraPose operator*(const CameraPose& other) const;
  Eigen::Vector3d apply(const Eigen::Vector3d& x) const { return rotation * x + translation; }
  /// Camera center in world coordinates.
  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }
};

/// The 9-value camera encoding: quaternion (w,x,y,z), translation, fov (x,y) in radians.
struct CameraParamVector {
  static constexpr std::size_t kSize = 9;

  Eigen::Vector4d q = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  Eigen::Vector2d fov = Eigen::Vector2d::Zero();

  std::array<double, kSize> to_array() const;
  static CameraParamVector from_array(std::span<const double> values);
};

struct DepthObservation {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> depth;
  std::vector<std::uint8_t> mask;
  int frame_index = 0;

  std::size_t valid_count() const;
};

/// Per-pixel 3D points; row-major, one entry per pixel.
struct PointMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Eigen::Vector3d> points;
  std::vector<std::uint8_t> mask;
};

/// Sign-canonical unit quaternion: w >= 0; on w == 0 the first nonzero of (x,y,z) is positive.
Eigen::Vector4d canonicalize_quaternion(const Eigen::Vector4d& q);

/// Rotation to unit quaternion (w,x,y,z), w >= 0. Slightly non-orthonormal input
/// is projected onto the nearest rotation; det(R) <= 0 throws GeometryError.
Eigen::Vector4d rotation_to_quaternion(const Eigen::Matrix3d& rotation);
Eigen::Matrix3d quaternion_to_rotation(const Eigen::Vector4d& q);

/// Geodesic angle in radians between two rotations.
double rotation_angle(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

Eigen::Vector2d intrinsics_to_fov(const CameraIntrinsics& intrinsics);
/// Principal point is placed at the image center.
CameraIntrinsics fov_to_intrinsics(const Eigen::Vector2d& fov, std::size_t width, std::size_t height);

struct NormalizedPoses {
  std::vector<CameraPose> poses;
  double scale = 1.0;
};

/// Re-expresses every pose relative to the first and divides translations by the
/// mean distance of the remaining cameras from the first. A single camera, or
/// cameras that all coincide, yield scale 1.
NormalizedPoses normalize_poses(std::span<const CameraPose> poses);

CameraParamVector encode_camera(const CameraIntrinsics& intrinsics, const CameraPose& pose);

struct DecodedCamera {
  CameraIntrinsics intrinsics;
  CameraPose pose;
};
/// Inverse of encode_camera; the quaternion is normalized first.
DecodedCamera decode_camera(const CameraParamVector& g, std::size_t width, std::size_t height);

struct PixelProjection {
  double u = 0.0;  // continuous pixel coordinate (pixel centers at +0.5)
  double v = 0.0;
  double depth = 0.0;
};
PixelProjection project(const Eigen::Vector3d& world, const CameraIntrinsics& intrinsics, const CameraPose& pose);

/// Lifts every valid pixel (center at +0.5) to a point in the frame that `pose` maps from.
PointMap unproject(const DepthObservation& depth, const CameraIntrinsics& intrinsics, const CameraPose& pose);

struct SceneGeometry {
  std::vector<PointMap> pmaps;
  std::vector<DepthObservation> depths;
  std::vector<CameraPose> poses;
};

struct NormalizedScene {
  SceneGeometry scene;
  double scale = 1.0;
};

/// Divides depths, points and camera translations by the mean norm of all valid points.
NormalizedScene normalize_scene_gt(const SceneGeometry& scene);

struct NormalizedDepths {
  std::vector<DepthObservation> depths;
  double mean = 1.0;
};

/// Divides every map by one mean taken over the valid pixels of all maps.
NormalizedDepths normalize_depth_batch(std::span<const DepthObservation> depths);

}  // namespace ovgt
