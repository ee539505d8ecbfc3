#include "ovgt/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

namespace ovgt {

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

CameraPose CameraPose::inverse() const {
  CameraPose inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

CameraPose CameraPose::operator*(const CameraPose& other) const {
  CameraPose out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

std::array<double, CameraParamVector::kSize> CameraParamVector::to_array() const {
  return {q[0], q[1], q[2], q[3], t[0], t[1], t[2], fov[0], fov[1]};
}

CameraParamVector CameraParamVector::from_array(std::span<const double> v) {
  if (v.size() != kSize) throw GeometryError("camera vector needs 9 values, got " + std::to_string(v.size()));
  CameraParamVector g;
  g.q = Eigen::Vector4d(v[0], v[1], v[2], v[3]);
  g.t = Eigen::Vector3d(v[4], v[5], v[6]);
  g.fov = Eigen::Vector2d(v[7], v[8]);
  return g;
}

std::size_t DepthObservation::valid_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

Eigen::Vector4d canonicalize_quaternion(const Eigen::Vector4d& q) {
  if (q[0] > 0.0) return q;
  if (q[0] < 0.0) return -q;
  for (int i = 1; i < 4; ++i) {
    if (q[i] > 0.0) return q;
    if (q[i] < 0.0) return -q;
  }
  return q;
}

Eigen::Vector4d rotation_to_quaternion(const Eigen::Matrix3d& rotation) {
  const double det = rotation.determinant();
  if (!(det > 0.0)) throw GeometryError("invalid rotation: determinant " + std::to_string(det) + " is not positive");
  Eigen::Matrix3d r = rotation;
  const double ortho_err = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho_err > 1e-6 || std::abs(det - 1.0) > 1e-6) {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    r = svd.matrixU() * svd.matrixV().transpose();
  }
  const Eigen::Quaterniond q(r);
  return canonicalize_quaternion(Eigen::Vector4d(q.w(), q.x(), q.y(), q.z()).normalized());
}

Eigen::Matrix3d quaternion_to_rotation(const Eigen::Vector4d& q) {
  const double n = q.norm();
  if (n < 1e-12) return Eigen::Matrix3d::Identity();
  return Eigen::Quaterniond(q[0] / n, q[1] / n, q[2] / n, q[3] / n).toRotationMatrix();
}

double rotation_angle(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  // atan2 form stays accurate near 0 and pi where acos of the trace does not.
  const Eigen::Matrix3d rel = a.transpose() * b;
  const Eigen::Vector3d axis(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
  return std::atan2(0.5 * axis.norm(), 0.5 * (rel.trace() - 1.0));
}

Eigen::Vector2d intrinsics_to_fov(const CameraIntrinsics& k) {
  if (!(k.fx > 0.0) || !(k.fy > 0.0)) throw GeometryError("focal lengths must be positive");
  return {2.0 * std::atan(static_cast<double>(k.width) / (2.0 * k.fx)),
          2.0 * std::atan(static_cast<double>(k.height) / (2.0 * k.fy))};
}

CameraIntrinsics fov_to_intrinsics(const Eigen::Vector2d& fov, std::size_t width, std::size_t height) {
  CameraIntrinsics k;
  k.width = width;
  k.height = height;
  k.fx = static_cast<double>(width) / (2.0 * std::tan(0.5 * fov[0]));
  k.fy = static_cast<double>(height) / (2.0 * std::tan(0.5 * fov[1]));
  k.cx = 0.5 * static_cast<double>(width);
  k.cy = 0.5 * static_cast<double>(height);
  return k;
}

NormalizedPoses normalize_poses(std::span<const CameraPose> poses) {
  if (poses.empty()) throw GeometryError("normalize_poses needs at least one camera");
  NormalizedPoses out;
  const CameraPose anchor_inv = poses.front().inverse();
  out.poses.reserve(poses.size());
  for (const auto& pose : poses) out.poses.push_back(pose * anchor_inv);
  out.poses.front() = CameraPose::identity();

  double scale = 1.0;
  if (poses.size() > 1) {
    double total = 0.0;
    for (std::size_t j = 1; j < out.poses.size(); ++j) total += out.poses[j].translation.norm();
    scale = total / static_cast<double>(poses.size() - 1);
    if (scale < 1e-9) scale = 1.0;
  }
  for (auto& pose : out.poses) pose.translation /= scale;
  out.scale = scale;
  return out;
}

CameraParamVector encode_camera(const CameraIntrinsics& intrinsics, const CameraPose& pose) {
  CameraParamVector g;
  g.q = rotation_to_quaternion(pose.rotation);
  g.t = pose.translation;
  g.fov = intrinsics_to_fov(intrinsics);
  return g;
}

DecodedCamera decode_camera(const CameraParamVector& g, std::size_t width, std::size_t height) {
  DecodedCamera out;
  out.pose.rotation = quaternion_to_rotation(g.q);
  out.pose.translation = g.t;
  out.intrinsics = fov_to_intrinsics(g.fov, width, height);
  return out;
}

PixelProjection project(const Eigen::Vector3d& world, const CameraIntrinsics& k, const CameraPose& pose) {
  const Eigen::Vector3d cam = pose.apply(world);
  PixelProjection p;
  p.depth = cam.z();
  p.u = k.fx * cam.x() / cam.z() + k.cx;
  p.v = k.fy * cam.y() / cam.z() + k.cy;
  return p;
}

PointMap unproject(const DepthObservation& depth, const CameraIntrinsics& k, const CameraPose& pose) {
  PointMap out;
  out.height = depth.height;
  out.width = depth.width;
  out.mask = depth.mask;
  out.points.assign(depth.height * depth.width, Eigen::Vector3d::Zero());
  const CameraPose to_frame = pose.inverse();
  for (std::size_t v = 0; v < depth.height; ++v) {
    for (std::size_t u = 0; u < depth.width; ++u) {
      const std::size_t i = v * depth.width + u;
      if (!depth.mask[i]) continue;
      const double d = depth.depth[i];
      const Eigen::Vector3d cam((static_cast<double>(u) + 0.5 - k.cx) / k.fx * d,
                                (static_cast<double>(v) + 0.5 - k.cy) / k.fy * d, d);
      out.points[i] = to_frame.apply(cam);
    }
  }
  return out;
}

NormalizedScene normalize_scene_gt(const SceneGeometry& scene) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& pm : scene.pmaps) {
    for (std::size_t i = 0; i < pm.points.size(); ++i) {
      if (!pm.mask[i]) continue;
      total += pm.points[i].norm();
      ++count;
    }
  }
  if (count == 0) throw GeometryError("cannot normalize an empty scene: no valid points");
  const double scale = total / static_cast<double>(count);
  if (!(scale > 0.0)) throw GeometryError("cannot normalize a scene whose points all sit at the origin");
  NormalizedScene out{scene, scale};
  for (auto& pm : out.scene.pmaps) {
    for (auto& p : pm.points) p /= scale;
  }
  for (auto& d : out.scene.depths) {
    for (auto& v : d.depth) v /= scale;
  }
  for (auto& pose : out.scene.poses) pose.translation /= scale;
  return out;
}

NormalizedDepths normalize_depth_batch(std::span<const DepthObservation> depths) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& d : depths) {
    for (std::size_t i = 0; i < d.depth.size(); ++i) {
      if (!d.mask[i]) continue;
      total += d.depth[i];
      ++count;
    }
  }
  if (count == 0) throw GeometryError("cannot normalize depth batch: no valid pixels");
  NormalizedDepths out;
  out.mean = total / static_cast<double>(count);
  if (!(out.mean > 0.0)) throw GeometryError("cannot normalize depth batch: mean valid depth is not positive");
  out.depths.assign(depths.begin(), depths.end());
  for (auto& d : out.depths) {
    for (auto& v : d.depth) v /= out.mean;
  }
  return out;
}

}  // namespace ovgt
