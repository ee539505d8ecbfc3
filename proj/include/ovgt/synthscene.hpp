#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ovgt/bundle.hpp"
#include "ovgt/geometry.hpp"
#include "ovgt/nn.hpp"

namespace ovgt {

class SceneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class WorldType { kPlanes, kBlobs };

std::string to_string(WorldType world);
WorldType parse_world_type(const std::string& name);

struct SceneSpec {
  std::uint64_t seed = 0;
  std::size_t num_frames = 8;
  std::size_t height = 32;
  std::size_t width = 32;
  WorldType world = WorldType::kPlanes;
  double radius_min = 3.0;       // camera distance from the scene center
  double radius_max = 4.5;
  double orbit_arc = 1.6;        // azimuth span of the camera orbit, radians
  double jitter = 0.15;          // look-at and position jitter, scene units
  double fov_min = 0.9;          // horizontal/vertical fov range, radians
  double fov_max = 1.3;
  double min_coverage = 0.3;     // fraction of pixels that must hit geometry
  std::size_t max_retries = 64;

  void validate() const;
};

/// Analytic world primitive: a disc (center, normal, radius) or a sphere (center, radius).
struct Primitive {
  enum class Kind { kDisc, kSphere };
  Kind kind = Kind::kDisc;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double radius = 1.0;
  Eigen::Vector3d albedo = Eigen::Vector3d::Constant(0.5);
  double texture_frequency = 3.0;
};

struct RayHit {
  double t = 0.0;  // ray parameter; equals z-depth for camera rays with unit z
  std::size_t primitive = 0;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
};

struct World {
  std::vector<Primitive> primitives;

  /// Nearest hit with t > 1e-9, if any.
  std::optional<RayHit> intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& direction) const;
};

struct SceneFrame {
  Image image;
  DepthObservation depth;
  CameraIntrinsics intrinsics;
  CameraPose pose;
  PointMap points;  // world coordinates of every hit pixel
};

struct SceneSample {
  std::uint64_t seed = 0;
  World world;
  std::vector<SceneFrame> frames;

  std::vector<CameraPose> poses() const;
  /// Copy holding only `indices`, in that order.
  SceneSample select(std::span<const std::size_t> indices) const;
};

/// Deterministic per seed; throws SceneError naming the seed when no camera
/// placement reaches the coverage threshold within the retry budget.
SceneSample generate(const SceneSpec& spec);

/// Renders one view of `world` through a pinhole camera.
SceneFrame render_frame(const World& world, const CameraIntrinsics& intrinsics, const CameraPose& pose, int index);

struct FrameSamplerConfig {
  double translation_weight = 1.0;  // weight of normalized center distance against rotation angle
};

/// Pose-similarity distance: rotation angle plus weighted camera-center distance,
/// centers scaled by their mean distance from the centroid.
std::vector<std::vector<double>> pose_distances(std::span<const CameraPose> poses, const FrameSamplerConfig& config);

/// Each frame's valid range: the top_n most similar other frames, nearest first.
std::vector<std::vector<std::size_t>> valid_ranges(std::span<const CameraPose> poses, std::size_t top_n,
                                                   const FrameSamplerConfig& config);

/// Picks a uniform anchor and count-1 distinct frames from its valid range; anchor first.
std::vector<std::size_t> sample_frames(std::span<const CameraPose> poses, std::size_t count, std::size_t top_n, Rng& rng,
                                       const FrameSamplerConfig& config = {});

/// Scene directory: scene.txt header plus frame_%03d.{img,dpt,msk} little-endian float32 arrays.
void write_scene(const std::filesystem::path& dir, const SceneSample& scene);
/// Reads a scene directory; point maps are rebuilt from depth and cameras.
SceneSample read_scene(const std::filesystem::path& dir);

}  // namespace ovgt
