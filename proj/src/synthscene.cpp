#include "ovgt/synthscene.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace ovgt {

namespace {

constexpr std::size_t kChannels = 3;

Eigen::Vector3d random_unit(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector3d v;
  do {
    v = Eigen::Vector3d(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

World build_world(WorldType type, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const auto albedo = [&] { return Eigen::Vector3d(uniform(0.3, 1.0), uniform(0.3, 1.0), uniform(0.3, 1.0)); };

  World world;
  Primitive ground;
  ground.kind = Primitive::Kind::kDisc;
  ground.center = Eigen::Vector3d::Zero();
  ground.normal = Eigen::Vector3d::UnitZ();
  ground.radius = 5.0;
  ground.albedo = albedo();
  ground.texture_frequency = uniform(2.0, 4.0);
  world.primitives.push_back(ground);

  if (type == WorldType::kPlanes) {
    const int count = std::uniform_int_distribution<int>(3, 5)(rng);
    for (int i = 0; i < count; ++i) {
      Primitive p;
      p.kind = Primitive::Kind::kDisc;
      p.center = Eigen::Vector3d(uniform(-1.4, 1.4), uniform(-1.4, 1.4), uniform(0.3, 1.4));
      Eigen::Vector3d n = random_unit(rng);
      n.z() = std::abs(n.z()) + 0.3;
      p.normal = n.normalized();
      p.radius = uniform(0.5, 1.2);
      p.albedo = albedo();
      p.texture_frequency = uniform(3.0, 7.0);
      world.primitives.push_back(p);
    }
  } else {
    const int count = std::uniform_int_distribution<int>(3, 6)(rng);
    for (int i = 0; i < count; ++i) {
      Primitive p;
      p.kind = Primitive::Kind::kSphere;
      p.radius = uniform(0.3, 0.9);
      p.center = Eigen::Vector3d(uniform(-1.4, 1.4), uniform(-1.4, 1.4), p.radius * uniform(0.6, 1.2));
      p.albedo = albedo();
      p.texture_frequency = uniform(3.0, 7.0);
      world.primitives.push_back(p);
    }
  }
  return world;
}

// World-to-camera pose looking from `eye` at `target`, z-up world, y-down camera.
CameraPose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ());
  if (right.norm() < 1e-9) right = Eigen::Vector3d::UnitX();
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);
  CameraPose pose;
  pose.rotation.row(0) = right.transpose();
  pose.rotation.row(1) = down.transpose();
  pose.rotation.row(2) = forward.transpose();
  pose.translation = -pose.rotation * eye;
  return pose;
}

Eigen::Vector3d shade(const Primitive& prim, const RayHit& hit, const Eigen::Vector3d& ray_dir) {
  static const Eigen::Vector3d kLight = Eigen::Vector3d(0.4, 0.3, 1.0).normalized();
  Eigen::Vector3d n = hit.normal;
  if (n.dot(ray_dir) > 0.0) n = -n;
  const double f = prim.texture_frequency;
  const Eigen::Vector3d& p = hit.point;
  const double texture = 0.7 + 0.3 * std::sin(f * p.x()) * std::sin(f * p.y()) * std::cos(f * p.z());
  const double lambert = 0.3 + 0.7 * std::max(0.0, n.dot(kLight));
  const double fog = std::exp(-0.08 * hit.t);
  return (prim.albedo * (texture * lambert * fog)).cwiseMin(1.0).cwiseMax(0.0);
}

void write_floats(const std::filesystem::path& path, const std::vector<double>& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SceneError("cannot open " + path.string() + " for writing");
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                           static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
    out.write(bytes, 4);
  }
  if (!out) throw SceneError("failed writing " + path.string());
}

std::vector<double> read_floats(const std::filesystem::path& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SceneError("cannot open " + path.string());
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw SceneError(path.string() + " is truncated");
    const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    values[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw SceneError(path.string() + " has trailing data");
  return values;
}

std::string frame_name(std::size_t index, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%03zu.%s", index, ext);
  return buf;
}

}  // namespace

std::string to_string(WorldType world) { return world == WorldType::kPlanes ? "planes" : "blobs"; }

WorldType parse_world_type(const std::string& name) {
  if (name == "planes") return WorldType::kPlanes;
  if (name == "blobs") return WorldType::kBlobs;
  throw std::invalid_argument("unknown world type '" + name + "'");
}

void SceneSpec::validate() const {
  if (num_frames < 1) throw std::invalid_argument("scene needs at least one frame");
  if (height == 0 || width == 0) throw std::invalid_argument("scene image size must be positive");
  if (!(fov_min > 0.0) || !(fov_max < std::numbers::pi) || fov_min > fov_max) {
    throw std::invalid_argument("fov range must lie inside (0, pi)");
  }
  if (!(radius_min > 0.0) || radius_min > radius_max) throw std::invalid_argument("invalid orbit radius range");
}

std::optional<RayHit> World::intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& direction) const {
  std::optional<RayHit> best;
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const Primitive& p = primitives[i];
    double t = std::numeric_limits<double>::infinity();
    Eigen::Vector3d normal;
    if (p.kind == Primitive::Kind::kDisc) {
      const double denom = p.normal.dot(direction);
      if (std::abs(denom) < 1e-12) continue;
      const double cand = p.normal.dot(p.center - origin) / denom;
      if (!(cand > 1e-9)) continue;
      if ((origin + cand * direction - p.center).norm() > p.radius) continue;
      t = cand;
      normal = p.normal;
    } else {
      const Eigen::Vector3d oc = origin - p.center;
      const double a = direction.dot(direction);
      const double b = 2.0 * oc.dot(direction);
      const double c = oc.dot(oc) - p.radius * p.radius;
      const double disc = b * b - 4.0 * a * c;
      if (disc < 0.0) continue;
      const double sq = std::sqrt(disc);
      const double t0 = (-b - sq) / (2.0 * a);
      const double t1 = (-b + sq) / (2.0 * a);
      const double cand = t0 > 1e-9 ? t0 : t1;
      if (!(cand > 1e-9)) continue;
      t = cand;
      normal = (origin + cand * direction - p.center).normalized();
    }
    if (!best || t < best->t) {
      best = RayHit{t, i, origin + t * direction, normal};
    }
  }
  return best;
}

std::vector<CameraPose> SceneSample::poses() const {
  std::vector<CameraPose> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.pose);
  return out;
}

SceneSample SceneSample::select(std::span<const std::size_t> indices) const {
  SceneSample out;
  out.seed = seed;
  out.world = world;
  for (std::size_t i : indices) {
    if (i >= frames.size()) throw std::out_of_range("frame index " + std::to_string(i) + " out of range");
    out.frames.push_back(frames[i]);
  }
  return out;
}

SceneFrame render_frame(const World& world, const CameraIntrinsics& k, const CameraPose& pose, int index) {
  const std::size_t h = k.height;
  const std::size_t w = k.width;
  SceneFrame frame;
  frame.intrinsics = k;
  frame.pose = pose;
  frame.image = Image{kChannels, h, w, std::vector<double>(kChannels * h * w, 0.0)};
  frame.depth.height = h;
  frame.depth.width = w;
  frame.depth.depth.assign(h * w, 0.0);
  frame.depth.mask.assign(h * w, 0);
  frame.depth.frame_index = index;
  frame.points.height = h;
  frame.points.width = w;
  frame.points.points.assign(h * w, Eigen::Vector3d::Zero());
  frame.points.mask.assign(h * w, 0);

  const Eigen::Vector3d origin = pose.center();
  const Eigen::Matrix3d cam_to_world = pose.rotation.transpose();
  for (std::size_t v = 0; v < h; ++v) {
    for (std::size_t u = 0; u < w; ++u) {
      const std::size_t i = v * w + u;
      // unit z in camera coordinates, so the hit parameter is the z-depth
      const Eigen::Vector3d dir_cam((static_cast<double>(u) + 0.5 - k.cx) / k.fx,
                                    (static_cast<double>(v) + 0.5 - k.cy) / k.fy, 1.0);
      const Eigen::Vector3d dir = cam_to_world * dir_cam;
      const auto hit = world.intersect(origin, dir);
      if (!hit) continue;
      frame.depth.depth[i] = hit->t;
      frame.depth.mask[i] = 1;
      frame.points.points[i] = hit->point;
      frame.points.mask[i] = 1;
      const Eigen::Vector3d color = shade(world.primitives[hit->primitive], *hit, dir);
      for (std::size_t c = 0; c < kChannels; ++c) frame.image.values[c * h * w + i] = color[static_cast<int>(c)];
    }
  }
  return frame;
}

SceneSample generate(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  SceneSample scene;
  scene.seed = spec.seed;
  const WorldType world_type = spec.world;
  scene.world = build_world(world_type, rng);
  const double base_azimuth = uniform(0.0, 2.0 * std::numbers::pi);
  const std::size_t f = spec.num_frames;
  for (std::size_t i = 0; i < f; ++i) {
    const double slot = f == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(f - 1) - 0.5;
    bool accepted = false;
    for (std::size_t attempt = 0; attempt < spec.max_retries && !accepted; ++attempt) {
      const double azimuth = base_azimuth + spec.orbit_arc * slot + uniform(-0.15, 0.15);
      const double elevation = uniform(0.35, 0.75);
      const double radius = uniform(spec.radius_min, spec.radius_max);
      const Eigen::Vector3d eye = radius * Eigen::Vector3d(std::cos(elevation) * std::cos(azimuth),
                                                           std::cos(elevation) * std::sin(azimuth), std::sin(elevation));
      const Eigen::Vector3d target(uniform(-spec.jitter, spec.jitter), uniform(-spec.jitter, spec.jitter),
                                   0.4 + uniform(-spec.jitter, spec.jitter));
      const double fov = uniform(spec.fov_min, spec.fov_max);
      const CameraIntrinsics k = fov_to_intrinsics(Eigen::Vector2d(fov, fov), spec.width, spec.height);
      SceneFrame frame = render_frame(scene.world, k, look_at(eye, target), static_cast<int>(i));
      const double coverage =
          static_cast<double>(frame.depth.valid_count()) / static_cast<double>(spec.height * spec.width);
      if (coverage >= spec.min_coverage) {
        scene.frames.push_back(std::move(frame));
        accepted = true;
      }
    }
    if (!accepted) {
      throw SceneError("scene seed " + std::to_string(spec.seed) + ": frame " + std::to_string(i) +
                       " never reached the coverage threshold");
    }
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Frame sampling

std::vector<std::vector<double>> pose_distances(std::span<const CameraPose> poses, const FrameSamplerConfig& config) {
  const std::size_t n = poses.size();
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : poses) centroid += p.center();
  if (n > 0) centroid /= static_cast<double>(n);
  double spread = 0.0;
  for (const auto& p : poses) spread += (p.center() - centroid).norm();
  spread = n > 0 ? spread / static_cast<double>(n) : 1.0;
  if (spread < 1e-12) spread = 1.0;

  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = rotation_angle(poses[i].rotation, poses[j].rotation) +
                       config.translation_weight * (poses[i].center() - poses[j].center()).norm() / spread;
      dist[i][j] = d;
      dist[j][i] = d;
    }
  }
  return dist;
}

std::vector<std::vector<std::size_t>> valid_ranges(std::span<const CameraPose> poses, std::size_t top_n,
                                                   const FrameSamplerConfig& config) {
  const std::size_t n = poses.size();
  if (top_n > (n == 0 ? 0 : n - 1)) {
    throw std::invalid_argument("top_n " + std::to_string(top_n) + " exceeds the " + std::to_string(n - 1) +
                                " other frames available");
  }
  const auto dist = pose_distances(poses, config);
  std::vector<std::vector<std::size_t>> ranges(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) others.push_back(j);
    }
    std::stable_sort(others.begin(), others.end(),
                     [&](std::size_t a, std::size_t b) { return dist[i][a] < dist[i][b]; });
    others.resize(top_n);
    ranges[i] = std::move(others);
  }
  return ranges;
}

std::vector<std::size_t> sample_frames(std::span<const CameraPose> poses, std::size_t count, std::size_t top_n, Rng& rng,
                                       const FrameSamplerConfig& config) {
  if (count < 1 || count > poses.size()) {
    throw std::invalid_argument("cannot sample " + std::to_string(count) + " frames from " +
                                std::to_string(poses.size()));
  }
  if (top_n + 1 < count) {
    throw std::invalid_argument("top_n " + std::to_string(top_n) + " is smaller than the " +
                                std::to_string(count - 1) + " frames needed beside the anchor");
  }
  const auto ranges = valid_ranges(poses, top_n, config);
  const std::size_t anchor = std::uniform_int_distribution<std::size_t>(0, poses.size() - 1)(rng);
  std::vector<std::size_t> pool = ranges[anchor];
  std::vector<std::size_t> out{anchor};
  // partial Fisher-Yates over the anchor's valid range
  for (std::size_t i = 0; i + 1 < count; ++i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(i, pool.size() - 1)(rng);
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scene directory I/O

void write_scene(const std::filesystem::path& dir, const SceneSample& scene) {
  std::filesystem::create_directories(dir);
  std::ofstream header(dir / "scene.txt");
  if (!header) throw SceneError("cannot write " + (dir / "scene.txt").string());
  header.precision(17);
  const std::size_t n = scene.frames.size();
  const std::size_t h = n ? scene.frames[0].image.height : 0;
  const std::size_t w = n ? scene.frames[0].image.width : 0;
  header << "ovgt-scene 1\n";
  header << "seed " << scene.seed << "\n";
  header << "frames " << n << "\n";
  header << "dims " << kChannels << " " << h << " " << w << "\n";
  for (std::size_t i = 0; i < n; ++i) {
    const auto& k = scene.frames[i].intrinsics;
    header << "intrinsics " << i << " " << k.fx << " " << k.fy << " " << k.cx << " " << k.cy << " " << k.width << " "
           << k.height << "\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = scene.frames[i].pose;
    header << "pose " << i;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) header << " " << p.rotation(r, c);
      header << " " << p.translation[r];
    }
    header << "\n";
  }
  if (!header) throw SceneError("failed writing scene header");
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = scene.frames[i];
    write_floats(dir / frame_name(i, "img"), f.image.values);
    write_floats(dir / frame_name(i, "dpt"), f.depth.depth);
    write_floats(dir / frame_name(i, "msk"), std::vector<double>(f.depth.mask.begin(), f.depth.mask.end()));
  }
}

SceneSample read_scene(const std::filesystem::path& dir) {
  std::ifstream header(dir / "scene.txt");
  if (!header) throw SceneError("cannot open " + (dir / "scene.txt").string());
  SceneSample scene;
  std::size_t n = 0, c = 0, h = 0, w = 0;
  std::vector<CameraIntrinsics> intr;
  std::vector<CameraPose> poses;
  std::string line;
  int line_no = 0;
  while (std::getline(header, line)) {
    ++line_no;
    std::istringstream is(line);
    std::string key;
    if (!(is >> key)) continue;
    const auto fail = [&] { throw SceneError("scene.txt line " + std::to_string(line_no) + ": malformed '" + key + "'"); };
    if (key == "ovgt-scene") {
      int version = 0;
      if (!(is >> version) || version != 1) fail();
    } else if (key == "seed") {
      if (!(is >> scene.seed)) fail();
    } else if (key == "frames") {
      if (!(is >> n)) fail();
      intr.resize(n);
      poses.resize(n);
    } else if (key == "dims") {
      if (!(is >> c >> h >> w) || c != kChannels) fail();
    } else if (key == "intrinsics") {
      std::size_t i = 0;
      CameraIntrinsics k;
      if (!(is >> i >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height) || i >= n) fail();
      intr[i] = k;
    } else if (key == "pose") {
      std::size_t i = 0;
      CameraPose p;
      if (!(is >> i) || i >= n) fail();
      for (int r = 0; r < 3; ++r) {
        for (int cc = 0; cc < 3; ++cc) {
          if (!(is >> p.rotation(r, cc))) fail();
        }
        if (!(is >> p.translation[r])) fail();
      }
      poses[i] = p;
    } else {
      throw SceneError("scene.txt line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    SceneFrame f;
    f.intrinsics = intr[i];
    f.pose = poses[i];
    f.image = Image{c, h, w, read_floats(dir / frame_name(i, "img"), c * h * w)};
    f.depth.height = h;
    f.depth.width = w;
    f.depth.frame_index = static_cast<int>(i);
    f.depth.depth = read_floats(dir / frame_name(i, "dpt"), h * w);
    const auto mask = read_floats(dir / frame_name(i, "msk"), h * w);
    f.depth.mask.resize(h * w);
    for (std::size_t p = 0; p < h * w; ++p) f.depth.mask[p] = mask[p] != 0.0 ? 1 : 0;
    f.points = unproject(f.depth, f.intrinsics, f.pose);
    scene.frames.push_back(std::move(f));
  }
  return scene;
}

}  // namespace ovgt
