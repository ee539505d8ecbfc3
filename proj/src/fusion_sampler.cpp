#include "ovgt/fusion_sampler.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace ovgt {

void SamplerConfig::validate() const {
  if (!(rgb_only_prob >= 0.0 && rgb_only_prob <= 1.0)) {
    throw std::invalid_argument("rgb_only_prob must lie in [0, 1]");
  }
}

std::size_t ModalityAssignment::camera_count() const {
  return static_cast<std::size_t>(std::count(camera_flags.begin(), camera_flags.end(), std::uint8_t{1}));
}

std::size_t ModalityAssignment::depth_count() const {
  return static_cast<std::size_t>(std::count(depth_flags.begin(), depth_flags.end(), std::uint8_t{1}));
}

ModalityAssignment sample_assignment(std::size_t frames, const SamplerConfig& config, Rng& rng) {
  if (frames < 1) throw std::invalid_argument("sequence length must be at least 1");
  config.validate();
  ModalityAssignment a;
  a.camera_flags.assign(frames, 0);
  a.depth_flags.assign(frames, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < config.rgb_only_prob) {
    a.rgb_only = true;
    return a;
  }
  std::uniform_int_distribution<std::size_t> count(0, frames);
  const std::size_t q = count(rng);
  const std::size_t o = count(rng);
  std::fill_n(a.camera_flags.begin(), q, std::uint8_t{1});
  std::vector<std::size_t> order(frames);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < o; ++i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(i, frames - 1)(rng);
    std::swap(order[i], order[j]);
    a.depth_flags[order[i]] = 1;
  }
  return a;
}

Rng worker_rng(std::uint64_t master_seed, std::size_t worker) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(worker), 0x6f766774u};
  return Rng(seq);
}

FrameBundle apply_assignment(const SceneSample& scene, const ModalityAssignment& assignment) {
  const std::size_t n = scene.frames.size();
  if (assignment.camera_flags.size() != n || assignment.depth_flags.size() != n) {
    throw std::invalid_argument("assignment covers " + std::to_string(assignment.camera_flags.size()) +
                                " frames but the scene has " + std::to_string(n));
  }
  FrameBundle bundle;
  bundle.frames.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const SceneFrame& f = scene.frames[i];
    FrameInput in;
    in.image = f.image;
    if (assignment.camera_flags[i]) in.camera = CameraAnnotation{f.intrinsics, f.pose};
    if (assignment.depth_flags[i]) in.depth = f.depth;
    bundle.frames.push_back(std::move(in));
  }
  return bundle;
}

FrameBundle rgb_bundle(const SceneSample& scene) {
  ModalityAssignment none;
  none.camera_flags.assign(scene.frames.size(), 0);
  none.depth_flags.assign(scene.frames.size(), 0);
  none.rgb_only = true;
  return apply_assignment(scene, none);
}

}  // namespace ovgt
