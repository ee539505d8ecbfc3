#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ovgt/bundle.hpp"
#include "ovgt/nn.hpp"
#include "ovgt/synthscene.hpp"

namespace ovgt {

struct SamplerConfig {
  double rgb_only_prob = 0.10;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Which frames of one sequence receive ground-truth cameras and depths.
struct ModalityAssignment {
  std::vector<std::uint8_t> camera_flags;  // always a prefix of ones
  std::vector<std::uint8_t> depth_flags;
  bool rgb_only = false;

  std::size_t camera_count() const;
  std::size_t depth_count() const;
};

/// With probability p the sequence is RGB-only. Otherwise Q ~ U{0..S} cameras go to
/// the first Q frames and, independently, O ~ U{0..S} depths go to a uniform O-subset.
ModalityAssignment sample_assignment(std::size_t frames, const SamplerConfig& config, Rng& rng);

/// Deterministic, independent stream for one worker derived from the master seed.
Rng worker_rng(std::uint64_t master_seed, std::size_t worker);

/// Builds the model input: every image, plus GT camera/depth only where flagged.
FrameBundle apply_assignment(const SceneSample& scene, const ModalityAssignment& assignment);

/// Bundle with no auxiliary inputs.
FrameBundle rgb_bundle(const SceneSample& scene);

}  // namespace ovgt
