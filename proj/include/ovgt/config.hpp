#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ovgt/backbone.hpp"
#include "ovgt/fusion_sampler.hpp"
#include "ovgt/geoadapter.hpp"
#include "ovgt/losses.hpp"
#include "ovgt/synthscene.hpp"

namespace ovgt {

/// Parse or validation failure; the message carries "<source>:<line>:" when known.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OptimizerKind { kSgd, kMomentum, kAdam };

/// Which frames carry depth at a partial evaluation setting.
enum class DepthSubset { kRandom, kFirst };
DepthSubset parse_depth_subset(const std::string& name);
std::string to_string(DepthSubset subset);

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  double lr = 1e-4;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // global gradient-norm clip; 0 disables
  std::size_t steps = 200;
  std::size_t batch_size = 1;  // sequences per step

  void validate() const;
};

/// Percentages of frames that receive ground-truth cameras and depths.
struct InjectionSetting {
  int camera_pct = 0;
  int depth_pct = 0;

  bool operator==(const InjectionSetting&) const = default;
};

struct DataConfig {
  std::uint64_t scene_seed = 1000;
  std::size_t train_scenes = 20;
  std::size_t eval_scenes = 8;
  std::size_t scene_frames = 8;
  std::size_t frames_per_sequence = 5;
  std::size_t top_n = 7;
  std::string world = "mixed";  // planes | blobs | mixed (alternating per scene)
  double radius_min = 3.0;
  double radius_max = 4.5;
  double orbit_arc = 1.6;
  double jitter = 0.15;
  double fov_min = 0.9;
  double fov_max = 1.3;
  double translation_weight = 1.0;

  void validate() const;
  /// Scene spec for one seed; `index` picks the world type when world = mixed.
  SceneSpec scene_spec(std::uint64_t seed, std::size_t index, const BackboneConfig& backbone) const;
};

struct RunConfig {
  BackboneConfig backbone;
  AdapterVariant variant = AdapterVariant::kOmniVGGT;
  SamplerConfig sampler;
  LossConfig loss;
  OptimizerConfig optimizer;
  DataConfig data;
  std::uint64_t init_seed = 7;
  std::uint64_t eval_seed = 99;
  DepthSubset eval_depth_subset = DepthSubset::kRandom;
  std::vector<InjectionSetting> eval_schedule{{0, 0}, {30, 30}, {50, 50}, {70, 70}, {100, 100}};

  void validate() const;
};

/// `key = value` lines; `#` starts a comment. Unknown keys and malformed values
/// are errors reported as "<source>:<line>: ...".
RunConfig parse_config(const std::string& text, const std::string& source = "config");
RunConfig load_config(const std::filesystem::path& path);

/// Parses "c:d, c:d, ..." into settings.
std::vector<InjectionSetting> parse_schedule(const std::string& text);

}  // namespace ovgt
