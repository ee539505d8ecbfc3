#pragma once

#include <cstddef>
#include <vector>

#include "ovgt/bundle.hpp"
#include "ovgt/geometry.hpp"
#include "ovgt/nn.hpp"
#include "ovgt/tensor.hpp"

namespace ovgt {

class GeoAdapter;

struct BackboneConfig {
  std::size_t dim = 64;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t patch = 8;
  std::size_t registers = 2;
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t mlp_ratio = 4;
  std::size_t camera_head_layers = 2;

  /// Throws std::invalid_argument naming the first violated constraint.
  void validate() const;
  std::size_t patches_per_frame() const { return (height / patch) * (width / patch); }
  std::size_t tokens_per_frame() const { return 1 + registers + patches_per_frame(); }
};

/// Per-frame token groups; every tensor is [N, count, dim].
struct TokenSet {
  Tensor camera;
  Tensor registers;  // undefined when the config has no registers
  Tensor spatial;

  std::size_t frames() const { return camera.size(0); }
  Tensor joined() const;
  static TokenSet split(const Tensor& joined, std::size_t registers);
};

struct Predictions {
  Tensor cameras_raw;     // [N, 9] straight from the camera head
  Tensor cameras;         // [N, 9] with a unit, w >= 0 quaternion
  Tensor depth;           // [N, H, W], >= 0
  Tensor depth_conf;      // [N, H, W], >= 1
  Tensor pmap;            // [N, 3, H, W], first-frame coordinates
  Tensor pmap_conf;       // [N, H, W], >= 1

  std::vector<CameraParamVector> camera_vectors() const;
};

/// Differentiable quaternion normalization of a raw [N, 9] camera tensor. Rows
/// whose quaternion has (near) zero norm map to the identity (1,0,0,0).
Tensor normalize_camera_quaternions(const Tensor& raw);

/// Pre-norm self-attention followed by a pre-norm two-layer feed-forward, both residual.
/// Attention runs independently over each leading-axis batch of the [B, T, dim] input.
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(const std::string& name, std::size_t dim, std::size_t heads, std::size_t mlp_ratio, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  Tensor attention(const Tensor& x) const;
  Tensor feed_forward(const Tensor& x) const;
  void collect(ParameterList& out) const;

  LayerNorm norm1;
  Linear query;
  Linear key;
  Linear value;
  Linear out;
  LayerNorm norm2;
  Linear fc1;
  Linear fc2;

 private:
  std::size_t heads_ = 1;
};

/// One alternating-attention block: frame-wise then global.
struct AABlock {
  TransformerLayer frame;
  TransformerLayer global;

  TokenSet operator()(const TokenSet& tokens) const;
};

struct DenseOutput {
  Tensor values;      // [N, C, H, W]
  Tensor confidence;  // [N, H, W]
};

class DenseHead {
 public:
  enum class Kind { kDepth, kPointMap };

  DenseHead() = default;
  DenseHead(const std::string& name, const BackboneConfig& config, Kind kind, Rng& rng);

  DenseOutput operator()(const Tensor& spatial) const;
  void collect(ParameterList& out) const;

  Kind kind() const { return kind_; }
  std::size_t channels() const { return kind_ == Kind::kDepth ? 1 : 3; }

  LayerNorm norm;
  Linear proj;

 private:
  Kind kind_ = Kind::kDepth;
  std::size_t patch_ = 1;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
};

class CameraHead {
 public:
  CameraHead() = default;
  CameraHead(const std::string& name, const BackboneConfig& config, Rng& rng);

  /// [N, dim] or [N, 1, dim] camera tokens -> raw [N, 9].
  Tensor operator()(const Tensor& camera_tokens) const;
  void collect(ParameterList& out) const;

  std::vector<TransformerLayer> layers;
  LayerNorm norm;
  Linear proj;
};

/// Toy alternating-attention trunk with camera, depth and point-map heads.
class Backbone {
 public:
  Backbone(const BackboneConfig& config, Rng& rng);

  const BackboneConfig& config() const { return config_; }

  TokenSet embed_frames(const Tensor& images) const;
  TokenSet aa_block(const TokenSet& tokens, std::size_t layer) const;
  Predictions heads(const TokenSet& tokens) const;

  /// Full pass. With an adapter, depth tokens are added once after embedding and
  /// camera tokens are adjusted before every block and once more before the head.
  Predictions forward(const FrameBundle& bundle, const GeoAdapter* adapter = nullptr) const;

  ParameterList parameters() const;

  Tensor patch_weight;
  Tensor patch_bias;
  Tensor pos_embed;
  Tensor camera_token;
  Tensor register_tokens;
  Tensor first_frame_flag;
  std::vector<AABlock> blocks;
  CameraHead camera_head;
  DenseHead depth_head;
  DenseHead pmap_head;

 private:
  BackboneConfig config_;
};

}  // namespace ovgt
